"""Named parameter tensors, the Adam update, and checkpoint round-tripping.

A ParameterStore owns the raw float64 arrays.  Loss builders request
tape nodes with store.var(name); the returned Var shares the entry's
gradient buffer, so one backward() call leaves accumulated gradients
exactly where adam_step expects them.

Checkpoints are JSON.  Python's float repr is the shortest string that
round-trips the exact double, so save -> load -> save is byte-stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var
from .errors import ConfigurationError, NotFoundError, ShapeError

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ParamEntry:
    value: np.ndarray
    grad: np.ndarray
    trainable: bool = True


class ParameterStore:
    def __init__(self):
        self._entries: dict[str, ParamEntry] = {}
        self.opt_state = {"step": 0, "m": {}, "v": {}}

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def create(
        self,
        name: str,
        shape,
        rng: np.random.Generator | None = None,
        trainable: bool = True,
        fan_in: int | None = None,
    ) -> np.ndarray:
        """Allocate a tensor initialised uniformly on [-1/sqrt(fan_in), +1/sqrt(fan_in)].

        fan_in defaults to the last axis for matrices and to the length for
        vectors; bias creators pass the input width of their layer instead.
        Passing rng=None zero-initialises (used for explicitly zeroed params).
        """
        shape = tuple(int(s) for s in shape)
        if name in self._entries:
            raise ConfigurationError(f"parameter {name!r} already exists")
        if any(s <= 0 for s in shape):
            raise ShapeError(f"parameter {name!r}: non-positive shape {shape}")
        if rng is None:
            value = np.zeros(shape, dtype=np.float64)
        else:
            if fan_in is None:
                fan_in = shape[-1] if len(shape) > 1 else shape[0]
            bound = 1.0 / math.sqrt(max(1, fan_in))
            value = rng.uniform(-bound, bound, size=shape)
        self._entries[name] = ParamEntry(value=value, grad=np.zeros(shape), trainable=trainable)
        return self._entries[name].value

    def get(self, name: str) -> ParamEntry:
        try:
            return self._entries[name]
        except KeyError:
            raise NotFoundError(f"no parameter named {name!r}") from None

    def value(self, name: str) -> np.ndarray:
        return self.get(name).value

    def var(self, name: str) -> Var:
        """Tape node sharing this entry's value and gradient buffers.

        backward() accumulates in place, so the entry's grad array picks
        up contributions from every Var handed out for this name.
        """
        entry = self.get(name)
        v = Var(entry.value, requires_grad=True)
        v.value = entry.value
        v.grad = entry.grad
        return v

    def freeze(self, name: str):
        self.get(name).trainable = False

    def zero_grads(self):
        for entry in self._entries.values():
            entry.grad = np.zeros_like(entry.value)

    def gru_vars(self, prefix: str) -> dict[str, Var]:
        from .autodiff import GRU_PARAM_KEYS

        return {k: self.var(f"{prefix}.{k}") for k in GRU_PARAM_KEYS}

    def clone(self) -> "ParameterStore":
        other = ParameterStore()
        for name, e in self._entries.items():
            other._entries[name] = ParamEntry(
                value=e.value.copy(), grad=e.grad.copy(), trainable=e.trainable
            )
        other.opt_state = {
            "step": self.opt_state["step"],
            "m": {k: v.copy() for k, v in self.opt_state["m"].items()},
            "v": {k: v.copy() for k, v in self.opt_state["v"].items()},
        }
        return other

    def load_values_from(self, other: "ParameterStore"):
        for name, e in other._entries.items():
            self._entries[name] = ParamEntry(
                value=e.value.copy(), grad=np.zeros_like(e.value), trainable=e.trainable
            )
        self.opt_state = {
            "step": other.opt_state["step"],
            "m": {k: v.copy() for k, v in other.opt_state["m"].items()},
            "v": {k: v.copy() for k, v in other.opt_state["v"].items()},
        }


def adam_step(
    store: ParameterStore,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One adaptive-moment update over every trainable entry, then zero grads.

    Weight decay is folded into the gradient (L2 style) before the moment
    updates. Frozen entries are never touched, whatever their gradient holds.
    """
    store.opt_state["step"] += 1
    t = store.opt_state["step"]
    ms, vs = store.opt_state["m"], store.opt_state["v"]
    for name in store.names():
        entry = store.get(name)
        if not entry.trainable:
            continue
        g = entry.grad
        if weight_decay:
            g = g + weight_decay * entry.value
        m = ms.get(name)
        if m is None:
            m = ms[name] = np.zeros_like(entry.value)
        v = vs.get(name)
        if v is None:
            v = vs[name] = np.zeros_like(entry.value)
        m[:] = beta1 * m + (1.0 - beta1) * g
        v[:] = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        entry.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grads()


def save_checkpoint(path, store: ParameterStore, config_echo: dict):
    """Write the store as sorted JSON; floats keep full double precision."""
    params = {}
    for name in store.names():
        e = store.get(name)
        params[name] = {
            "shape": list(e.value.shape),
            "values": [float(x) for x in e.value.ravel()],
            "trainable": bool(e.trainable),
        }
    obj = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config_echo": config_echo,
        "params": params,
        "optimizer_state": {
            "step": store.opt_state["step"],
            "m": {k: [float(x) for x in v.ravel()] for k, v in store.opt_state["m"].items()},
            "v": {k: [float(x) for x in v.ravel()] for k, v in store.opt_state["v"].items()},
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ParameterStore, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    version = obj.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint format_version {version!r}")
    store = ParameterStore()
    for name, spec in obj["params"].items():
        shape = tuple(spec["shape"])
        value = np.asarray(spec["values"], dtype=np.float64).reshape(shape)
        store._entries[name] = ParamEntry(
            value=value, grad=np.zeros(shape), trainable=bool(spec["trainable"])
        )
    opt = obj.get("optimizer_state") or {"step": 0, "m": {}, "v": {}}
    store.opt_state = {
        "step": int(opt.get("step", 0)),
        "m": {
            k: np.asarray(v, dtype=np.float64).reshape(store.get(k).value.shape)
            for k, v in opt.get("m", {}).items()
        },
        "v": {
            k: np.asarray(v, dtype=np.float64).reshape(store.get(k).value.shape)
            for k, v in opt.get("v", {}).items()
        },
    }
    return store, obj.get("config_echo", {})
