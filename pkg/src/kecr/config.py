"""Run configuration: typed defaults plus a key = value file parser.

The file format is one assignment per line, ``#`` comments, blank lines
ignored.  Keys match the dataclass fields except ``lambda`` (a Python
keyword), which maps to ``lambda_``.  Unknown keys are rejected rather
than ignored so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigurationError, ParseError

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


@dataclass(frozen=True)
class Config:
    embed_dim: int = 128
    rgcn_layers: int = 1
    norm_mode: str = "one"
    gamma: float = 0.95
    lambda_: float = 0.3
    lr: float = 0.001
    weight_decay: float = 0.01
    pretrain_epochs: int = 5
    joint_epochs: int = 30
    batch_pretrain: int = 10
    batch_joint: int = 30
    neg_samples: int = 4
    seed: int = 0
    finetune_encoders: bool = False
    embed_buckets: int = 50021
    damp_normalize: bool = True
    patience: int = 3

    def validate(self) -> "Config":
        if self.embed_dim <= 0 or self.rgcn_layers < 0:
            raise ConfigurationError("embed_dim must be positive, rgcn_layers nonnegative")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.norm_mode not in ("one", "degree"):
            raise ConfigurationError(f"unknown norm_mode {self.norm_mode!r}")
        if self.lambda_ < 0:
            raise ConfigurationError("lambda must be nonnegative")
        if min(self.batch_pretrain, self.batch_joint, self.embed_buckets) <= 0:
            raise ConfigurationError("batch sizes and embed_buckets must be positive")
        if self.neg_samples <= 0 or self.patience < 0:
            raise ConfigurationError("neg_samples must be positive, patience nonnegative")
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lambda_" else f.name
            out[key] = getattr(self, f.name)
        return out


_FIELD_BY_KEY = {("lambda" if f.name == "lambda_" else f.name): f for f in fields(Config)}


def _coerce(f, raw: str):
    if f.type == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if f.type == "int":
        return int(raw)
    if f.type == "float":
        return float(raw)
    return raw


def parse_config(text: str, path: str = "<config>") -> Config:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(path, line_no, f"expected key = value, got {line.strip()!r}")
        key, _, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        f = _FIELD_BY_KEY.get(key)
        if f is None:
            raise ParseError(path, line_no, f"unknown key {key!r}")
        try:
            values[f.name] = _coerce(f, raw)
        except ValueError as exc:
            raise ParseError(path, line_no, f"bad value for {key!r}: {exc}") from None
    return Config(**values).validate()


def config_from_dict(d: dict) -> Config:
    """Rebuild from a to_dict() echo, e.g. out of a checkpoint."""
    values = {}
    for key, raw in d.items():
        f = _FIELD_BY_KEY.get(key)
        if f is None:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[f.name] = raw
    return Config(**values).validate()


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), path=str(path))


def override(cfg: Config, **changes) -> Config:
    return replace(cfg, **changes).validate()
