"""Relational graph convolution producing entity embeddings.

Layer rule, applied to the whole entity table at once:

    E' = sigmoid( sum_r A_r (E W_r^T) + E W_self^T )

A_r aggregates each entity's outgoing r-neighbors; its entries are the
normalization weights (constant 1 by default, or 1/|N_r(v)| under the
"degree" mode).  Neighbor order never enters the computation, so any
permutation of the triple file encodes identically.  Tables at this
scale are recomputed in full whenever parameters change; the single
entity view is literally a row of the full table, which keeps the two
code paths bit-identical by construction.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError
from .kg import KnowledgeGraph
from .params import ParameterStore

EMB_TABLE = "rgcn.e0"

NORM_MODES = ("one", "degree")


def layer_param(layer: int, rel: int) -> str:
    return f"rgcn.l{layer}.rel{rel}"


def self_param(layer: int) -> str:
    return f"rgcn.l{layer}.self"


def init_graph_params(
    store: ParameterStore, g: KnowledgeGraph, dim: int, layers: int, rng: np.random.Generator
):
    store.create(EMB_TABLE, (g.n_entities(), dim), rng=rng, fan_in=dim)
    for l in range(layers):
        for r in range(len(g.relations)):
            store.create(layer_param(l, r), (dim, dim), rng=rng)
        store.create(self_param(l), (dim, dim), rng=rng)


def aggregation_matrices(g: KnowledgeGraph, norm_mode: str) -> dict[int, np.ndarray]:
    """Dense per-relation aggregation matrices; only non-empty relations appear."""
    if norm_mode not in NORM_MODES:
        raise ConfigurationError(f"norm_mode must be one of {NORM_MODES}, got {norm_mode!r}")
    n = g.n_entities()
    out: dict[int, np.ndarray] = {}
    for h, r, t in g.triples:
        a = out.get(r)
        if a is None:
            a = out[r] = np.zeros((n, n))
        a[h, t] = 1.0
    if norm_mode == "degree":
        for a in out.values():
            deg = a.sum(axis=1, keepdims=True)
            np.divide(a, deg, out=a, where=deg > 0)
    return out


def encode_entities(
    store: ParameterStore,
    g: KnowledgeGraph,
    layers: int,
    norm_mode: str = "one",
    aggs: dict[int, np.ndarray] | None = None,
) -> ad.Var:
    """Full (V, d) embedding table as a tape node.

    Passing precomputed aggregation matrices skips rebuilding them; they
    depend only on the graph, never on parameters.
    """
    if aggs is None:
        aggs = aggregation_matrices(g, norm_mode)
    table = store.var(EMB_TABLE)
    if table.value.shape[0] != g.n_entities():
        raise ConfigurationError(
            f"embedding table covers {table.value.shape[0]} entities, graph has {g.n_entities()}"
        )
    for l in range(layers):
        z = ad.matmul(table, ad.transpose(store.var(self_param(l))))
        for r in sorted(aggs):
            if layer_param(l, r) not in store:
                raise ConfigurationError(
                    f"graph relation {g.relation(r).name!r} has no weight at layer {l}"
                )
            w = store.var(layer_param(l, r))
            z = ad.add(z, ad.matmul(ad.Var(aggs[r]), ad.matmul(table, ad.transpose(w))))
        table = ad.sigmoid(z)
    return table


def encode_entity(
    store: ParameterStore,
    g: KnowledgeGraph,
    layers: int,
    v: int,
    norm_mode: str = "one",
    aggs: dict[int, np.ndarray] | None = None,
) -> ad.Var:
    """Row v of the table, recomputed from current parameters (never cached)."""
    g.entity(v)
    return ad.take_row(encode_entities(store, g, layers, norm_mode, aggs), v)
