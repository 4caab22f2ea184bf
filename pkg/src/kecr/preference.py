"""User preference mined from the belief matrix D (d x E, one column
per mentioned entity in mention order, repeats kept).

Content half: self-attention over columns,
    u_cont = D softmax(W3 tanh(W4 D)).
Time half: geometric damping, most recent column weighted highest,
    weights gamma^(E-i) for column i = 1..E, normalized by default
    so u_time stays inside the convex hull of the columns.
Fusion is the plain mean of the two halves.

An empty belief is the caller's problem (cold start falls back to a
category entity), so E = 0 raises instead of inventing a zero vector.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import EmptyBeliefError
from .params import ParameterStore

W3, W4 = "pref.w3", "pref.w4"


def init_preference_params(store: ParameterStore, dim: int, rng: np.random.Generator):
    store.create(W3, (1, dim), rng=rng)
    store.create(W4, (dim, dim), rng=rng)


def belief_matrix(columns: Sequence[ad.Var | np.ndarray]) -> ad.Var:
    if not columns:
        raise EmptyBeliefError("no mentioned entities to mine a preference from")
    return ad.stack_cols([c if isinstance(c, ad.Var) else ad.Var(c) for c in columns])


def _check(d_mat: ad.Var) -> ad.Var:
    if not isinstance(d_mat, ad.Var):
        d_mat = ad.Var(d_mat)
    if d_mat.value.ndim != 2 or d_mat.value.shape[1] == 0:
        raise EmptyBeliefError("belief matrix must have at least one column")
    return d_mat


def attention_weights(store: ParameterStore, d_mat: ad.Var) -> ad.Var:
    scores = ad.take_row(
        ad.matmul(store.var(W3), ad.tanh_(ad.matmul(store.var(W4), d_mat))), 0
    )
    return ad.softmax(scores)


def attend_context(store: ParameterStore, d_mat: ad.Var) -> ad.Var:
    d_mat = _check(d_mat)
    return ad.matmul(d_mat, attention_weights(store, d_mat))


def damp_weights(gamma: float, n_cols: int, normalize: bool = True) -> np.ndarray:
    w = gamma ** np.arange(n_cols - 1, -1, -1, dtype=np.float64)
    return w / w.sum() if normalize else w


def damp_time(gamma: float, d_mat: ad.Var, normalize: bool = True) -> ad.Var:
    d_mat = _check(d_mat)
    return ad.matmul(d_mat, ad.Var(damp_weights(gamma, d_mat.value.shape[1], normalize)))


def mine_preference(
    store: ParameterStore, d_mat: ad.Var, gamma: float, normalize: bool = True
) -> ad.Var:
    d_mat = _check(d_mat)
    u_cont = attend_context(store, d_mat)
    u_time = damp_time(gamma, d_mat, normalize)
    return ad.mul(ad.add(u_cont, u_time), 0.5)
