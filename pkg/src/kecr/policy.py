"""Dialogue action classifier over the context embedding.

    a_t = softmax(W1 relu(W2 q_t + b2) + b1)

Three actions, fixed order ("query", "recommend", "chat").  Serving
executes the argmax; np.argmax takes the first maximum, which is
exactly the documented tie-break order.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .corpus import ACTIONS
from .params import ParameterStore

P_CLAMP = 1e-12

W1, B1, W2, B2 = "policy.w1", "policy.b1", "policy.w2", "policy.b2"


def init_policy_params(store: ParameterStore, dim: int, rng: np.random.Generator):
    store.create(W1, (len(ACTIONS), dim), rng=rng)
    store.create(B1, (len(ACTIONS),), rng=None)
    store.create(W2, (dim, dim), rng=rng)
    store.create(B2, (dim,), rng=None)


def predict_action(store: ParameterStore, q: ad.Var | np.ndarray) -> ad.Var:
    if not isinstance(q, ad.Var):
        q = ad.Var(q)
    hidden = ad.relu(ad.linear(store.var(W2), q, store.var(B2)))
    return ad.softmax(ad.linear(store.var(W1), hidden, store.var(B1)))


def executed_action(probs: np.ndarray) -> str:
    return ACTIONS[int(np.argmax(probs))]


def policy_loss(probs: ad.Var, gold: str) -> ad.Var:
    """Cross entropy against a one-hot gold action: -log p[gold]."""
    idx = ACTIONS.index(gold)
    p = ad.clamp(ad.take(probs, idx), P_CLAMP, 1.0)
    return ad.neg(ad.log_(p))
