"""Dialogue context: utterance embedding, GRU recurrence, running state.

The utterance embedder is a frozen hash-bucket table: tokens index rows
through a keyed blake2b digest (stable across processes, unlike
``hash()``), and an utterance is the mean of its token rows.  The table
never trains; all context learning lives in the GRU weights.

One GRU step consumes one full conversation round.  Mid-round, when only
the seeker half exists, the same step applied to that half alone gives a
provisional context for acting; the committed state is only advanced on
complete rounds.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .kg import normalize_tokens
from .params import ParameterStore

EMBED_TABLE = "embedder.table"
GRU_PREFIX = "gru"

# Joins the two halves of a round into one utterance for the recurrence.
ROUND_SEP = " [sep] "


def token_bucket(token: str, buckets: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % buckets


class UtteranceEmbedder:
    """Mean of hashed token rows; empty text embeds to the zero vector."""

    def __init__(self, buckets: int, dim: int):
        if buckets <= 0 or dim <= 0:
            raise ValueError("buckets and dim must be positive")
        self.buckets = buckets
        self.dim = dim

    def init_params(self, store: ParameterStore, rng: np.random.Generator):
        store.create(EMBED_TABLE, (self.buckets, self.dim), rng=rng, trainable=False, fan_in=self.dim)

    def embed(self, store: ParameterStore, text: str) -> np.ndarray:
        tokens = normalize_tokens(text)
        if not tokens:
            return np.zeros(self.dim)
        table = store.value(EMBED_TABLE)
        rows = [table[token_bucket(t, self.buckets)] for t in tokens]
        return np.mean(rows, axis=0)


def init_gru_params(store: ParameterStore, dim: int, rng: np.random.Generator):
    for gate in ("z", "r", "h"):
        store.create(f"{GRU_PREFIX}.w_{gate}", (dim, dim), rng=rng)
        store.create(f"{GRU_PREFIX}.u_{gate}", (dim, dim), rng=rng)
        store.create(f"{GRU_PREFIX}.b_{gate}", (dim,), rng=None)


def gru_step(store: ParameterStore, h_prev: ad.Var | np.ndarray, x: ad.Var | np.ndarray) -> ad.Var:
    if not isinstance(h_prev, ad.Var):
        h_prev = ad.Var(h_prev)
    if not isinstance(x, ad.Var):
        x = ad.Var(x)
    return ad.gru_cell(store.gru_vars(GRU_PREFIX), h_prev, x)


def combine_round(seeker_text: str, wizard_text: str) -> str:
    return seeker_text + ROUND_SEP + wizard_text


@dataclass(frozen=True)
class DialogueState:
    """Everything the engine remembers between rounds.

    belief keeps one frozen embedding per mention, in mention order and
    with repeats; mention_groups keeps the same ids bucketed per round
    (empty rounds contribute nothing), which time damping consumes.
    """

    q: np.ndarray
    belief: tuple[np.ndarray, ...] = ()
    mentioned: tuple[int, ...] = ()
    mention_groups: tuple[tuple[int, ...], ...] = ()
    last_action: str | None = None
    round: int = 0


def initial_state(dim: int) -> DialogueState:
    return DialogueState(q=np.zeros(dim))


def advance_context(state: DialogueState, store: ParameterStore, x: np.ndarray) -> DialogueState:
    q = gru_step(store, state.q, x).value
    return replace(state, q=q, round=state.round + 1)


def update_belief(
    state: DialogueState, entity_ids: list[int], table: np.ndarray
) -> DialogueState:
    """Append this round's mentions. Embeddings are copied out of the live
    table so later parameter updates cannot rewrite history."""
    if not entity_ids:
        return state
    vecs = tuple(np.array(table[v]) for v in entity_ids)
    return replace(
        state,
        belief=state.belief + vecs,
        mentioned=state.mentioned + tuple(entity_ids),
        mention_groups=state.mention_groups + (tuple(entity_ids),),
    )
