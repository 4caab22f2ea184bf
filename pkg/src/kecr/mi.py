"""Mutual-information pretraining that aligns entity and context spaces.

A small classifier g scores how plausibly an entity co-occurs with a
dialogue context.  Training maximizes

    L_MI = mean_pos log g(e_v, q_t) + mean_neg log(1 - g(e_v, q_t))

which is a lower bound on the mutual information between mentioned
entities and the running context; the optimizer descends on -L_MI.
Both means are per batch.  L_MI is never positive.

Positives pair each entity mentioned in round t with the context AFTER
consuming round t.  Each positive gets ``neg_samples`` entities drawn
uniformly from those NOT mentioned in that round, sharing the same
context vector.  Batches rebuild their context chains lazily so every
optimizer step sees tapes built from current weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .context import UtteranceEmbedder, combine_round, gru_step
from .corpus import ConversationRecord, Round, rounds
from .errors import SamplingError
from .graph_encoder import encode_entities
from .kg import KnowledgeGraph
from .params import ParameterStore, adam_step

G_CLAMP = 1e-12

W1, B1, W2, B2 = "mi.w1", "mi.b1", "mi.w2", "mi.b2"


def init_mi_params(store: ParameterStore, dim: int, rng: np.random.Generator):
    store.create(W1, (dim, 2 * dim), rng=rng)
    store.create(B1, (dim,), rng=None)
    store.create(W2, (dim,), rng=rng, fan_in=dim)
    store.create(B2, (1,), rng=None)


def mi_score(store: ParameterStore, e: ad.Var, q: ad.Var) -> ad.Var:
    """g(e, q) in (0, 1): two-layer map on the concatenated pair."""
    hidden = ad.relu(ad.linear(store.var(W1), ad.concat([e, q]), store.var(B1)))
    logit = ad.add(ad.dot(store.var(W2), hidden), ad.take(store.var(B2), 0))
    return ad.sigmoid(logit)


@dataclass
class MIBatch:
    """Entity ids paired with on-tape context vectors."""

    positives: list[tuple[int, ad.Var]]
    negatives: list[tuple[int, ad.Var]]


def round_text(rd: Round) -> str:
    if rd.wizard is None:
        return rd.seeker.text
    return combine_round(rd.seeker.text, rd.wizard.text)


def round_mentions(rd: Round) -> list[int]:
    """Entity ids mentioned anywhere in the round, first occurrence kept."""
    seen: list[int] = []
    turns = (rd.seeker,) if rd.wizard is None else (rd.seeker, rd.wizard)
    for turn in turns:
        for v in turn.entities:
            if v not in seen:
                seen.append(v)
    return seen


def _context_chain(
    store: ParameterStore, embedder: UtteranceEmbedder, rds: Sequence[Round], upto: int, dim: int
) -> ad.Var:
    """q after consuming rounds 0..upto, on tape through the GRU weights."""
    q: ad.Var = ad.Var(np.zeros(dim))
    for rd in rds[: upto + 1]:
        q = gru_step(store, q, embedder.embed(store, round_text(rd)))
    return q


def build_mi_batches(
    records: Sequence[ConversationRecord],
    g: KnowledgeGraph,
    store: ParameterStore,
    embedder: UtteranceEmbedder,
    rng: np.random.Generator,
    batch_size: int = 10,
    neg_samples: int = 4,
) -> Iterator[MIBatch]:
    """Shuffled positive pairs in batches; contexts built at yield time."""
    n = g.n_entities()
    if n < 5:
        raise SamplingError(f"need at least 5 entities to sample negatives, graph has {n}")
    events: list[tuple[ConversationRecord, int, int, frozenset[int]]] = []
    for rec in records:
        for ti, rd in enumerate(rounds(rec)):
            ments = round_mentions(rd)
            for v in ments:
                events.append((rec, ti, v, frozenset(ments)))
    order = rng.permutation(len(events))
    for lo in range(0, len(order), batch_size):
        chunk = order[lo : lo + batch_size]
        contexts: dict[tuple[str, int], ad.Var] = {}
        positives: list[tuple[int, ad.Var]] = []
        negatives: list[tuple[int, ad.Var]] = []
        for idx in chunk:
            rec, ti, v, ments = events[idx]
            key = (rec.id, ti)
            q = contexts.get(key)
            if q is None:
                q = contexts[key] = _context_chain(
                    store, embedder, rounds(rec), ti, embedder.dim
                )
            positives.append((v, q))
            pool = np.array([e for e in range(n) if e not in ments])
            if len(pool) < neg_samples:
                raise SamplingError(
                    f"round mentions {len(ments)} of {n} entities; "
                    f"cannot draw {neg_samples} distinct negatives"
                )
            for neg in rng.choice(pool, size=neg_samples, replace=False):
                negatives.append((int(neg), q))
        yield MIBatch(positives, negatives)


def batch_scores(store: ParameterStore, table: ad.Var, batch: MIBatch) -> tuple[list[ad.Var], list[ad.Var]]:
    pos = [mi_score(store, ad.take_row(table, v), q) for v, q in batch.positives]
    neg = [mi_score(store, ad.take_row(table, v), q) for v, q in batch.negatives]
    return pos, neg


def _mean(terms: list[ad.Var]) -> ad.Var:
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.mul(total, 1.0 / len(terms))


def mi_loss_from_scores(pos: list[ad.Var], neg: list[ad.Var]) -> ad.Var:
    pos_logs = [ad.log_(ad.clamp(s, G_CLAMP, 1.0 - G_CLAMP)) for s in pos]
    neg_logs = [
        ad.log_(ad.clamp(ad.sub(1.0, s), G_CLAMP, 1.0 - G_CLAMP)) for s in neg
    ]
    if not neg_logs:
        return _mean(pos_logs)
    return ad.add(_mean(pos_logs), _mean(neg_logs))


def mi_loss(store: ParameterStore, table: ad.Var, batch: MIBatch) -> ad.Var:
    """The bound itself (to maximize); callers negate for gradient descent."""
    pos, neg = batch_scores(store, table, batch)
    return mi_loss_from_scores(pos, neg)


def pretrain(
    store: ParameterStore,
    g: KnowledgeGraph,
    records: Sequence[ConversationRecord],
    embedder: UtteranceEmbedder,
    cfg,
    aggs: dict[int, np.ndarray] | None = None,
) -> list[dict]:
    """Epochs of -L_MI descent over the whole corpus.

    Returns one trace row per epoch: epoch, mean_L_MI, pos_mean_g,
    neg_mean_g (means over the epoch's batches).
    """
    rng = np.random.default_rng(cfg.seed)
    trace: list[dict] = []
    for epoch in range(cfg.pretrain_epochs):
        losses: list[float] = []
        pos_gs: list[float] = []
        neg_gs: list[float] = []
        batches = build_mi_batches(
            records, g, store, embedder, rng,
            batch_size=cfg.batch_pretrain, neg_samples=cfg.neg_samples,
        )
        for batch in batches:
            table = encode_entities(store, g, cfg.rgcn_layers, cfg.norm_mode, aggs)
            pos, neg = batch_scores(store, table, batch)
            bound = mi_loss_from_scores(pos, neg)
            ad.neg(bound).backward()
            adam_step(store, cfg.lr, cfg.weight_decay)
            losses.append(float(bound.value))
            pos_gs.extend(float(s.value) for s in pos)
            neg_gs.extend(float(s.value) for s in neg)
        trace.append(
            {
                "epoch": epoch,
                "mean_L_MI": float(np.mean(losses)) if losses else 0.0,
                "pos_mean_g": float(np.mean(pos_gs)) if pos_gs else 0.0,
                "neg_mean_g": float(np.mean(neg_gs)) if neg_gs else 0.0,
            }
        )
    return trace
