"""Shared glue between training and serving: parameter bootstrapping and
per-round feature preparation.

One conversation round yields two context vectors: the prediction
context q_hat (previous state advanced by the seeker half only), which
is what action prediction and reasoning see at decision time, and the
committed context q (previous state advanced by the full round), which
is what the recurrence carries forward.  Training mirrors serving
exactly: the model never peeks at the reply it is being asked to
produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import graph_encoder, mi, policy, preference, reasoner
from .config import Config
from .context import UtteranceEmbedder, combine_round, gru_step, init_gru_params
from .corpus import ConversationRecord, ReasoningLabel, rounds
from .kg import KnowledgeGraph
from .params import ParameterStore


def init_all_params(
    store: ParameterStore, g: KnowledgeGraph, cfg: Config, rng: np.random.Generator
) -> UtteranceEmbedder:
    """Every module's tensors, creation order fixed for reproducibility."""
    d = cfg.embed_dim
    graph_encoder.init_graph_params(store, g, d, cfg.rgcn_layers, rng)
    embedder = UtteranceEmbedder(cfg.embed_buckets, d)
    embedder.init_params(store, rng)
    init_gru_params(store, d, rng)
    mi.init_mi_params(store, d, rng)
    policy.init_policy_params(store, d, rng)
    preference.init_preference_params(store, d, rng)
    reasoner.init_reasoner_params(store, d, rng)
    return embedder


ENCODER_PREFIXES = ("rgcn.", "gru.")
PRETRAIN_ONLY_PREFIXES = ("mi.",)


@dataclass(frozen=True)
class TrainingRound:
    """One wizard turn's supervision with everything needed to rebuild
    its tape: texts for the context chain and prior mentions for u."""

    rec_id: str
    t: int
    seeker_text: str
    full_text: str
    wizard_text: str
    mentions_before: tuple[int, ...]
    gold_action: str
    label: ReasoningLabel | None


def build_training_rounds(
    records: list[ConversationRecord],
    labels_by_rec: dict[str, list[ReasoningLabel]],
) -> list[TrainingRound]:
    out: list[TrainingRound] = []
    for rec in records:
        by_turn = {lb.turn_index: lb for lb in labels_by_rec.get(rec.id, [])}
        mentioned: list[int] = []
        for rd in rounds(rec):
            mentioned.extend(rd.seeker.entities)
            if rd.wizard is None:
                break
            wizard_turn_index = 2 * rd.index + 1
            label = by_turn.get(wizard_turn_index)
            if label is not None and not mentioned:
                label = None  # no belief to mine, cannot train reasoning here
            out.append(
                TrainingRound(
                    rec_id=rec.id,
                    t=rd.index,
                    seeker_text=rd.seeker.text,
                    full_text=combine_round(rd.seeker.text, rd.wizard.text),
                    wizard_text=rd.wizard.text,
                    mentions_before=tuple(mentioned),
                    gold_action=rd.wizard.action or "chat",
                    label=label,
                )
            )
            mentioned.extend(rd.wizard.entities)
    return out


def group_rounds(training_rounds: list[TrainingRound]) -> dict[str, list[TrainingRound]]:
    by_rec: dict[str, list[TrainingRound]] = {}
    for tr in training_rounds:
        by_rec.setdefault(tr.rec_id, []).append(tr)
    for trs in by_rec.values():
        trs.sort(key=lambda tr: tr.t)
    return by_rec


def context_chains(
    store: ParameterStore,
    embedder: UtteranceEmbedder,
    rounds_by_rec: dict[str, list[TrainingRound]],
    batch_rounds: list[TrainingRound],
) -> dict[tuple[str, int], ad.Var]:
    """Prediction context q_hat for every batch round.  The committed
    chain is rebuilt from round zero of each conversation so a batch can
    hold any subset of its rounds."""
    max_t: dict[str, int] = {}
    for tr in batch_rounds:
        max_t[tr.rec_id] = max(max_t.get(tr.rec_id, -1), tr.t)
    out: dict[tuple[str, int], ad.Var] = {}
    for rec_id, stop in max_t.items():
        q = ad.Var(np.zeros(embedder.dim))
        for tr in rounds_by_rec[rec_id]:
            if tr.t > stop:
                break
            out[(rec_id, tr.t)] = gru_step(store, q, embedder.embed(store, tr.seeker_text))
            q = gru_step(store, q, embedder.embed(store, tr.full_text))
    return out


def round_losses(
    store: ParameterStore,
    g: KnowledgeGraph,
    table: ad.Var,
    batch_rounds: list[TrainingRound],
    contexts: dict[tuple[str, int], ad.Var],
    lam: float,
    gamma: float,
    damp_normalize: bool,
) -> tuple[ad.Var, float, float]:
    """L_a + L_r over the batch; also returns both means as floats."""
    policy_terms: list[ad.Var] = []
    instances: list[tuple[ReasoningLabel, ad.Var, ad.Var, ad.Var]] = []
    for tr in batch_rounds:
        q_hat = contexts[(tr.rec_id, tr.t)]
        a = policy.predict_action(store, q_hat)
        policy_terms.append(policy.policy_loss(a, tr.gold_action))
        if tr.label is not None:
            d_mat = preference.belief_matrix(
                [ad.take_row(table, v) for v in tr.mentions_before]
            )
            u = preference.mine_preference(store, d_mat, gamma, damp_normalize)
            instances.append((tr.label, a, u, q_hat))
    l_a = policy_terms[0]
    for term in policy_terms[1:]:
        l_a = ad.add(l_a, term)
    l_a = ad.mul(l_a, 1.0 / len(policy_terms))
    if instances:
        l_r = reasoner.reasoning_loss(store, g, table, instances, lam)
        total = ad.add(l_a, l_r)
        return total, float(l_a.value), float(l_r.value)
    return l_a, float(l_a.value), 0.0
