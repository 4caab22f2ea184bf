"""Two-phase optimization.

Phase 1 tightens the mutual-information bound between entity and
context encodings so both carry shared dialogue signal before any head
sees them.  Phase 2 descends the summed action and reasoning losses
over labeled wizard turns.  By default only the two heads move in phase
2; the encoders keep their pretrained weights unless finetune_encoders
is set.

Conversations, not rounds, are the split unit: every round of a
dialogue lands on the same side of the 8:1:1 train/valid/test cut, so
validation never sees a context chain whose prefix was trained on.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import mi, model
from .config import Config
from .context import UtteranceEmbedder
from .corpus import (
    ConversationRecord,
    ReasoningLabel,
    derive_action_labels,
    derive_reasoning_labels,
)
from .errors import NoNeighborsError, NoPathError, RealizationError, TrainingError
from .graph_encoder import aggregation_matrices, encode_entities
from .kg import KnowledgeGraph
from .params import ParameterStore, adam_step, save_checkpoint


def split_conversations(
    records: list[ConversationRecord], seed: int
) -> tuple[list[ConversationRecord], list[ConversationRecord], list[ConversationRecord]]:
    """Seeded 8:1:1 split by whole conversation."""
    order = np.random.default_rng(seed).permutation(len(records))
    shuffled = [records[i] for i in order]
    n = len(shuffled)
    n_valid = n // 10
    n_test = n // 10
    train = shuffled[: n - n_valid - n_test]
    valid = shuffled[n - n_valid - n_test : n - n_test]
    test = shuffled[n - n_test :]
    return train, valid, test


def prepare_rounds(
    records: list[ConversationRecord], g: KnowledgeGraph
) -> list[model.TrainingRound]:
    """Action labels are filled in place where missing, reasoning labels
    derived fresh; returns one supervised row per wizard turn."""
    derive_action_labels(records, g)
    labels = {rec.id: derive_reasoning_labels(rec, g) for rec in records}
    return model.build_training_rounds(records, labels)


@dataclass
class TrainResult:
    store: ParameterStore
    embedder: UtteranceEmbedder
    pretrain_trace: list[dict]
    joint_trace: list[dict]
    split_sizes: tuple[int, int, int]


def _epoch_loss(
    store: ParameterStore,
    g: KnowledgeGraph,
    embedder: UtteranceEmbedder,
    rounds_by_rec: dict[str, list[model.TrainingRound]],
    eval_rounds: list[model.TrainingRound],
    cfg: Config,
    aggs,
) -> float:
    """Forward-only mean of L_a + L_r over a fixed round set."""
    if not eval_rounds:
        return math.nan
    table = encode_entities(store, g, cfg.rgcn_layers, cfg.norm_mode, aggs)
    contexts = model.context_chains(store, embedder, rounds_by_rec, eval_rounds)
    total, _, _ = model.round_losses(
        store, g, table, eval_rounds, contexts,
        cfg.lambda_, cfg.gamma, cfg.damp_normalize,
    )
    return float(total.value)


def train(
    g: KnowledgeGraph,
    records: list[ConversationRecord],
    cfg: Config,
    trace_dir: str | None = None,
) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    store = ParameterStore()
    embedder = model.init_all_params(store, g, cfg, rng)
    aggs = aggregation_matrices(g, cfg.norm_mode)

    train_recs, valid_recs, _ = split_conversations(records, cfg.seed)
    train_rounds = prepare_rounds(train_recs, g)
    valid_rounds = prepare_rounds(valid_recs, g)
    if not train_rounds:
        raise TrainingError("no labeled wizard turns in the training split")
    rounds_by_rec = model.group_rounds(train_rounds + valid_rounds)

    pretrain_trace = mi.pretrain(store, g, train_recs, embedder, cfg, aggs)

    for name in store.names():
        if name.startswith(model.PRETRAIN_ONLY_PREFIXES):
            store.freeze(name)
        if not cfg.finetune_encoders and name.startswith(model.ENCODER_PREFIXES):
            store.freeze(name)

    joint_trace: list[dict] = []
    best_valid = math.inf
    best_snapshot: ParameterStore | None = None
    streak = 0
    joint_rng = np.random.default_rng(cfg.seed + 1)
    for epoch in range(cfg.joint_epochs):
        order = joint_rng.permutation(len(train_rounds))
        batch_losses: list[float] = []
        policy_losses: list[float] = []
        reasoning_losses: list[float] = []
        for lo in range(0, len(order), cfg.batch_joint):
            batch = [train_rounds[i] for i in order[lo : lo + cfg.batch_joint]]
            table = encode_entities(store, g, cfg.rgcn_layers, cfg.norm_mode, aggs)
            contexts = model.context_chains(store, embedder, rounds_by_rec, batch)
            total, l_a, l_r = model.round_losses(
                store, g, table, batch, contexts,
                cfg.lambda_, cfg.gamma, cfg.damp_normalize,
            )
            total.backward()
            adam_step(store, cfg.lr, cfg.weight_decay)
            batch_losses.append(float(total.value))
            policy_losses.append(l_a)
            reasoning_losses.append(l_r)
        valid_loss = _epoch_loss(store, g, embedder, rounds_by_rec, valid_rounds, cfg, aggs)
        joint_trace.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(batch_losses)),
                "train_policy_loss": float(np.mean(policy_losses)),
                "train_reasoning_loss": float(np.mean(reasoning_losses)),
                "valid_loss": valid_loss,
            }
        )
        if math.isnan(valid_loss):
            continue
        if valid_loss < best_valid:
            best_valid = valid_loss
            best_snapshot = store.clone()
            streak = 0
        else:
            streak += 1
            if streak >= cfg.patience > 0:
                break
    if best_snapshot is not None:
        store.load_values_from(best_snapshot)

    if trace_dir is not None:
        write_traces(trace_dir, pretrain_trace, joint_trace)
    return TrainResult(
        store=store,
        embedder=embedder,
        pretrain_trace=pretrain_trace,
        joint_trace=joint_trace,
        split_sizes=(len(train_recs), len(valid_recs), len(records) - len(train_recs) - len(valid_recs)),
    )


def write_traces(trace_dir: str, pretrain_trace: list[dict], joint_trace: list[dict]):
    os.makedirs(trace_dir, exist_ok=True)
    for fname, rows in (("pretrain_trace.csv", pretrain_trace), ("joint_trace.csv", joint_trace)):
        if not rows:
            continue
        with open(os.path.join(trace_dir, fname), "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


def evaluate(
    g: KnowledgeGraph,
    records: list[ConversationRecord],
    store: ParameterStore,
    embedder: UtteranceEmbedder,
    cfg: Config,
    top_k: int = 10,
) -> dict:
    """Ranking and generation quality over the given conversations.

    Rounds whose label resolves to a gold item contribute a ranking; the
    reply generated for the gold action is scored against the wizard's
    actual text.
    """
    from . import policy, preference, reasoner
    from .realizer import TemplateSet, realize
    from .corpus import QUERY
    from .evaluator import corpus_metrics

    rounds = prepare_rounds(records, g)
    rounds_by_rec = model.group_rounds(rounds)
    aggs = aggregation_matrices(g, cfg.norm_mode)
    table = encode_entities(store, g, cfg.rgcn_layers, cfg.norm_mode, aggs).value
    contexts = model.context_chains(store, embedder, rounds_by_rec, rounds) if rounds else {}
    templates = TemplateSet.bundled()

    rankings: list[tuple[list[str], str]] = []
    generated: list[str] = []
    gold_texts: list[str] = []
    for i, tr in enumerate(rounds):
        if tr.label is None:
            continue
        q_hat = contexts[(tr.rec_id, tr.t)].value
        probs = policy.predict_action(store, q_hat).value
        u = preference.mine_preference(
            store,
            preference.belief_matrix([table[v] for v in tr.mentions_before]),
            cfg.gamma,
            cfg.damp_normalize,
        ).value
        gold_item = None
        for target in (tr.label.second_target, tr.label.first_target):
            if target is not None and g.is_item(target):
                gold_item = target
                break
        if gold_item is not None:
            ranked = rank_items_names(g, store, tr, probs, u, q_hat, table, top_k)
            rankings.append((ranked, g.entity(gold_item).name))
        try:
            result = reasoner.reason_two_step(
                store, g, tr.label.start, tr.gold_action,
                ad.Var(probs), ad.Var(u), ad.Var(q_hat), ad.Var(table),
                mentioned=set(tr.mentions_before),
            )
            step1 = result.step1[0]
            step2 = result.step2[0] if result.step2 is not None else None
            if tr.gold_action != QUERY and step2 is not None and not g.is_item(step1):
                step1, step2 = step2, step1
            rel = g.relation_between(step1, step2) if step2 is not None else None
            text = realize(templates, g, tr.gold_action, step1, step2, rel, seed=i)
        except (NoNeighborsError, NoPathError, RealizationError):
            text = realize(templates, g, "chat", seed=i)
        generated.append(text)
        gold_texts.append(tr.wizard_text)
    return corpus_metrics(rankings, generated, gold_texts)


def rank_items_names(g, store, tr, probs, u, q_hat, table, top_k) -> list[str]:
    from .reasoner import rank_items

    ranked = rank_items(store, g, list(tr.mentions_before), probs, u, q_hat, table, top_k)
    return [g.entity(v).name for v, _ in ranked]


def train_to_checkpoint(
    g: KnowledgeGraph,
    records: list[ConversationRecord],
    cfg: Config,
    checkpoint_path: str,
    trace_dir: str | None = None,
) -> TrainResult:
    result = train(g, records, cfg, trace_dir=trace_dir)
    save_checkpoint(checkpoint_path, result.store, cfg.to_dict())
    return result
