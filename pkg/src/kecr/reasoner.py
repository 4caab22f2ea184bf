"""Two-step relevance reasoning over the graph.

Every candidate next-hop k from a current node v gets

    J(k) = sigmoid( [e_v; e_k] . (W_proj [a; u; q]) )

where a is the action distribution, u the mined preference, and q the
dialogue context.  The projected context W_proj [a;u;q] is shared by all
candidates of a step, so scoring n neighbors costs one matvec plus n
dot products.

Step 1 picks the best neighbor of the start under action constraints
(recommend wants an item, query wants an attribute or category); step 2
continues from that pick to fetch an explanation entity, never
revisiting the start or the pick.  Constraint filters that come up
empty fall back to the unfiltered candidate list before giving up.

The supervised loss treats each step as one-vs-rest binary
classification over the full neighbor set of that step's origin:

    L = sum_k [y_k log J(k) + (1 - y_k) log(1 - J(k))],  negated,

summed over the neighbor set, averaged over labels, with the second
step weighted by lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .context import DialogueState
from .corpus import QUERY, RECOMMEND, ReasoningLabel
from .errors import CannotStartError, NoNeighborsError, NoPathError
from .kg import ATTRIBUTE, CATEGORY, KnowledgeGraph
from .params import ParameterStore

J_CLAMP = 1e-12

W_PROJ = "reasoner.w_proj"


def init_reasoner_params(store: ParameterStore, dim: int, rng: np.random.Generator):
    store.create(W_PROJ, (2 * dim, 3 + 2 * dim), rng=rng, fan_in=3 + 2 * dim)


@dataclass(frozen=True)
class ReasoningResult:
    action: str
    start: int
    step1: tuple[int, float]
    step2: tuple[int, float] | None
    candidates1: tuple[tuple[int, float], ...]
    candidates2: tuple[tuple[int, float], ...]


def pick_start(state: DialogueState, g: KnowledgeGraph, rng: np.random.Generator) -> int:
    """Most recent mention wins; several in one round -> uniform choice; a
    history with no mentions at all starts from a random category entity."""
    for group in reversed(state.mention_groups):
        if group:
            return int(rng.choice(group)) if len(group) > 1 else group[0]
    cats = g.category_ids()
    if not cats:
        raise CannotStartError("no mentioned entities and the graph has no categories")
    return int(rng.choice(cats))


def project_context(store: ParameterStore, a: ad.Var, u: ad.Var, q: ad.Var) -> ad.Var:
    return ad.matmul(store.var(W_PROJ), ad.concat([a, u, q]))


def _candidate_scores(
    store: ParameterStore, g: KnowledgeGraph, origin: int, proj: ad.Var, table: ad.Var
) -> list[tuple[int, ad.Var]]:
    e_origin = ad.take_row(table, origin)
    out = []
    for k in g.neighbor_ids(origin):
        h_k = ad.concat([e_origin, ad.take_row(table, k)])
        out.append((k, ad.sigmoid(ad.dot(h_k, proj))))
    return out


def score_neighbors(
    store: ParameterStore,
    g: KnowledgeGraph,
    start: int,
    a: ad.Var,
    u: ad.Var,
    q: ad.Var,
    table: ad.Var,
) -> list[tuple[int, float]]:
    """All neighbors of start, best score first, ties by ascending id."""
    scored = _candidate_scores(store, g, start, project_context(store, a, u, q), table)
    if not scored:
        raise NoNeighborsError(f"entity {g.entity(start).name!r} has no neighbors")
    return sorted(
        ((k, float(s.value)) for k, s in scored), key=lambda kv: (-kv[1], kv[0])
    )


def _step1_filter(g: KnowledgeGraph, action: str, mentioned: set[int], ranked):
    if action == RECOMMEND:
        items = [(k, s) for k, s in ranked if g.is_item(k)]
        if items:
            fresh = [(k, s) for k, s in items if k not in mentioned]
            return fresh or items
        return []
    if action == QUERY:
        return [
            (k, s) for k, s in ranked if g.entity(k).kind in (ATTRIBUTE, CATEGORY)
        ]
    return list(ranked)


def _step2_filter(g: KnowledgeGraph, action: str, step1: int, mentioned: set[int], ranked):
    """For a recommend the pair (step1, step2) should carry one item and
    one attribute: an item step1 wants an attribute explanation, while an
    attribute step1 (relaxed first hop) makes step2 the recommendation."""
    if action == RECOMMEND:
        if g.is_item(step1):
            return [
                (k, s) for k, s in ranked if g.entity(k).kind in (ATTRIBUTE, CATEGORY)
            ]
        items = [(k, s) for k, s in ranked if g.is_item(k)]
        if items:
            fresh = [(k, s) for k, s in items if k not in mentioned]
            return fresh or items
        return []
    return list(ranked)


def reason_two_step(
    store: ParameterStore,
    g: KnowledgeGraph,
    start: int,
    action: str,
    a: ad.Var,
    u: ad.Var,
    q: ad.Var,
    table: ad.Var,
    mentioned: set[int] | None = None,
) -> ReasoningResult:
    mentioned = mentioned or set()
    ranked1 = score_neighbors(store, g, start, a, u, q, table)
    pool1 = _step1_filter(g, action, mentioned, ranked1) or ranked1
    if not pool1:
        raise NoPathError(f"no step-1 candidate from {g.entity(start).name!r}")
    step1 = pool1[0]

    step2 = None
    candidates2: tuple = ()
    if action != QUERY:
        try:
            ranked2 = score_neighbors(store, g, step1[0], a, u, q, table)
        except NoNeighborsError:
            ranked2 = []
        ranked2 = [(k, s) for k, s in ranked2 if k not in (start, step1[0])]
        pool2 = _step2_filter(g, action, step1[0], mentioned, ranked2) or ranked2
        if pool2:
            step2 = pool2[0]
            candidates2 = tuple(pool2)

    return ReasoningResult(
        action=action,
        start=start,
        step1=step1,
        step2=step2,
        candidates1=tuple(pool1),
        candidates2=candidates2,
    )


def _step_bce(
    store: ParameterStore,
    g: KnowledgeGraph,
    origin: int,
    target: int,
    proj: ad.Var,
    table: ad.Var,
) -> ad.Var:
    terms = []
    for k, score in _candidate_scores(store, g, origin, proj, table):
        p = ad.clamp(score, J_CLAMP, 1.0 - J_CLAMP)
        if k == target:
            terms.append(ad.log_(p))
        else:
            terms.append(ad.log_(ad.sub(1.0, p)))
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.neg(total)


def reasoning_loss(
    store: ParameterStore,
    g: KnowledgeGraph,
    table: ad.Var,
    instances: list[tuple[ReasoningLabel, ad.Var, ad.Var, ad.Var]],
    lam: float,
) -> ad.Var:
    """Mean over labeled turns of L1 + lambda * L2.

    Each instance carries the label and its turn's (a, u, q).  lambda = 0
    skips building the second-step term entirely, so those labels then
    contribute no gradient anywhere.
    """
    per_label = []
    for label, a, u, q in instances:
        proj = project_context(store, a, u, q)
        loss = _step_bce(store, g, label.start, label.first_target, proj, table)
        if lam > 0.0 and label.second_target is not None:
            second = _step_bce(store, g, label.first_target, label.second_target, proj, table)
            loss = ad.add(loss, ad.mul(second, lam))
        per_label.append(loss)
    total = per_label[0]
    for t in per_label[1:]:
        total = ad.add(total, t)
    return ad.mul(total, 1.0 / len(per_label))


def rank_items(
    store: ParameterStore,
    g: KnowledgeGraph,
    mentioned: list[int],
    a: np.ndarray,
    u: np.ndarray,
    q: np.ndarray,
    table: np.ndarray,
    k: int,
) -> list[tuple[int, float]]:
    """Top-k unmentioned items reachable within two hops of the mentions.

    Pure ndarray path: J(x -> y) = sigmoid(s1[x] + s2[y]) after splitting
    the projected context into its start/destination halves, so scoring a
    candidate set costs two matvecs.  An item two hops out scores the
    best bridge product J(anchor -> b) * J(b -> item); the final score is
    the max over anchors.  With no mentions every item is a candidate and
    destination affinity alone orders them.
    """
    d = table.shape[1]
    proj = store.value(W_PROJ) @ np.concatenate([a, u, q])
    s1 = table @ proj[:d]
    s2 = table @ proj[d:]

    def sig(x):
        return 1.0 / (1.0 + np.exp(-x))

    mentioned_set = set(mentioned)
    if not mentioned:
        scored = [(v, float(sig(s2[v]))) for v in g.item_ids()]
        scored.sort(key=lambda kv: (-kv[1], kv[0]))
        return scored[:k]

    best: dict[int, float] = {}
    for anchor in mentioned_set:
        hop1 = g.neighbor_ids(anchor)
        for b in hop1:
            j_ab = float(sig(s1[anchor] + s2[b]))
            if g.is_item(b) and b not in mentioned_set:
                if j_ab > best.get(b, -1.0):
                    best[b] = j_ab
            for v in g.neighbor_ids(b):
                if v in mentioned_set or v == anchor or not g.is_item(v):
                    continue
                j = j_ab * float(sig(s1[b] + s2[v]))
                if j > best.get(v, -1.0):
                    best[v] = j
    if not best:
        best = {
            v: float(sig(s2[v])) for v in g.item_ids() if v not in mentioned_set
        }
    scored = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return scored[:k]
