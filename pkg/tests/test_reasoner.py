"""Start picking, neighbor scoring, two-step walks, loss, item ranking."""

import math

import numpy as np
import pytest

from kecr import autodiff as ad
from kecr import reasoner as rsn
from kecr.context import DialogueState
from kecr.corpus import ReasoningLabel
from kecr.errors import CannotStartError, NoNeighborsError
from kecr.kg import ATTRIBUTE, CATEGORY, ITEM, KnowledgeGraph
from kecr.params import ParameterStore
from kecr.toydata import toy_graph

from gradcheck import check_store_grads

DIM = 2


def star_graph() -> KnowledgeGraph:
    """S fans out to three attributes; N1 continues to an item M."""
    g = KnowledgeGraph()
    g.add_relation("Genre")
    g.add_relation("Director")
    for name, kind in [
        ("S", ITEM),
        ("N1", ATTRIBUTE),
        ("N2", ATTRIBUTE),
        ("N3", ATTRIBUTE),
        ("M", ITEM),
    ]:
        g.add_entity(name, kind)
    g.add_triple(0, 0, 1)
    g.add_triple(0, 0, 2)
    g.add_triple(0, 1, 3)
    g.add_triple(1, 1, 4)
    g.add_triple(1, 0, 0)
    g.add_triple(4, 1, 0)
    return g


def zero_scorer(dim: int = DIM) -> ParameterStore:
    store = ParameterStore()
    rsn.init_reasoner_params(store, dim, np.random.default_rng(0))
    store.get(rsn.W_PROJ).value[:] = 0.0
    return store


def ctx(dim: int = DIM):
    a = ad.Var(np.array([1.0, 0.0, 0.0]))
    u = ad.Var(np.zeros(dim))
    q = ad.Var(np.zeros(dim))
    return a, u, q


def state_with(groups) -> DialogueState:
    flat = tuple(v for grp in groups for v in grp)
    return DialogueState(
        q=np.zeros(DIM),
        mentioned=flat,
        mention_groups=tuple(tuple(grp) for grp in groups),
    )


class TestPickStart:
    def test_single_recent_mention_wins(self, tmp_path):
        g = toy_graph(tmp_path)
        ann = g.entity_id("Annabelle")
        s = state_with([[g.entity_id("Horror Film")], [ann]])
        for seed in range(5):
            assert rsn.pick_start(s, g, np.random.default_rng(seed)) == ann

    def test_earlier_round_used_when_last_empty(self, tmp_path):
        g = toy_graph(tmp_path)
        ann = g.entity_id("Annabelle")
        s = state_with([[ann], []])
        assert rsn.pick_start(s, g, np.random.default_rng(0)) == ann

    def test_tie_choice_is_seeded_and_inside_group(self, tmp_path):
        g = toy_graph(tmp_path)
        group = [g.entity_id("Annabelle"), g.entity_id("Horror Film")]
        s = state_with([group])
        picks = {rsn.pick_start(s, g, np.random.default_rng(seed)) for seed in range(20)}
        assert picks <= set(group)
        assert len(picks) == 2  # both arms reachable
        a = rsn.pick_start(s, g, np.random.default_rng(3))
        b = rsn.pick_start(s, g, np.random.default_rng(3))
        assert a == b

    def test_cold_start_picks_a_category(self, tmp_path):
        g = toy_graph(tmp_path)
        s = state_with([])
        picked = rsn.pick_start(s, g, np.random.default_rng(1))
        assert picked in g.category_ids()

    def test_no_categories_no_mentions_is_an_error(self):
        g = KnowledgeGraph()
        g.add_entity("lonely", ITEM)
        with pytest.raises(CannotStartError):
            rsn.pick_start(state_with([]), g, np.random.default_rng(0))


class TestScoreNeighbors:
    def test_zero_scorer_gives_half_in_id_order(self):
        g = star_graph()
        store = zero_scorer()
        table = ad.Var(np.random.default_rng(1).normal(size=(5, DIM)))
        ranked = rsn.score_neighbors(store, g, 0, *ctx(), table)
        assert [k for k, _ in ranked] == [1, 2, 3]
        assert all(abs(s - 0.5) < 1e-12 for _, s in ranked)

    def test_single_neighbor_ranks_first(self):
        g = star_graph()
        store = ParameterStore()
        rsn.init_reasoner_params(store, DIM, np.random.default_rng(2))
        table = ad.Var(np.random.default_rng(3).normal(size=(5, DIM)))
        ranked = rsn.score_neighbors(store, g, 4, *ctx(), table)
        assert [k for k, _ in ranked] == [0]

    def test_crafted_scorer_matches_brute_force(self):
        g = star_graph()
        rng = np.random.default_rng(4)
        store = ParameterStore()
        rsn.init_reasoner_params(store, DIM, rng)
        w = store.value(rsn.W_PROJ)
        table = rng.normal(size=(5, DIM))
        a_v, u_v, q_v = rng.normal(size=3), rng.normal(size=DIM), rng.normal(size=DIM)
        ranked = rsn.score_neighbors(
            store, g, 0, ad.Var(a_v), ad.Var(u_v), ad.Var(q_v), ad.Var(table)
        )
        h_c = np.concatenate([a_v, u_v, q_v])
        by_hand = {}
        for k in (1, 2, 3):
            h_k = np.concatenate([table[0], table[k]])
            by_hand[k] = 1.0 / (1.0 + math.exp(-(h_k @ w @ h_c)))
        want = sorted(by_hand.items(), key=lambda kv: (-kv[1], kv[0]))
        assert [k for k, _ in ranked] == [k for k, _ in want]
        for (k1, s1), (k2, s2) in zip(ranked, want):
            assert abs(s1 - s2) < 1e-9

    def test_scores_strictly_inside_unit_interval(self):
        g = star_graph()
        store = ParameterStore()
        rsn.init_reasoner_params(store, DIM, np.random.default_rng(5))
        table = ad.Var(np.random.default_rng(6).normal(size=(5, DIM)))
        for _, s in rsn.score_neighbors(store, g, 0, *ctx(), table):
            assert 0.0 < s < 1.0

    def test_isolated_start_raises(self):
        g = star_graph()
        g.add_entity("island", ATTRIBUTE)
        store = zero_scorer()
        table = ad.Var(np.zeros((6, DIM)))
        with pytest.raises(NoNeighborsError, match="island"):
            rsn.score_neighbors(store, g, 5, *ctx(), table)


class TestReasonTwoStep:
    def test_query_stops_after_one_step(self):
        # a category start with one attribute neighbor: step1 only
        g = KnowledgeGraph()
        g.add_relation("Belong")
        g.add_entity("GenreCategory", CATEGORY)
        g.add_entity("Horror Film", ATTRIBUTE)
        g.add_triple(0, 0, 1)
        store = zero_scorer()
        table = ad.Var(np.zeros((2, DIM)))
        res = rsn.reason_two_step(store, g, 0, "query", *ctx(), table)
        assert res.step1[0] == 1
        assert res.step2 is None
        assert res.candidates2 == ()

    def test_recommend_prefers_unmentioned_items(self, tmp_path):
        g = toy_graph(tmp_path)
        store = zero_scorer()
        table = ad.Var(np.zeros((g.n_entities(), DIM)))
        hf = g.entity_id("Horror Film")
        ann = g.entity_id("Annabelle")
        ds = g.entity_id("Dead Silence")
        res = rsn.reason_two_step(
            store, g, hf, "recommend", *ctx(), table, mentioned={hf, ann}
        )
        assert res.step1[0] == ds  # Annabelle outranked by freshness, not score
        assert all(g.is_item(k) for k, _ in res.candidates1)

    def test_recommend_relaxes_when_no_item_neighbors(self, tmp_path):
        g = toy_graph(tmp_path)
        store = zero_scorer()
        table = ad.Var(np.zeros((g.n_entities(), DIM)))
        ann = g.entity_id("Annabelle")  # neighbors are attributes only
        res = rsn.reason_two_step(store, g, ann, "recommend", *ctx(), table, mentioned={ann})
        assert not g.is_item(res.step1[0])
        # with an attribute first hop the second hop carries the item
        assert res.step2 is not None and g.is_item(res.step2[0])
        assert res.step2[0] not in (ann, res.step1[0])

    def test_step2_never_revisits(self, tmp_path):
        g = toy_graph(tmp_path)
        table_rng = np.random.default_rng(7)
        for trial in range(100):
            store = ParameterStore()
            rsn.init_reasoner_params(store, DIM, np.random.default_rng(trial))
            table = ad.Var(table_rng.normal(size=(g.n_entities(), DIM)))
            start = g.entity_id("Annabelle") if trial % 2 else g.entity_id("Horror Film")
            res = rsn.reason_two_step(store, g, start, "recommend", *ctx(), table)
            assert res.step1[0] != start
            if res.step2 is not None:
                assert res.step2[0] not in (start, res.step1[0])

    def test_explanation_prefers_attributes(self, tmp_path):
        g = toy_graph(tmp_path)
        store = zero_scorer()
        table = ad.Var(np.zeros((g.n_entities(), DIM)))
        hf = g.entity_id("Horror Film")
        res = rsn.reason_two_step(store, g, hf, "recommend", *ctx(), table, mentioned={hf})
        # step1 is an item; its explanation must be attribute- or category-kind
        assert g.is_item(res.step1[0])
        assert g.entity(res.step2[0]).kind in (ATTRIBUTE, CATEGORY)


class TestReasoningLoss:
    def test_indifferent_scorer_hand_value(self):
        g = star_graph()
        store = zero_scorer()
        table = ad.Var(np.zeros((5, DIM)))
        label = ReasoningLabel(turn_index=1, start=0, first_target=1, second_target=None)
        loss = rsn.reasoning_loss(store, g, table, [(label, *ctx())], lam=0.3)
        assert abs(float(loss.value) - 3.0 * math.log(2.0)) < 1e-9

    def test_confident_correct_scorer_vanishes(self):
        g = star_graph()
        store = zero_scorer()
        # only the destination half of h_k matters when e_start = 0
        table = np.zeros((5, DIM))
        table[1] = [1.0, 0.0]
        table[2] = [0.0, 1.0]
        table[3] = [0.0, 1.0]
        w = store.get(rsn.W_PROJ).value
        w[:, 0] = [0.0, 0.0, 40.0, -40.0]  # reacts to action slot a[0] = 1
        label = ReasoningLabel(turn_index=1, start=0, first_target=1, second_target=None)
        loss = rsn.reasoning_loss(store, g, ad.Var(table), [(label, *ctx())], lam=0.3)
        assert float(loss.value) < 1e-10

    def test_lambda_weights_second_step(self):
        g = star_graph()
        store = zero_scorer()
        table = ad.Var(np.zeros((5, DIM)))
        label = ReasoningLabel(turn_index=1, start=0, first_target=1, second_target=4)
        base = float(
            rsn.reasoning_loss(store, g, table, [(label, *ctx())], lam=0.0).value
        )
        # N1 has neighbors {S, M}: two binary terms at 0.5 each
        with_second = float(
            rsn.reasoning_loss(store, g, table, [(label, *ctx())], lam=0.5).value
        )
        assert abs(base - 3.0 * math.log(2.0)) < 1e-9
        assert abs(with_second - (3.0 + 0.5 * 2.0) * math.log(2.0)) < 1e-9

    def test_lambda_zero_kills_second_step_gradient(self):
        g = star_graph()
        rng = np.random.default_rng(8)
        store = ParameterStore()
        rsn.init_reasoner_params(store, DIM, rng)
        table = ad.Var(rng.normal(size=(5, DIM)))
        with_2 = ReasoningLabel(turn_index=1, start=0, first_target=1, second_target=4)
        without = ReasoningLabel(turn_index=1, start=0, first_target=1, second_target=None)
        grads = []
        for label in (with_2, without):
            store.zero_grads()
            rsn.reasoning_loss(store, g, table, [(label, *ctx())], lam=0.0).backward()
            grads.append(store.get(rsn.W_PROJ).grad.copy())
        np.testing.assert_array_equal(grads[0], grads[1])

    def test_mean_over_labels(self):
        g = star_graph()
        store = zero_scorer()
        table = ad.Var(np.zeros((5, DIM)))
        label = ReasoningLabel(turn_index=1, start=0, first_target=1, second_target=None)
        one = float(rsn.reasoning_loss(store, g, table, [(label, *ctx())], 0.3).value)
        two = float(
            rsn.reasoning_loss(store, g, table, [(label, *ctx()), (label, *ctx())], 0.3).value
        )
        assert abs(one - two) < 1e-12

    def test_gradient_matches_finite_differences(self):
        g = star_graph()
        rng = np.random.default_rng(9)
        store = ParameterStore()
        rsn.init_reasoner_params(store, DIM, rng)
        table = ad.Var(rng.normal(size=(5, DIM)))
        a = ad.Var(np.array([0.2, 0.5, 0.3]))
        u = ad.Var(rng.normal(size=DIM))
        q = ad.Var(rng.normal(size=DIM))
        labels = [
            ReasoningLabel(1, 0, 1, 4),
            ReasoningLabel(3, 0, 2, None),
        ]

        def build_loss():
            return rsn.reasoning_loss(
                store, g, table, [(lb, a, u, q) for lb in labels], lam=0.3
            )

        check_store_grads(store, build_loss, [rsn.W_PROJ])


class TestRankItems:
    def graph(self) -> KnowledgeGraph:
        # A(item, mentioned) -> G(attr) -> {I1, I2} items; A -> D item directly
        g = KnowledgeGraph()
        g.add_relation("Genre")
        g.add_relation("Sim")
        for name, kind in [
            ("A", ITEM),
            ("G", ATTRIBUTE),
            ("I1", ITEM),
            ("I2", ITEM),
            ("D", ITEM),
        ]:
            g.add_entity(name, kind)
        g.add_triple(0, 0, 1)
        g.add_triple(1, 0, 2)
        g.add_triple(1, 0, 3)
        g.add_triple(0, 1, 4)
        return g

    def vecs(self, g):
        n = g.n_entities()
        return (
            np.array([1.0, 0.0, 0.0]),
            np.zeros(DIM),
            np.zeros(DIM),
            np.zeros((n, DIM)),
        )

    def test_two_hop_candidates_and_tie_order(self):
        g = self.graph()
        store = zero_scorer()
        a, u, q, table = self.vecs(g)
        ranked = rsn.rank_items(store, g, [0], a, u, q, table, k=10)
        # direct neighbor scores 0.5; two-hop items score 0.25; ids break ties
        assert ranked == [(4, 0.5), (2, 0.25), (3, 0.25)]

    def test_k_truncates(self):
        g = self.graph()
        store = zero_scorer()
        a, u, q, table = self.vecs(g)
        assert len(rsn.rank_items(store, g, [0], a, u, q, table, k=2)) == 2

    def test_mentioned_items_are_excluded(self):
        g = self.graph()
        store = zero_scorer()
        a, u, q, table = self.vecs(g)
        ranked = rsn.rank_items(store, g, [0, 2], a, u, q, table, k=10)
        assert 2 not in [k for k, _ in ranked]
        assert 0 not in [k for k, _ in ranked]

    def test_no_mentions_falls_back_to_all_items(self):
        g = self.graph()
        store = zero_scorer()
        a, u, q, table = self.vecs(g)
        ranked = rsn.rank_items(store, g, [], a, u, q, table, k=10)
        assert [k for k, _ in ranked] == [0, 2, 3, 4]

    def test_single_unmentioned_item_ranks_first(self):
        g = KnowledgeGraph()
        g.add_relation("Genre")
        g.add_entity("A", ITEM)
        g.add_entity("G", ATTRIBUTE)
        g.add_entity("Only", ITEM)
        g.add_triple(0, 0, 1)
        g.add_triple(1, 0, 2)
        store = zero_scorer()
        a, u, q = np.array([1.0, 0.0, 0.0]), np.zeros(DIM), np.zeros(DIM)
        ranked = rsn.rank_items(store, g, [0], a, u, q, np.zeros((3, DIM)), k=5)
        assert ranked[0][0] == 2
