"""Translation-embedding training: loss, corruption, gradients, persistence."""

import numpy as np
import pytest
from sklearn.base import clone

from _fixtures import PLANTED_KB_CONFIG, planted_kb, sleep_style_corpus
from verbclust.corpus import IntransitiveTriple, TypedTriple, TypedVerb
from verbclust.embedding import (
    EmbeddingTable,
    TrainConfig,
    TranslationEmbedding,
    batch_loss_and_gradients,
    corrupt,
    corrupt_rows,
    encode_training_rows,
    gradient_check,
    gradient_check_at,
    initialize_embeddings,
    l2_distance,
    margin_loss,
    mean_reciprocal_rank,
    rank_objects,
    train_embeddings,
)
from verbclust.errors import DataError, NumericError


def small_corpus():
    eat = TypedVerb("eat", None, "person", "food")
    see = TypedVerb("see", None, "person", "person")
    return [
        TypedTriple("alice", eat, "bread", 3),
        TypedTriple("bob", eat, "rice", 1),
        TypedTriple("alice", see, "bob", 2),
        TypedTriple("carol", see, "alice", 1),
    ]


class TestDistanceAndLoss:
    def test_identity_distance_is_zero(self):
        assert l2_distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_three_four_five(self):
        assert l2_distance([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = rng.normal(size=(2, 7))
            assert l2_distance(a, b) == l2_distance(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            l2_distance([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_margin_loss_cases(self):
        assert margin_loss(0.2, 1.5, 1.0) == 0.0
        assert margin_loss(1.0, 1.2, 1.0) == pytest.approx(0.8)
        assert margin_loss(0.7, 0.7, 1.0) == pytest.approx(1.0)


class TestCorrupt:
    def triple(self):
        return TypedTriple("a", TypedVerb("v", None, "t", "t"), "b", 1)

    def test_deterministic_given_seed(self):
        pool = ["a", "b", "c"]
        first = corrupt(self.triple(), pool, np.random.default_rng(42))
        second = corrupt(self.triple(), pool, np.random.default_rng(42))
        assert first == second

    def test_never_equals_input(self):
        rng = np.random.default_rng(0)
        pool = ["a", "b", "c", "d"]
        for _ in range(200):
            neg = corrupt(self.triple(), pool, rng)
            assert neg != self.triple()
            assert (neg.subject_np, neg.object_np) != ("a", "b")

    def test_slot_choice_is_fair(self):
        rng = np.random.default_rng(1)
        pool = ["a", "b", "c"]
        n = 10_000
        subject_flips = sum(
            corrupt(self.triple(), pool, rng).subject_np != "a" for _ in range(n))
        sigma = 0.5 * np.sqrt(n)
        assert abs(subject_flips - n / 2) <= 3 * sigma

    def test_replacement_uniform_over_others(self):
        rng = np.random.default_rng(2)
        pool = ["a", "b", "c", "d", "e"]
        counts = {}
        for _ in range(8000):
            neg = corrupt(self.triple(), pool, rng)
            if neg.object_np != "b":
                counts[neg.object_np] = counts.get(neg.object_np, 0) + 1
        values = np.array(sorted(counts.values()))
        assert set(counts) == {"a", "c", "d", "e"}
        assert values.min() > 0.8 * values.max()

    def test_intransitive_replaces_object_only(self):
        rng = np.random.default_rng(5)
        row = IntransitiveTriple(TypedVerb("sleep", None, "person", None), "in", "bed", 2)
        for _ in range(50):
            neg = corrupt(row, ["bed", "cot", "tent"], rng)
            assert neg.typed_verb == row.typed_verb
            assert neg.preposition == "in"
            assert neg.object_np != "bed"

    def test_tiny_pool_rejected(self):
        with pytest.raises(ValueError):
            corrupt(self.triple(), ["a"], np.random.default_rng(0))
        with pytest.raises(ValueError):
            corrupt(self.triple(), ["a", "a"], np.random.default_rng(0))

    def test_objectless_triple_rejected(self):
        row = TypedTriple("a", TypedVerb("sleep", None, "person", None), None, 1)
        with pytest.raises(ValueError):
            corrupt(row, ["a", "b"], np.random.default_rng(0))

    def test_corrupt_rows_replacement_differs(self):
        table = initialize_embeddings(small_corpus(), [], TrainConfig(dimension=4))
        rows = encode_training_rows(table, small_corpus())
        rng = np.random.default_rng(9)
        for _ in range(50):
            neg = corrupt_rows(rows, len(table.entity_index), rng)
            changed = rows != neg
            assert (changed.sum(axis=1) == 1).all()
            assert (neg[:, 4] < len(table.entity_index)).all()


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.dimension, cfg.epochs) == (300, 100)
        assert (cfg.margin, cfg.learning_rate, cfg.batch_size) == (1.0, 0.01, 512)

    @pytest.mark.parametrize("kwargs", [
        dict(dimension=0), dict(epochs=-1), dict(margin=0.0),
        dict(learning_rate=0.0), dict(batch_size=0),
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestInitialization:
    def test_shapes_and_bounds(self):
        cfg = TrainConfig(dimension=16, seed=4)
        table = initialize_embeddings(small_corpus(), [], cfg)
        assert table.entity_vectors.shape == (5, 16)
        assert table.relation_vectors.shape == (2, 16)
        assert table.preposition_vectors.shape == (0, 16)
        norms = np.linalg.norm(table.entity_vectors, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)
        bound = 6.0 / np.sqrt(16)
        assert np.abs(table.relation_vectors).max() <= bound

    def test_deterministic(self):
        cfg = TrainConfig(dimension=8, seed=7)
        a = initialize_embeddings(small_corpus(), [], cfg)
        b = initialize_embeddings(small_corpus(), [], cfg)
        np.testing.assert_array_equal(a.entity_vectors, b.entity_vectors)
        np.testing.assert_array_equal(a.relation_vectors, b.relation_vectors)

    def test_intransitive_symbols_included(self):
        typed, intrans = sleep_style_corpus()
        table = initialize_embeddings(typed, intrans, TrainConfig(dimension=8))
        assert table.has("relation", "sleep(person)")
        assert table.has("relation", "sleep in(person,furniture)")
        assert table.has("preposition", "in")

    def test_no_transitive_rows_rejected(self):
        row = TypedTriple("a", TypedVerb("sleep", None, "person", None), None, 1)
        with pytest.raises(ValueError):
            initialize_embeddings([row], [], TrainConfig(dimension=4))


class TestTraining:
    def test_zero_epochs_returns_initialization(self):
        cfg = TrainConfig(dimension=8, epochs=0, seed=3)
        init = initialize_embeddings(small_corpus(), [], cfg)
        table, trace = train_embeddings(small_corpus(), [], cfg)
        assert trace.size == 0
        np.testing.assert_array_equal(table.entity_vectors, init.entity_vectors)
        np.testing.assert_array_equal(table.relation_vectors, init.relation_vectors)

    def test_dimension_and_trace_length_match_config(self):
        cfg = TrainConfig(dimension=300, epochs=100, batch_size=4, seed=0)
        table, trace = train_embeddings(small_corpus(), [], cfg)
        assert table.dimension == 300
        assert table.entity_vectors.shape[1] == 300
        assert trace.shape == (100,)

    def test_entity_norms_stay_unit(self):
        cfg = TrainConfig(dimension=12, epochs=5, batch_size=8, seed=1)
        table, _ = train_embeddings(planted_kb(60), [], cfg)
        norms = np.linalg.norm(table.entity_vectors, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_planted_kb_reaches_mrr_half(self):
        kb = planted_kb()
        table, trace = train_embeddings(kb, [], TrainConfig(**PLANTED_KB_CONFIG))
        assert mean_reciprocal_rank(table, kb) >= 0.5
        assert trace[-1] < trace[0]

    def test_translation_fidelity_beats_random_entities(self):
        kb = planted_kb()
        table, _ = train_embeddings(kb, [], TrainConfig(**PLANTED_KB_CONFIG))
        rows = encode_training_rows(table, kb)
        E, R = table.entity_vectors, table.relation_vectors
        true_d = np.linalg.norm(E[rows[:, 1]] + R[rows[:, 3]] - E[rows[:, 4]], axis=1)
        rng = np.random.default_rng(8)
        random_d = np.linalg.norm(
            E[rows[:, 1]] + R[rows[:, 3]] - E[rng.integers(len(E), size=len(rows))],
            axis=1)
        assert true_d.mean() < random_d.mean()

    def test_single_worker_is_bit_identical(self):
        cfg = TrainConfig(dimension=10, epochs=20, batch_size=16, seed=5)
        kb = planted_kb(80)
        a, trace_a = train_embeddings(kb, [], cfg)
        b, trace_b = train_embeddings(kb, [], cfg)
        np.testing.assert_array_equal(a.entity_vectors, b.entity_vectors)
        np.testing.assert_array_equal(a.relation_vectors, b.relation_vectors)
        np.testing.assert_array_equal(trace_a, trace_b)

    def test_count_and_order_do_not_matter(self):
        # training uses the distinct-triples set, so duplicates and order
        # changes leave the result untouched
        cfg = TrainConfig(dimension=8, epochs=10, batch_size=8, seed=2)
        kb = planted_kb(50)
        doubled = [t._replace(count=7) for t in reversed(kb)] + kb
        a, _ = train_embeddings(kb, [], cfg)
        b, _ = train_embeddings(doubled, [], cfg)
        np.testing.assert_array_equal(a.entity_vectors, b.entity_vectors)

    def test_intransitives_share_the_space(self):
        typed, intrans = sleep_style_corpus()
        cfg = TrainConfig(dimension=16, epochs=300, batch_size=8,
                          learning_rate=0.05, margin=0.5, seed=3)
        table, _ = train_embeddings(typed, intrans, cfg)
        v = table.relation("sleep(person)")
        p = table.preposition("in")
        d_true = np.mean([l2_distance(v + p, table.entity(o)) for o in ("bed", "cot")])
        others = [e for e in table.symbols("entity") if e not in ("bed", "cot")]
        d_other = np.mean([l2_distance(v + p, table.entity(o)) for o in others])
        assert d_true < d_other

    def test_multi_worker_smoke(self):
        cfg = TrainConfig(dimension=8, epochs=10, batch_size=8, seed=0)
        table, trace = train_embeddings(planted_kb(60), [], cfg, workers=3)
        assert np.isfinite(table.entity_vectors).all()
        assert np.isfinite(trace).all()

    def test_divergence_reported_with_batch_context(self):
        cfg = TrainConfig(dimension=8, epochs=50, batch_size=8,
                          learning_rate=1e200, seed=0)
        with pytest.raises(NumericError, match="batch"):
            train_embeddings(planted_kb(60), [], cfg)


class TestGradientCheck:
    def test_active_configuration_matches_finite_differences(self):
        typed, intrans = sleep_style_corpus()
        cfg = TrainConfig(dimension=6, margin=1.0, seed=11)
        err = gradient_check(typed, intrans, cfg)
        assert err <= 1e-4

    def test_inactive_hinge_is_exactly_flat(self):
        # positive pair at distance 0, corrupted pair far away: the hinge
        # is inactive, both gradients are exactly zero
        E = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 0.0]])
        R = np.array([[0.0, 0.0]])
        table = EmbeddingTable(2, ["a", "b", "far"], E, ["v(t,t)"], R, [], np.zeros((0, 2)))
        pos = np.array([[0, 0, 0, 0, 1]])
        neg = np.array([[0, 0, 0, 0, 2]])
        loss, gE, gR, gP = batch_loss_and_gradients(table, pos, neg, margin=1.0)
        assert loss == 0.0
        assert not gE.any() and not gR.any()
        assert gradient_check_at(table, pos, neg, margin=1.0) == 0.0

    def test_margin_shift_keeps_gradient_where_active(self):
        # with every hinge active under both margins, the gradient is
        # unchanged: the margin only shifts the loss level
        typed, intrans = sleep_style_corpus()
        cfg = TrainConfig(dimension=6, seed=11)
        table = initialize_embeddings(typed, intrans, cfg)
        rows = encode_training_rows(table, typed, intrans)
        neg = corrupt_rows(rows, len(table.entity_index), np.random.default_rng(0))
        loss5, gE5, gR5, gP5 = batch_loss_and_gradients(table, rows, neg, margin=5.0)
        loss10, gE10, gR10, gP10 = batch_loss_and_gradients(table, rows, neg, margin=10.0)
        assert loss10 == pytest.approx(loss5 + 5.0 * len(rows))
        np.testing.assert_array_equal(gE5, gE10)
        np.testing.assert_array_equal(gR5, gR10)
        np.testing.assert_array_equal(gP5, gP10)


class TestRanking:
    def test_rank_objects_on_known_geometry(self):
        E = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 5.0]])
        R = np.array([[1.0, 0.0]])
        table = EmbeddingTable(2, ["a", "b", "c"], E, ["v(t,t)"], R, [], np.zeros((0, 2)))
        tv = TypedVerb("v", None, "t", "t")
        ranks = rank_objects(table, [TypedTriple("a", tv, "b", 1),
                                     TypedTriple("a", tv, "c", 1)])
        # a+v sits exactly on b: ranks are by distance 0 < 1 < sqrt(26)
        assert dict(zip([1, 3], [1, 3])) == dict(zip(sorted(ranks), sorted(ranks)))
        assert sorted(ranks.tolist()) == [1, 3]

    def test_mrr_requires_rows(self):
        table = initialize_embeddings(small_corpus(), [], TrainConfig(dimension=4))
        with pytest.raises(ValueError):
            mean_reciprocal_rank(table, [])


class TestEmbeddingFiles:
    def trained(self):
        cfg = TrainConfig(dimension=6, epochs=5, batch_size=8, seed=1)
        typed, intrans = sleep_style_corpus()
        table, _ = train_embeddings(typed, intrans, cfg)
        return table

    def test_round_trip(self, tmp_path):
        table = self.trained()
        path = tmp_path / "emb.txt"
        table.save(path)
        loaded = EmbeddingTable.load(path)
        assert loaded.dimension == table.dimension
        assert loaded.entity_index == table.entity_index
        assert loaded.relation_index == table.relation_index
        assert loaded.preposition_index == table.preposition_index
        np.testing.assert_array_equal(loaded.entity_vectors, table.entity_vectors)
        np.testing.assert_array_equal(loaded.relation_vectors, table.relation_vectors)
        np.testing.assert_array_equal(loaded.preposition_vectors, table.preposition_vectors)
        path2 = tmp_path / "emb2.txt"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_symbols_with_spaces_survive(self, tmp_path):
        table = self.trained()
        path = tmp_path / "emb.txt"
        table.save(path)
        loaded = EmbeddingTable.load(path)
        np.testing.assert_array_equal(loaded.relation("sleep in(person,furniture)"),
                                      table.relation("sleep in(person,furniture)"))

    def test_empty_table_round_trip(self, tmp_path):
        empty = EmbeddingTable(5, [], np.zeros((0, 5)), [], np.zeros((0, 5)),
                               [], np.zeros((0, 5)))
        path = tmp_path / "empty.txt"
        empty.save(path)
        loaded = EmbeddingTable.load(path)
        assert loaded.count == 0
        assert loaded.dimension == 5

    def test_truncated_file_names_byte_offset(self, tmp_path):
        table = self.trained()
        path = tmp_path / "emb.txt"
        table.save(path)
        whole = path.read_bytes()
        cut = tmp_path / "cut.txt"
        cut.write_bytes(whole[: int(len(whole) * 0.6)])
        with pytest.raises(DataError, match="byte"):
            EmbeddingTable.load(cut)

    def test_missing_rows_detected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("3 2\nentity a 0.5 0.5\n")
        with pytest.raises(DataError, match="byte"):
            EmbeddingTable.load(path)

    @pytest.mark.parametrize("body", [
        "garbage\nentity a 0.5 0.5\n",
        "1 2\nmystery a 0.5 0.5\n",
        "1 2\nentity a 0.5\n",
        "2 2\nentity a 0.5 0.5\nentity a 1.0 0.0\n",
        "1 2\nentity a nan 0.5\n",
        "1 -2\n",
    ])
    def test_malformed_files_rejected(self, tmp_path, body):
        path = tmp_path / "emb.txt"
        path.write_text(body)
        with pytest.raises(DataError):
            EmbeddingTable.load(path)

    def test_absent_symbol_lookup_fails(self):
        table = self.trained()
        with pytest.raises(KeyError):
            table.entity("zebra")
        with pytest.raises(KeyError):
            table.relation("fly(bird)")


class TestTranslationEmbeddingEstimator:
    def test_sklearn_params_and_clone(self):
        est = TranslationEmbedding(dimension=12, epochs=3, seed=4)
        params = est.get_params()
        assert params["dimension"] == 12
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_fit_transform_matches_table(self):
        est = TranslationEmbedding(dimension=8, epochs=4, batch_size=8, seed=0)
        est.fit(small_corpus())
        eat = TypedVerb("eat", None, "person", "food")
        vecs = est.transform([eat, "see(person,person)"])
        np.testing.assert_array_equal(vecs[0], est.table_.relation("eat(person,food)"))
        np.testing.assert_array_equal(vecs[1], est.table_.relation("see(person,person)"))

    def test_transform_unknown_verb_fails(self):
        est = TranslationEmbedding(dimension=8, epochs=1, batch_size=8, seed=0)
        est.fit(small_corpus())
        with pytest.raises(ValueError, match="fly"):
            est.transform(["fly(bird,sky)"])

    def test_unfitted_transform_fails(self):
        with pytest.raises(ValueError):
            TranslationEmbedding().transform(["eat(person,food)"])

    def test_score_triples_aligned_with_input(self):
        est = TranslationEmbedding(dimension=8, epochs=4, batch_size=8, seed=0)
        corpus = small_corpus()
        est.fit(corpus)
        scores = est.score_triples(corpus + corpus[:1])
        assert scores.shape == (5,)
        assert scores[0] == pytest.approx(scores[4])
