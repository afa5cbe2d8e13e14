import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clonalnet import clonal
from clonalnet.clonal import (
    Antibody, CloneConfig, ClonalExpander, MemoryPool, affinity,
    best_match_affinity, clonalg_run, clone_count, crossover, generate_clones,
    load_pools, mutate, mutation_rate, pool_affinities, save_pools,
    update_memory,
)
from clonalnet.errors import (ConfigurationError, DimensionError,
                              UndefinedAffinityError)


def finite_vectors(width):
    return st.lists(
        st.floats(-10, 10, allow_nan=False, allow_infinity=False),
        min_size=width, max_size=width,
    ).map(lambda xs: np.array(xs, dtype=np.float64))


class TestAffinity:
    def test_identical_vectors(self):
        v = np.array([1.0, 2.0, -3.0])
        assert affinity(v, v) == 1.0

    def test_orthogonal(self):
        assert affinity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.5

    def test_opposite(self):
        v = np.array([2.0, -1.0])
        assert affinity(v, -v) == 0.0

    def test_both_zero_undefined(self):
        z = np.zeros(3)
        with pytest.raises(UndefinedAffinityError):
            affinity(z, z)

    def test_single_zero_counts_as_orthogonal(self):
        assert affinity(np.zeros(3), np.array([1.0, 0.0, 0.0])) == 0.5

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            affinity(np.zeros(2), np.zeros(3))

    def test_subnormal_norm_is_not_a_zero_vector(self):
        # squared norm underflows to 0.0 but the vector has a direction
        tiny = np.array([0.0, 0.0, 0.0, 1.4309679698518183e-256])
        assert affinity(np.zeros(4), tiny) == 0.5
        assert affinity(tiny, np.zeros(4)) == 0.5

    def test_extreme_magnitudes_renormalized(self):
        tiny = np.full(4, 1e-200)
        assert affinity(tiny, tiny) == 1.0
        assert affinity(tiny, -tiny) == 0.0
        huge = np.full(4, 1e200)
        assert affinity(huge, huge) == 1.0
        assert affinity(huge, tiny) == 1.0
        assert affinity(np.array([1e-270, 0.0]), np.array([0.0, 1e-270])) == 0.5

    @given(finite_vectors(4), finite_vectors(4))
    def test_symmetric_and_bounded(self, a, b):
        if not a.any() and not b.any():
            return
        x = affinity(a, b)
        assert affinity(b, a) == x
        assert 0.0 <= x <= 1.0

    @given(finite_vectors(4), st.floats(0.01, 100))
    def test_scale_invariant(self, v, c):
        if not v.any():
            return
        # scaling must keep every nonzero component a normal float: once a
        # component underflows, the direction itself is gone and no
        # implementation could recover it
        nonzero = v != 0
        tiny = np.finfo(np.float64).tiny
        if np.any(np.abs(v)[nonzero] < tiny) \
                or np.any(np.abs(c * v)[nonzero] < tiny):
            return
        other = np.arange(1.0, 5.0)
        assert abs(affinity(c * v, other) - affinity(v, other)) < 1e-12


class TestCloneCount:
    def test_formula_at_full_affinity(self):
        assert clone_count(1.0, eta=10, tau=0.5) == 10

    def test_below_threshold_is_zero(self):
        assert clone_count(0.3, eta=10, tau=0.5) == 0

    def test_minimum_one_above_threshold(self):
        assert clone_count(0.9, eta=0.1, tau=0.5) == 1

    def test_eta_zero_disables_cloning(self):
        assert clone_count(1.0, eta=0.0, tau=0.5) == 0

    def test_round_half_up(self):
        assert clone_count(0.7, eta=5, tau=0.0) == 4   # 3.5 rounds up

    def test_monotone_over_grid(self):
        grid = np.linspace(0.0, 1.0, 100)
        counts = [clone_count(a, eta=7.0, tau=0.4) for a in grid]
        assert all(c2 >= c1 for c1, c2 in zip(counts, counts[1:]))


class TestMutationRate:
    def test_formula(self):
        assert mutation_rate(1.0, alpha=0.1, rate_cap=1.0) == 0.1

    def test_cap_near_zero_affinity(self):
        assert mutation_rate(0.001, alpha=0.1, rate_cap=1.0) == 1.0

    def test_zero_affinity_saturates(self):
        assert mutation_rate(0.0, alpha=0.1, rate_cap=1.0) == 1.0

    def test_monotone_non_increasing_over_grid(self):
        grid = np.linspace(0.0, 1.0, 100)
        rates = [mutation_rate(a, alpha=0.2, rate_cap=1.0) for a in grid]
        assert all(r2 <= r1 for r1, r2 in zip(rates, rates[1:]))


class TestMutate:
    def test_zero_scale_is_identity(self):
        v = np.array([1.0, -2.0, 0.5])
        rng = np.random.default_rng(0)
        assert np.array_equal(mutate(v, rate=0.5, sigma=0.0, rng=rng), v)

    def test_width_preserved(self):
        rng = np.random.default_rng(1)
        assert mutate(np.zeros(17), 0.3, 0.2, rng).shape == (17,)

    def test_empirical_std(self):
        rng = np.random.default_rng(2)
        rate, sigma = 0.4, 0.25
        draws = np.stack([mutate(np.zeros(10), rate, sigma, rng)
                          for _ in range(1000)])
        measured = draws.ravel().std()
        assert abs(measured - rate * sigma) / (rate * sigma) < 0.05

    def test_zero_mean(self):
        rng = np.random.default_rng(3)
        draws = np.stack([mutate(np.zeros(10), 1.0, 0.5, rng)
                          for _ in range(1000)])
        se = 0.5 / np.sqrt(draws.size)
        assert abs(draws.mean()) < 3 * se


class TestCrossover:
    def test_identical_parents(self):
        v = np.array([3.0, 1.0, 4.0])
        rng = np.random.default_rng(0)
        assert np.array_equal(crossover(v, v, rng), v)

    def test_components_come_from_parents(self):
        rng = np.random.default_rng(4)
        a = np.arange(10.0)
        b = -np.arange(10.0) - 1.0
        child = crossover(a, b, rng)
        assert all(child[i] in (a[i], b[i]) for i in range(10))

    def test_source_proportion_half(self):
        rng = np.random.default_rng(5)
        a = np.ones(100)
        b = np.zeros(100)
        total = sum(crossover(a, b, rng).sum() for _ in range(100))
        n = 100 * 100
        se = 0.5 * np.sqrt(n)
        assert abs(total - n / 2) < 3 * se

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            crossover(np.zeros(3), np.zeros(4), np.random.default_rng(0))


def pool_of(features, label=0, capacity=10):
    members = [Antibody(feature=np.asarray(f, dtype=np.float64),
                        class_label=label, affinity_score=1.0 - 0.01 * i)
               for i, f in enumerate(features)]
    return MemoryPool(class_label=label, capacity=capacity, members=members)


class TestPoolAffinities:
    def test_matches_scalar_affinity(self):
        rng = np.random.default_rng(6)
        pool = pool_of(rng.normal(size=(5, 8)))
        queries = rng.normal(size=(4, 8))
        table = pool_affinities(queries, pool)
        for i in range(4):
            for j in range(5):
                expected = affinity(queries[i], pool.members[j].feature)
                assert abs(table[i, j] - expected) < 1e-12

    def test_matches_scalar_at_extreme_magnitudes(self):
        rng = np.random.default_rng(11)
        members = np.array([
            [1e-200, 2e-200, -1e-200, 0.0],
            [0.0, 0.0, 0.0, 1.4309679698518183e-256],
            [1.0, -2.0, 3.0, 4.0],
            [0.0, 0.0, 0.0, 0.0],
        ])
        pool = pool_of(members)
        queries = np.stack([
            np.array([1e-201, 0.0, 0.0, 0.0]),
            rng.normal(size=4),
            np.full(4, 1e190),
        ])
        table = pool_affinities(queries, pool)
        for i in range(queries.shape[0]):
            for j in range(members.shape[0]):
                expected = affinity(queries[i], members[j])
                assert abs(table[i, j] - expected) < 1e-12

    def test_zero_query_against_nonzero_pool(self):
        pool = pool_of([[1.0, 0.0], [0.0, 2.0]])
        table = pool_affinities(np.zeros((1, 2)), pool)
        assert np.allclose(table, 0.5)

    def test_zero_query_against_zero_member(self):
        pool = pool_of([[0.0, 0.0]])
        with pytest.raises(UndefinedAffinityError):
            pool_affinities(np.zeros((1, 2)), pool)

    def test_empty_pool_rejected(self):
        empty = MemoryPool(class_label=0, capacity=3)
        with pytest.raises(ConfigurationError):
            pool_affinities(np.ones((1, 2)), empty)

    def test_best_match_is_max(self):
        rng = np.random.default_rng(7)
        pool = pool_of(rng.normal(size=(6, 5)))
        q = rng.normal(size=5)
        expected = max(affinity(q, m.feature) for m in pool.members)
        assert abs(best_match_affinity(q, pool) - expected) < 1e-12


class TestGenerateClones:
    def test_all_below_threshold_empty(self):
        pool = pool_of([[1.0, 0.0, 0.0, 0.0]])
        batch = [(np.array([-1.0, 0.0, 0.0, 0.0]), 0, 0)]   # affinity 0.0
        config = CloneConfig(tau=0.6, memory_capacity=5)
        clones = generate_clones(batch, {0: pool}, config,
                                 np.random.default_rng(0))
        assert clones == []

    def test_degenerate_operators_copy_parent(self):
        feature = np.array([0.5, -0.25, 1.0])
        pool = pool_of([feature])
        batch = [(feature.copy(), 0, 42)]
        config = CloneConfig(eta=5.0, sigma=0.0, crossover_prob=0.0,
                             tau=0.6, memory_capacity=5)
        clones = generate_clones(batch, {0: pool}, config,
                                 np.random.default_rng(0))
        assert len(clones) == 5
        for clone_feature, label, parent in clones:
            assert np.array_equal(clone_feature, feature)
            assert label == 0
            assert parent == 42

    def test_emitted_count_matches_recount_at_tau_zero(self):
        rng = np.random.default_rng(8)
        pool_feats = rng.normal(size=(3, 6))
        pool = pool_of(pool_feats)
        batch = [(rng.normal(size=6), 0, i) for i in range(4)]
        config = CloneConfig(eta=5.0, tau=0.0, memory_capacity=5)
        clones = generate_clones(batch, {0: pool}, config,
                                 np.random.default_rng(9))
        expected = 0
        for feature, _, _ in batch:
            a = max(affinity(feature, f) for f in pool_feats)
            expected += clone_count(a, config.eta, config.tau)
        assert len(clones) == expected

    def test_unknown_label_rejected(self):
        pool = pool_of([[1.0, 0.0]])
        batch = [(np.array([1.0, 0.0]), 3, 0)]
        with pytest.raises(ConfigurationError):
            generate_clones(batch, {0: pool}, CloneConfig(memory_capacity=5),
                            np.random.default_rng(0))

    def test_output_bounded_and_accepted(self):
        rng = np.random.default_rng(10)
        pool = pool_of(rng.normal(size=(4, 5)))
        batch = [(rng.normal(size=5), 0, i) for i in range(6)]
        config = CloneConfig(eta=4.0, tau=0.55, memory_capacity=5)
        clones = generate_clones(batch, {0: pool}, config,
                                 np.random.default_rng(11))
        bound = sum(clone_count(best_match_affinity(f, pool),
                                config.eta, config.tau)
                    for f, _, _ in batch)
        assert len(clones) <= bound
        for clone_feature, _, _ in clones:
            assert clone_feature.shape == (5,)
            assert best_match_affinity(clone_feature, pool) >= config.tau

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(12)
        pool = pool_of(rng.normal(size=(3, 4)))
        batch = [(rng.normal(size=4), 0, i) for i in range(3)]
        config = CloneConfig(memory_capacity=5)
        a = generate_clones(batch, {0: pool}, config, np.random.default_rng(7))
        b = generate_clones(batch, {0: pool}, config, np.random.default_rng(7))
        assert len(a) == len(b)
        for (fa, la, pa), (fb, lb, pb) in zip(a, b):
            assert np.array_equal(fa, fb) and la == lb and pa == pb


class TestUpdateMemory:
    def test_empty_candidates_no_change(self):
        pool = pool_of([[1.0, 0.0], [0.0, 1.0]], capacity=4)
        updated = update_memory(pool, [])
        assert [ab.affinity_score for ab in updated.members] == \
            [ab.affinity_score for ab in pool.members]

    def test_top_k_retained(self):
        pool = MemoryPool(class_label=0, capacity=3)
        candidates = [Antibody(np.array([float(i)]), 0, score)
                      for i, score in enumerate([0.2, 0.9, 0.5, 0.7, 0.1])]
        updated = update_memory(pool, candidates, m=3)
        assert [ab.affinity_score for ab in updated.members] == [0.9, 0.7, 0.5]

    def test_tie_keeps_existing_member(self):
        incumbent = Antibody(np.array([1.0]), 0, 0.8)
        pool = MemoryPool(class_label=0, capacity=1, members=[incumbent])
        challenger = Antibody(np.array([2.0]), 0, 0.8)
        updated = update_memory(pool, [challenger])
        assert updated.members[0].feature[0] == 1.0

    def test_strictly_better_candidate_evicts(self):
        incumbent = Antibody(np.array([1.0]), 0, 0.8)
        pool = MemoryPool(class_label=0, capacity=1, members=[incumbent])
        challenger = Antibody(np.array([2.0]), 0, 0.81)
        updated = update_memory(pool, [challenger])
        assert updated.members[0].feature[0] == 2.0

    def test_class_mismatch_rejected(self):
        pool = MemoryPool(class_label=0, capacity=2)
        with pytest.raises(ConfigurationError):
            update_memory(pool, [Antibody(np.zeros(1), 1, 0.5)])

    def test_best_affinity_never_decreases(self):
        rng = np.random.default_rng(13)
        pool = MemoryPool(class_label=0, capacity=5)
        best = 0.0
        for _ in range(100):
            candidates = [Antibody(rng.normal(size=3), 0, float(rng.random()))
                          for _ in range(rng.integers(0, 4))]
            pool = update_memory(pool, candidates)
            assert len(pool.members) <= 5
            if pool.members:
                assert pool.members[0].affinity_score >= best
                best = pool.members[0].affinity_score
                scores = [ab.affinity_score for ab in pool.members]
                assert scores == sorted(scores, reverse=True)


class TestClonalExpander:
    def test_bootstrap_builds_sorted_pools(self):
        rng = np.random.default_rng(14)
        feats = [rng.normal(size=6) for _ in range(8)]
        labels = [0, 0, 1, 1, 0, 1, 0, 1]
        expander = ClonalExpander(CloneConfig(memory_capacity=3, rng_seed=0))
        expander(feats, labels)
        assert set(expander.pools) == {0, 1}
        for pool in expander.pools.values():
            assert len(pool.members) <= 3
            scores = [ab.affinity_score for ab in pool.members]
            assert scores == sorted(scores, reverse=True)

    def test_deterministic(self):
        rng = np.random.default_rng(15)
        feats = [rng.normal(size=5) for _ in range(6)]
        labels = [0, 1, 0, 1, 0, 1]
        runs = []
        for _ in range(2):
            expander = ClonalExpander(CloneConfig(memory_capacity=4, rng_seed=9))
            clones = expander(list(feats), list(labels))
            runs.append((clones, expander.pools))
        assert len(runs[0][0]) == len(runs[1][0])
        for (fa, la, pa), (fb, lb, pb) in zip(runs[0][0], runs[1][0]):
            assert np.array_equal(fa, fb) and la == lb and pa == pb
        for label in runs[0][1]:
            for ma, mb in zip(runs[0][1][label].members,
                              runs[1][1][label].members):
                assert np.array_equal(ma.feature, mb.feature)

    def test_eta_zero_builds_pools_but_no_clones(self):
        rng = np.random.default_rng(16)
        feats = [rng.normal(size=4) for _ in range(4)]
        expander = ClonalExpander(CloneConfig(eta=0.0, memory_capacity=3,
                                              rng_seed=1))
        clones = expander(feats, [0, 0, 1, 1])
        assert clones == []
        assert set(expander.pools) == {0, 1}


class TestPoolSerialization:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(17)
        pools = {
            0: pool_of(rng.normal(size=(3, 5)), label=0, capacity=6),
            4: pool_of(rng.normal(size=(2, 5)), label=4, capacity=4),
        }
        path = tmp_path / "pools.txt"
        save_pools(pools, path)
        loaded = load_pools(path)
        assert set(loaded) == {0, 4}
        for label, pool in pools.items():
            assert loaded[label].capacity == pool.capacity
            for a, b in zip(pool.members, loaded[label].members):
                assert np.array_equal(a.feature, b.feature)
                assert a.affinity_score == b.affinity_score

    def test_rewrite_byte_identical(self, tmp_path):
        rng = np.random.default_rng(18)
        pools = {1: pool_of(rng.normal(size=(4, 3)), label=1)}
        first = tmp_path / "a.txt"
        second = tmp_path / "b.txt"
        save_pools(pools, first)
        save_pools(load_pools(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_versioned_header(self, tmp_path):
        path = tmp_path / "pools.txt"
        save_pools({}, path)
        assert path.read_text().startswith("clonalnet-pools v1")

    def test_unrecognized_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("something else\n")
        with pytest.raises(ConfigurationError):
            load_pools(path)


class TestClonalgRun:
    def test_zero_mutation_keeps_initial_best(self):
        pattern = np.array([1.0, 0.0, 1.0, 0.0])
        config = CloneConfig(eta=5.0, sigma=0.0, tau=0.0, memory_capacity=3,
                             rng_seed=0)
        rng = np.random.default_rng(33)
        initial = np.random.default_rng(33).uniform(0.0, 1.0, size=(20, 4))
        expected = max(affinity(row, pattern) for row in initial)
        result = clonalg_run([pattern], population_size=20, generations=1,
                             config=config, rng=rng, select_n=5)
        assert result.history[0] == expected

    def test_history_non_decreasing(self):
        pattern = np.eye(3).ravel()
        config = CloneConfig(eta=6.0, alpha=0.3, tau=0.0, sigma=0.2,
                             memory_capacity=4, rng_seed=0)
        result = clonalg_run([pattern], population_size=30, generations=40,
                             config=config, rng=np.random.default_rng(2),
                             select_n=8)
        hist = result.history
        assert len(hist) == 40
        assert all(b >= a for a, b in zip(hist, hist[1:]))

    def test_affinity_improves(self):
        pattern = np.array([[1, 0], [0, 1]], dtype=np.float64)
        config = CloneConfig(eta=8.0, alpha=0.2, tau=0.0, sigma=0.15,
                             memory_capacity=5, rng_seed=0)
        result = clonalg_run([pattern], population_size=25, generations=60,
                             config=config, rng=np.random.default_rng(3),
                             select_n=6)
        assert result.history[-1] > result.history[0]

    def test_memory_respects_capacity(self):
        pattern = np.ones(5)
        config = CloneConfig(memory_capacity=4, tau=0.0, rng_seed=0)
        result = clonalg_run([pattern], population_size=15, generations=5,
                             config=config, rng=np.random.default_rng(4),
                             select_n=5)
        assert result.memory_vectors.shape[0] <= 4
        assert result.population.shape == (15, 5)

    def test_empty_patterns_rejected(self):
        with pytest.raises(ConfigurationError):
            clonalg_run([], 10, 5, CloneConfig(memory_capacity=2),
                        np.random.default_rng(0))

    def test_population_smaller_than_selection_rejected(self):
        with pytest.raises(ConfigurationError):
            clonalg_run([np.ones(4)], population_size=5, generations=2,
                        config=CloneConfig(memory_capacity=2),
                        rng=np.random.default_rng(0), select_n=10)


class TestCloneConfigValidation:
    def test_defaults_valid(self):
        CloneConfig()

    @pytest.mark.parametrize("kwargs", [
        {"eta": -1.0}, {"alpha": 0.0}, {"tau": 1.5}, {"sigma": -0.1},
        {"rate_cap": 0.0}, {"crossover_prob": 2.0}, {"memory_capacity": 0},
    ])
    def test_bad_fields_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            CloneConfig(**kwargs)
