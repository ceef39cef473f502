"""Distance and neighborhood search against independent oracles.

Frozen expected values were computed with mpmath at 60 significant
digits; each appears next to the call that must reproduce it.
"""

import numpy as np
import pytest

from flowcf.errors import ConfigError, DataError
from flowcf.neighbors import (
    DEFAULT_ALPHA,
    SMALL_P,
    ZERO_TOL,
    MetricParams,
    dist_p,
    dist_pm,
    dist_pm_many,
    knn,
    sample_qhat,
)


class FakeData:
    def __init__(self, encoded, labels):
        self.encoded = np.asarray(encoded, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)


class TestDistP:
    def test_two_unit_diffs_at_p_001(self):
        a = np.array([0.0, 0.0])
        b = np.array([1.0, -1.0])
        # (1 + 1)^(1/0.01) = 2^100
        assert dist_p(a, b, 0.01) == pytest.approx(1.2676506002282294015e30, rel=1e-12)

    def test_three_twos_at_p_001(self):
        a = np.zeros(3)
        b = np.full(3, 2.0)
        assert dist_p(a, b, 0.01) == pytest.approx(1.0307550414640226621e48, rel=1e-12)

    def test_sqrt_metric(self):
        a = np.array([0.0, 0.0])
        b = np.array([1.0, 4.0])
        # (1 + 2)^2 = 9
        assert dist_p(a, b, 0.5) == pytest.approx(9.0, rel=1e-12)

    @pytest.mark.parametrize(
        "p,expected",
        [
            (0.01, 4.6017243586798079354e59),
            (0.05, 374617920800.07201314),
            (1.0, 7.502),
            (2.0, 5.7645471634812738342),
        ],
    )
    def test_mixed_vector_oracles(self, p, expected):
        a = np.array([0.3, -1.7, 0.002, 5.5])
        assert dist_p(a, np.zeros(4), p) == pytest.approx(expected, rel=1e-10)

    def test_continuity_across_small_p_path_switch(self):
        # the log-space evaluation below SMALL_P must agree with the
        # direct evaluation just above it
        rng = np.random.default_rng(0)
        a = rng.normal(size=6)
        b = rng.normal(size=6)
        lo = dist_p(a, b, SMALL_P * 0.999)
        hi = dist_p(a, b, SMALL_P * 1.001)
        assert np.isfinite(lo) and np.isfinite(hi)
        assert abs(np.log(lo) - np.log(hi)) < 0.05 * abs(np.log(hi))

    def test_subtolerance_diffs_count_as_zero(self):
        a = np.zeros(3)
        b = np.array([ZERO_TOL / 10, 0.0, 0.0])
        assert dist_p(a, b, 0.01) == 0.0

    def test_tiny_p_counts_changed_coordinates(self):
        # as p -> 0, d_p^p approaches the number of nonzero diffs;
        # ordering at p=0.01 therefore follows change counts
        one_change = dist_p(np.zeros(4), np.array([3.0, 0, 0, 0]), 0.01)
        two_changes = dist_p(np.zeros(4), np.array([0.1, 0.1, 0, 0]), 0.01)
        assert one_change < two_changes

    def test_symmetry_and_identity(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=5), rng.normal(size=5)
        for p in (0.01, 0.5, 1.0, 2.0):
            assert dist_p(a, b, p) == dist_p(b, a, p)
            assert dist_p(a, a, p) == 0.0


class TestDistPM:
    def test_penalised_sum_oracle(self):
        # |0.3|^0.5 + alpha*|1.7|^0.5 + |0.002|^0.5 with alpha=1e4
        params = MetricParams(p=0.5, mask=np.array([0.0, 1.0, 0.0]), alpha=1e4)
        a = np.array([0.3, -1.7, 0.002])
        assert dist_pm(a, np.zeros(3), params) == pytest.approx(
            13038.997254322352591, rel=1e-12
        )

    def test_no_outer_root(self):
        # unmasked d_pm is the p-th power of d_p, not d_p itself
        params = MetricParams(p=0.5, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        a = np.array([1.0, 4.0])
        assert dist_pm(a, np.zeros(2), params) == pytest.approx(3.0, rel=1e-12)
        assert dist_p(a, np.zeros(2), 0.5) == pytest.approx(9.0, rel=1e-12)

    def test_many_matches_single(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(20, 4))
        q = rng.normal(size=4)
        mask = np.array([1.0, 0.0, 0.0, 1.0])
        params = MetricParams(p=0.7, mask=mask, alpha=50.0)
        many = dist_pm_many(pts, q, params)
        for i in range(20):
            assert many[i] == pytest.approx(dist_pm(pts[i], q, params), rel=1e-12)

    def test_masked_changes_dominate(self):
        params = MetricParams(p=1.0, mask=np.array([1.0, 0.0]), alpha=1e4)
        touches_masked = dist_pm(np.array([0.1, 0.0]), np.zeros(2), params)
        avoids_masked = dist_pm(np.array([0.0, 3.0]), np.zeros(2), params)
        assert avoids_masked < touches_masked

    def test_params_validation(self):
        with pytest.raises(ConfigError):
            MetricParams(p=0.0, mask=np.zeros(2), alpha=2.0)
        with pytest.raises(ConfigError):
            MetricParams(p=-1.0, mask=np.zeros(2), alpha=2.0)
        with pytest.raises(ConfigError):
            MetricParams(p=1.0, mask=np.array([0.0, 0.5]), alpha=2.0)
        with pytest.raises(ConfigError):
            MetricParams(p=1.0, mask=np.zeros(2), alpha=0.5)

    def test_for_features_expands_blocks(self, mixed_schema):
        params = MetricParams.for_features(mixed_schema, ("color",), p=1.0)
        assert params.mask.tolist() == [0, 1, 1, 1, 0, 0, 0]
        assert params.dim == 7


def brute_force_knn(encoded, labels, query, target_class, params, k):
    """Full sort over the target class; the implementation under test must
    return exactly this index set."""
    candidates = [i for i in range(len(encoded)) if labels[i] == target_class]
    dists = [dist_pm(encoded[i], query, params) for i in candidates]
    order = sorted(range(len(candidates)), key=lambda j: (dists[j], candidates[j]))
    return [candidates[j] for j in order[:k]]


class TestKnn:
    def test_matches_full_sort(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 3))
        y = rng.integers(0, 2, size=60)
        data = FakeData(X, y)
        q = rng.normal(size=3)
        for p in (0.01, 2.0):
            for mask_idx in (None, 1):
                mask = np.zeros(3)
                if mask_idx is not None:
                    mask[mask_idx] = 1.0
                params = MetricParams(p=p, mask=mask, alpha=DEFAULT_ALPHA)
                for k in (1, 4):
                    got = knn(q, 1, params, k, data)
                    want = brute_force_knn(X, y, q, 1, params, k)
                    assert set(got.indices.tolist()) == set(want)

    def test_respects_class_filter(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(30, 2))
        y = np.array([0] * 15 + [1] * 15)
        data = FakeData(X, y)
        params = MetricParams(p=2.0, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        res = knn(np.zeros(2), 1, params, 5, data)
        assert all(y[i] == 1 for i in res.indices)
        assert res.target_class == 1

    def test_distances_sorted_and_consistent(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(40, 3))
        y = np.zeros(40, dtype=int)
        y[20:] = 1
        data = FakeData(X, y)
        params = MetricParams(p=0.5, mask=np.zeros(3), alpha=DEFAULT_ALPHA)
        q = rng.normal(size=3)
        res = knn(q, 0, params, 6, data)
        assert np.all(np.diff(res.distances) >= 0)
        for idx, d in zip(res.indices, res.distances):
            assert d == pytest.approx(dist_pm(X[idx], q, params), rel=1e-12)

    def test_shuffle_invariance(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(50, 4))
        y = rng.integers(0, 3, size=50)
        q = rng.normal(size=4)
        params = MetricParams(p=1.0, mask=np.zeros(4), alpha=DEFAULT_ALPHA)
        base = knn(q, 2, params, 5, FakeData(X, y))
        perm = rng.permutation(50)
        shuffled = knn(q, 2, params, 5, FakeData(X[perm], y[perm]))
        assert set(perm[shuffled.indices].tolist()) == set(base.indices.tolist())

    def test_duplicate_rows_tie_break_low_index(self):
        X = np.array([[1.0, 1.0], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
        y = np.zeros(4, dtype=int)
        params = MetricParams(p=2.0, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        res = knn(np.zeros(2), 0, params, 2, FakeData(X, y))
        assert res.indices.tolist() == [1, 2]

    def test_too_few_candidates(self):
        X = np.zeros((3, 2))
        y = np.array([0, 0, 1])
        params = MetricParams(p=2.0, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        with pytest.raises(DataError):
            knn(np.zeros(2), 1, params, 5, FakeData(X, y))

    def test_unknown_class(self):
        X = np.zeros((3, 2))
        y = np.array([0, 0, 1])
        params = MetricParams(p=2.0, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        with pytest.raises(DataError):
            knn(np.zeros(2), 7, params, 1, FakeData(X, y))


class TestSampleQhat:
    def test_draws_come_from_neighbor_set(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(30, 2))
        y = np.zeros(30, dtype=int)
        params = MetricParams(p=2.0, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        res = knn(np.zeros(2), 0, params, 8, FakeData(X, y))
        draws = sample_qhat(res, 500, np.random.default_rng(10))
        assert set(draws.tolist()) <= set(res.indices.tolist())

    def test_roughly_uniform(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(40, 2))
        y = np.zeros(40, dtype=int)
        params = MetricParams(p=2.0, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        res = knn(np.zeros(2), 0, params, 5, FakeData(X, y))
        draws = sample_qhat(res, 50_000, np.random.default_rng(12))
        counts = np.array([(draws == i).sum() for i in res.indices])
        freqs = counts / 50_000
        assert np.all(np.abs(freqs - 0.2) < 0.01)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(20, 2))
        y = np.zeros(20, dtype=int)
        params = MetricParams(p=2.0, mask=np.zeros(2), alpha=DEFAULT_ALPHA)
        res = knn(np.zeros(2), 0, params, 4, FakeData(X, y))
        d1 = sample_qhat(res, 100, np.random.default_rng(42))
        d2 = sample_qhat(res, 100, np.random.default_rng(42))
        assert np.array_equal(d1, d2)
