"""Metric implementations against hand-computed and library oracles.

The LOF reference is scikit-learn's novelty-mode implementation; the
hypervolume reference is Monte-Carlo box coverage. Both live only in this
test module, keeping the shipped implementations self-contained.
"""

import json

import numpy as np
import pytest

from flowcf.classifiers import LinearClassifier
from flowcf.errors import DataError
from flowcf.metrics import (
    CHANGE_SNAP,
    InstanceEval,
    MetricsReport,
    ScoreParams,
    changed_feature_names,
    compute_report,
    eps_exceedance_by_feature,
    eps_sparsity_per_cf,
    hypervolume_exact,
    lof_log,
    lof_scores,
    proximity_per_cf,
    reference_point,
    score_candidates,
    sparsity_cat_per_cf,
    sparsity_num_per_cf,
    validity_flags,
)

# mixed_schema encoded layout: [age_z, color(3), hours_z, level(2)]
# age: std 10, range 62; hours: std 8, range 98
X0 = np.array([1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0])
CF_BIG_MOVE = np.array([2.0, 0.0, 0.0, 1.0, -1.0, 0.0, 1.0])  # age +1z, color->red
CF_SMALL_MOVE = np.array([1.2, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0])  # age +0.2z only
CF_SAME = X0.copy()
CFS = np.stack([CF_BIG_MOVE, CF_SMALL_MOVE, CF_SAME])


class TestPerCfMetrics:
    def test_proximity_hand_values(self, mixed_schema):
        prox = proximity_per_cf(X0, CFS, mixed_schema)
        # mean of |dz| over the two continuous features
        assert prox.tolist() == pytest.approx([0.5, 0.1, 0.0])

    def test_sparsity_num_hand_values(self, mixed_schema):
        s = sparsity_num_per_cf(X0, CFS, mixed_schema)
        assert s.tolist() == pytest.approx([0.5, 0.5, 0.0])

    def test_sparsity_num_snaps_tiny_diffs(self, mixed_schema):
        cf = X0.copy()
        cf[0] += CHANGE_SNAP / 10
        s = sparsity_num_per_cf(X0, cf[None, :], mixed_schema)
        assert s[0] == 0.0

    def test_eps_sparsity_hand_values(self, mixed_schema):
        # age needs |raw| > 0.05 * 62 = 3.1 (i.e. |dz| > 0.31)
        # hours needs |raw| > 0.05 * 98 = 4.9 (i.e. |dz| > 0.6125)
        s = eps_sparsity_per_cf(X0, CFS, mixed_schema, eps=0.05)
        assert s.tolist() == pytest.approx([0.5, 0.0, 0.0])

    def test_eps_threshold_is_on_raw_range(self, mixed_schema):
        below = X0.copy()
        below[4] += 0.60  # hours raw move 4.8 < 4.9
        above = X0.copy()
        above[4] += 0.62  # hours raw move 4.96 > 4.9
        s = eps_sparsity_per_cf(X0, np.stack([below, above]), mixed_schema, eps=0.05)
        assert s.tolist() == pytest.approx([0.0, 0.5])

    def test_sparsity_cat_hand_values(self, mixed_schema):
        s = sparsity_cat_per_cf(X0, CFS, mixed_schema)
        assert s.tolist() == pytest.approx([0.5, 0.0, 0.0])

    def test_changed_feature_names(self, mixed_schema):
        changed = changed_feature_names(X0, CFS, mixed_schema, eps=0.05)
        assert changed == [["age", "color"], [], []]

    def test_eps_exceedance_by_feature(self, mixed_schema):
        out = eps_exceedance_by_feature(X0, CFS, mixed_schema, eps=0.05)
        assert out == {"age": pytest.approx(1 / 3), "hours": 0.0}


class TestValidity:
    def make_clf(self):
        import torch

        clf = LinearClassifier().init_zero(dim=2, class_count=2)
        with torch.no_grad():
            clf.weight_[1, 0] = 1.0  # class-1 logit = x0
        return clf

    def test_flags_and_probs(self):
        clf = self.make_clf()
        rows = np.array([[1.0, 0.0], [-1.0, 0.0]])
        valid, probs = validity_flags(rows, 1, clf)
        assert valid.tolist() == [True, False]
        sig = 1.0 / (1.0 + np.exp(-1.0))
        assert probs.tolist() == pytest.approx([sig, 1.0 - sig])

    def test_target_out_of_range(self):
        clf = self.make_clf()
        with pytest.raises(DataError):
            validity_flags(np.zeros((1, 2)), 5, clf)


class TestLof:
    def test_cluster_center_is_inlier(self):
        rng = np.random.default_rng(0)
        cluster = rng.normal(scale=0.1, size=(12, 2))
        vals = lof_scores(np.array([[0.0, 0.0], [5.0, 5.0]]), cluster, k=5)
        assert abs(vals[0] - 1.0) < 0.2
        assert vals[1] > 10.0

    def test_duplicated_mass_gets_exactly_one(self):
        ref = np.zeros((8, 2))
        assert lof_scores(np.zeros((1, 2)), ref, k=3)[0] == 1.0

    def test_matches_sklearn_novelty_lof(self):
        from sklearn.neighbors import LocalOutlierFactor

        rng = np.random.default_rng(0)
        ref = np.vstack(
            [rng.normal(size=(60, 3)), rng.normal(loc=5.0, size=(40, 3))]
        )
        queries = np.vstack(
            [
                rng.normal(size=(10, 3)),
                rng.normal(loc=5.0, size=(5, 3)),
                [[20.0, 20.0, 20.0]],
            ]
        )
        mine = lof_scores(queries, ref, k=10)
        sk = LocalOutlierFactor(n_neighbors=10, novelty=True).fit(ref)
        theirs = -sk.score_samples(queries)
        assert np.abs(mine - theirs).max() < 1e-6

    def test_k_bounds(self):
        ref = np.zeros((5, 2))
        with pytest.raises(DataError):
            lof_scores(np.zeros((1, 2)), ref, k=5)
        with pytest.raises(DataError):
            lof_scores(np.zeros((1, 2)), ref, k=0)

    def test_lof_log_is_log_of_mean(self):
        rng = np.random.default_rng(1)
        ref = rng.normal(size=(50, 2))
        q = rng.normal(size=(7, 2))
        expected = np.log(lof_scores(q, ref, k=10).mean())
        assert lof_log(q, ref, k=10) == pytest.approx(expected, rel=1e-12)


def mc_hypervolume(points, ref, n_samples, seed):
    """Monte-Carlo dominated-volume estimate: fraction of a bounding box
    covered by any [point, ref] box."""
    points = np.atleast_2d(points)
    inside = points[np.all(points < ref[None, :], axis=1)]
    if inside.shape[0] == 0:
        return 0.0
    lo = inside.min(axis=0)
    rng = np.random.default_rng(seed)
    u = rng.uniform(lo, ref, size=(n_samples, 3))
    covered = np.zeros(n_samples, dtype=bool)
    for p in inside:
        covered |= np.all(u >= p, axis=1)
    box = np.prod(ref - lo)
    return float(covered.mean() * box)


class TestHypervolume:
    def test_single_point_box(self):
        v = hypervolume_exact(np.array([[1.0, 1.0, 1.0]]), np.array([2.0, 2.0, 2.0]))
        assert v == pytest.approx(1.0, rel=1e-12)

    def test_two_overlapping_boxes_hand_value(self):
        pts = np.array([[0.5, 1.0, 1.0], [1.0, 0.5, 1.0]])
        ref = np.array([2.0, 2.0, 2.0])
        # 1.5 + 1.5 - 1.0 overlap
        assert hypervolume_exact(pts, ref) == pytest.approx(2.0, rel=1e-12)

    def test_dominated_point_changes_nothing(self):
        pts = np.array([[0.5, 1.0, 1.0], [1.0, 0.5, 1.0]])
        ref = np.array([2.0, 2.0, 2.0])
        base = hypervolume_exact(pts, ref)
        plus = hypervolume_exact(
            np.vstack([pts, [1.5, 1.5, 1.5]]), ref
        )
        assert plus == pytest.approx(base, rel=1e-12)

    def test_point_outside_reference_ignored(self):
        pts = np.array([[1.0, 1.0, 1.0], [3.0, 0.1, 0.1]])
        ref = np.array([2.0, 2.0, 2.0])
        assert hypervolume_exact(pts, ref) == pytest.approx(1.0, rel=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(0, 1, size=(12, 3))
        ref = np.array([1.2, 1.2, 1.2])
        base = hypervolume_exact(pts, ref)
        for seed in range(3):
            perm = np.random.default_rng(seed).permutation(12)
            assert hypervolume_exact(pts[perm], ref) == pytest.approx(base, rel=1e-12)

    def test_against_monte_carlo(self):
        rng = np.random.default_rng(3)
        for trial in range(5):
            pts = rng.uniform(0, 1, size=(8, 3))
            ref = np.array([1.1, 1.1, 1.1])
            exact = hypervolume_exact(pts, ref)
            approx = mc_hypervolume(pts, ref, n_samples=200_000, seed=trial)
            assert exact == pytest.approx(approx, rel=0.02)

    def test_shape_validation(self):
        with pytest.raises(DataError):
            hypervolume_exact(np.zeros((2, 2)), np.zeros(2))

    def test_reference_point_rule(self):
        objs = np.array([[1.0, 0.0, 2.0], [3.0, 0.0, 1.0]])
        ref = reference_point(objs)
        assert ref[0] == pytest.approx(3.3)
        assert ref[1] == pytest.approx(1.1e-6)
        assert ref[2] == pytest.approx(2.2)
        # every finite objective column ends strictly below the reference
        assert np.all(objs < ref[None, :])


class ZeroDensity:
    def log_density(self, X):
        return np.zeros(X.shape[0])


class TestScores:
    def make_uniform_clf(self, dim=2, classes=2):
        return LinearClassifier().init_zero(dim=dim, class_count=classes)

    def test_hand_computed_scores(self):
        clf = self.make_uniform_clf()
        x0 = np.zeros(2)
        cfs = np.array([[3.0, 4.0], [0.0, 1.0]])
        params = ScoreParams(lambda1=1.0, lambda2=0.1)
        out = score_candidates(cfs, x0, 1, clf, ZeroDensity(), params)
        # log(0.5) - dist2 + 0.1 * 0
        assert out.tolist() == pytest.approx([np.log(0.5) - 5.0, np.log(0.5) - 1.0])

    def test_lambda2_zero_skips_density(self):
        clf = self.make_uniform_clf()
        out = score_candidates(
            np.zeros((1, 2)), np.zeros(2), 0, clf, None, ScoreParams(lambda2=0.0)
        )
        assert out[0] == pytest.approx(np.log(0.5))

    def test_missing_density_raises(self):
        clf = self.make_uniform_clf()
        with pytest.raises(DataError, match="density"):
            score_candidates(
                np.zeros((1, 2)), np.zeros(2), 0, clf, None, ScoreParams(lambda2=0.1)
            )

    def test_closer_candidates_score_higher(self):
        clf = self.make_uniform_clf()
        cfs = np.array([[0.1, 0.0], [2.0, 0.0]])
        out = score_candidates(cfs, np.zeros(2), 1, clf, ZeroDensity())
        assert out[0] > out[1]


def small_eval_set(schema):
    evals = [
        InstanceEval(
            x0_enc=X0,
            cf_enc=CFS,
            valid=np.array([True, True, False]),
            target_prob=np.array([0.9, 0.8, 0.4]),
        ),
        InstanceEval(
            x0_enc=X0,
            cf_enc=np.stack([CF_BIG_MOVE + 0.01, CF_SMALL_MOVE]),
            valid=np.array([True, False]),
            target_prob=np.array([0.7, 0.3]),
        ),
    ]
    rng = np.random.default_rng(0)
    training = rng.normal(size=(40, 7))
    return evals, training


class TestReport:
    def test_aggregates(self, mixed_schema):
        evals, training = small_eval_set(mixed_schema)
        rep = compute_report(evals, mixed_schema, training, eps=0.05, k_lof=5)
        assert rep.n_instances == 2
        assert rep.n_counterfactuals == 5
        assert rep.n_valid == 3
        assert rep.validity == pytest.approx(3 / 5)
        assert rep.mean_class_prob == pytest.approx((0.9 + 0.8 + 0.7) / 3)
        assert rep.per_instance[0]["n_valid"] == 2
        assert rep.per_instance[1]["validity"] == 0.5

    def test_json_deterministic_and_sorted(self, mixed_schema):
        evals, training = small_eval_set(mixed_schema)
        rep1 = compute_report(evals, mixed_schema, training, eps=0.05, k_lof=5)
        rep2 = compute_report(evals, mixed_schema, training, eps=0.05, k_lof=5)
        assert rep1.to_json() == rep2.to_json()
        payload = json.loads(rep1.to_json())
        assert list(payload.keys()) == sorted(payload.keys())

    def test_render_table_lists_every_metric(self, mixed_schema):
        evals, training = small_eval_set(mixed_schema)
        rep = compute_report(evals, mixed_schema, training, eps=0.05, k_lof=5)
        table = rep.render_table()
        for label in ("Validity", "Proximity", "Hypervolume", "LOF", "Valid / total"):
            assert label in table

    def test_no_valid_cfs_raises(self, mixed_schema):
        evals, training = small_eval_set(mixed_schema)
        dead = [
            InstanceEval(
                x0_enc=e.x0_enc,
                cf_enc=e.cf_enc,
                valid=np.zeros(e.cf_enc.shape[0], dtype=bool),
                target_prob=e.target_prob,
            )
            for e in evals
        ]
        with pytest.raises(DataError, match="no valid"):
            compute_report(dead, mixed_schema, training)

    def test_empty_evals_raise(self, mixed_schema):
        with pytest.raises(DataError):
            compute_report([], mixed_schema, np.zeros((10, 7)))

    def test_length_mismatch_rejected(self):
        with pytest.raises(DataError):
            InstanceEval(
                x0_enc=X0,
                cf_enc=CFS,
                valid=np.array([True]),
                target_prob=np.array([0.5, 0.5, 0.5]),
            )
