"""Counterfactual quality metrics and evaluation reports.

Conventions shared by every metric:

* Validity is the fraction of all generated counterfactuals whose
  classifier argmax equals the requested class. Every other aggregate is
  computed over the valid counterfactuals only.
* Continuous comparisons happen on the raw feature scale. A feature
  counts as "changed at all" when its z-scored difference exceeds a tiny
  float-noise snap, and as an epsilon-change when the raw difference
  exceeds ``eps`` times the feature's training range.
* Per-counterfactual objective vectors are (proximity, categorical
  sparsity, epsilon-sparsity), all costs. Hypervolume is the exact
  Lebesgue measure of the region between the objective points and a
  reference point, computed by an axis sweep; the reference is the
  componentwise maximum over the evaluated pool times 1.1 and is recorded
  in the report. Spread in objective space is reported as
  ``log(volume + 1e-12)``.
* Plausibility is a local outlier factor (k = 20, Euclidean, encoded
  space) of each counterfactual against the training rows, reported as
  the log of the mean. Duplicated mass (zero k-distance neighbourhoods)
  is defined to have LOF 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .classifiers import _TorchClassifierBase
from .encoding import layout_for
from .errors import DataError
from .neighbors import dist_p
from .schema import TableSchema

#: z-scored differences at or below this count as "unchanged".
CHANGE_SNAP = 1e-9

DEFAULT_EPS = 0.05
DEFAULT_K_LOF = 20
_HV_LOG_OFFSET = 1e-12


# -- per-counterfactual building blocks -------------------------------------


def _continuous_info(schema: TableSchema):
    layout = layout_for(schema)
    idx, stds, ranges = [], [], []
    for spec, block in zip(schema.features, layout.blocks):
        if spec.is_continuous:
            s = schema.stats(spec.name)
            idx.append(block.start)
            stds.append(s.stddev)
            ranges.append(s.value_range)
    return np.asarray(idx, dtype=np.int64), np.asarray(stds), np.asarray(ranges)


def _categorical_blocks(schema: TableSchema):
    layout = layout_for(schema)
    return [
        block
        for spec, block in zip(schema.features, layout.blocks)
        if not spec.is_continuous
    ]


def proximity_per_cf(x0_enc: np.ndarray, cf_enc: np.ndarray, schema: TableSchema) -> np.ndarray:
    """Mean |z-difference| over continuous features, one value per row.

    Zero when the schema has no continuous features.
    """
    idx, _, _ = _continuous_info(schema)
    if idx.size == 0:
        return np.zeros(cf_enc.shape[0])
    diffs = np.abs(cf_enc[:, idx] - x0_enc[idx][None, :])
    return diffs.mean(axis=1)


def sparsity_num_per_cf(x0_enc, cf_enc, schema) -> np.ndarray:
    """Fraction of continuous features changed at all, per row."""
    idx, _, _ = _continuous_info(schema)
    if idx.size == 0:
        return np.zeros(cf_enc.shape[0])
    diffs = np.abs(cf_enc[:, idx] - x0_enc[idx][None, :])
    return (diffs > CHANGE_SNAP).mean(axis=1)


def eps_sparsity_per_cf(x0_enc, cf_enc, schema, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Fraction of continuous features moved more than eps * range, per row."""
    idx, stds, ranges = _continuous_info(schema)
    if idx.size == 0:
        return np.zeros(cf_enc.shape[0])
    raw_diffs = np.abs(cf_enc[:, idx] - x0_enc[idx][None, :]) * stds[None, :]
    return (raw_diffs > eps * ranges[None, :]).mean(axis=1)


def eps_exceedance_by_feature(
    x0_enc, cf_enc, schema, eps: float = DEFAULT_EPS
) -> dict[str, float]:
    """Per continuous feature: fraction of rows with |raw change| > eps * range.

    This is the per-feature view behind actionability audits: a masked
    feature should show near-zero exceedance.
    """
    idx, stds, ranges = _continuous_info(schema)
    names = [f.name for f in schema.continuous_features]
    out = {}
    for j, name in enumerate(names):
        raw = np.abs(cf_enc[:, idx[j]] - x0_enc[idx[j]]) * stds[j]
        out[name] = float((raw > eps * ranges[j]).mean()) if cf_enc.shape[0] else 0.0
    return out


def sparsity_cat_per_cf(x0_enc, cf_enc, schema) -> np.ndarray:
    """Fraction of categorical features whose decoded label changed, per row."""
    blocks = _categorical_blocks(schema)
    if not blocks:
        return np.zeros(cf_enc.shape[0])
    changed = np.zeros((cf_enc.shape[0], len(blocks)))
    for j, block in enumerate(blocks):
        ref = int(np.argmax(x0_enc[block]))
        changed[:, j] = np.argmax(cf_enc[:, block], axis=1) != ref
    return changed.mean(axis=1)


def changed_feature_names(
    x0_enc: np.ndarray, cf_enc: np.ndarray, schema: TableSchema, eps: float = DEFAULT_EPS
) -> list[list[str]]:
    """Names of features that changed, per row.

    Continuous features use the eps * range rule; categorical features
    compare decoded labels. The same rule drives diff highlighting in the
    UI, so the server is the single source of truth for "changed".
    """
    layout = layout_for(schema)
    out: list[list[str]] = [[] for _ in range(cf_enc.shape[0])]
    for spec, block in zip(schema.features, layout.blocks):
        if spec.is_continuous:
            s = schema.stats(spec.name)
            raw = np.abs(cf_enc[:, block.start] - x0_enc[block.start]) * s.stddev
            hits = raw > eps * s.value_range
        else:
            ref = int(np.argmax(x0_enc[block]))
            hits = np.argmax(cf_enc[:, block], axis=1) != ref
        for i in np.flatnonzero(hits):
            out[int(i)].append(spec.name)
    return out


def validity_flags(
    cf_enc: np.ndarray, target_class: int, clf: _TorchClassifierBase
) -> tuple[np.ndarray, np.ndarray]:
    """(valid, target_prob) per row under the validity oracle."""
    probs = clf.predict_proba(cf_enc)
    if not 0 <= target_class < probs.shape[1]:
        raise DataError(
            f"target class {target_class} out of range for {probs.shape[1]} classes"
        )
    return probs.argmax(axis=1) == target_class, probs[:, target_class]


# -- local outlier factor ----------------------------------------------------


def _knn_dists(queries: np.ndarray, reference: np.ndarray, k: int):
    """Euclidean k-nearest rows of ``reference`` for every query row."""
    d2 = (
        np.sum(queries**2, axis=1)[:, None]
        + np.sum(reference**2, axis=1)[None, :]
        - 2.0 * queries @ reference.T
    )
    np.maximum(d2, 0.0, out=d2)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    rows = np.arange(queries.shape[0])[:, None]
    return order, np.sqrt(d2[rows, order])


def lof_scores(
    queries: np.ndarray, reference: np.ndarray, k: int = DEFAULT_K_LOF
) -> np.ndarray:
    """Local outlier factor of each query against a reference sample.

    Classic definition: reach-dist(q, o) = max(kdist(o), d(q, o)),
    lrd = 1 / mean reach-dist, LOF(q) = mean(lrd(o)) / lrd(q) over q's k
    nearest reference rows. Queries sitting on duplicated mass (zero mean
    reach-dist) get LOF exactly 1.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    reference = np.asarray(reference, dtype=np.float64)
    n = reference.shape[0]
    if k < 1 or k >= n:
        raise DataError(f"k_lof must be in [1, {n - 1}], got {k}")

    # Reference-side k-distances and lrd exclude the point itself.
    ref_nbrs, ref_d = _knn_dists(reference, reference, k + 1)
    ref_nbrs, ref_d = ref_nbrs[:, 1:], ref_d[:, 1:]
    ref_kdist = ref_d[:, -1]
    reach = np.maximum(ref_kdist[ref_nbrs], ref_d)
    mean_reach = reach.mean(axis=1)
    with np.errstate(divide="ignore"):
        ref_lrd = np.where(mean_reach > 0, 1.0 / np.where(mean_reach > 0, mean_reach, 1.0), np.inf)

    q_nbrs, q_d = _knn_dists(queries, reference, k)
    q_reach = np.maximum(ref_kdist[q_nbrs], q_d)
    q_mean_reach = q_reach.mean(axis=1)
    out = np.ones(queries.shape[0])
    regular = q_mean_reach > 0
    lrd_q = 1.0 / q_mean_reach[regular]
    out[regular] = ref_lrd[q_nbrs[regular]].mean(axis=1) / lrd_q
    return out


def lof_log(
    cf_enc: np.ndarray, training_encoded: np.ndarray, k: int = DEFAULT_K_LOF
) -> float:
    """log of the mean LOF of the given counterfactuals."""
    if cf_enc.shape[0] == 0:
        raise DataError("lof_log needs at least one counterfactual")
    return float(np.log(lof_scores(cf_enc, training_encoded, k).mean()))


# -- hypervolume --------------------------------------------------------------


def _pareto_area_2d(points: np.ndarray, ref_y: float, ref_z: float) -> float:
    """Area of the union of rectangles [y_i, ref_y] x [z_i, ref_z]."""
    pts = points[(points[:, 0] < ref_y) & (points[:, 1] < ref_z)]
    if pts.shape[0] == 0:
        return 0.0
    order = np.lexsort((pts[:, 1], pts[:, 0]))  # by y, then z
    area = 0.0
    best_z = math.inf
    front: list[tuple[float, float]] = []
    for y, z in pts[order]:
        if z < best_z:
            front.append((float(y), float(z)))
            best_z = z
    for i, (y, z) in enumerate(front):
        y_next = front[i + 1][0] if i + 1 < len(front) else ref_y
        area += (y_next - y) * (ref_z - z)
    return area


def hypervolume_exact(points: np.ndarray, reference: np.ndarray) -> float:
    """Exact dominated hypervolume of 3-objective cost points.

    Sweeps the first objective and accumulates slab volume times the 2-d
    union area of the active points. Points not strictly below the
    reference in every coordinate contribute nothing.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    reference = np.asarray(reference, dtype=np.float64)
    if points.shape[1] != 3 or reference.shape != (3,):
        raise DataError("hypervolume is defined for exactly 3 objectives")
    pts = points[np.all(points < reference[None, :], axis=1)]
    if pts.shape[0] == 0:
        return 0.0
    xs = np.unique(pts[:, 0])
    cuts = np.append(xs, reference[0])
    volume = 0.0
    for i, x in enumerate(xs):
        active = pts[pts[:, 0] <= x][:, 1:]
        volume += (cuts[i + 1] - cuts[i]) * _pareto_area_2d(
            active, reference[1], reference[2]
        )
    return volume


def reference_point(objectives: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Componentwise max times 1.1, floored so degenerate all-zero columns
    still dominate strictly."""
    objectives = np.atleast_2d(objectives)
    return np.maximum(objectives.max(axis=0), floor) * 1.1


# -- candidate scores ----------------------------------------------------------


class DensityEstimator(Protocol):
    def log_density(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ScoreParams:
    """Trade-off weights for candidate ranking.

    score = log p(target | cf) - lambda1 * distance + lambda2 * log density
    with Euclidean distance on encoded vectors. The density term is the
    log of the estimated data density (raw densities underflow in higher
    dimensions).
    """

    lambda1: float = 1.0
    lambda2: float = 0.1


def score_candidates(
    cf_enc: np.ndarray,
    x0_enc: np.ndarray,
    target_class: int,
    clf: _TorchClassifierBase,
    density: DensityEstimator | None,
    params: ScoreParams = ScoreParams(),
) -> np.ndarray:
    """Score candidates for ranking; higher is better."""
    probs = clf.predict_proba(cf_enc)[:, target_class]
    dists = np.array([dist_p(cf, x0_enc, 2.0) for cf in cf_enc])
    out = np.log(np.maximum(probs, 1e-300)) - params.lambda1 * dists
    if params.lambda2 != 0.0:
        if density is None:
            raise DataError("scoring with lambda2 != 0 requires a density estimator")
        out = out + params.lambda2 * density.log_density(cf_enc)
    return out


# -- reports -------------------------------------------------------------------


@dataclass(frozen=True)
class InstanceEval:
    """One explained instance with its generated counterfactuals."""

    x0_enc: np.ndarray
    cf_enc: np.ndarray
    valid: np.ndarray
    target_prob: np.ndarray

    def __post_init__(self):
        n = self.cf_enc.shape[0]
        if self.valid.shape != (n,) or self.target_prob.shape != (n,):
            raise DataError("per-counterfactual arrays disagree on length")


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate quality of a set of counterfactual batches."""

    validity: float
    mean_class_prob: float
    proximity_num: float
    sparsity_cat: float
    sparsity_num: float
    eps_sparsity_num: float
    hypervolume_log: float
    lof_log: float
    n_instances: int
    n_counterfactuals: int
    n_valid: int
    eps: float
    k_lof: int
    reference_point: tuple[float, float, float]
    per_instance: tuple[dict, ...] = field(default=(), repr=False)

    _FIELD_ORDER = (
        "validity",
        "mean_class_prob",
        "proximity_num",
        "sparsity_cat",
        "sparsity_num",
        "eps_sparsity_num",
        "hypervolume_log",
        "lof_log",
    )

    def to_dict(self, include_per_instance: bool = True) -> dict:
        out = {name: getattr(self, name) for name in self._FIELD_ORDER}
        out.update(
            n_instances=self.n_instances,
            n_counterfactuals=self.n_counterfactuals,
            n_valid=self.n_valid,
            eps=self.eps,
            k_lof=self.k_lof,
            reference_point=list(self.reference_point),
        )
        if include_per_instance:
            out["per_instance"] = [dict(r) for r in self.per_instance]
        return out

    def to_json(self, include_per_instance: bool = True) -> str:
        return json.dumps(
            self.to_dict(include_per_instance), indent=2, sort_keys=True
        )

    def render_table(self) -> str:
        labels = {
            "validity": "Validity",
            "mean_class_prob": "Mean class prob",
            "proximity_num": "Proximity (num)",
            "sparsity_cat": "Sparsity (cat)",
            "sparsity_num": "Sparsity (num)",
            "eps_sparsity_num": "Eps-sparsity (num)",
            "hypervolume_log": "Hypervolume (log)",
            "lof_log": "LOF (log)",
        }
        width = max(len(v) for v in labels.values())
        lines = [
            f"{labels[name]:<{width}}  {getattr(self, name):10.4f}"
            for name in self._FIELD_ORDER
        ]
        lines.append(
            f"{'Valid / total':<{width}}  {self.n_valid:>5d} / {self.n_counterfactuals}"
        )
        return "\n".join(lines)


def compute_report(
    evals: Sequence[InstanceEval],
    schema: TableSchema,
    training_encoded: np.ndarray,
    eps: float = DEFAULT_EPS,
    k_lof: int = DEFAULT_K_LOF,
) -> MetricsReport:
    """Aggregate metrics over one or more explained instances.

    Raises :class:`DataError` when no counterfactual is valid; there is
    nothing meaningful to report in that case.
    """
    if not evals:
        raise DataError("compute_report needs at least one instance")
    total = sum(e.cf_enc.shape[0] for e in evals)
    n_valid = int(sum(int(e.valid.sum()) for e in evals))
    if n_valid == 0:
        raise DataError(
            "no valid counterfactuals were generated; metrics are undefined"
        )

    prob_sum = 0.0
    per_cf_rows: list[np.ndarray] = []
    per_instance: list[dict] = []
    pooled_valid_cfs: list[np.ndarray] = []
    instance_objs: list[np.ndarray] = []

    for i, ev in enumerate(evals):
        mask = ev.valid.astype(bool)
        prox = proximity_per_cf(ev.x0_enc, ev.cf_enc, schema)
        s_cat = sparsity_cat_per_cf(ev.x0_enc, ev.cf_enc, schema)
        s_num = sparsity_num_per_cf(ev.x0_enc, ev.cf_enc, schema)
        s_eps = eps_sparsity_per_cf(ev.x0_enc, ev.cf_enc, schema, eps)
        objs = np.column_stack([prox, s_cat, s_eps])[mask]
        instance_objs.append(objs)
        if mask.any():
            per_cf_rows.append(
                np.column_stack([prox, s_cat, s_num, s_eps])[mask]
            )
            pooled_valid_cfs.append(ev.cf_enc[mask])
            prob_sum += float(ev.target_prob[mask].sum())
        per_instance.append(
            {
                "instance": i,
                "n": int(ev.cf_enc.shape[0]),
                "n_valid": int(mask.sum()),
                "validity": float(mask.mean()),
                "proximity_num": float(prox[mask].mean()) if mask.any() else None,
                "sparsity_cat": float(s_cat[mask].mean()) if mask.any() else None,
                "sparsity_num": float(s_num[mask].mean()) if mask.any() else None,
                "eps_sparsity_num": float(s_eps[mask].mean()) if mask.any() else None,
            }
        )

    stacked = np.concatenate(per_cf_rows, axis=0)
    pooled_objs = np.concatenate(
        [o for o in instance_objs if o.shape[0]], axis=0
    )
    ref = reference_point(pooled_objs)

    hv_logs = []
    for i, objs in enumerate(instance_objs):
        if objs.shape[0] == 0:
            per_instance[i]["hypervolume_log"] = None
            continue
        hv = float(np.log(hypervolume_exact(objs, ref) + _HV_LOG_OFFSET))
        per_instance[i]["hypervolume_log"] = hv
        hv_logs.append(hv)

    lof_value = lof_log(np.concatenate(pooled_valid_cfs, axis=0), training_encoded, k_lof)

    return MetricsReport(
        validity=n_valid / total,
        mean_class_prob=prob_sum / n_valid,
        proximity_num=float(stacked[:, 0].mean()),
        sparsity_cat=float(stacked[:, 1].mean()),
        sparsity_num=float(stacked[:, 2].mean()),
        eps_sparsity_num=float(stacked[:, 3].mean()),
        hypervolume_log=float(np.mean(hv_logs)),
        lof_log=lof_value,
        n_instances=len(evals),
        n_counterfactuals=int(total),
        n_valid=n_valid,
        eps=eps,
        k_lof=k_lof,
        reference_point=tuple(float(v) for v in ref),
        per_instance=tuple(per_instance),
    )
