"""Distances, nearest neighbours, and empirical target sampling.

The distance family is a weighted Minkowski metric over encoded vectors
with a per-coordinate mask that splits coordinates into penalised and
free groups:

    d(a, b) = alpha * sum_j m_j |a_j - b_j|^p  +  sum_j (1 - m_j) |a_j - b_j|^p

Note the masked form is a penalised sum of powered coordinates, not a
norm: there is no outer 1/p root. The unmasked helper :func:`dist_p`
keeps the root and reduces to Manhattan/Euclidean at p = 1, 2.

Tiny exponents make |d|^p numerically treacherous: for p < 0.1 the sum is
evaluated in log space, and absolute differences below 1e-12 are treated
as exact zeros so duplicate coordinates never contribute spurious mass.

Neighbour search is exact brute force. Candidate rows are filtered by
class label first, distances computed in one vectorized pass, and ties
broken toward the lower row index via a stable argsort.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoding import expand_feature_mask
from .errors import ConfigError, DataError
from .schema import TableSchema

#: Differences at or below this are treated as exact zeros in |delta|^p.
ZERO_TOL = 1e-12

#: Below this exponent, powered sums run in log space.
SMALL_P = 0.1

DEFAULT_ALPHA = 1e4


@dataclass(frozen=True)
class MetricParams:
    """Parameters of the masked Minkowski metric in encoded space.

    ``mask`` is a 0/1 vector over encoded coordinates; 1 marks a penalised
    (immutable) coordinate. Build with :meth:`for_features` to guarantee
    one-hot blocks stay atomic.
    """

    p: float
    mask: np.ndarray
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not self.p > 0:
            raise ConfigError(f"metric exponent p must be > 0, got {self.p!r}")
        if self.alpha < 1:
            raise ConfigError(f"mask penalty alpha must be >= 1, got {self.alpha!r}")
        mask = np.asarray(self.mask, dtype=np.float64)
        if mask.ndim != 1:
            raise ConfigError("mask must be a 1-d vector over encoded coordinates")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ConfigError("mask entries must be 0 or 1")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def unmasked(cls, dim: int, p: float, alpha: float = DEFAULT_ALPHA) -> "MetricParams":
        return cls(p=p, mask=np.zeros(dim, dtype=np.float64), alpha=alpha)

    @classmethod
    def for_features(
        cls,
        schema: TableSchema,
        feature_names: Sequence[str],
        p: float,
        alpha: float = DEFAULT_ALPHA,
    ) -> "MetricParams":
        """Build params masking whole features; one-hot blocks stay atomic."""
        return cls(p=p, mask=expand_feature_mask(feature_names, schema), alpha=alpha)

    @property
    def dim(self) -> int:
        return self.mask.shape[0]


def _powered_diffs(diffs: np.ndarray, p: float) -> np.ndarray:
    """|diffs|^p with the zero snap; log-space path for tiny p.

    Works on arrays of any shape; zeros stay exactly zero so p < 1 never
    produces 0^p artifacts or log(0).
    """
    mag = np.abs(diffs)
    out = np.zeros_like(mag)
    nz = mag > ZERO_TOL
    if p < SMALL_P:
        out[nz] = np.exp(p * np.log(mag[nz]))
    else:
        out[nz] = mag[nz] ** p
    return out


def dist_p(a: np.ndarray, b: np.ndarray, p: float) -> float:
    """Unmasked Minkowski distance (sum |delta|^p)^(1/p)."""
    if not p > 0:
        raise DataError(f"metric exponent p must be > 0, got {p!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    terms = _powered_diffs(a - b, p)
    if p < SMALL_P:
        # (sum t_j)^(1/p) = exp(logsumexp(log t_j) / p); avoids overflow of
        # the intermediate sum raised to a huge power.
        logs = np.log(terms[terms > 0])
        if logs.size == 0:
            return 0.0
        return float(np.exp(np.logaddexp.reduce(logs) / p))
    total = float(terms.sum())
    return total ** (1.0 / p)


def dist_pm(a: np.ndarray, b: np.ndarray, params: MetricParams) -> float:
    """Masked penalised distance; see the module docstring for the form."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.shape != params.mask.shape:
        raise DataError(
            f"shape mismatch: a {a.shape}, b {b.shape}, mask {params.mask.shape}"
        )
    return float(dist_pm_many(a[None, :], b, params)[0])


def dist_pm_many(points: np.ndarray, query: np.ndarray, params: MetricParams) -> np.ndarray:
    """Masked distance from one query to many points (vectorized)."""
    points = np.asarray(points, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != params.dim or query.shape != (params.dim,):
        raise DataError(
            f"shape mismatch: points {points.shape}, query {query.shape}, "
            f"mask {params.mask.shape}"
        )
    terms = _powered_diffs(points - query[None, :], params.p)
    weights = 1.0 + (params.alpha - 1.0) * params.mask
    return terms @ weights


@dataclass(frozen=True)
class NeighborSet:
    """K nearest rows of a dataset for one query, distances nondecreasing."""

    indices: np.ndarray
    distances: np.ndarray
    target_class: int
    params: MetricParams = field(repr=False)

    def __len__(self) -> int:
        return len(self.indices)


def knn(
    query: np.ndarray,
    target_class: int,
    params: MetricParams,
    k: int,
    data,
) -> NeighborSet:
    """Exact k-nearest-neighbour search restricted to one class.

    ``data`` is a :class:`flowcf.classifiers.LabeledDataset` (anything with
    ``encoded`` and ``labels`` works). Returned indices address rows of the
    full dataset. Distance ties resolve toward the lower row index, so the
    result is invariant to shuffling the dataset rows.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    encoded = data.encoded
    labels = np.asarray(data.labels)
    candidates = np.flatnonzero(labels == target_class)
    if candidates.size < k:
        raise DataError(
            f"class {target_class} has only {candidates.size} rows, "
            f"need at least k={k}"
        )
    dists = dist_pm_many(encoded[candidates], np.asarray(query, dtype=np.float64), params)
    order = np.argsort(dists, kind="stable")[:k]
    return NeighborSet(
        indices=candidates[order],
        distances=dists[order],
        target_class=int(target_class),
        params=params,
    )


def sample_qhat(
    neighbors: NeighborSet, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw row indices uniformly (with replacement) from a neighbour set.

    This is the empirical target distribution: probability mass 1/K on
    each of the K nearest same-class rows, zero elsewhere.
    """
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")
    picks = rng.integers(0, len(neighbors.indices), size=count)
    return neighbors.indices[picks]
