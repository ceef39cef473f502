"""Training loop for the counterfactual flow.

Each gradient step samples a minibatch of (query, target) pairs and fits
the flow to the empirical neighbourhood distribution:

  1. draw a training row x with classifier label y,
  2. draw a requested class y' != y from the class prior,
  3. draw a distance exponent p from the configured set and an
     actionability mask m from the configured family,
  4. find the K nearest rows of class y' under the masked distance, and
  5. draw the flow's regression target uniformly from those K rows.

The flow maximises the likelihood of the targets given the context
(x, y', p, m). Because every target is an actual dataset row of class
y', validity and plausibility are properties of the training signal
rather than a post-hoc search: at inference time the same conditioning
produces samples from the matching neighbourhood.

Neighbour sets depend only on (row, y', p, m), so they are memoised
across steps. One-hot blocks of the regression targets are dequantized
with uniform noise in [0, dequant) so the flow never sees a degenerate
axis-aligned manifold; queries inside the conditioner stay clean.

All randomness flows from one numpy Generator seeded by the config, and
the model runs in float64, so a fixed seed reproduces the final
parameters bit for bit on a fixed thread count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from .classifiers import LabeledDataset
from .encoding import categorical_slot_mask, feature_level_mask
from .errors import ConfigError, DataError
from .flow import ConditionalMaskedFlow, ConditioningContext, build_context_matrix, context_dim
from .neighbors import MetricParams, NeighborSet, knn, sample_qhat

DEFAULT_P_SET = (0.01, 0.25, 0.5, 1.0, 2.0)
DEFAULT_K = 16


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one flow training run.

    ``masks`` is a family of feature-name tuples; the empty tuple (no
    feature locked) is always required so unmasked generation stays in
    distribution. ``class_prior`` is renormalised over the non-factual
    classes per draw; None means uniform.
    """

    steps: int = 4000
    batch_instances: int = 128
    k_neighbors: int = DEFAULT_K
    p_set: tuple[float, ...] = DEFAULT_P_SET
    masks: tuple[tuple[str, ...], ...] = ((),)
    # Model offsets from the query instead of absolute rows: unchanged
    # coordinates become a shared spike at zero, which the flow can place
    # far more precisely than a per-query copy of the coordinate.
    center_on_query: bool = True
    class_prior: tuple[float, ...] | None = None
    seed: int = 0
    learning_rate: float = 1e-3
    lr_floor: float = 0.05  # cosine-anneal to this fraction of learning_rate
    grad_clip: float = 5.0
    alpha: float = 1e4
    flow_layers: int = 5
    flow_hidden: int = 128
    log_scale_bound: float = 7.0
    dequant: float = 0.05
    # Uniform half-width (in standardised units) added to continuous
    # target dims. Grid-valued columns otherwise present exact point
    # masses the optimiser chases with unbounded density.
    cont_dequant: float = 0.03
    holdout_fraction: float = 0.1
    val_pairs: int = 256
    log_every: int = 200
    min_class_count: int | None = None  # defaults to 2 * k_neighbors
    debug_audit: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch_instances < 1:
            raise ConfigError("batch_instances must be >= 1")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if not self.p_set:
            raise ConfigError("p_set must be non-empty")
        if any(not p > 0 for p in self.p_set):
            raise ConfigError(f"every p must be > 0, got {self.p_set}")
        if () not in tuple(tuple(m) for m in self.masks):
            raise ConfigError("masks must include the empty mask ()")
        if self.class_prior is not None and any(w <= 0 for w in self.class_prior):
            raise ConfigError("class_prior entries must be strictly positive")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must be in [0, 1)")
        if self.alpha < 1:
            raise ConfigError("alpha must be >= 1")
        if not 0 <= self.dequant <= 0.5:
            raise ConfigError("dequant must be in [0, 0.5]")
        if not 0 < self.lr_floor <= 1:
            raise ConfigError("lr_floor must be in (0, 1]")
        if self.cont_dequant < 0:
            raise ConfigError("cont_dequant must be >= 0")

    @property
    def required_class_count(self) -> int:
        if self.min_class_count is not None:
            return self.min_class_count
        return 2 * self.k_neighbors


@dataclass
class TrainReport:
    """What happened during a run, for logs and regression checks."""

    nll: list[float] = field(default_factory=list)
    val_nll: list[tuple[int, float]] = field(default_factory=list)
    final_val_nll: float | None = None
    wall_clock_seconds: float = 0.0
    training_rows: int = 0
    holdout_rows: int = 0
    draw_counts: dict = field(default_factory=dict)

    def summary(self) -> str:
        lines = [
            f"steps run          {len(self.nll)}",
            f"training rows      {self.training_rows}",
            f"holdout rows       {self.holdout_rows}",
            f"wall clock (s)     {self.wall_clock_seconds:.1f}",
        ]
        if self.nll:
            lines.insert(1, f"final train NLL    {self.nll[-1]:.4f}")
        if self.final_val_nll is not None:
            lines.insert(2, f"final holdout NLL  {self.final_val_nll:.4f}")
        return "\n".join(lines)


def sample_target_class(
    label: int, prior: np.ndarray, rng: np.random.Generator
) -> int:
    """Draw a class different from ``label`` under the renormalised prior."""
    weights = prior.copy()
    weights[label] = 0.0
    total = weights.sum()
    if total <= 0:
        raise DataError("class prior has no mass outside the factual class")
    return int(rng.choice(len(weights), p=weights / total))


def build_training_pair(
    x_enc: np.ndarray,
    x_label: int,
    data: LabeledDataset,
    config: TrainConfig,
    rng: np.random.Generator,
    neighbors: NeighborSet | None = None,
    target_class: int | None = None,
    p: float | None = None,
    mask_features: tuple[str, ...] | None = None,
) -> tuple[np.ndarray, ConditioningContext]:
    """Draw one (target vector, context) pair for a query row.

    Draw choices may be pinned by the caller (the training loop pins them
    so it can memoise neighbour sets); anything left None is drawn here.
    The returned target is the raw encoded dataset row, before any
    dequantization.
    """
    prior = _resolve_prior(config, data.schema.class_count)
    if target_class is None:
        target_class = sample_target_class(x_label, prior, rng)
    if p is None:
        p = float(config.p_set[rng.integers(len(config.p_set))])
    if mask_features is None:
        mask_features = tuple(config.masks[rng.integers(len(config.masks))])
    if neighbors is None:
        params = MetricParams.for_features(
            data.schema, mask_features, p=p, alpha=config.alpha
        )
        neighbors = knn(x_enc, target_class, params, config.k_neighbors, data)
    row = int(sample_qhat(neighbors, 1, rng)[0])
    target = data.encoded[row].copy()
    ctx = ConditioningContext(
        x_enc=x_enc,
        y_target=int(target_class),
        p_value=float(p),
        feature_mask=feature_level_mask(mask_features, data.schema),
    )
    return target, ctx


def _resolve_prior(config: TrainConfig, class_count: int) -> np.ndarray:
    if config.class_prior is None:
        return np.ones(class_count, dtype=np.float64)
    prior = np.asarray(config.class_prior, dtype=np.float64)
    if prior.shape != (class_count,):
        raise ConfigError(
            f"class_prior has {prior.shape[0]} entries for {class_count} classes"
        )
    return prior


def dequantize_onehot(
    batch: np.ndarray, slot_mask: np.ndarray, rng: np.random.Generator, scale: float
) -> np.ndarray:
    """Add U[0, scale) noise to every one-hot slot (argmax is preserved
    for scale <= 0.5)."""
    if scale <= 0 or not slot_mask.any():
        return batch
    out = batch.copy()
    noise = rng.uniform(0.0, scale, size=(batch.shape[0], int(slot_mask.sum())))
    out[:, slot_mask] += noise
    return out


def dequantize_continuous(
    batch: np.ndarray, slot_mask: np.ndarray, rng: np.random.Generator, half_width: float
) -> np.ndarray:
    """Add U(-half_width, half_width) noise to the continuous dims."""
    cont = ~slot_mask
    if half_width <= 0 or not cont.any():
        return batch
    out = batch.copy()
    noise = rng.uniform(-half_width, half_width, size=(batch.shape[0], int(cont.sum())))
    out[:, cont] += noise
    return out


def train(
    data: LabeledDataset, config: TrainConfig
) -> tuple[ConditionalMaskedFlow, TrainReport]:
    """Train a conditional flow on a labelled dataset.

    Returns the trained flow and a report. With ``steps=0`` the
    freshly initialised model is returned untouched (useful for smoke
    tests and identity checks).
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    schema = data.schema
    n_classes = schema.class_count
    prior = _resolve_prior(config, n_classes)
    masks = tuple(tuple(m) for m in config.masks)
    for m in masks:
        feature_level_mask(m, schema)  # unknown names fail fast

    n = len(data)
    holdout = int(round(n * config.holdout_fraction))
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:holdout], perm[holdout:]
    train_data = data.subset(train_idx) if holdout else data

    counts = train_data.class_counts()
    thin = np.flatnonzero(counts < max(config.k_neighbors, 1))
    if thin.size:
        raise DataError(
            f"classes {thin.tolist()} have fewer than k={config.k_neighbors} "
            f"training rows (counts {counts.tolist()})"
        )
    required = config.required_class_count
    weak = np.flatnonzero(counts < required)
    if weak.size:
        import warnings

        warnings.warn(
            f"classes {weak.tolist()} have fewer than {required} rows "
            f"(counts {counts.tolist()}); neighbourhoods will be thin",
            UserWarning,
            stacklevel=2,
        )

    dim = train_data.dim
    n_features = len(schema.features)
    flow = ConditionalMaskedFlow(
        dim=dim,
        context_dim=context_dim(dim, n_classes, n_features),
        n_layers=config.flow_layers,
        hidden=config.flow_hidden,
        log_scale_bound=config.log_scale_bound,
        rng=rng,
    )
    report = TrainReport(training_rows=len(train_data), holdout_rows=holdout)
    report.draw_counts = {
        "p": {repr(p): 0 for p in config.p_set},
        "mask": {",".join(m) or "(none)": 0 for m in masks},
        "target_class": {str(c): 0 for c in range(n_classes)},
    }
    if config.steps == 0:
        report.wall_clock_seconds = time.perf_counter() - t0
        return flow, report

    slot_mask = categorical_slot_mask(schema)
    encoded = train_data.encoded
    labels = train_data.labels
    metric_cache: dict[tuple, MetricParams] = {}
    neighbor_cache: dict[tuple, NeighborSet] = {}
    feature_masks = {m: feature_level_mask(m, schema) for m in masks}

    # Validation pairs are drawn once from the holdout rows with their own
    # generator so the training stream is identical whether or not
    # validation runs.
    val_batch = None
    if holdout:
        val_rng = np.random.default_rng(config.seed + 1)
        vx, vctx = [], []
        val_rows = val_rng.choice(len(val_idx), size=min(config.val_pairs, holdout))
        for r in val_rows:
            row = val_idx[r]
            target, ctx = build_training_pair(
                data.encoded[row], int(data.labels[row]), train_data, config, val_rng
            )
            if config.center_on_query:
                target = target - data.encoded[row]
            vx.append(target)
            vctx.append(ctx)
        vx = dequantize_onehot(np.stack(vx), slot_mask, val_rng, config.dequant)
        vx = dequantize_continuous(vx, slot_mask, val_rng, config.cont_dequant)
        val_batch = (
            torch.as_tensor(vx),
            torch.as_tensor(build_context_matrix(vctx, n_classes)),
        )

    opt = torch.optim.Adam(flow.parameters(), lr=config.learning_rate)
    # Late training has to place conditional modes precisely; a decaying
    # step size matters more here than for plain density fits.
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=max(config.steps, 1), eta_min=config.learning_rate * config.lr_floor
    )
    audit_failures = 0

    for step in range(config.steps):
        rows = rng.integers(0, len(train_data), size=config.batch_instances)
        targets = np.empty((config.batch_instances, dim), dtype=np.float64)
        contexts = []
        for j, row in enumerate(rows):
            row = int(row)
            label = int(labels[row])
            y_target = sample_target_class(label, prior, rng)
            p_idx = int(rng.integers(len(config.p_set)))
            m_idx = int(rng.integers(len(masks)))
            p = float(config.p_set[p_idx])
            mask_features = masks[m_idx]

            key = (row, y_target, p_idx, m_idx)
            nbrs = neighbor_cache.get(key)
            if nbrs is None:
                mkey = (p_idx, m_idx)
                params = metric_cache.get(mkey)
                if params is None:
                    params = MetricParams.for_features(
                        schema, mask_features, p=p, alpha=config.alpha
                    )
                    metric_cache[mkey] = params
                nbrs = knn(encoded[row], y_target, params, config.k_neighbors, train_data)
                neighbor_cache[key] = nbrs

            pick = int(sample_qhat(nbrs, 1, rng)[0])
            if config.debug_audit and int(labels[pick]) != y_target:
                audit_failures += 1
            targets[j] = encoded[pick]
            if config.center_on_query:
                targets[j] -= encoded[row]
            contexts.append(
                ConditioningContext(
                    x_enc=encoded[row],
                    y_target=y_target,
                    p_value=p,
                    feature_mask=feature_masks[mask_features],
                )
            )
            report.draw_counts["p"][repr(p)] += 1
            report.draw_counts["mask"][",".join(mask_features) or "(none)"] += 1
            report.draw_counts["target_class"][str(y_target)] += 1

        targets = dequantize_onehot(targets, slot_mask, rng, config.dequant)
        targets = dequantize_continuous(targets, slot_mask, rng, config.cont_dequant)
        xt = torch.as_tensor(targets)
        ct = torch.as_tensor(build_context_matrix(contexts, n_classes))

        opt.zero_grad()
        z, log_det = flow.transform(xt, ct)
        base = (-0.5 * z.pow(2) - 0.5 * np.log(2 * np.pi)).sum(dim=1)
        loss = -(base + log_det).mean()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(flow.parameters(), config.grad_clip)
        opt.step()
        sched.step()
        report.nll.append(float(loss.detach()))

        if val_batch is not None and (
            (step + 1) % config.log_every == 0 or step + 1 == config.steps
        ):
            with torch.no_grad():
                vz, vld = flow.transform(*val_batch)
                vbase = (-0.5 * vz.pow(2) - 0.5 * np.log(2 * np.pi)).sum(dim=1)
                report.val_nll.append((step + 1, float(-(vbase + vld).mean())))

    if config.debug_audit and audit_failures:
        raise DataError(
            f"{audit_failures} training targets had the wrong class label; "
            f"neighbour search is broken"
        )
    if report.val_nll:
        report.final_val_nll = report.val_nll[-1][1]
    report.wall_clock_seconds = time.perf_counter() - t0
    return flow, report


def train_density(
    data: LabeledDataset,
    steps: int = 1000,
    batch: int = 128,
    seed: int = 0,
    learning_rate: float = 1e-3,
    grad_clip: float = 5.0,
    n_layers: int = 5,
    hidden: int = 64,
    dequant: float = 0.05,
) -> ConditionalMaskedFlow:
    """Fit an unconditional flow to the dataset marginal.

    Used for the data-density term of candidate scores. Same family as
    the conditional flow, context width zero.
    """
    rng = np.random.default_rng(seed)
    flow = ConditionalMaskedFlow(
        dim=data.dim, context_dim=0, n_layers=n_layers, hidden=hidden, rng=rng
    )
    if steps == 0:
        return flow
    slot_mask = categorical_slot_mask(data.schema)
    encoded = data.encoded
    opt = torch.optim.Adam(flow.parameters(), lr=learning_rate)
    for _ in range(steps):
        rows = rng.integers(0, len(data), size=batch)
        x = dequantize_onehot(encoded[rows], slot_mask, rng, dequant)
        xt = torch.as_tensor(x)
        opt.zero_grad()
        z, log_det = flow.transform(xt, None)
        base = (-0.5 * z.pow(2) - 0.5 * np.log(2 * np.pi)).sum(dim=1)
        loss = -(base + log_det).mean()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(flow.parameters(), grad_clip)
        opt.step()
    return flow


def holdout_split(
    n: int, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Random (train, holdout) index split; holdout may be empty."""
    holdout = int(round(n * fraction))
    perm = rng.permutation(n)
    return perm[holdout:], perm[:holdout]
