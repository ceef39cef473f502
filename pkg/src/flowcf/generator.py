"""Counterfactual generation on top of a trained bundle.

Generation is a single conditioned sampling pass: encode the query,
assemble the conditioning vector for the requested class, exponent and
mask, draw n latent vectors, and invert the flow. No per-query
optimisation happens at inference time; sparsity and actionability are
steered entirely through the conditioning.

Samples are decoded to instances and re-encoded before judging, so every
reported number (validity, class probability, proximity, changed
features) describes exactly the artifact the caller receives, with
one-hot blocks snapped to their argmax category.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .bundle import ModelBundle
from .classifiers import KIND_MLP, fit_classifier, label_dataset, LabeledDataset
from .encoding import encode, encode_batch, decode_batch, feature_level_mask
from .errors import DataError
from .flow import ConditioningContext
from .metrics import (
    ScoreParams,
    changed_feature_names,
    proximity_per_cf,
    score_candidates,
    validity_flags,
)
from .schema import Instance, TableSchema
from .training import TrainConfig, train, train_density

FLIP = "flip"


@dataclass
class CounterfactualBatch:
    """Generated counterfactuals for one query instance.

    ``valid``, ``class_prob`` and ``score`` are None when the bundle has
    no classifier or no density model to judge with; ``explanations``
    carries a reason string per entry when a sample had to be flagged
    (e.g. non-finite values), else None.
    """

    query: Instance
    target_class: int
    p: float
    mask_features: tuple[str, ...]
    counterfactuals: list[Instance]
    encoded: np.ndarray
    proximity: np.ndarray
    changed: list[list[str]]
    valid: np.ndarray | None = None
    class_prob: np.ndarray | None = None
    score: np.ndarray | None = None
    explanations: list = field(default_factory=list)
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.counterfactuals)


def resolve_target_class(
    requested, probs: np.ndarray | None, class_count: int
) -> int:
    """Turn a requested class (index, "flip", or None) into an index.

    None and "flip" both mean "the most probable class other than the
    current prediction" and need classifier probabilities for the query.
    """
    if requested is None or requested == FLIP:
        if probs is None:
            raise DataError(
                'target class "flip" needs a classifier in the bundle; '
                "pass an explicit class index instead"
            )
        current = int(np.argmax(probs))
        others = np.delete(np.arange(class_count), current)
        return int(others[np.argmax(probs[others])])
    target = int(requested)
    if not 0 <= target < class_count:
        raise DataError(
            f"target class {target} out of range for {class_count} classes"
        )
    return target


def generate_counterfactuals(
    bundle: ModelBundle,
    instance: Instance,
    n: int = 10,
    p: float = 2.0,
    mask_features: Sequence[str] = (),
    target_class=None,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    rank_by_score: bool = False,
) -> CounterfactualBatch:
    """Generate ``n`` counterfactuals for one instance.

    ``p`` may be any positive exponent, including values outside the
    trained set (the conditioner interpolates; callers may warn).
    ``mask_features`` lists features to hold fixed. When
    ``rank_by_score`` is set and the bundle carries a density model,
    entries are ordered by descending candidate score.
    """
    schema = bundle.schema
    if bundle.flow is None:
        raise DataError(
            "bundle has no flow model (classifier-only bundle); train one first"
        )
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    if not p > 0:
        raise DataError(f"p must be > 0, got {p!r}")
    schema.validate_instance(instance)
    mask_features = tuple(mask_features)
    feat_mask = feature_level_mask(mask_features, schema)  # validates names

    if rng is None:
        rng = np.random.default_rng(seed)

    x_enc = encode(instance, schema)
    query_probs = None
    if bundle.classifier is not None:
        query_probs = bundle.classifier.predict_proba(x_enc[None, :])[0]
    target = resolve_target_class(target_class, query_probs, schema.class_count)

    ctx = ConditioningContext(
        x_enc=x_enc, y_target=target, p_value=float(p), feature_mask=feat_mask
    )
    samples = bundle.flow.sample(ctx, n, rng, n_classes=schema.class_count)
    if bundle.train_config.get("center_on_query", False):
        # The flow was trained on offsets from the query; shift back into
        # data space before decoding.
        samples = samples + x_enc

    # Quarantine non-finite rows before decoding; they decode to the query
    # itself and are flagged rather than dropped so counts stay honest.
    explanations: list = [None] * n
    finite = np.isfinite(samples).all(axis=1)
    for i in np.flatnonzero(~finite):
        samples[i] = x_enc
        explanations[int(i)] = "sample produced non-finite values"

    counterfactuals = decode_batch(samples, schema)
    cf_enc = encode_batch(counterfactuals, schema)

    valid = None
    class_prob = None
    if bundle.classifier is not None:
        valid, class_prob = validity_flags(cf_enc, target, bundle.classifier)
        valid = valid & finite
    eps = float(bundle.metric("eps"))
    proximity = proximity_per_cf(x_enc, cf_enc, schema)
    changed = changed_feature_names(x_enc, cf_enc, schema, eps)

    score = None
    if bundle.classifier is not None and bundle.density is not None:
        score = score_candidates(
            cf_enc,
            x_enc,
            target,
            bundle.classifier,
            bundle.density,
            ScoreParams(
                lambda1=float(bundle.metric("lambda1")),
                lambda2=float(bundle.metric("lambda2")),
            ),
        )

    batch = CounterfactualBatch(
        query=instance,
        target_class=target,
        p=float(p),
        mask_features=mask_features,
        counterfactuals=counterfactuals,
        encoded=cf_enc,
        proximity=proximity,
        changed=changed,
        valid=valid,
        class_prob=class_prob,
        score=score,
        explanations=explanations,
        seed=seed,
    )
    if rank_by_score:
        if score is None:
            raise DataError(
                "rank_by_score needs both a classifier and a density model "
                "in the bundle"
            )
        _reorder(batch, np.argsort(-score, kind="stable"))
    return batch


def _reorder(batch: CounterfactualBatch, order: np.ndarray) -> None:
    batch.counterfactuals = [batch.counterfactuals[i] for i in order]
    batch.encoded = batch.encoded[order]
    batch.proximity = batch.proximity[order]
    batch.changed = [batch.changed[i] for i in order]
    batch.explanations = [batch.explanations[i] for i in order]
    if batch.valid is not None:
        batch.valid = batch.valid[order]
    if batch.class_prob is not None:
        batch.class_prob = batch.class_prob[order]
    if batch.score is not None:
        batch.score = batch.score[order]


class CounterfactualGenerator(BaseEstimator):
    """Estimator-style wrapper: fit a bundle, then generate.

    fit() fits the built-in classifier on the provided labels, relabels
    the rows with it (the classifier is the validity oracle, so training
    targets must agree with it), trains the conditional flow, and
    optionally a marginal density model for candidate scoring.
    """

    def __init__(
        self,
        steps: int = 4000,
        batch_instances: int = 128,
        k_neighbors: int = 16,
        p_set: tuple = (0.01, 0.25, 0.5, 1.0, 2.0),
        masks: tuple = ((),),
        classifier_kind: str = KIND_MLP,
        classifier_hidden: tuple = (64, 64),
        classifier_epochs: int = 500,
        learning_rate: float = 1e-3,
        flow_layers: int = 5,
        flow_hidden: int = 128,
        alpha: float = 1e4,
        train_density_model: bool = True,
        density_steps: int = 1000,
        seed: int = 0,
    ):
        self.steps = steps
        self.batch_instances = batch_instances
        self.k_neighbors = k_neighbors
        self.p_set = p_set
        self.masks = masks
        self.classifier_kind = classifier_kind
        self.classifier_hidden = classifier_hidden
        self.classifier_epochs = classifier_epochs
        self.learning_rate = learning_rate
        self.flow_layers = flow_layers
        self.flow_hidden = flow_hidden
        self.alpha = alpha
        self.train_density_model = train_density_model
        self.density_steps = density_steps
        self.seed = seed

    def fit(
        self,
        schema: TableSchema,
        instances: Sequence[Instance],
        labels: Sequence[int],
    ):
        config = TrainConfig(
            steps=self.steps,
            batch_instances=self.batch_instances,
            k_neighbors=self.k_neighbors,
            p_set=tuple(self.p_set),
            masks=tuple(tuple(m) for m in self.masks),
            learning_rate=self.learning_rate,
            flow_layers=self.flow_layers,
            flow_hidden=self.flow_hidden,
            alpha=self.alpha,
            seed=self.seed,
        )
        clf_kwargs = dict(epochs=self.classifier_epochs, seed=self.seed)
        if self.classifier_kind == KIND_MLP:
            clf_kwargs["hidden"] = tuple(self.classifier_hidden)
        clf = fit_classifier(
            schema, instances, labels, kind=self.classifier_kind, **clf_kwargs
        )
        data = label_dataset(clf, instances, schema)
        flow, report = train(data, config)
        density_flow = None
        if self.train_density_model:
            density_flow = train_density(
                data, steps=self.density_steps, seed=self.seed
            )
        self.bundle_ = ModelBundle(
            schema=schema,
            flow=flow,
            classifier=clf,
            density_flow=density_flow,
            train_config=_config_echo(config),
        )
        self.train_report_ = report
        return self

    def generate(self, instance: Instance, **kwargs) -> CounterfactualBatch:
        if not hasattr(self, "bundle_"):
            raise NotFittedError("CounterfactualGenerator is not fitted yet")
        return generate_counterfactuals(self.bundle_, instance, **kwargs)


def _config_echo(config: TrainConfig) -> dict:
    return {
        "steps": config.steps,
        "batch_instances": config.batch_instances,
        "k_neighbors": config.k_neighbors,
        "p_set": list(config.p_set),
        "masks": [list(m) for m in config.masks],
        "class_prior": None
        if config.class_prior is None
        else list(config.class_prior),
        "seed": config.seed,
        "center_on_query": config.center_on_query,
        "learning_rate": config.learning_rate,
        "grad_clip": config.grad_clip,
        "alpha": config.alpha,
        "flow_layers": config.flow_layers,
        "flow_hidden": config.flow_hidden,
        "log_scale_bound": config.log_scale_bound,
        "dequant": config.dequant,
        "holdout_fraction": config.holdout_fraction,
    }


def build_labeled_dataset(
    schema: TableSchema,
    instances: Sequence[Instance],
    labels: Sequence[int],
) -> LabeledDataset:
    """Dataset from externally supplied labels (no classifier involved)."""
    return LabeledDataset(
        schema=schema, instances=list(instances), labels=np.asarray(labels)
    )
