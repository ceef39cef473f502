"""Generation path: target resolution, single-pass sampling, judging,
ranking, and the estimator wrapper."""

import json

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from flowcf.bundle import ModelBundle
from flowcf.classifiers import LinearClassifier
from flowcf.datasets import make_dataset
from flowcf.encoding import categorical_slot_mask, encode, encoded_dim
from flowcf.errors import DataError, SchemaError
from flowcf.flow import ConditionalMaskedFlow, context_dim
from flowcf.generator import (
    CounterfactualGenerator,
    generate_counterfactuals,
    resolve_target_class,
)
from flowcf.schema import Instance


class TestResolveTargetClass:
    def test_flip_picks_best_other_class(self):
        probs = np.array([0.1, 0.7, 0.2])
        assert resolve_target_class("flip", probs, 3) == 2
        assert resolve_target_class(None, probs, 3) == 2

    def test_flip_binary(self):
        assert resolve_target_class("flip", np.array([0.8, 0.2]), 2) == 1
        assert resolve_target_class("flip", np.array([0.2, 0.8]), 2) == 0

    def test_flip_without_classifier(self):
        with pytest.raises(DataError, match="classifier"):
            resolve_target_class("flip", None, 2)

    def test_explicit_index_passes_through(self):
        assert resolve_target_class(1, None, 3) == 1
        assert resolve_target_class(0, np.array([0.9, 0.1]), 2) == 0

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError, match="out of range"):
            resolve_target_class(3, None, 3)
        with pytest.raises(DataError, match="out of range"):
            resolve_target_class(-1, None, 3)


def noisy_flow(dim, ctx_dim, seed=0):
    flow = ConditionalMaskedFlow(
        dim=dim, context_dim=ctx_dim, n_layers=2, hidden=8, zero_init=True
    )
    rng = np.random.default_rng(seed)
    flow.load_tensors(
        {k: v + rng.normal(scale=0.05, size=v.shape) for k, v in flow.tensors().items()}
    )
    return flow


@pytest.fixture()
def hand_bundle(mixed_schema):
    dim = encoded_dim(mixed_schema)
    ctx = context_dim(dim, 2, len(mixed_schema.features))
    clf = LinearClassifier().init_zero(dim=dim, class_count=2)
    return ModelBundle(
        schema=mixed_schema,
        flow=noisy_flow(dim, ctx),
        classifier=clf,
        density_flow=noisy_flow(dim, 0, seed=1),
        train_config={"p_set": [0.01, 2.0], "masks": [[]], "seed": 0},
    )


@pytest.fixture()
def query(mixed_schema):
    return Instance.from_mapping(
        mixed_schema, {"age": 50.0, "color": "green", "hours": 30.0, "level": "lo"}
    )


class TestGenerate:
    def test_batch_shapes(self, hand_bundle, query):
        batch = generate_counterfactuals(hand_bundle, query, n=6, seed=0)
        assert len(batch) == 6
        dim = encoded_dim(hand_bundle.schema)
        assert batch.encoded.shape == (6, dim)
        assert batch.proximity.shape == (6,)
        assert len(batch.changed) == 6
        assert batch.valid.shape == (6,)
        assert batch.class_prob.shape == (6,)
        assert batch.score.shape == (6,)
        assert batch.explanations == [None] * 6
        assert batch.p == 2.0
        assert batch.mask_features == ()

    def test_flip_from_uniform_classifier_targets_class_one(
        self, hand_bundle, query
    ):
        # init_zero classifier is uniform; argmax of [0.5, 0.5] is 0
        batch = generate_counterfactuals(hand_bundle, query, n=2, seed=0)
        assert batch.target_class == 1

    def test_seed_determinism(self, hand_bundle, query):
        a = generate_counterfactuals(hand_bundle, query, n=5, seed=11)
        b = generate_counterfactuals(hand_bundle, query, n=5, seed=11)
        c = generate_counterfactuals(hand_bundle, query, n=5, seed=12)
        assert np.array_equal(a.encoded, b.encoded)
        assert not np.array_equal(a.encoded, c.encoded)

    def test_rng_argument_is_honoured(self, hand_bundle, query):
        a = generate_counterfactuals(
            hand_bundle, query, n=4, rng=np.random.default_rng(11)
        )
        b = generate_counterfactuals(hand_bundle, query, n=4, seed=11)
        assert np.array_equal(a.encoded, b.encoded)

    def test_one_hot_blocks_are_snapped(self, hand_bundle, query):
        batch = generate_counterfactuals(hand_bundle, query, n=8, seed=3)
        slots = categorical_slot_mask(hand_bundle.schema)
        cat = batch.encoded[:, slots]
        assert set(np.unique(cat)) <= {0.0, 1.0}
        for feature in ("color", "level"):
            block = hand_bundle.schema.feature(feature)
            # each one-hot block carries exactly one active slot
        layout_sums = []
        from flowcf.encoding import layout_for

        layout = layout_for(hand_bundle.schema)
        for name in ("color", "level"):
            layout_sums.append(batch.encoded[:, layout.block(name)].sum(axis=1))
        assert all(np.array_equal(s, np.ones(8)) for s in layout_sums)

    def test_changed_and_proximity_describe_decoded_artifacts(
        self, hand_bundle, query
    ):
        from flowcf.metrics import changed_feature_names, proximity_per_cf

        batch = generate_counterfactuals(hand_bundle, query, n=5, seed=2)
        x_enc = encode(query, hand_bundle.schema)
        eps = hand_bundle.metric("eps")
        assert batch.changed == changed_feature_names(
            x_enc, batch.encoded, hand_bundle.schema, eps
        )
        assert np.array_equal(
            batch.proximity,
            proximity_per_cf(x_enc, batch.encoded, hand_bundle.schema),
        )

    def test_validation_errors(self, hand_bundle, query, mixed_schema):
        with pytest.raises(DataError, match="n must be"):
            generate_counterfactuals(hand_bundle, query, n=0)
        with pytest.raises(DataError, match="p must be"):
            generate_counterfactuals(hand_bundle, query, p=0.0)
        with pytest.raises(DataError, match="p must be"):
            generate_counterfactuals(hand_bundle, query, p=-1.0)
        with pytest.raises(SchemaError):
            generate_counterfactuals(hand_bundle, query, mask_features=["salary"])
        bad = Instance(values=query.values[:-1])
        with pytest.raises(SchemaError):
            generate_counterfactuals(hand_bundle, bad)

    def test_classifier_only_bundle_refuses(self, mixed_schema, query):
        clf = LinearClassifier().init_zero(dim=encoded_dim(mixed_schema), class_count=2)
        bundle = ModelBundle(schema=mixed_schema, classifier=clf)
        with pytest.raises(DataError, match="no flow"):
            generate_counterfactuals(bundle, query, target_class=1)

    def test_flow_only_bundle_skips_judging(self, mixed_schema, query):
        dim = encoded_dim(mixed_schema)
        bundle = ModelBundle(
            schema=mixed_schema,
            flow=noisy_flow(dim, context_dim(dim, 2, len(mixed_schema.features))),
        )
        batch = generate_counterfactuals(bundle, query, n=3, target_class=1, seed=0)
        assert batch.valid is None
        assert batch.class_prob is None
        assert batch.score is None
        assert batch.proximity.shape == (3,)

    def test_explicit_target_class_used(self, hand_bundle, query):
        batch = generate_counterfactuals(
            hand_bundle, query, n=2, target_class=0, seed=0
        )
        assert batch.target_class == 0


class _BrokenFlow:
    """Stub whose third sample row comes back non-finite."""

    def __init__(self, dim):
        self.dim = dim

    def sample(self, ctx, n, rng, n_classes):
        out = rng.normal(size=(n, self.dim))
        if n >= 3:
            out[2] = np.inf
        return out


class TestQuarantine:
    def test_nonfinite_rows_flagged_not_dropped(self, mixed_schema, query):
        dim = encoded_dim(mixed_schema)
        clf = LinearClassifier().init_zero(dim=dim, class_count=2)
        bundle = ModelBundle(
            schema=mixed_schema, flow=_BrokenFlow(dim), classifier=clf
        )
        batch = generate_counterfactuals(bundle, query, n=4, seed=0)
        assert len(batch) == 4
        assert batch.explanations[2] == "sample produced non-finite values"
        assert [e for i, e in enumerate(batch.explanations) if i != 2] == [None] * 3
        assert not batch.valid[2]
        # the quarantined slot reproduces the query rather than garbage
        assert np.array_equal(batch.encoded[2], encode(query, mixed_schema))
        assert np.isfinite(batch.encoded).all()


class TestRanking:
    def test_rank_by_score_sorts_descending(self, hand_bundle, query):
        batch = generate_counterfactuals(
            hand_bundle, query, n=8, seed=5, rank_by_score=True
        )
        assert np.all(np.diff(batch.score) <= 0)

    def test_rank_preserves_row_alignment(self, hand_bundle, query):
        plain = generate_counterfactuals(hand_bundle, query, n=8, seed=5)
        ranked = generate_counterfactuals(
            hand_bundle, query, n=8, seed=5, rank_by_score=True
        )
        order = np.argsort(-plain.score, kind="stable")
        assert np.array_equal(ranked.encoded, plain.encoded[order])
        assert np.array_equal(ranked.proximity, plain.proximity[order])
        assert ranked.changed == [plain.changed[i] for i in order]
        assert np.array_equal(ranked.valid, plain.valid[order])

    def test_rank_without_density_refuses(self, mixed_schema, query):
        dim = encoded_dim(mixed_schema)
        bundle = ModelBundle(
            schema=mixed_schema,
            flow=noisy_flow(dim, context_dim(dim, 2, len(mixed_schema.features))),
            classifier=LinearClassifier().init_zero(dim=dim, class_count=2),
        )
        with pytest.raises(DataError, match="rank_by_score"):
            generate_counterfactuals(
                bundle, query, n=2, seed=0, rank_by_score=True
            )


class TestEstimatorWrapper:
    def test_get_set_params_round_trip(self):
        gen = CounterfactualGenerator(steps=10, seed=4)
        params = gen.get_params()
        assert params["steps"] == 10
        assert params["seed"] == 4
        gen.set_params(steps=20)
        assert gen.steps == 20

    def test_generate_before_fit_raises(self, query):
        with pytest.raises(NotFittedError):
            CounterfactualGenerator().generate(query)

    def test_fit_then_generate_end_to_end(self):
        schema, instances, labels = make_dataset("two-moons", n=200, seed=0)
        gen = CounterfactualGenerator(
            steps=8,
            batch_instances=16,
            k_neighbors=4,
            p_set=(0.5, 2.0),
            classifier_kind="logistic-linear",
            classifier_epochs=200,
            density_steps=8,
            seed=0,
        )
        import warnings

        with warnings.catch_warnings():
            # a linear head cannot fully fit two moons; plateau warnings
            # are expected at this epoch budget and irrelevant here
            warnings.simplefilter("ignore")
            gen.fit(schema, instances, labels)
        assert gen.bundle_.flow is not None
        assert gen.bundle_.classifier is not None
        assert gen.bundle_.density_flow is not None
        assert gen.train_report_ is not None

        batch = gen.generate(instances[0], n=4, seed=1)
        assert len(batch) == 4
        assert batch.score is not None
        # config echo must be JSON-serialisable and carry the chosen knobs
        echo = gen.bundle_.train_config
        json.dumps(echo)
        assert echo["p_set"] == [0.5, 2.0]
        assert echo["k_neighbors"] == 4
        assert echo["steps"] == 8
