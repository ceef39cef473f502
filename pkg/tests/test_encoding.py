"""Encode/decode against hand-computed vectors, plus round-trip properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowcf.encoding import (
    TabularEncoder,
    categorical_slot_mask,
    decode,
    decode_batch,
    encode,
    encode_batch,
    encoded_dim,
    expand_feature_mask,
    feature_level_mask,
    layout_for,
)
from flowcf.errors import SchemaError
from flowcf.schema import Instance, instances_close


def make_instance(schema, age, color, hours, level):
    return Instance.from_mapping(
        schema, {"age": age, "color": color, "hours": hours, "level": level}
    )


def _property_schema():
    # same shape as the mixed_schema fixture; hypothesis needs a
    # module-level constructor rather than a function-scoped fixture
    from flowcf.schema import CATEGORICAL, CONTINUOUS, ContinuousStats, FeatureSpec, TableSchema

    return TableSchema(
        features=(
            FeatureSpec(name="age", kind=CONTINUOUS),
            FeatureSpec(name="color", kind=CATEGORICAL, categories=("blue", "green", "red")),
            FeatureSpec(name="hours", kind=CONTINUOUS),
            FeatureSpec(name="level", kind=CATEGORICAL, categories=("hi", "lo")),
        ),
        class_count=2,
        continuous_stats={
            "age": ContinuousStats(mean=40.0, stddev=10.0, minimum=18.0, maximum=80.0),
            "hours": ContinuousStats(mean=38.0, stddev=8.0, minimum=1.0, maximum=99.0),
        },
    )


class TestLayout:
    def test_blocks_and_dim(self, mixed_schema):
        layout = layout_for(mixed_schema)
        # age(1) + color(3) + hours(1) + level(2)
        assert layout.dim == 7
        assert encoded_dim(mixed_schema) == 7
        assert layout.block("age") == slice(0, 1)
        assert layout.block("color") == slice(1, 4)
        assert layout.block("hours") == slice(4, 5)
        assert layout.block("level") == slice(5, 7)

    def test_categorical_slot_mask(self, mixed_schema):
        mask = categorical_slot_mask(mixed_schema)
        assert mask.tolist() == [0, 1, 1, 1, 0, 1, 1]


class TestEncode:
    def test_hand_computed_vector(self, mixed_schema):
        # age 50 -> (50-40)/10 = 1; hours 30 -> (30-38)/8 = -1
        inst = make_instance(mixed_schema, 50.0, "green", 30.0, "lo")
        vec = encode(inst, mixed_schema)
        assert vec.tolist() == [1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0]
        assert vec.dtype == np.float64

    def test_batch_matches_single(self, mixed_schema, mixed_rows):
        X = encode_batch(mixed_rows, mixed_schema)
        assert X.shape == (len(mixed_rows), 7)
        for i, inst in enumerate(mixed_rows):
            assert np.array_equal(X[i], encode(inst, mixed_schema))

    def test_decode_inverts_hand_vector(self, mixed_schema):
        vec = np.array([1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0])
        inst = decode(vec, mixed_schema)
        assert inst.values == (50.0, "green", 30.0, "lo")

    def test_argmax_tie_breaks_to_first_category(self, mixed_schema):
        vec = np.array([0.0, 0.7, 0.7, 0.7, 0.0, 0.5, 0.5])
        inst = decode(vec, mixed_schema)
        assert inst.value_of(mixed_schema, "color") == "blue"
        assert inst.value_of(mixed_schema, "level") == "hi"

    def test_decode_batch(self, mixed_schema, mixed_rows):
        X = encode_batch(mixed_rows, mixed_schema)
        back = decode_batch(X, mixed_schema)
        for a, b in zip(mixed_rows, back):
            assert instances_close(a, b, mixed_schema)

    @settings(max_examples=60, deadline=None)
    @given(
        age=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        color=st.sampled_from(["blue", "green", "red"]),
        hours=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        level=st.sampled_from(["hi", "lo"]),
    )
    def test_round_trip_property(self, age, color, hours, level):
        schema = _property_schema()
        inst = make_instance(schema, age, color, hours, level)
        back = decode(encode(inst, schema), schema)
        assert instances_close(inst, back, schema, rtol=1e-9)

    def test_noisy_onehot_still_decodes(self, mixed_schema):
        inst = make_instance(mixed_schema, 45.0, "red", 40.0, "hi")
        vec = encode(inst, mixed_schema)
        rng = np.random.default_rng(4)
        noisy = vec + rng.uniform(0, 0.4, size=vec.shape) * categorical_slot_mask(
            mixed_schema
        )
        back = decode(noisy, mixed_schema)
        assert back.value_of(mixed_schema, "color") == "red"
        assert back.value_of(mixed_schema, "level") == "hi"


class TestMasks:
    def test_expand_feature_mask_block_atomic(self, mixed_schema):
        m = expand_feature_mask(("color",), mixed_schema)
        assert m.tolist() == [0, 1, 1, 1, 0, 0, 0]
        m = expand_feature_mask(("age", "level"), mixed_schema)
        assert m.tolist() == [1, 0, 0, 0, 0, 1, 1]

    def test_empty_mask(self, mixed_schema):
        assert expand_feature_mask((), mixed_schema).tolist() == [0] * 7

    def test_feature_level_mask(self, mixed_schema):
        m = feature_level_mask(("hours",), mixed_schema)
        assert m.tolist() == [0, 0, 1, 0]

    def test_unknown_feature_rejected(self, mixed_schema):
        with pytest.raises(SchemaError, match="salary"):
            expand_feature_mask(("salary",), mixed_schema)
        with pytest.raises(SchemaError, match="salary"):
            feature_level_mask(("salary",), mixed_schema)


class TestEstimator:
    def test_transform_round_trip(self, mixed_schema, mixed_rows):
        enc = TabularEncoder(schema=mixed_schema).fit(mixed_rows)
        X = enc.transform(mixed_rows)
        back = enc.inverse_transform(X)
        for a, b in zip(mixed_rows, back):
            assert instances_close(a, b, mixed_schema)
        assert enc.dim == 7

    def test_get_params_round_trip(self, mixed_schema):
        enc = TabularEncoder(schema=mixed_schema)
        params = enc.get_params()
        enc2 = TabularEncoder(**params)
        assert enc2.schema == mixed_schema
