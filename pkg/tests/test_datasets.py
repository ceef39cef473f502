"""Synthetic dataset generators: shapes, determinism, and the structural
pathologies downstream sparsity behaviour depends on."""

import numpy as np
import pytest

from flowcf.datasets import make_census, make_dataset, make_two_moons
from flowcf.errors import DataError
from flowcf.schema import CATEGORICAL, CONTINUOUS


class TestTwoMoons:
    def test_shapes_and_schema(self):
        schema, instances, labels = make_two_moons(n=101, seed=0)
        assert len(instances) == 101
        assert labels.shape == (101,)
        assert [f.name for f in schema.features] == ["x1", "x2"]
        assert all(f.kind == CONTINUOUS for f in schema.features)
        assert schema.class_count == 2
        assert sorted(np.unique(labels)) == [0, 1]

    def test_class_balance(self):
        _, _, labels = make_two_moons(n=400, seed=1)
        assert labels.sum() == 200

    def test_seed_determinism(self):
        s1, i1, l1 = make_two_moons(n=50, seed=7)
        s2, i2, l2 = make_two_moons(n=50, seed=7)
        assert [i.values for i in i1] == [i.values for i in i2]
        assert np.array_equal(l1, l2)
        assert s1.to_dict() == s2.to_dict()
        _, i3, _ = make_two_moons(n=50, seed=8)
        assert [i.values for i in i1] != [i.values for i in i3]

    def test_stats_match_generated_columns(self):
        schema, instances, _ = make_two_moons(n=300, seed=2)
        x1 = np.array([inst.values[0] for inst in instances])
        st = schema.continuous_stats["x1"]
        assert st.mean == pytest.approx(x1.mean(), rel=1e-12)
        assert st.stddev == pytest.approx(x1.std(), rel=1e-12)  # ddof=0
        assert st.minimum == x1.min() and st.maximum == x1.max()

    def test_moons_are_separated_regions(self):
        # moon 0 sits near the upper arc (positive x2 on average)
        _, instances, labels = make_two_moons(n=1000, noise=0.05, seed=3)
        x2 = np.array([inst.values[1] for inst in instances])
        assert x2[labels == 0].mean() > 0.3
        assert x2[labels == 1].mean() < 0.2

    def test_too_small_n(self):
        with pytest.raises(DataError):
            make_two_moons(n=3)

    def test_instances_validate(self):
        schema, instances, _ = make_two_moons(n=40, seed=0)
        for inst in instances:
            schema.validate_instance(inst)


class TestCensus:
    def test_feature_roster(self):
        schema, _, _ = make_census(n=200, seed=0)
        names = [f.name for f in schema.features]
        assert len(names) == 10
        assert names[:6] == [
            "age",
            "capital-gain",
            "capital-loss",
            "hours-per-week",
            "education-num",
            "weeks-per-year",
        ]
        kinds = [f.kind for f in schema.features]
        assert kinds.count(CONTINUOUS) == 6
        assert kinds.count(CATEGORICAL) == 4

    def test_categories_sorted(self):
        schema, _, _ = make_census(n=200, seed=0)
        for f in schema.features:
            if f.kind == CATEGORICAL:
                assert list(f.categories) == sorted(f.categories)

    def test_zero_inflation_rates(self):
        _, instances, _ = make_census(n=4000, seed=0)
        gain = np.array([inst.values[1] for inst in instances])
        loss = np.array([inst.values[2] for inst in instances])
        hours = np.array([inst.values[3] for inst in instances])
        assert (gain == 0).mean() == pytest.approx(0.85, abs=0.03)
        assert (loss == 0).mean() == pytest.approx(0.92, abs=0.03)
        assert (hours == 40).mean() == pytest.approx(0.62, abs=0.04)

    def test_label_rate_tracks_positive_rate(self):
        _, _, labels = make_census(n=4000, seed=1, positive_rate=0.32)
        assert labels.mean() == pytest.approx(0.32, abs=0.02)
        _, _, labels = make_census(n=4000, seed=1, positive_rate=0.5)
        assert labels.mean() == pytest.approx(0.5, abs=0.02)

    def test_seed_determinism(self):
        _, i1, l1 = make_census(n=120, seed=5)
        _, i2, l2 = make_census(n=120, seed=5)
        assert [a.values for a in i1] == [b.values for b in i2]
        assert np.array_equal(l1, l2)

    def test_instances_validate(self):
        schema, instances, _ = make_census(n=150, seed=0)
        for inst in instances:
            schema.validate_instance(inst)

    def test_label_leans_on_education(self):
        # doctorates should land in the positive class far more often
        # than dropouts; the latent score demands it
        schema, instances, labels = make_census(n=4000, seed=0)
        edu_idx = [f.name for f in schema.features].index("education")
        edu = np.array([inst.values[edu_idx] for inst in instances])
        assert labels[edu == "doctorate"].mean() > labels[edu == "dropout"].mean() + 0.3

    def test_parameter_validation(self):
        with pytest.raises(DataError):
            make_census(n=10)
        with pytest.raises(DataError):
            make_census(n=100, positive_rate=0.0)
        with pytest.raises(DataError):
            make_census(n=100, positive_rate=1.0)


class TestMakeDataset:
    def test_dispatch(self):
        schema, instances, _ = make_dataset("two-moons", n=60, seed=0)
        assert len(schema.features) == 2
        schema, instances, _ = make_dataset("census", n=60, seed=0)
        assert len(schema.features) == 10

    def test_unknown_name(self):
        with pytest.raises(DataError, match="unknown dataset"):
            make_dataset("iris", n=100)
