"""Shared fixtures: a small mixed-type schema and matching rows.

Heavyweight trained models live in test_acceptance.py as module-scoped
fixtures so unit tests stay fast.
"""

import numpy as np
import pytest

from flowcf.schema import (
    CATEGORICAL,
    CONTINUOUS,
    ContinuousStats,
    FeatureSpec,
    Instance,
    TableSchema,
)


@pytest.fixture(scope="session")
def mixed_schema() -> TableSchema:
    """Two continuous features and two categorical blocks (3 + 2 slots)."""
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
        class_labels=("no", "yes"),
    )


@pytest.fixture(scope="session")
def mixed_rows(mixed_schema) -> list[Instance]:
    rng = np.random.default_rng(0)
    rows = []
    for _ in range(40):
        rows.append(
            Instance.from_mapping(
                mixed_schema,
                {
                    "age": float(rng.uniform(18, 80)),
                    "color": ["blue", "green", "red"][rng.integers(3)],
                    "hours": float(rng.uniform(1, 99)),
                    "level": ["hi", "lo"][rng.integers(2)],
                },
            )
        )
    return rows
