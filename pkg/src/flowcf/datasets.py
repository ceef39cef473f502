"""Built-in synthetic datasets for demos and end-to-end tests.

Two generators: a two-moons toy (2 continuous features, 2 classes) and a
census-style mixed table (4 continuous + 8 categorical features) whose
continuous columns have realistic pathologies: zero-inflated capital
fields and an hours column with a heavy spike at 40. Both are fully
determined by their seed.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError
from .schema import (
    CATEGORICAL,
    CONTINUOUS,
    ContinuousStats,
    FeatureSpec,
    Instance,
    TableSchema,
)

TWO_MOONS = "two-moons"
CENSUS = "census"
DATASET_NAMES = (TWO_MOONS, CENSUS)


def _stats_from_column(values: np.ndarray) -> ContinuousStats:
    std = float(values.std())  # population stddev
    if std <= 0:
        raise DataError("generated a constant column; widen the noise")
    return ContinuousStats(
        mean=float(values.mean()),
        stddev=std,
        minimum=float(values.min()),
        maximum=float(values.max()),
    )


def make_two_moons(
    n: int = 1000, noise: float = 0.12, seed: int = 0
) -> tuple[TableSchema, list[Instance], np.ndarray]:
    """Two interleaved half-circles with Gaussian noise.

    Returns (schema, instances, labels); labels are the generating moon.
    """
    if n < 4:
        raise DataError(f"need at least 4 rows, got {n}")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, math.pi, size=n0)
    t1 = rng.uniform(0.0, math.pi, size=n1)
    x = np.concatenate([np.cos(t0), 1.0 - np.cos(t1)])
    y = np.concatenate([np.sin(t0), 0.5 - np.sin(t1)])
    x += rng.normal(0.0, noise, size=n)
    y += rng.normal(0.0, noise, size=n)
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    x, y, labels = x[perm], y[perm], labels[perm]

    schema = TableSchema(
        features=(
            FeatureSpec(name="x1", kind=CONTINUOUS),
            FeatureSpec(name="x2", kind=CONTINUOUS),
        ),
        class_count=2,
        continuous_stats={
            "x1": _stats_from_column(x),
            "x2": _stats_from_column(y),
        },
        class_labels=("0", "1"),
    )
    instances = [Instance(values=(float(a), float(b))) for a, b in zip(x, y)]
    return schema, instances, labels


# Independently drawn categorical columns, using the grouped codes that
# public census extracts publish. Distributions are skewed the way census
# tables are: most features have one dominant value, so exact joint
# matches between rows are common at modest sample sizes. Only the
# columns that enter the latent score are kept; extra demographic fields
# would add matching noise without changing the label structure.
_CENSUS_CATEGORIES = {
    "education": (
        ("hs-grad", "some-college", "bachelors", "masters", "doctorate", "dropout"),
        (0.35, 0.22, 0.20, 0.10, 0.04, 0.09),
    ),
    "occupation": (
        ("white-collar", "blue-collar", "service", "other"),
        (0.45, 0.25, 0.20, 0.10),
    ),
}

# marital-status and sex are drawn jointly: household composition ties
# them together in census data, which concentrates probability on fewer
# combinations than independent draws would produce.
_HOUSEHOLD_JOINT = (
    (("married", "male"), 0.40),
    (("married", "female"), 0.13),
    (("never-married", "male"), 0.16),
    (("never-married", "female"), 0.12),
    (("divorced", "male"), 0.05),
    (("divorced", "female"), 0.09),
    (("widowed", "male"), 0.01),
    (("widowed", "female"), 0.04),
)
_HOUSEHOLD_FIELDS = ("marital-status", "sex")
_CENSUS_CATEGORY_NAMES = {
    **{name: values for name, (values, _) in _CENSUS_CATEGORIES.items()},
    "marital-status": ("married", "never-married", "divorced", "widowed"),
    "sex": ("female", "male"),
}
_CENSUS_CAT_ORDER = (
    "education",
    "marital-status",
    "occupation",
    "sex",
)

# Nonzero capital amounts cluster on a handful of recurring values, the
# way reporting brackets make them cluster in real income tables. Repeats
# matter: they give nearest-neighbour searches exact matches in the tail,
# and the all-or-nothing shape keeps any capital move large relative to
# the column's spread.
_GAIN_VALUES = (1500.0, 2200.0, 3103.0, 7688.0, 15024.0, 27828.0)
_GAIN_PROBS = (0.22, 0.18, 0.20, 0.22, 0.12, 0.06)
_GAIN_ZERO_RATE = 0.85
_LOSS_VALUES = (130.0, 260.0, 520.0, 1485.0, 1740.0, 1902.0, 2415.0)
_LOSS_PROBS = (0.20, 0.16, 0.14, 0.14, 0.14, 0.15, 0.07)
_LOSS_ZERO_RATE = 0.92

# Age reporting-bucket grid.
_AGE_MEAN = 38.0
_AGE_STD = 12.0
_AGE_STEP = 10.0
_AGE_MIN = 20.0
_AGE_MAX = 80.0

# Weekly-hours grid and the share reporting exactly 40.
_HOURS_MEAN = 43.0
_HOURS_STD = 11.0
_HOURS_STEP = 5.0
_HOURS_AT_40 = 0.62

# Weeks worked last year: a full-year spike plus recurring part-year
# values at common season/contract lengths.
_WEEKS_VALUES = (20.0, 26.0, 32.0, 38.0, 44.0, 48.0, 50.0)
_WEEKS_PROBS = (0.07, 0.11, 0.14, 0.18, 0.18, 0.14, 0.18)
_WEEKS_FULL_YEAR = 52.0
_WEEKS_AT_FULL = 0.72

# Mild categorical score weights: the label signal lives mostly in the
# continuous profile (age, hours, schooling years, capital), so nearby
# rows of the other class differ in continuous coordinates first.
_EDU_WEIGHT = {
    "hs-grad": -0.05,
    "some-college": 0.0,
    "bachelors": 0.05,
    "masters": 0.09,
    "doctorate": 0.12,
    "dropout": -0.12,
}
_OCC_WEIGHT = {
    "white-collar": 0.12,
    "blue-collar": -0.05,
    "service": -0.10,
    "other": 0.0,
}

# Completed years of schooling implied by each credential; the generated
# column adds a one-year jitter around the base value.
_EDU_NUM_BASE = {
    "dropout": 7.0,
    "hs-grad": 9.0,
    "some-college": 11.0,
    "bachelors": 13.0,
    "masters": 14.0,
    "doctorate": 16.0,
}

# Latent-score weights. Continuous terms dominate so that label flips are
# reachable either through one large capital move or through several small
# steps of the other columns.
_W_AGE = 0.040
_W_GAIN = 0.00022
_W_LOSS = -0.00040
_W_HOURS = 0.060
_W_EDU_NUM = 0.22
_W_WEEKS = 0.015
_W_MARRIED = 0.20
_W_MALE = 0.08
_NOISE_STD = 0.45


def make_census(
    n: int = 2000, seed: int = 0, positive_rate: float = 0.32
) -> tuple[TableSchema, list[Instance], np.ndarray]:
    """Census-style mixed table with an income-like binary label.

    Continuous columns: age, capital-gain, capital-loss, hours-per-week,
    education-num, weeks-per-year. The columns carry the pathologies of
    real census extracts: ages in reporting buckets, mostly-zero capital
    fields whose nonzero amounts repeat across rows, an hours column
    spiked at 40 with five-hour grid values elsewhere, schooling years
    tied to the reported credential, a weeks column spiked at the full
    year, skewed categorical marginals, and household fields (marital
    status, sex) drawn jointly rather than independently.
    The label follows a latent score dominated by the cumulative
    continuous profile, with milder categorical terms, thresholded at the
    requested positive rate.
    """
    if n < 50:
        raise DataError(f"need at least 50 rows, got {n}")
    if not 0 < positive_rate < 1:
        raise DataError("positive_rate must be in (0, 1)")
    rng = np.random.default_rng(seed)

    # Ages appear in reporting buckets and hours in multiples of five, as
    # survey answers do; both grids are coarse enough that rows either
    # match a value exactly or sit a visible step away from it.
    age = np.clip(
        _AGE_STEP * np.round(rng.normal(_AGE_MEAN, _AGE_STD, size=n) / _AGE_STEP),
        _AGE_MIN,
        _AGE_MAX,
    )
    gain = np.where(
        rng.uniform(size=n) < _GAIN_ZERO_RATE,
        0.0,
        rng.choice(_GAIN_VALUES, size=n, p=_GAIN_PROBS),
    )
    loss = np.where(
        rng.uniform(size=n) < _LOSS_ZERO_RATE,
        0.0,
        rng.choice(_LOSS_VALUES, size=n, p=_LOSS_PROBS),
    )
    hours_raw = rng.normal(_HOURS_MEAN, _HOURS_STD, size=n)
    hours_other = np.clip(_HOURS_STEP * np.round(hours_raw / _HOURS_STEP), 5, 90)
    # keep the 40 atom's mass at exactly the spike probability: grid values
    # that land on 40 move to the neighbouring bucket they came from
    hours_other = np.where(
        hours_other == 40.0,
        np.where(hours_raw >= 40.0, 40.0 + _HOURS_STEP, 40.0 - _HOURS_STEP),
        hours_other,
    )
    hours = np.where(rng.uniform(size=n) < _HOURS_AT_40, 40.0, hours_other)
    weeks = np.where(
        rng.uniform(size=n) < _WEEKS_AT_FULL,
        _WEEKS_FULL_YEAR,
        rng.choice(_WEEKS_VALUES, size=n, p=_WEEKS_PROBS),
    )

    cats = {}
    for name, (values, probs) in _CENSUS_CATEGORIES.items():
        cats[name] = rng.choice(values, size=n, p=probs)
    joint_idx = rng.choice(
        len(_HOUSEHOLD_JOINT), size=n, p=tuple(w for _, w in _HOUSEHOLD_JOINT)
    )
    for pos, field in enumerate(_HOUSEHOLD_FIELDS):
        cats[field] = np.array([_HOUSEHOLD_JOINT[j][0][pos] for j in joint_idx])

    edu_num = np.vectorize(_EDU_NUM_BASE.get)(cats["education"]) + rng.choice(
        (-1.0, 0.0, 1.0), size=n, p=(0.2, 0.6, 0.2)
    )

    score = (
        _W_AGE * (age - 38.0)
        + _W_GAIN * gain
        + _W_LOSS * loss
        + _W_HOURS * (hours - 40.0)
        + _W_EDU_NUM * (edu_num - 11.0)
        + _W_WEEKS * (weeks - _WEEKS_FULL_YEAR)
        + np.vectorize(_EDU_WEIGHT.get)(cats["education"])
        + np.vectorize(_OCC_WEIGHT.get)(cats["occupation"])
        + _W_MARRIED * (cats["marital-status"] == "married")
        + _W_MALE * (cats["sex"] == "male")
        + rng.normal(0.0, _NOISE_STD, size=n)
    )
    labels = (score > np.quantile(score, 1.0 - positive_rate)).astype(np.int64)

    features = [
        FeatureSpec(name="age", kind=CONTINUOUS),
        FeatureSpec(name="capital-gain", kind=CONTINUOUS),
        FeatureSpec(name="capital-loss", kind=CONTINUOUS),
        FeatureSpec(name="hours-per-week", kind=CONTINUOUS),
        FeatureSpec(name="education-num", kind=CONTINUOUS),
        FeatureSpec(name="weeks-per-year", kind=CONTINUOUS),
    ]
    for name in _CENSUS_CAT_ORDER:
        features.append(
            FeatureSpec(
                name=name,
                kind=CATEGORICAL,
                categories=tuple(sorted(_CENSUS_CATEGORY_NAMES[name])),
            )
        )
    stats = {
        "age": _stats_from_column(age),
        "capital-gain": _stats_from_column(gain),
        "capital-loss": _stats_from_column(loss),
        "hours-per-week": _stats_from_column(hours),
        "education-num": _stats_from_column(edu_num),
        "weeks-per-year": _stats_from_column(weeks),
    }
    schema = TableSchema(
        features=tuple(features),
        class_count=2,
        continuous_stats=stats,
        class_labels=("no", "yes"),
    )

    instances = []
    for i in range(n):
        row = [
            float(age[i]),
            float(gain[i]),
            float(loss[i]),
            float(hours[i]),
            float(edu_num[i]),
            float(weeks[i]),
        ]
        row.extend(str(cats[name][i]) for name in _CENSUS_CAT_ORDER)
        instances.append(Instance(values=tuple(row)))
    return schema, instances, labels


def make_dataset(
    name: str, n: int, seed: int = 0
) -> tuple[TableSchema, list[Instance], np.ndarray]:
    if name == TWO_MOONS:
        return make_two_moons(n=n, seed=seed)
    if name == CENSUS:
        return make_census(n=n, seed=seed)
    raise DataError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")
