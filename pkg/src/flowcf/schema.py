"""Tabular schemas, raw instances, and CSV ingestion.

A :class:`TableSchema` fixes the feature set of a dataset: each feature is
either continuous (encoded later by z-scoring against statistics stored
here) or categorical (encoded as a one-hot block over a fixed category
list). Schemas are immutable once built; every other module treats the
schema as the single source of truth for feature order, category order,
and normalization statistics.

Statistics are population statistics (``ddof=0``) computed over the
ingested rows. Category lists are sorted, so a schema inferred from a CSV
does not depend on row order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError, MissingInputError, SchemaError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

#: Relative tolerance for the encode/decode round trip on continuous values.
ROUNDTRIP_RTOL = 1e-12


@dataclass(frozen=True)
class ContinuousStats:
    """Normalization statistics for one continuous feature."""

    mean: float
    stddev: float
    minimum: float
    maximum: float

    def __post_init__(self):
        for name in ("mean", "stddev", "minimum", "maximum"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise SchemaError(f"non-finite {name} in continuous stats: {v!r}")
        if self.stddev <= 0:
            raise SchemaError(f"stddev must be positive, got {self.stddev!r}")

    @property
    def value_range(self) -> float:
        return self.maximum - self.minimum


@dataclass(frozen=True)
class FeatureSpec:
    """Name and kind of a single feature.

    ``categories`` is non-empty exactly when ``kind`` is categorical; its
    order fixes the one-hot block layout.
    """

    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"unknown feature kind {self.kind!r} for {self.name!r}")
        if self.kind == CATEGORICAL:
            if len(self.categories) < 2:
                raise SchemaError(
                    f"categorical feature {self.name!r} needs at least 2 "
                    f"categories, got {len(self.categories)}"
                )
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"duplicate categories in feature {self.name!r}")
        elif self.categories:
            raise SchemaError(f"continuous feature {self.name!r} must not list categories")

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS


@dataclass(frozen=True)
class TableSchema:
    """Immutable description of a tabular dataset.

    Attributes:
        features: ordered feature specs; order fixes the encoded layout.
        class_count: number of classifier classes (>= 2).
        continuous_stats: per-feature normalization statistics, keyed by
            feature name, present for every continuous feature.
        class_labels: optional display names for the classes, aligned with
            class indices (e.g. the original strings of a CSV label column).
    """

    features: tuple[FeatureSpec, ...]
    class_count: int
    continuous_stats: Mapping[str, ContinuousStats] = field(default_factory=dict)
    class_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.features:
            raise SchemaError("schema must declare at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names in schema")
        if self.class_count < 2:
            raise SchemaError(f"class_count must be >= 2, got {self.class_count}")
        for f in self.features:
            if f.is_continuous and f.name not in self.continuous_stats:
                raise SchemaError(f"missing continuous stats for feature {f.name!r}")
        for name in self.continuous_stats:
            spec = self.feature(name, missing_ok=True)
            if spec is None or not spec.is_continuous:
                raise SchemaError(f"stats given for non-continuous feature {name!r}")
        if self.class_labels is not None and len(self.class_labels) != self.class_count:
            raise SchemaError(
                f"class_labels has {len(self.class_labels)} entries for "
                f"{self.class_count} classes"
            )

    # -- lookups ---------------------------------------------------------

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def continuous_features(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.is_continuous)

    @property
    def categorical_features(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if not f.is_continuous)

    def feature(self, name: str, missing_ok: bool = False) -> FeatureSpec | None:
        for f in self.features:
            if f.name == name:
                return f
        if missing_ok:
            return None
        raise SchemaError(f"schema has no feature named {name!r}")

    def stats(self, name: str) -> ContinuousStats:
        try:
            return self.continuous_stats[name]
        except KeyError:
            raise SchemaError(f"no continuous stats for feature {name!r}") from None

    # -- validation ------------------------------------------------------

    def validate_value(self, spec: FeatureSpec, value) -> object:
        """Coerce and check a single raw value, returning the stored form."""
        if spec.is_continuous:
            try:
                v = float(value)
            except (TypeError, ValueError):
                raise SchemaError(
                    f"feature {spec.name!r}: expected a number, got {value!r}"
                ) from None
            if not math.isfinite(v):
                raise SchemaError(f"feature {spec.name!r}: non-finite value {value!r}")
            return v
        v = str(value)
        if v not in spec.categories:
            raise SchemaError(
                f"feature {spec.name!r}: unknown category {v!r} "
                f"(expected one of {list(spec.categories)})"
            )
        return v

    def validate_instance(self, instance: "Instance") -> None:
        if len(instance.values) != len(self.features):
            raise SchemaError(
                f"instance has {len(instance.values)} values, schema expects "
                f"{len(self.features)}"
            )
        for spec, value in zip(self.features, instance.values):
            self.validate_value(spec, value)

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    **({"categories": list(f.categories)} if f.categories else {}),
                }
                for f in self.features
            ],
            "class_count": self.class_count,
            "continuous_stats": {
                name: {
                    "mean": s.mean,
                    "stddev": s.stddev,
                    "min": s.minimum,
                    "max": s.maximum,
                }
                for name, s in self.continuous_stats.items()
            },
            "class_labels": list(self.class_labels) if self.class_labels else None,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "TableSchema":
        try:
            features = tuple(
                FeatureSpec(
                    name=f["name"],
                    kind=f["kind"],
                    categories=tuple(f.get("categories", ())),
                )
                for f in payload["features"]
            )
            stats = {
                name: ContinuousStats(
                    mean=float(s["mean"]),
                    stddev=float(s["stddev"]),
                    minimum=float(s["min"]),
                    maximum=float(s["max"]),
                )
                for name, s in payload.get("continuous_stats", {}).items()
            }
            labels = payload.get("class_labels")
            return cls(
                features=features,
                class_count=int(payload["class_count"]),
                continuous_stats=stats,
                class_labels=tuple(labels) if labels else None,
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema payload: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "TableSchema":
        p = Path(path)
        if not p.exists():
            raise MissingInputError(f"schema file not found: {p}")
        return cls.from_dict(json.loads(p.read_text()))


@dataclass(frozen=True)
class Instance:
    """One raw data row, values aligned with a schema's feature order.

    Continuous entries are floats, categorical entries are category
    strings. Instances are plain value containers; validation against a
    schema happens at the boundaries (ingestion, encoding, the service).
    """

    values: tuple

    @classmethod
    def from_mapping(cls, schema: TableSchema, mapping: Mapping[str, object]) -> "Instance":
        missing = [f.name for f in schema.features if f.name not in mapping]
        if missing:
            raise SchemaError(f"instance is missing features: {missing}")
        unknown = [k for k in mapping if schema.feature(k, missing_ok=True) is None]
        if unknown:
            raise SchemaError(f"instance has unknown features: {sorted(unknown)}")
        values = tuple(
            schema.validate_value(spec, mapping[spec.name]) for spec in schema.features
        )
        return cls(values=values)

    def as_mapping(self, schema: TableSchema) -> dict[str, object]:
        return {spec.name: v for spec, v in zip(schema.features, self.values)}

    def value_of(self, schema: TableSchema, name: str):
        for spec, v in zip(schema.features, self.values):
            if spec.name == name:
                return v
        raise SchemaError(f"schema has no feature named {name!r}")


def instances_close(
    a: Instance, b: Instance, schema: TableSchema, rtol: float = ROUNDTRIP_RTOL
) -> bool:
    """True when two instances agree exactly on categoricals and within
    ``rtol`` relative error on continuous features."""
    if len(a.values) != len(b.values):
        return False
    for spec, va, vb in zip(schema.features, a.values, b.values):
        if spec.is_continuous:
            if not math.isclose(float(va), float(vb), rel_tol=rtol, abs_tol=rtol):
                return False
        elif va != vb:
            return False
    return True


# -- CSV ingestion --------------------------------------------------------


def _looks_numeric(values: Iterable[str]) -> bool:
    for v in values:
        try:
            float(v)
        except ValueError:
            return False
    return True


def _sort_labels(labels: set[str]) -> list[str]:
    # Numeric label columns sort numerically so "10" lands after "2".
    if _looks_numeric(labels):
        return sorted(labels, key=float)
    return sorted(labels)


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"input file not found: {p}")
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty CSV file: {p}") from None
        header = [h.strip() for h in header]
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {i}: expected {len(header)} fields, got {len(row)}"
                )
            cells = [c.strip() for c in row]
            for col, cell in zip(header, cells):
                if cell == "":
                    raise DataError(f"row {i}: empty value in column {col!r}")
            rows.append(cells)
    if not rows:
        raise DataError(f"CSV file has a header but no data rows: {p}")
    return header, rows


def _compute_stats(name: str, values: Sequence[float]) -> ContinuousStats:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    std = math.sqrt(var)
    if std <= 0:
        raise DataError(
            f"continuous column {name!r} is constant; constant columns carry "
            f"no signal and must be dropped before ingestion"
        )
    return ContinuousStats(mean=mean, stddev=std, minimum=min(values), maximum=max(values))


def _build_schema(
    header: list[str],
    rows: list[list[str]],
    schema_hint: TableSchema | None,
    class_count: int,
    class_labels: tuple[str, ...] | None,
) -> TableSchema:
    specs: list[FeatureSpec] = []
    columns = {name: [row[j] for row in rows] for j, name in enumerate(header)}

    if schema_hint is not None:
        hinted = {f.name: f for f in schema_hint.features}
        missing = [n for n in hinted if n not in columns]
        if missing:
            raise DataError(f"declared schema features missing from CSV: {missing}")
        ordered = [f.name for f in schema_hint.features]
    else:
        hinted = {}
        ordered = header

    for name in ordered:
        cells = columns[name]
        if name in hinted:
            spec = hinted[name]
            if spec.is_continuous:
                if not _looks_numeric(cells):
                    bad = next(i for i, c in enumerate(cells, 1) if not _looks_numeric([c]))
                    raise DataError(
                        f"row {bad}: column {name!r} declared continuous but "
                        f"holds non-numeric value {columns[name][bad - 1]!r}"
                    )
            else:
                allowed = set(spec.categories)
                for i, c in enumerate(cells, start=1):
                    if c not in allowed:
                        raise DataError(
                            f"row {i}: column {name!r} has category {c!r} not in "
                            f"the declared schema"
                        )
            specs.append(spec)
        elif _looks_numeric(cells):
            specs.append(FeatureSpec(name=name, kind=CONTINUOUS))
        else:
            cats = tuple(sorted(set(cells)))
            specs.append(FeatureSpec(name=name, kind=CATEGORICAL, categories=cats))

    stats = {
        spec.name: _compute_stats(spec.name, [float(c) for c in columns[spec.name]])
        for spec in specs
        if spec.is_continuous
    }
    return TableSchema(
        features=tuple(specs),
        class_count=class_count,
        continuous_stats=stats,
        class_labels=class_labels,
    )


def ingest_labeled_csv(
    path: str | Path,
    label_column: str,
    schema_hint: TableSchema | None = None,
) -> tuple[TableSchema, list[Instance], list[int]]:
    """Read a CSV with a label column and infer (or check) its schema.

    The label column is excluded from the feature set; its distinct values
    become class indices (numeric-aware sort order) and are recorded as the
    schema's class display labels. Statistics are always recomputed from
    the file, even under a declared schema.
    """
    header, rows = _read_rows(path)
    if label_column not in header:
        raise DataError(f"label column {label_column!r} not found in CSV header")
    li = header.index(label_column)
    feature_header = [h for h in header if h != label_column]
    feature_rows = [[c for j, c in enumerate(row) if j != li] for row in rows]
    raw_labels = [row[li] for row in rows]

    if schema_hint is not None and schema_hint.class_labels:
        ordered_labels = list(schema_hint.class_labels)
        unknown = sorted(set(raw_labels) - set(ordered_labels))
        if unknown:
            raise DataError(f"label column has values not in the declared schema: {unknown}")
    else:
        ordered_labels = _sort_labels(set(raw_labels))
    if len(ordered_labels) < 2:
        raise DataError("label column must contain at least two distinct classes")
    index = {lab: i for i, lab in enumerate(ordered_labels)}
    labels = [index[v] for v in raw_labels]

    schema = _build_schema(
        feature_header, feature_rows, schema_hint, len(ordered_labels), tuple(ordered_labels)
    )
    instances = _rows_to_instances(schema, feature_header, feature_rows)
    return schema, instances, labels


def ingest_csv(
    path: str | Path,
    schema_hint: TableSchema | None = None,
    class_count: int = 2,
) -> tuple[TableSchema, list[Instance]]:
    """Read an unlabeled CSV and infer (or check) its schema.

    ``class_count`` seeds the schema's class dimension when no hint is
    given; it is ignored when ``schema_hint`` is provided.
    """
    header, rows = _read_rows(path)
    if schema_hint is not None:
        class_count = schema_hint.class_count
        class_labels = schema_hint.class_labels
    else:
        class_labels = None
    schema = _build_schema(header, rows, schema_hint, class_count, class_labels)
    instances = _rows_to_instances(schema, header, rows)
    return schema, instances


def _rows_to_instances(
    schema: TableSchema, header: list[str], rows: list[list[str]]
) -> list[Instance]:
    col_of = {name: header.index(name) for name in schema.feature_names}
    instances = []
    for i, row in enumerate(rows, start=1):
        values = []
        for spec in schema.features:
            cell = row[col_of[spec.name]]
            try:
                values.append(schema.validate_value(spec, cell))
            except SchemaError as exc:
                raise DataError(f"row {i}: {exc}") from None
        instances.append(Instance(values=tuple(values)))
    return instances


def read_instances(path: str | Path, schema: TableSchema) -> list[Instance]:
    """Read rows under a fixed schema, without recomputing statistics.

    The header must contain every schema feature; extra columns (such as a
    label column kept in a test file) are ignored.
    """
    header, rows = _read_rows(path)
    missing = [n for n in schema.feature_names if n not in header]
    if missing:
        raise DataError(f"CSV is missing schema features: {missing}")
    return _rows_to_instances(schema, header, rows)


def write_csv(
    path: str | Path,
    schema: TableSchema,
    instances: Sequence[Instance],
    labels: Sequence[int] | None = None,
    label_column: str = "label",
) -> None:
    """Write instances (and optional labels) back out as CSV."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(schema.feature_names)
        if labels is not None:
            header.append(label_column)
        writer.writerow(header)
        for i, inst in enumerate(instances):
            row = [_format_cell(v) for v in inst.values]
            if labels is not None:
                lab = labels[i]
                if schema.class_labels is not None:
                    row.append(schema.class_labels[int(lab)])
                else:
                    row.append(str(int(lab)))
            writer.writerow(row)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
