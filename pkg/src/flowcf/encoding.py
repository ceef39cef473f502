"""Encoding between raw instances and model-space vectors.

Continuous features are z-scored against the schema's population
statistics. Categorical features become one-hot blocks in the schema's
category order. Blocks are laid out in feature order, so the encoded
dimension is ``n_continuous + sum(len(categories))``.

Decoding inverts the z-score exactly (up to float rounding) and decodes
one-hot blocks by argmax, breaking ties toward the lowest category index.
That makes decode total: any real-valued vector of the right length maps
to some valid instance, which is what lets flow samples be decoded
directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError, SchemaError
from .schema import Instance, TableSchema


@dataclass(frozen=True)
class EncodingLayout:
    """Slice map of the encoded space for one schema.

    ``blocks`` aligns with the schema's feature order; each entry is the
    slice of encoded coordinates owned by that feature (width 1 for
    continuous features, one slot per category otherwise).
    """

    feature_names: tuple[str, ...]
    blocks: tuple[slice, ...]
    dim: int

    def block(self, name: str) -> slice:
        try:
            return self.blocks[self.feature_names.index(name)]
        except ValueError:
            raise SchemaError(f"layout has no feature named {name!r}") from None


def layout_for(schema: TableSchema) -> EncodingLayout:
    blocks = []
    start = 0
    for spec in schema.features:
        width = 1 if spec.is_continuous else len(spec.categories)
        blocks.append(slice(start, start + width))
        start += width
    return EncodingLayout(
        feature_names=schema.feature_names, blocks=tuple(blocks), dim=start
    )


def encoded_dim(schema: TableSchema) -> int:
    return layout_for(schema).dim


def categorical_slot_mask(schema: TableSchema) -> np.ndarray:
    """Boolean vector marking encoded slots that belong to one-hot blocks."""
    layout = layout_for(schema)
    mask = np.zeros(layout.dim, dtype=bool)
    for spec, block in zip(schema.features, layout.blocks):
        if not spec.is_continuous:
            mask[block] = True
    return mask


def encode(instance: Instance, schema: TableSchema) -> np.ndarray:
    """Encode one instance to a float64 vector."""
    return encode_batch([instance], schema)[0]


def encode_batch(instances: Sequence[Instance], schema: TableSchema) -> np.ndarray:
    layout = layout_for(schema)
    out = np.zeros((len(instances), layout.dim), dtype=np.float64)
    for i, inst in enumerate(instances):
        if len(inst.values) != len(schema.features):
            raise DataError(
                f"instance {i} has {len(inst.values)} values, schema expects "
                f"{len(schema.features)}"
            )
        for spec, block, value in zip(schema.features, layout.blocks, inst.values):
            if spec.is_continuous:
                stats = schema.stats(spec.name)
                out[i, block.start] = (float(value) - stats.mean) / stats.stddev
            else:
                try:
                    hot = spec.categories.index(value)
                except ValueError:
                    raise DataError(
                        f"instance {i}, feature {spec.name!r}: unknown category "
                        f"{value!r}"
                    ) from None
                out[i, block.start + hot] = 1.0
    return out


def decode(vector: np.ndarray, schema: TableSchema) -> Instance:
    """Decode one encoded vector back to an instance."""
    return decode_batch(np.asarray(vector, dtype=np.float64)[None, :], schema)[0]


def decode_batch(array: np.ndarray, schema: TableSchema) -> list[Instance]:
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2:
        raise DataError(f"expected a 2-d array, got shape {array.shape}")
    layout = layout_for(schema)
    if array.shape[1] != layout.dim:
        raise DataError(
            f"encoded vectors have {array.shape[1]} dims, schema expects {layout.dim}"
        )
    instances = []
    for row in array:
        values = []
        for spec, block in zip(schema.features, layout.blocks):
            if spec.is_continuous:
                stats = schema.stats(spec.name)
                values.append(float(row[block.start]) * stats.stddev + stats.mean)
            else:
                # np.argmax returns the first maximum: lowest-index tie-break.
                values.append(spec.categories[int(np.argmax(row[block]))])
        instances.append(Instance(values=tuple(values)))
    return instances


def expand_feature_mask(
    feature_names: Sequence[str], schema: TableSchema
) -> np.ndarray:
    """Expand feature names to an encoded-space 0/1 mask.

    Every slot of a categorical feature's one-hot block receives the same
    bit, so masks can never split a block.
    """
    layout = layout_for(schema)
    mask = np.zeros(layout.dim, dtype=np.float64)
    for name in feature_names:
        if schema.feature(name, missing_ok=True) is None:
            raise SchemaError(f"mask names unknown feature {name!r}")
        mask[layout.block(name)] = 1.0
    return mask


def feature_level_mask(
    feature_names: Sequence[str], schema: TableSchema
) -> np.ndarray:
    """Binary vector over features (not encoded slots), 1 = masked."""
    known = set(schema.feature_names)
    for name in feature_names:
        if name not in known:
            raise SchemaError(f"mask names unknown feature {name!r}")
    wanted = set(feature_names)
    return np.array(
        [1.0 if n in wanted else 0.0 for n in schema.feature_names], dtype=np.float64
    )


class TabularEncoder(TransformerMixin, BaseEstimator):
    """Transformer wrapping :func:`encode_batch` / :func:`decode_batch`.

    The schema carries all fitted state, so ``fit`` only validates inputs.
    """

    def __init__(self, schema: TableSchema):
        self.schema = schema

    def fit(self, X: Sequence[Instance] | None = None, y=None):
        if X is not None:
            for inst in X:
                self.schema.validate_instance(inst)
        return self

    def transform(self, X: Sequence[Instance]) -> np.ndarray:
        return encode_batch(list(X), self.schema)

    def inverse_transform(self, X: np.ndarray) -> list[Instance]:
        return decode_batch(np.asarray(X), self.schema)

    @property
    def dim(self) -> int:
        return encoded_dim(self.schema)
