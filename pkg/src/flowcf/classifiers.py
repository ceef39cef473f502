"""Built-in classifiers used to label data and judge counterfactual validity.

Two architectures are provided: a linear softmax model and a two-hidden-
layer MLP. Both train full batch with Adam on cross-entropy, initialise
their weights from a numpy Generator, and run in float64, so a fixed seed
reproduces parameters bit for bit on a fixed thread count.

The classifier defines the ground truth everywhere else: datasets are
relabeled with its argmax before flow training, and a counterfactual is
valid exactly when the classifier's argmax equals the requested class.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .encoding import encode_batch, encoded_dim
from .errors import ConfigError, DataError
from .schema import Instance, TableSchema

KIND_LINEAR = "logistic-linear"
KIND_MLP = "mlp-2-layer"
CLASSIFIER_KINDS = (KIND_LINEAR, KIND_MLP)

#: Relative loss improvement below this over a patience window counts as
#: converged.
_PLATEAU_RTOL = 1e-5
_PLATEAU_PATIENCE = 50


class ConvergenceWarning(UserWarning):
    """Training hit its epoch budget without the loss plateauing."""


def _to_tensor(X: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(X, dtype=np.float64))


class _TorchClassifierBase(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing; subclasses build the module."""

    def __init__(self, epochs=500, learning_rate=1e-2, seed=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed

    # subclasses override
    kind: str = ""

    def _build(self, dim: int, class_count: int, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _logits(self, X: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def _check_fitted(self) -> None:
        if not hasattr(self, "dim_"):
            raise NotFittedError(
                f"{type(self).__name__} is not fitted; call fit or init_zero first"
            )

    def fit(self, X: np.ndarray, y: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2:
            raise DataError(f"X must be 2-d, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        classes = np.unique(y)
        if classes.size < 2:
            raise DataError("fit needs at least two classes in y")
        class_count = int(classes.max()) + 1
        rng = np.random.default_rng(self.seed)
        self._build(X.shape[1], class_count, rng)
        self.dim_ = X.shape[1]
        self.class_count_ = class_count

        xt = _to_tensor(X)
        yt = torch.as_tensor(y.astype(np.int64))
        params = list(self._parameters_())
        opt = torch.optim.Adam(params, lr=self.learning_rate)
        loss_fn = torch.nn.CrossEntropyLoss()
        history: list[float] = []
        converged = False
        for _ in range(self.epochs):
            opt.zero_grad()
            loss = loss_fn(self._logits(xt), yt)
            loss.backward()
            opt.step()
            history.append(float(loss.detach()))
            if len(history) > _PLATEAU_PATIENCE:
                prev = history[-_PLATEAU_PATIENCE - 1]
                if abs(prev - history[-1]) <= _PLATEAU_RTOL * max(abs(prev), 1.0):
                    converged = True
                    break
        if not converged and self.epochs > 0:
            warnings.warn(
                f"{self.kind} classifier did not plateau within {self.epochs} "
                f"epochs (final loss {history[-1]:.6f}); results are usable but "
                f"consider more epochs",
                ConvergenceWarning,
                stacklevel=2,
            )
        self.converged_ = converged or self.epochs == 0
        self.loss_history_ = history
        with torch.no_grad():
            pred = self._logits(xt).argmax(dim=1).numpy()
        self.training_accuracy_ = float((pred == y).mean())
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim_:
            raise DataError(
                f"X has shape {X.shape}, expected (n, {self.dim_})"
            )
        with torch.no_grad():
            return torch.softmax(self._logits(_to_tensor(X)), dim=1).numpy()

    def predict_proba_tensor(self, X: torch.Tensor) -> torch.Tensor:
        """Differentiable path used by score gradients; same math as
        :meth:`predict_proba`."""
        self._check_fitted()
        return torch.softmax(self._logits(X), dim=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    # -- persistence helpers ----------------------------------------------

    def _parameters_(self) -> list[torch.Tensor]:
        raise NotImplementedError

    def tensors(self) -> dict[str, np.ndarray]:
        self._check_fitted()
        return {
            name: t.detach().numpy().copy()
            for name, t in zip(self._tensor_names(), self._parameters_())
        }

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self._check_fitted()
        with torch.no_grad():
            for name, t in zip(self._tensor_names(), self._parameters_()):
                value = np.asarray(tensors[name], dtype=np.float64)
                if tuple(value.shape) != tuple(t.shape):
                    raise DataError(
                        f"classifier tensor {name!r} has shape {value.shape}, "
                        f"expected {tuple(t.shape)}"
                    )
                t.copy_(torch.as_tensor(value))

    def _tensor_names(self) -> list[str]:
        raise NotImplementedError


class LinearClassifier(_TorchClassifierBase):
    """Multinomial logistic regression: softmax(W x + b).

    With all-zero weights every class gets probability 1/C, and for two
    classes the decision boundary is sign((W1 - W0) . x + (b1 - b0)).
    """

    kind = KIND_LINEAR

    def _build(self, dim, class_count, rng):
        scale = 1.0 / np.sqrt(dim)
        self.weight_ = torch.tensor(
            rng.uniform(-scale, scale, size=(class_count, dim)), requires_grad=True
        )
        self.bias_ = torch.zeros(class_count, dtype=torch.float64, requires_grad=True)

    def init_zero(self, dim: int, class_count: int):
        """Build an all-zero model without fitting (uniform predictions)."""
        self.weight_ = torch.zeros((class_count, dim), dtype=torch.float64, requires_grad=True)
        self.bias_ = torch.zeros(class_count, dtype=torch.float64, requires_grad=True)
        self.dim_ = dim
        self.class_count_ = class_count
        return self

    def _logits(self, X):
        return X @ self.weight_.T + self.bias_

    def _parameters_(self):
        return [self.weight_, self.bias_]

    def _tensor_names(self):
        return ["weight", "bias"]


class MlpClassifier(_TorchClassifierBase):
    """Two-hidden-layer ReLU network with a softmax head."""

    kind = KIND_MLP

    def __init__(self, hidden=(64, 64), epochs=500, learning_rate=1e-2, seed=0):
        super().__init__(epochs=epochs, learning_rate=learning_rate, seed=seed)
        self.hidden = hidden

    def _build(self, dim, class_count, rng):
        h1, h2 = self.hidden
        sizes = [(h1, dim), (h2, h1), (class_count, h2)]
        self.weights_ = []
        self.biases_ = []
        for out_dim, in_dim in sizes:
            scale = 1.0 / np.sqrt(in_dim)
            w = torch.tensor(
                rng.uniform(-scale, scale, size=(out_dim, in_dim)), requires_grad=True
            )
            b = torch.zeros(out_dim, dtype=torch.float64, requires_grad=True)
            self.weights_.append(w)
            self.biases_.append(b)

    def init_zero(self, dim: int, class_count: int):
        self._build(dim, class_count, np.random.default_rng(0))
        with torch.no_grad():
            for w in self.weights_:
                w.zero_()
        self.dim_ = dim
        self.class_count_ = class_count
        return self

    def _logits(self, X):
        h = X
        for w, b in zip(self.weights_[:-1], self.biases_[:-1]):
            h = torch.relu(h @ w.T + b)
        return h @ self.weights_[-1].T + self.biases_[-1]

    def _parameters_(self):
        out = []
        for w, b in zip(self.weights_, self.biases_):
            out.extend([w, b])
        return out

    def _tensor_names(self):
        names = []
        for i in range(len(self.weights_)):
            names.extend([f"weight_{i}", f"bias_{i}"])
        return names


def make_classifier(kind: str, **hyperparams) -> _TorchClassifierBase:
    if kind == KIND_LINEAR:
        hyperparams.pop("hidden", None)
        return LinearClassifier(**hyperparams)
    if kind == KIND_MLP:
        return MlpClassifier(**hyperparams)
    raise ConfigError(f"unknown classifier kind {kind!r}; expected one of {CLASSIFIER_KINDS}")


def fit_classifier(
    schema: TableSchema,
    instances: Sequence[Instance],
    labels: Sequence[int],
    kind: str = KIND_MLP,
    **hyperparams,
) -> _TorchClassifierBase:
    """Encode instances under the schema and fit a classifier of ``kind``."""
    clf = make_classifier(kind, **hyperparams)
    X = encode_batch(list(instances), schema)
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= schema.class_count):
        raise DataError(
            f"labels outside [0, {schema.class_count}): "
            f"min {y.min()}, max {y.max()}"
        )
    return clf.fit(X, y)


@dataclass
class LabeledDataset:
    """Instances plus integer class labels, with a cached encoding.

    Labels are whatever the caller says they are; the training entry point
    relabels with the classifier when one is in play so that downstream
    neighbour search agrees with the validity oracle.
    """

    schema: TableSchema
    instances: list[Instance]
    labels: np.ndarray
    _encoded: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.instances) != self.labels.shape[0]:
            raise DataError(
                f"{len(self.instances)} instances but {self.labels.shape[0]} labels"
            )
        if self.labels.size == 0:
            raise DataError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.schema.class_count:
            raise DataError(
                f"labels outside [0, {self.schema.class_count})"
            )

    @property
    def encoded(self) -> np.ndarray:
        if self._encoded is None:
            self._encoded = encode_batch(self.instances, self.schema)
        return self._encoded

    @property
    def dim(self) -> int:
        return encoded_dim(self.schema)

    def __len__(self) -> int:
        return len(self.instances)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.schema.class_count)

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(
            schema=self.schema,
            instances=[self.instances[i] for i in indices],
            labels=self.labels[indices],
            _encoded=None if self._encoded is None else self.encoded[indices],
        )


def label_dataset(
    clf: _TorchClassifierBase,
    instances: Sequence[Instance],
    schema: TableSchema,
    min_class_count: int | None = None,
) -> LabeledDataset:
    """Label instances with the classifier's argmax.

    When ``min_class_count`` is given, every class must appear at least
    that many times; neighbour search needs a healthy pool per class.
    """
    X = encode_batch(list(instances), schema)
    labels = clf.predict(X)
    data = LabeledDataset(
        schema=schema, instances=list(instances), labels=labels, _encoded=X
    )
    if min_class_count is not None:
        counts = data.class_counts()
        thin = np.flatnonzero(counts < min_class_count)
        if thin.size:
            raise DataError(
                f"classes {thin.tolist()} have fewer than {min_class_count} "
                f"rows after labelling (counts {counts.tolist()}); the flow "
                f"cannot learn targets for them"
            )
    return data
