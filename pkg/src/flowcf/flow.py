"""Conditional masked autoregressive flow over encoded tabular vectors.

The model is a stack of masked affine autoregressive layers. Layer
``l`` reads its input ``x`` and a conditioning vector ``c`` and produces
per-coordinate shift and log-scale through a two-hidden-layer masked
network whose connectivity masks enforce a triangular dependence: the
shift and scale for coordinate ``i`` may depend only on coordinates that
come before ``i`` in the layer's ordering, plus the conditioner, which
feeds every hidden layer unmasked. Consecutive layers reverse the
ordering so no coordinate is always last.

Density direction (transform):  z_i = (x_i - mu_i) * exp(-a_i)
Sampling direction (inverse):   x_i = z_i * exp(a_i) + mu_i, filled one
coordinate at a time in the layer's ordering because mu_i and a_i depend
on the already-reconstructed prefix.

The Jacobian of the transform is triangular, so each layer contributes
``-sum_i a_i`` to the log-determinant, and

    log p(x | c) = log N(z; 0, I) + sum_l logdet_l.

Log-scales are bounded to (-B, B) with ``a = B * tanh(raw / B)``; the
smooth bound keeps the density differentiable everywhere while capping
scale factors at e^B. All math runs in float64.

The conditioning vector concatenates the encoded query, a one-hot of the
requested class, log of the distance exponent p (p spans two orders of
magnitude, so its log is the natural embedding), and a feature-level
actionability mask. Generation cost is one vectorized inverse pass per
batch of samples: coordinates are sequential but samples are not.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .errors import DataError, NumericsError

LOG_SCALE_BOUND = 7.0
DEFAULT_LAYERS = 5
DEFAULT_HIDDEN = 128

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ConditioningContext:
    """Everything the flow is conditioned on for one query.

    Attributes:
        x_enc: encoded query vector (the instance being explained).
        y_target: requested class index.
        p_value: distance exponent the neighbourhood was built with.
        feature_mask: 0/1 vector over original features, 1 = immutable.
    """

    x_enc: np.ndarray
    y_target: int
    p_value: float
    feature_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_enc", np.asarray(self.x_enc, dtype=np.float64))
        object.__setattr__(
            self, "feature_mask", np.asarray(self.feature_mask, dtype=np.float64)
        )
        if not self.p_value > 0:
            raise DataError(f"p must be > 0, got {self.p_value!r}")
        if self.y_target < 0:
            raise DataError(f"target class must be >= 0, got {self.y_target}")

    def conditioner_row(self, n_classes: int) -> np.ndarray:
        if self.y_target >= n_classes:
            raise DataError(
                f"target class {self.y_target} out of range for {n_classes} classes"
            )
        onehot = np.zeros(n_classes, dtype=np.float64)
        onehot[self.y_target] = 1.0
        return np.concatenate(
            [self.x_enc, onehot, [math.log(self.p_value)], self.feature_mask]
        )


def context_dim(encoded_dim: int, n_classes: int, n_features: int) -> int:
    return encoded_dim + n_classes + 1 + n_features


def build_context_matrix(
    contexts: Sequence[ConditioningContext], n_classes: int
) -> np.ndarray:
    return np.stack([c.conditioner_row(n_classes) for c in contexts])


@dataclass
class LogProbResult:
    """Joint result of a density evaluation."""

    log_prob: np.ndarray
    z: np.ndarray
    log_det: np.ndarray


def _hidden_degrees(dim: int, hidden: int) -> np.ndarray:
    if dim == 1:
        # Single coordinate: hidden units carry only conditioner signal.
        return np.zeros(hidden, dtype=np.int64)
    return (np.arange(hidden) % (dim - 1)) + 1


class _MaskedAffineLayer(nn.Module):
    """One masked autoregressive layer producing (shift, log_scale).

    ``degrees[i]`` is coordinate i's 1-based position in this layer's
    ordering; masks derived from the degrees enforce that output i sees
    only strictly-earlier coordinates.
    """

    def __init__(self, dim, context_dim, hidden, degrees, log_scale_bound):
        super().__init__()
        self.dim = dim
        self.context_dim = context_dim
        self.hidden = hidden
        self.log_scale_bound = float(log_scale_bound)
        # fresh buffer: reversed orderings arrive with negative strides,
        # which torch.as_tensor refuses
        degrees = np.array(degrees, dtype=np.int64, copy=True, order="C")
        if sorted(degrees.tolist()) != list(range(1, dim + 1)):
            raise DataError(f"degrees must be a permutation of 1..{dim}")
        self.register_buffer(
            "degrees", torch.as_tensor(degrees), persistent=False
        )
        # fill_order[t] = coordinate whose degree is t+1
        self.register_buffer(
            "fill_order", torch.as_tensor(np.argsort(degrees)), persistent=False
        )

        h_deg = _hidden_degrees(dim, hidden)
        m1 = (h_deg[:, None] >= degrees[None, :]).astype(np.float64)
        m2 = (h_deg[:, None] >= h_deg[None, :]).astype(np.float64)
        m_out = (degrees[:, None] > h_deg[None, :]).astype(np.float64)
        m3 = np.concatenate([m_out, m_out], axis=0)  # rows: shifts then log-scales
        self.register_buffer("mask1", torch.as_tensor(m1), persistent=False)
        self.register_buffer("mask2", torch.as_tensor(m2), persistent=False)
        self.register_buffer("mask3", torch.as_tensor(m3), persistent=False)

        def param(shape):
            return nn.Parameter(torch.zeros(*shape, dtype=torch.float64))

        self.w1 = param((hidden, dim))
        self.b1 = param((hidden,))
        self.w2 = param((hidden, hidden))
        self.b2 = param((hidden,))
        self.w3 = param((2 * dim, hidden))
        self.b3 = param((2 * dim,))
        if context_dim > 0:
            self.u1 = param((hidden, context_dim))
            self.u2 = param((hidden, context_dim))
            self.u3 = param((2 * dim, context_dim))
        else:
            self.u1 = self.u2 = self.u3 = None

    def init_params(self, rng: np.random.Generator) -> None:
        """Random hidden layers, zero output layer: the flow starts as the
        identity map but every parameter receives gradient immediately."""

        def uniform_(t: torch.Tensor, fan_in: int):
            scale = 1.0 / math.sqrt(max(fan_in, 1))
            with torch.no_grad():
                t.copy_(
                    torch.as_tensor(rng.uniform(-scale, scale, size=tuple(t.shape)))
                )

        uniform_(self.w1, self.dim)
        if self.u1 is not None:
            uniform_(self.u1, self.context_dim)
        uniform_(self.w2, self.hidden)
        if self.u2 is not None:
            uniform_(self.u2, self.context_dim)
        # w3/u3/b3 stay zero.

    def net(self, x: torch.Tensor, context: torch.Tensor | None):
        h = torch.nn.functional.linear(x, self.w1 * self.mask1, self.b1)
        if self.u1 is not None:
            h = h + torch.nn.functional.linear(context, self.u1)
        h = torch.tanh(h)
        h = torch.nn.functional.linear(h, self.w2 * self.mask2, self.b2)
        if self.u2 is not None:
            h = h + torch.nn.functional.linear(context, self.u2)
        h = torch.tanh(h)
        out = torch.nn.functional.linear(h, self.w3 * self.mask3, self.b3)
        if self.u3 is not None:
            out = out + torch.nn.functional.linear(context, self.u3)
        shift, raw = out[:, : self.dim], out[:, self.dim :]
        b = self.log_scale_bound
        log_scale = b * torch.tanh(raw / b)
        return shift, log_scale


class ConditionalMaskedFlow(nn.Module):
    """Stack of masked affine autoregressive layers with shared conditioning.

    Args:
        dim: encoded data dimension.
        context_dim: conditioner width (0 for an unconditional density model).
        n_layers: number of masked layers; orderings alternate between the
            natural coordinate order and its reverse.
        hidden: width of both hidden layers in every masked network.
        log_scale_bound: bound B on per-coordinate log-scales.
        rng: numpy Generator used for weight init (ignored with zero_init).
        zero_init: start with every parameter exactly zero; the flow is
            then the identity with a standard-normal base density.
    """

    def __init__(
        self,
        dim: int,
        context_dim: int,
        n_layers: int = DEFAULT_LAYERS,
        hidden: int = DEFAULT_HIDDEN,
        log_scale_bound: float = LOG_SCALE_BOUND,
        rng: np.random.Generator | None = None,
        zero_init: bool = False,
    ):
        super().__init__()
        if dim < 1:
            raise DataError(f"dim must be >= 1, got {dim}")
        if n_layers < 1:
            raise DataError(f"n_layers must be >= 1, got {n_layers}")
        self.dim = dim
        self.context_dim = context_dim
        self.n_layers = n_layers
        self.hidden = hidden
        self.log_scale_bound = float(log_scale_bound)

        natural = np.arange(1, dim + 1)
        layers = []
        for i in range(n_layers):
            degrees = natural if i % 2 == 0 else natural[::-1]
            layers.append(
                _MaskedAffineLayer(dim, context_dim, hidden, degrees, log_scale_bound)
            )
        self.layers = nn.ModuleList(layers)

        if not zero_init:
            rng = np.random.default_rng(0) if rng is None else rng
            for layer in self.layers:
                layer.init_params(rng)

    # -- tensor plumbing ---------------------------------------------------

    def _check_inputs(self, x: torch.Tensor, context: torch.Tensor | None):
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DataError(f"x has shape {tuple(x.shape)}, expected (n, {self.dim})")
        if self.context_dim == 0:
            return None
        if context is None:
            raise DataError("this flow is conditional; a context is required")
        if context.ndim != 2 or context.shape != (x.shape[0], self.context_dim):
            raise DataError(
                f"context has shape {tuple(context.shape)}, expected "
                f"({x.shape[0]}, {self.context_dim})"
            )
        return context

    def transform(self, x: torch.Tensor, context: torch.Tensor | None = None):
        """Map data to latent space; returns (z, log_det) as torch tensors.

        Differentiable; this is the training path.
        """
        context = self._check_inputs(x, context)
        if not torch.isfinite(x).all():
            raise NumericsError("non-finite values in flow input")
        z = x
        log_det = torch.zeros(x.shape[0], dtype=x.dtype)
        for i, layer in enumerate(self.layers):
            shift, log_scale = layer.net(z, context)
            z = (z - shift) * torch.exp(-log_scale)
            if not torch.isfinite(z).all():
                raise NumericsError(f"non-finite values after flow layer {i}")
            log_det = log_det - log_scale.sum(dim=1)
        return z, log_det

    def inverse_tensor(self, z: torch.Tensor, context: torch.Tensor | None = None):
        """Map latent vectors to data space (sequential per coordinate)."""
        context = self._check_inputs(z, context)
        if not torch.isfinite(z).all():
            raise NumericsError("non-finite values in flow latent input")
        x = z
        with torch.no_grad():
            for i in reversed(range(self.n_layers)):
                layer = self.layers[i]
                out = torch.zeros_like(x)
                for idx in layer.fill_order:
                    shift, log_scale = layer.net(out, context)
                    out[:, idx] = x[:, idx] * torch.exp(log_scale[:, idx]) + shift[:, idx]
                x = out
                if not torch.isfinite(x).all():
                    raise NumericsError(f"non-finite values inverting flow layer {i}")
        return x

    # -- numpy-facing API ----------------------------------------------------

    def log_prob(self, x: np.ndarray, context: np.ndarray | None = None) -> LogProbResult:
        """Exact log-density of encoded vectors under the flow."""
        xt = torch.as_tensor(np.asarray(x, dtype=np.float64))
        ct = None
        if context is not None:
            ct = torch.as_tensor(np.asarray(context, dtype=np.float64))
        with torch.no_grad():
            z, log_det = self.transform(xt, ct)
            base = (-0.5 * z.pow(2) - _HALF_LOG_2PI).sum(dim=1)
            lp = base + log_det
        return LogProbResult(
            log_prob=lp.numpy(), z=z.numpy(), log_det=log_det.numpy()
        )

    def inverse(self, z: np.ndarray, context: np.ndarray | None = None) -> np.ndarray:
        zt = torch.as_tensor(np.asarray(z, dtype=np.float64))
        ct = None
        if context is not None:
            ct = torch.as_tensor(np.asarray(context, dtype=np.float64))
        return self.inverse_tensor(zt, ct).numpy()

    def sample(
        self,
        context: ConditioningContext,
        n: int,
        rng: np.random.Generator,
        n_classes: int | None = None,
    ) -> np.ndarray:
        """Draw n vectors for one conditioning context.

        ``n_classes`` is inferred from the context width when omitted.
        """
        if n < 1:
            raise DataError(f"sample count must be >= 1, got {n}")
        if n_classes is None:
            n_classes = self.context_dim - len(context.x_enc) - 1 - len(context.feature_mask)
        row = context.conditioner_row(n_classes)
        if row.shape[0] != self.context_dim:
            raise DataError(
                f"context row has {row.shape[0]} dims, flow expects {self.context_dim}"
            )
        z = rng.standard_normal((n, self.dim))
        ctx = np.tile(row, (n, 1))
        return self.inverse(z, ctx)

    def sample_unconditional(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.context_dim != 0:
            raise DataError("sample_unconditional requires a context-free flow")
        z = rng.standard_normal((n, self.dim))
        return self.inverse(z, None)

    # -- persistence ---------------------------------------------------------

    def architecture(self) -> dict:
        return {
            "dim": self.dim,
            "context_dim": self.context_dim,
            "n_layers": self.n_layers,
            "hidden": self.hidden,
            "log_scale_bound": self.log_scale_bound,
            "orders": [layer.degrees.numpy().tolist() for layer in self.layers],
        }

    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict(
            (name, p.detach().numpy().copy()) for name, p in self.named_parameters()
        )

    def load_tensors(self, tensors: dict) -> None:
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name not in tensors:
                    raise DataError(f"missing flow tensor {name!r}")
                value = np.asarray(tensors[name], dtype=np.float64)
                if tuple(value.shape) != tuple(p.shape):
                    raise DataError(
                        f"flow tensor {name!r} has shape {value.shape}, "
                        f"expected {tuple(p.shape)}"
                    )
                p.copy_(torch.as_tensor(value))


def nll(model: ConditionalMaskedFlow, x: np.ndarray, context: np.ndarray | None) -> float:
    """Mean negative log-likelihood of a batch (no gradients)."""
    return float(-model.log_prob(x, context).log_prob.mean())


def grad_nll(
    model: ConditionalMaskedFlow, x: np.ndarray, context: np.ndarray | None
) -> tuple[float, "OrderedDict[str, np.ndarray]"]:
    """Mean-NLL loss and its gradient for every model parameter.

    Returns gradients keyed by parameter name, in parameter order, for
    hand-off to an optimizer or a finite-difference check.
    """
    xt = torch.as_tensor(np.asarray(x, dtype=np.float64))
    ct = None
    if context is not None:
        ct = torch.as_tensor(np.asarray(context, dtype=np.float64))
    z, log_det = model.transform(xt, ct)
    base = (-0.5 * z.pow(2) - _HALF_LOG_2PI).sum(dim=1)
    loss = -(base + log_det).mean()
    names = [n for n, _ in model.named_parameters()]
    params = [p for _, p in model.named_parameters()]
    grads = torch.autograd.grad(loss, params, allow_unused=False)
    return float(loss.detach()), OrderedDict(
        (n, g.detach().numpy().copy()) for n, g in zip(names, grads)
    )
