"""Experiment configuration files for the train command.

A config file is JSON or TOML with the keys below; unknown keys are
rejected so typos fail loudly. Values given in the file override
command-line flags.

Top-level keys::

    data            path to the training CSV (required)
    label_column    name of the label column (default "label")
    out             bundle output directory (required)
    steps           gradient steps (default 4000)
    batch_instances minibatch size (default 128)
    k_neighbors     neighbourhood size K (default 16)
    p_set           list of positive exponents (default [0.01,0.25,0.5,1,2])
    masks           list of feature-name lists; [] entries allowed; the
                    empty mask is added automatically when missing
    class_prior     list of positive class weights (default uniform)
    seed            master seed (default 0)
    learning_rate   Adam step size (default 1e-3)
    grad_clip       gradient-norm clip (default 5.0)
    alpha           mask distance penalty (default 1e4)
    flow_layers     stacked flow layers (default 5)
    flow_hidden     hidden width per masked net (default 128)
    dequant         one-hot dequantization noise scale (default 0.05)
    holdout_fraction  validation split (default 0.1)

    classifier.kind          "logistic-linear", "mlp-2-layer", or "none"
    classifier.hidden        MLP hidden widths (default [64, 64])
    classifier.epochs        training epochs (default 500)
    classifier.learning_rate Adam step size (default 1e-2)
    classifier.bundle        path to an existing bundle to reuse its
                             classifier instead of fitting one

    density.train   fit a marginal density model for scoring (default true)
    density.steps   its gradient steps (default 1000)
    density.hidden  its hidden width (default 64)
    density.layers  its layer count (default 5)

    metrics.eps      epsilon as a fraction of feature range (default 0.05)
    metrics.k_lof    LOF neighbourhood size (default 20)
    metrics.lambda1  score distance weight (default 1.0)
    metrics.lambda2  score density weight (default 0.1)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MissingInputError
from .training import DEFAULT_K, DEFAULT_P_SET

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    try:
        import tomli as tomllib
    except ModuleNotFoundError:
        tomllib = None

_TOP_KEYS = {
    "data",
    "label_column",
    "out",
    "steps",
    "batch_instances",
    "k_neighbors",
    "p_set",
    "masks",
    "class_prior",
    "seed",
    "learning_rate",
    "grad_clip",
    "alpha",
    "flow_layers",
    "flow_hidden",
    "dequant",
    "holdout_fraction",
    "classifier",
    "density",
    "metrics",
}
_CLASSIFIER_KEYS = {"kind", "hidden", "epochs", "learning_rate", "bundle"}
_DENSITY_KEYS = {"train", "steps", "hidden", "layers"}
_METRIC_KEYS = {"eps", "k_lof", "lambda1", "lambda2"}


@dataclass
class ExperimentConfig:
    """Materialised train-command settings (file over flags over defaults)."""

    data: str | None = None
    label_column: str = "label"
    out: str | None = None
    steps: int = 4000
    batch_instances: int = 128
    k_neighbors: int = DEFAULT_K
    p_set: tuple = DEFAULT_P_SET
    masks: tuple = ((),)
    class_prior: tuple | None = None
    seed: int = 0
    learning_rate: float = 1e-3
    grad_clip: float = 5.0
    alpha: float = 1e4
    flow_layers: int = 5
    flow_hidden: int = 128
    dequant: float = 0.05
    holdout_fraction: float = 0.1
    classifier: dict = field(
        default_factory=lambda: {
            "kind": "mlp-2-layer",
            "hidden": (64, 64),
            "epochs": 500,
            "learning_rate": 1e-2,
            "bundle": None,
        }
    )
    density: dict = field(
        default_factory=lambda: {"train": True, "steps": 1000, "hidden": 64, "layers": 5}
    )
    metrics: dict = field(
        default_factory=lambda: {"eps": 0.05, "k_lof": 20, "lambda1": 1.0, "lambda2": 0.1}
    )

    def apply(self, payload: dict) -> None:
        """Overlay a parsed config payload onto the current values."""
        unknown = set(payload) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for section, allowed in (
            ("classifier", _CLASSIFIER_KEYS),
            ("density", _DENSITY_KEYS),
            ("metrics", _METRIC_KEYS),
        ):
            if section in payload:
                sub = payload[section]
                if not isinstance(sub, dict):
                    raise ConfigError(f"config key {section!r} must be a table/object")
                bad = set(sub) - allowed
                if bad:
                    raise ConfigError(f"unknown {section} config keys: {sorted(bad)}")
                getattr(self, section).update(sub)
        for key in payload.keys() - {"classifier", "density", "metrics"}:
            value = payload[key]
            if key == "p_set":
                value = tuple(float(v) for v in value)
            elif key == "masks":
                value = _normalize_masks(value)
            elif key == "class_prior" and value is not None:
                value = tuple(float(v) for v in value)
            setattr(self, key, value)

    def validate(self) -> None:
        if not self.data:
            raise ConfigError("config is missing the dataset path (key: data)")
        if not self.out:
            raise ConfigError("config is missing the bundle output path (key: out)")
        kind = self.classifier.get("kind", "mlp-2-layer")
        if kind not in ("logistic-linear", "mlp-2-layer", "none"):
            raise ConfigError(f"unknown classifier kind {kind!r}")


def _normalize_masks(value) -> tuple:
    masks = [tuple(str(name) for name in m) for m in value]
    if () not in masks:
        masks.insert(0, ())
    # Dedupe, preserving order.
    seen, out = set(), []
    for m in masks:
        if m not in seen:
            seen.add(m)
            out.append(m)
    return tuple(out)


def load_config_file(path: str | Path) -> dict:
    """Parse a JSON or TOML config file into a plain dict."""
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"config file not found: {p}")
    text = p.read_text()
    if p.suffix.lower() == ".toml":
        if tomllib is None:
            raise ConfigError(
                "TOML configs need the tomli package on this interpreter; "
                "use JSON instead"
            )
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {p}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
