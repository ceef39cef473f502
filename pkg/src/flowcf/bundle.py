"""Model bundle persistence.

A bundle is a directory with two files:

* ``manifest.json``: schema, flow and classifier architectures, training
  configuration echo, metric defaults, and a tensor table mapping each
  tensor name to its byte offset and shape inside the blob.
* ``params.bin``: every tensor, concatenated as little-endian float32 in
  tensor-table order.

Weights train in float64 but persist as float32; saving is therefore
lossy once, and a saved bundle reloads bit-identically thereafter. The
``bundle_id`` is a content hash of the blob, so retraining with the same
seed yields the same id.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import KIND_MLP, _TorchClassifierBase, make_classifier
from .errors import BundleError, FlowcfError, MissingInputError
from .flow import ConditionalMaskedFlow
from .schema import TableSchema

FORMAT_NAME = "flowcf-bundle"
FORMAT_VERSION = 1

MANIFEST_FILE = "manifest.json"
PARAMS_FILE = "params.bin"

DEFAULT_METRIC_SETTINGS = {
    "eps": 0.05,
    "k_lof": 20,
    "lambda1": 1.0,
    "lambda2": 0.1,
}


@dataclass
class FlowDensity:
    """Density-estimator adapter over an unconditional flow."""

    flow: ConditionalMaskedFlow

    def log_density(self, X: np.ndarray) -> np.ndarray:
        return self.flow.log_prob(np.atleast_2d(np.asarray(X)), None).log_prob


@dataclass
class ModelBundle:
    """Everything needed to generate and judge counterfactuals.

    ``flow`` may be None for classifier-only bundles (the fit-classifier
    stage persists through the same format); generation then refuses to
    run until a flow is trained in.
    """

    schema: TableSchema
    flow: ConditionalMaskedFlow | None = None
    classifier: _TorchClassifierBase | None = None
    density_flow: ConditionalMaskedFlow | None = None
    train_config: dict = field(default_factory=dict)
    metric_settings: dict = field(default_factory=lambda: dict(DEFAULT_METRIC_SETTINGS))
    bundle_id: str = ""

    @property
    def p_set(self) -> tuple[float, ...]:
        return tuple(self.train_config.get("p_set", ()))

    @property
    def masks(self) -> tuple[tuple[str, ...], ...]:
        return tuple(tuple(m) for m in self.train_config.get("masks", ((),)))

    @property
    def density(self) -> FlowDensity | None:
        return None if self.density_flow is None else FlowDensity(self.density_flow)

    def metric(self, key: str):
        return self.metric_settings.get(key, DEFAULT_METRIC_SETTINGS[key])

    # -- save ---------------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)

        tensors: list[tuple[str, np.ndarray]] = []
        if self.flow is not None:
            for name, value in self.flow.tensors().items():
                tensors.append((f"flow.{name}", value))
        if self.classifier is not None:
            for name, value in self.classifier.tensors().items():
                tensors.append((f"classifier.{name}", value))
        if self.density_flow is not None:
            for name, value in self.density_flow.tensors().items():
                tensors.append((f"density.{name}", value))

        table = []
        chunks = []
        offset = 0
        for name, value in tensors:
            raw = np.ascontiguousarray(value, dtype="<f4").tobytes()
            table.append(
                {"name": name, "shape": list(value.shape), "offset": offset}
            )
            chunks.append(raw)
            offset += len(raw)
        blob = b"".join(chunks)
        bundle_id = hashlib.sha256(blob).hexdigest()[:16]
        self.bundle_id = bundle_id

        classifier_entry = None
        if self.classifier is not None:
            classifier_entry = {
                "kind": self.classifier.kind,
                "dim": self.classifier.dim_,
                "class_count": self.classifier.class_count_,
            }
            if self.classifier.kind == KIND_MLP:
                classifier_entry["hidden"] = list(self.classifier.hidden)

        manifest = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "bundle_id": bundle_id,
            "schema": self.schema.to_dict(),
            "flow": None if self.flow is None else self.flow.architecture(),
            "classifier": classifier_entry,
            "density": None
            if self.density_flow is None
            else self.density_flow.architecture(),
            "train_config": self.train_config,
            "metric_settings": self.metric_settings,
            "tensors": table,
        }
        (directory / MANIFEST_FILE).write_text(
            json.dumps(manifest, indent=2, sort_keys=True)
        )
        (directory / PARAMS_FILE).write_bytes(blob)

    # -- load ---------------------------------------------------------------

    @classmethod
    def load(cls, directory: str | Path) -> "ModelBundle":
        directory = Path(directory)
        manifest_path = directory / MANIFEST_FILE
        params_path = directory / PARAMS_FILE
        if not directory.exists():
            raise MissingInputError(f"bundle directory not found: {directory}")
        if not manifest_path.exists():
            raise BundleError(f"no {MANIFEST_FILE} in {directory}")
        if not params_path.exists():
            raise BundleError(f"no {PARAMS_FILE} in {directory}")
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise BundleError(f"corrupt manifest in {directory}: {exc}") from exc
        if manifest.get("format") != FORMAT_NAME:
            raise BundleError(
                f"not a model bundle: format {manifest.get('format')!r}"
            )
        if manifest.get("version") != FORMAT_VERSION:
            raise BundleError(
                f"unsupported bundle version {manifest.get('version')!r}; "
                f"this build reads version {FORMAT_VERSION}"
            )

        blob = params_path.read_bytes()
        values: dict[str, np.ndarray] = {}
        for entry in manifest["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            end = start + 4 * count
            if end > len(blob):
                raise BundleError(
                    f"tensor {entry['name']!r} overruns the parameter blob"
                )
            values[entry["name"]] = (
                np.frombuffer(blob[start:end], dtype="<f4")
                .astype(np.float64)
                .reshape(shape)
            )

        try:
            schema = TableSchema.from_dict(manifest["schema"])
            flow = None
            if manifest.get("flow") is not None:
                flow = _flow_from_arch(manifest["flow"])
                flow.load_tensors(_strip_prefix(values, "flow."))

            classifier = None
            centry = manifest.get("classifier")
            if centry is not None:
                kwargs = {}
                if "hidden" in centry:
                    kwargs["hidden"] = tuple(centry["hidden"])
                classifier = make_classifier(centry["kind"], **kwargs)
                classifier.init_zero(centry["dim"], centry["class_count"])
                classifier.load_tensors(_strip_prefix(values, "classifier."))

            density_flow = None
            dentry = manifest.get("density")
            if dentry is not None:
                density_flow = _flow_from_arch(dentry)
                density_flow.load_tensors(_strip_prefix(values, "density."))
        except BundleError:
            raise
        except (FlowcfError, KeyError, TypeError, ValueError) as exc:
            raise BundleError(f"corrupt manifest in {directory}: {exc}") from exc

        return cls(
            schema=schema,
            flow=flow,
            classifier=classifier,
            density_flow=density_flow,
            train_config=manifest.get("train_config", {}),
            metric_settings=manifest.get(
                "metric_settings", dict(DEFAULT_METRIC_SETTINGS)
            ),
            bundle_id=manifest.get("bundle_id", ""),
        )


def _strip_prefix(values: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {k[len(prefix) :]: v for k, v in values.items() if k.startswith(prefix)}


def _flow_from_arch(arch: dict) -> ConditionalMaskedFlow:
    flow = ConditionalMaskedFlow(
        dim=arch["dim"],
        context_dim=arch["context_dim"],
        n_layers=arch["n_layers"],
        hidden=arch["hidden"],
        log_scale_bound=arch["log_scale_bound"],
        zero_init=True,
    )
    # Orderings are derived from depth by convention; refuse to load a
    # bundle whose recorded orders disagree (format drift guard).
    if arch.get("orders") != flow.architecture()["orders"]:
        raise BundleError("bundle layer orderings do not match this build")
    return flow
