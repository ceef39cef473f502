"""HTTP facade over one loaded model bundle.

Endpoints:

* ``POST /generate``: one conditioned sampling pass, annotated per entry.
* ``GET /schema``: feature metadata plus the trained constraint sets, so
  a client can render its controls without hardcoding anything.
* ``POST /classify``: classifier probabilities for one instance.
* ``GET /healthz``: liveness plus whether a bundle is loaded.

The bundle is read-only shared state; every request derives its own
random stream from the request seed (or fresh OS entropy), so concurrent
requests cannot interfere and a pinned seed reproduces the exact batch.

Error contract: invalid requests return 400 with ``errors`` entries of
``{field, message}``; endpoints that need a bundle return 503 until one
is loaded; ``/classify`` returns 404 when the bundle has no classifier.
JSON bodies never carry NaN or Inf; entries that would are returned with
``valid: false`` and an ``explanation`` instead.
"""

from __future__ import annotations

import math
import time
from typing import Literal, Sequence

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .bundle import ModelBundle
from .errors import FlowcfError, SchemaError
from .generator import generate_counterfactuals
from .schema import Instance

_BUNDLE_KEY = "flowcf_bundle"


class GenerateRequest(BaseModel):
    instance: dict[str, float | int | str]
    target_class: int | Literal["flip"] | None = None
    n: int = Field(default=10, ge=1, le=1000)
    p: float = Field(default=2.0, gt=0.0)
    mask: list[str] = Field(default_factory=list)
    rank_by_score: bool = False
    seed: int | None = None


class ClassifyRequest(BaseModel):
    instance: dict[str, float | int | str]


def _error_response(status: int, errors: list[dict]) -> JSONResponse:
    return JSONResponse(status_code=status, content={"errors": errors})


def _clean_number(value: float):
    """None for non-finite values; JSON has no NaN/Inf."""
    v = float(value)
    return v if math.isfinite(v) else None


def _feature_payload(instance: Instance, schema) -> tuple[dict, bool]:
    features = {}
    finite = True
    for spec, value in zip(schema.features, instance.values):
        if spec.is_continuous:
            cleaned = _clean_number(value)
            finite &= cleaned is not None
            features[spec.name] = cleaned
        else:
            features[spec.name] = value
    return features, finite


def create_app(
    bundle: ModelBundle | None = None,
    cors_origins: Sequence[str] = (),
    ui_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="flowcf explain service", docs_url=None, redoc_url=None)
    app.state.bundle = bundle

    if cors_origins:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        errors = [
            {
                "field": ".".join(str(part) for part in err["loc"] if part != "body"),
                "message": err["msg"],
            }
            for err in exc.errors()
        ]
        return _error_response(400, errors)

    @app.exception_handler(FlowcfError)
    async def on_domain_error(request: Request, exc: FlowcfError):
        return _error_response(400, [{"field": "", "message": str(exc)}])

    def require_bundle() -> ModelBundle | JSONResponse:
        if app.state.bundle is None:
            return _error_response(
                503, [{"field": "", "message": "bundle not loaded yet"}]
            )
        return app.state.bundle

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "bundle_loaded": app.state.bundle is not None}

    @app.get("/schema")
    async def get_schema():
        bundle = require_bundle()
        if isinstance(bundle, JSONResponse):
            return bundle
        schema = bundle.schema
        features = []
        for spec in schema.features:
            entry: dict = {"name": spec.name, "kind": spec.kind}
            if spec.is_continuous:
                s = schema.stats(spec.name)
                entry.update(
                    min=s.minimum, max=s.maximum, mean=s.mean, stddev=s.stddev
                )
            else:
                entry["categories"] = list(spec.categories)
            features.append(entry)
        return {
            "features": features,
            "class_count": schema.class_count,
            "class_labels": list(schema.class_labels) if schema.class_labels else None,
            "p_set": list(bundle.p_set),
            "masks": [list(m) for m in bundle.masks],
            "eps": bundle.metric("eps"),
            "has_classifier": bundle.classifier is not None,
            "has_density": bundle.density_flow is not None,
            "bundle_id": bundle.bundle_id,
        }

    @app.post("/classify")
    async def classify(request: ClassifyRequest):
        bundle = require_bundle()
        if isinstance(bundle, JSONResponse):
            return bundle
        if bundle.classifier is None:
            return _error_response(
                404, [{"field": "", "message": "bundle shipped without a classifier"}]
            )
        try:
            instance = Instance.from_mapping(bundle.schema, request.instance)
        except SchemaError as exc:
            return _error_response(400, [{"field": "instance", "message": str(exc)}])
        from .encoding import encode

        probs = bundle.classifier.predict_proba(
            encode(instance, bundle.schema)[None, :]
        )[0]
        predicted = int(np.argmax(probs))
        labels = bundle.schema.class_labels
        return {
            "probabilities": [float(v) for v in probs],
            "predicted_class": predicted,
            "predicted_label": labels[predicted] if labels else str(predicted),
        }

    @app.post("/generate")
    async def generate(request: GenerateRequest):
        bundle = require_bundle()
        if isinstance(bundle, JSONResponse):
            return bundle
        t0 = time.perf_counter()
        schema = bundle.schema
        try:
            instance = Instance.from_mapping(schema, request.instance)
        except SchemaError as exc:
            return _error_response(400, [{"field": "instance", "message": str(exc)}])
        batch = generate_counterfactuals(
            bundle,
            instance,
            n=request.n,
            p=request.p,
            mask_features=tuple(request.mask),
            target_class=request.target_class,
            seed=request.seed,
            rank_by_score=request.rank_by_score,
        )

        entries = []
        for i, cf in enumerate(batch.counterfactuals):
            features, finite = _feature_payload(cf, schema)
            valid = None if batch.valid is None else bool(batch.valid[i])
            explanation = batch.explanations[i]
            if not finite:
                valid = False
                explanation = explanation or "non-finite feature values"
            prob = (
                None
                if batch.class_prob is None
                else _clean_number(batch.class_prob[i])
            )
            score = None if batch.score is None else _clean_number(batch.score[i])
            entry = {
                "features": features,
                "valid": valid,
                "class_prob": prob,
                "proximity_num": _clean_number(batch.proximity[i]),
                "changed_features": list(batch.changed[i]),
                "score": score,
            }
            if explanation:
                entry["explanation"] = explanation
            entries.append(entry)

        labels = schema.class_labels
        return {
            "counterfactuals": entries,
            "target_class": batch.target_class,
            "target_label": labels[batch.target_class] if labels else str(batch.target_class),
            "model_info": {
                "bundle_id": bundle.bundle_id,
                "p_set": list(bundle.p_set),
                "masks": [list(m) for m in bundle.masks],
                "class_count": schema.class_count,
            },
            "timing_ms": (time.perf_counter() - t0) * 1000.0,
        }

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def load_app(
    bundle_dir: str,
    cors_origins: Sequence[str] = (),
    ui_dir: str | None = None,
) -> FastAPI:
    """Load a bundle from disk and build the app around it."""
    return create_app(
        ModelBundle.load(bundle_dir), cors_origins=cors_origins, ui_dir=ui_dir
    )
