"""HTTP JSON API for risk prediction, local explanations, and importance.

Endpoints (base path /api/v1):
    GET  /health                      liveness + loaded diseases
    GET  /schema                      the 38 feature descriptors + 13 labels
    POST /predict                     raw answers -> risk per loaded disease
    POST /explain?disease=ID&budget=N local SHAP attribution for one disease
    GET  /importance/{disease}?k=3    precomputed global ranking (CLI output)

Every request body is cleaned against the codebook before inference; a row
that fails cleaning is a 422 with per-field reasons, malformed JSON is a
400, unknown diseases are 404. Errors are {code, message, details[]}.

Models, schema, and background data are immutable shared state; per-request
work is independent, so concurrent requests are safe.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .errors import MissingCheckpoint
from .explainer import Background, kernel_shap, kmeans
from .ingest import (
    FeatureSchema,
    Rejected,
    apply_normalizer,
    clean_features,
    load_clean_csv,
    load_codebook,
)
from .model import RiskModel, forward_batch
from .trainer import load_checkpoint

DISCLAIMER = (
    "Risk scores are relative susceptibility estimates from survey data, "
    "not calibrated probabilities and not a medical diagnosis."
)

DEFAULT_EXPLAIN_BUDGET = 512


def _error(status: int, code: str, message: str, details: list | None = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "details": details or []},
    )


def predict_risks(
    models: dict[str, RiskModel],
    schema: FeatureSchema,
    raw: dict,
) -> dict[str, float] | Rejected:
    """Shared clean-then-infer path used by the service and offline callers."""
    x = clean_features(raw, schema)
    if isinstance(x, Rejected):
        return x
    risks = {}
    for disease, model in models.items():
        xn = apply_normalizer(x, model.norm)
        risks[disease] = float(forward_batch(model, xn[None, :])[0, 1])
    return risks


class _State:
    """Loaded models plus lazily built per-disease explanation backgrounds."""

    def __init__(
        self,
        schema: FeatureSchema,
        models: dict[str, RiskModel],
        clean_X: np.ndarray | None,
        background_k: int,
        importance_dir: Path,
        seed: int = 0,
    ):
        self.schema = schema
        self.models = models
        self.clean_X = clean_X
        self.background_k = background_k
        self.importance_dir = importance_dir
        self.seed = seed
        self._backgrounds: dict[str, Background] = {}
        self._lock = threading.Lock()

    def background_for(self, disease: str) -> Background | None:
        if self.clean_X is None:
            return None
        with self._lock:
            if disease not in self._backgrounds:
                model = self.models[disease]
                Xn = apply_normalizer(self.clean_X, model.norm)
                k = min(self.background_k, len(Xn))
                self._backgrounds[disease] = kmeans(Xn, k, seed=self.seed)
            return self._backgrounds[disease]


def _load_models(checkpoint_dir: Path, schema: FeatureSchema) -> dict[str, RiskModel]:
    models: dict[str, RiskModel] = {}
    for path in sorted(checkpoint_dir.glob("*.cdrp")):
        model = load_checkpoint(path, schema)
        models[model.disease] = model
    if not models:
        raise MissingCheckpoint(f"no .cdrp checkpoints found in {checkpoint_dir}")
    return models


def create_app(
    codebook_path: str | Path,
    checkpoint_dir: str | Path,
    data_path: str | Path | None = None,
    background_k: int = 100,
    seed: int = 0,
) -> FastAPI:
    schema = load_codebook(codebook_path)
    checkpoint_dir = Path(checkpoint_dir)
    models = _load_models(checkpoint_dir, schema)
    clean_X = None
    if data_path is not None:
        clean_X, _ = load_clean_csv(data_path, schema)
    state = _State(schema, models, clean_X, background_k, checkpoint_dir, seed)

    app = FastAPI(title="cdrisk", version="0.1.0", docs_url=None, redoc_url=None)
    app.state.cdrisk = state

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        return _error(400, "malformed", "request body is not valid JSON of the expected shape")

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "diseases": sorted(models), "schema_version": schema.version}

    @app.get("/api/v1/schema")
    def get_schema():
        features = [
            {
                "id": f.id,
                "kind": f.kind,
                "category": f.category,
                "display": f.display,
                "valid_range": list(f.valid_range),
                "options": {str(k): v for k, v in sorted(f.options.items())} or None,
            }
            for f in schema.features
        ]
        return {"version": schema.version, "features": features, "labels": list(schema.labels)}

    @app.post("/api/v1/predict")
    def predict(raw: dict):
        result = predict_risks(models, schema, raw)
        if isinstance(result, Rejected):
            return _error(
                422, "cleaning_failed", "one or more answers failed cleaning",
                [{"field": result.feature_id, "reason": result.reason}],
            )
        return {
            "risks": result,
            "disclaimer": DISCLAIMER,
            "schema_version": schema.version,
        }

    @app.post("/api/v1/explain")
    def explain(raw: dict, disease: str, budget: int = DEFAULT_EXPLAIN_BUDGET):
        if disease not in models:
            return _error(404, "unknown_disease", f"no model loaded for {disease!r}")
        x = clean_features(raw, schema)
        if isinstance(x, Rejected):
            return _error(
                422, "cleaning_failed", "one or more answers failed cleaning",
                [{"field": x.feature_id, "reason": x.reason}],
            )
        bg = state.background_for(disease)
        if bg is None:
            return _error(
                503, "background_unavailable",
                "service was started without --data; explanations need background points",
            )
        model = models[disease]
        xn = apply_normalizer(x, model.norm)
        attr = kernel_shap(model, xn, bg, budget=max(budget, 2 * len(xn)), seed=state.seed)
        phi = {fid: float(v) for fid, v in zip(schema.feature_ids, attr.phi)}
        top = sorted(phi.items(), key=lambda kv: -abs(kv[1]))
        return {
            "disease": disease,
            "base": attr.base,
            "fx": attr.fx,
            "phi": phi,
            "top": [[fid, abs(v)] for fid, v in top],
            "disclaimer": DISCLAIMER,
            "schema_version": schema.version,
        }

    @app.get("/api/v1/importance/{disease}")
    def importance(disease: str, k: int = 3):
        if disease not in models:
            return _error(404, "unknown_disease", f"no model loaded for {disease!r}")
        path = state.importance_dir / f"{disease}.importance.csv"
        if not path.exists():
            return _error(
                404, "importance_not_computed",
                f"no precomputed ranking at {path.name}; run the importance command first",
            )
        import csv as _csv

        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(_csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["rank"]))
        return {
            "disease": disease,
            "top": [
                {"feature_id": r["feature_id"], "mean_abs_shap": float(r["mean_abs_shap"]),
                 "rank": int(r["rank"])}
                for r in rows[:k]
            ],
            "disclaimer": DISCLAIMER,
        }

    return app
