"""Synthetic survey data with planted feature-disease effects.

The generator is the desk-scale ground truth for importance rankings: every
feature is sampled inside its schema-declared valid range (truncated normal
for continuous fields, uniform over codes otherwise), and each planted
disease label is drawn from a logistic model over the standardized planted
features, so the truly influential features are known by construction.
Generated records are already clean and re-enter the ingest pipeline
unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .errors import IoError, MalformedCodebook, UnknownFeature
from .ingest import CleanRecord, FeatureSchema


@dataclass(frozen=True)
class PlantSpec:
    """Planted effects for one disease label."""

    disease: str
    planted: tuple[tuple[str, float], ...]
    noise_sd: float = 0.0
    base_rate: float = 0.2

    def __post_init__(self) -> None:
        if not self.planted:
            raise ValueError(f"{self.disease}: need at least one planted feature")
        if any(coef == 0.0 for _, coef in self.planted):
            raise ValueError(f"{self.disease}: planted coefficients must be nonzero")
        if self.noise_sd < 0:
            raise ValueError(f"{self.disease}: noise_sd must be nonnegative")
        if not (0.0 < self.base_rate < 1.0):
            raise ValueError(f"{self.disease}: base_rate must lie in (0, 1)")


def _sample_feature(spec, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.valid_range
    if spec.kind == "continuous":
        mu = (lo + hi) / 2.0
        sd = max((hi - lo) / 4.0, 1e-12)
        a, b = (lo - mu) / sd, (hi - mu) / sd
        return truncnorm.ppf(rng.random(n), a, b, loc=mu, scale=sd)
    return rng.integers(int(lo), int(hi) + 1, size=n).astype(np.float64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def generate(
    schema: FeatureSchema,
    n: int,
    plants: list[PlantSpec],
    seed: int,
    default_base_rate: float = 0.2,
) -> list[CleanRecord]:
    """Generate n clean records; labels without a plant use default_base_rate."""
    if n < 100:
        raise ValueError(f"need n >= 100, got {n}")
    by_disease: dict[str, PlantSpec] = {}
    for p in plants:
        if p.disease not in schema.labels:
            raise UnknownFeature(f"plant targets unknown disease {p.disease!r}")
        for fid, _ in p.planted:
            schema.feature_index(fid)  # raises UnknownFeature
        by_disease[p.disease] = p

    rng = np.random.default_rng(seed)
    X = np.column_stack([_sample_feature(f, n, rng) for f in schema.features])

    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    Z = (X - X.mean(axis=0)) / std

    Y = np.empty((n, len(schema.labels)), dtype=np.int64)
    for j, disease in enumerate(schema.labels):
        plant = by_disease.get(disease)
        if plant is None:
            Y[:, j] = rng.random(n) < default_base_rate
            continue
        logits = np.full(n, np.log(plant.base_rate / (1.0 - plant.base_rate)))
        for fid, coef in plant.planted:
            logits += coef * Z[:, schema.feature_index(fid)]
        if plant.noise_sd > 0:
            logits += rng.normal(0.0, plant.noise_sd, size=n)
        Y[:, j] = rng.random(n) < _sigmoid(logits)

    return [CleanRecord(x=X[i], y=Y[i]) for i in range(n)]


def load_plants(path: str | Path, schema: FeatureSchema) -> list[PlantSpec]:
    """Read PlantSpec fixtures from JSON:
    [{"disease": ..., "planted": [[feature, coef], ...], "noise_sd": ..., "base_rate": ...}]
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read plant spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedCodebook(f"plant spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise MalformedCodebook("plant spec must be a JSON array")
    plants = []
    for entry in doc:
        try:
            plants.append(
                PlantSpec(
                    disease=str(entry["disease"]),
                    planted=tuple((str(f), float(c)) for f, c in entry["planted"]),
                    noise_sd=float(entry.get("noise_sd", 0.0)),
                    base_rate=float(entry.get("base_rate", 0.2)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCodebook(f"bad plant spec entry: {exc}") from exc
    for p in plants:
        if p.disease not in schema.labels:
            raise UnknownFeature(f"plant targets unknown disease {p.disease!r}")
        for fid, _ in p.planted:
            schema.feature_index(fid)
    return plants
