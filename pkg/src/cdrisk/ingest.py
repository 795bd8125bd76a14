"""Survey ingestion: codebook schema, record cleaning, normalization, splits.

The codebook is a JSON document that describes every model input: which raw
survey codes are sentinels (answer "none", refusals, don't-know), which empty
fields are implied by a gating answer (skip patterns), how multi-unit answers
are harmonized onto one scale, and the numeric range a cleaned value must
land in. Cleaning is strict and never imputes: a row either becomes a fully
numeric record or is rejected with a per-field reason.

Cleaning order per feature: skip-pattern fill, sentinel remap, unit
harmonization, range check. Cleaned values re-enter the pipeline unchanged
(idempotence), which the codebook guarantees by keeping sentinel codes and
unit-rule code ranges disjoint from every valid range.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    EmptySplit,
    HeaderMismatch,
    IoError,
    MalformedCodebook,
    NotCategorical,
    SchemaArity,
    TooFewRecords,
    UnknownFeature,
)

N_FEATURES = 38
N_LABELS = 13

KINDS = ("continuous", "ordinal-code", "categorical-code", "binary")

REASON_MISSING = "missing"
REASON_REFUSED = "refused_code"
REASON_RANGE = "out_of_range"


class _Missing:
    """Sentinel for "this raw code means the answer is unusable"."""

    def __repr__(self) -> str:
        return "MISSING"


MISSING = _Missing()

# Raw label recode: 1 = has the disease; 2/3/4 = does not (covers plain
# yes/no questions and the four-code diabetes question); 0/1 pass through so
# already-clean files re-ingest unchanged; 7/9 are refusals.
_LABEL_MAP = {0.0: 0, 1.0: 1, 2.0: 0, 3.0: 0, 4.0: 0}
_LABEL_REFUSED = (7.0, 9.0)


@dataclass(frozen=True)
class UnitRule:
    """Maps raw codes in [lo, hi] to (code - offset) * multiplier."""

    lo: float
    hi: float
    multiplier: float
    offset: float = 0.0


@dataclass(frozen=True)
class FeatureSpec:
    id: str
    kind: str
    valid_range: tuple[float, float]
    display: str = ""
    category: str = ""
    special_map: dict[float, object] = field(default_factory=dict)
    implied_value: float | None = None
    unit_rules: tuple[UnitRule, ...] = ()
    options: dict[int, str] = field(default_factory=dict)


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]
    labels: tuple[str, ...]
    version: int = 1

    @property
    def feature_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.features)

    def feature_index(self, feature_id: str) -> int:
        for i, f in enumerate(self.features):
            if f.id == feature_id:
                return i
        raise UnknownFeature(f"unknown feature id: {feature_id!r}")

    def label_index(self, label_id: str) -> int:
        try:
            return self.labels.index(label_id)
        except ValueError:
            raise UnknownFeature(f"unknown label id: {label_id!r}") from None


@dataclass
class CleanRecord:
    """One validated row: 38 finite features, 13 binary labels."""

    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Rejected:
    """Cleaning outcome for an unusable row — a filter result, not an error."""

    feature_id: str
    reason: str


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean/std fitted on the training split only."""

    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int


@dataclass
class CleanReport:
    total_in: int = 0
    accepted: int = 0
    rejected: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_in": self.total_in,
            "accepted": self.accepted,
            "rejected": dict(self.rejected),
        }


# ---------------------------------------------------------------------------
# codebook loading


def _parse_special_map(raw: Mapping, fid: str) -> dict[float, object]:
    out: dict[float, object] = {}
    for code, repl in raw.items():
        try:
            key = float(code)
        except (TypeError, ValueError):
            raise MalformedCodebook(f"{fid}: special code {code!r} is not numeric")
        if isinstance(repl, str):
            if repl != "MISSING":
                raise MalformedCodebook(f"{fid}: special value {repl!r} must be a number or 'MISSING'")
            out[key] = MISSING
        elif isinstance(repl, (int, float)):
            out[key] = float(repl)
        else:
            raise MalformedCodebook(f"{fid}: special value for code {code} must be a number or 'MISSING'")
    return out


def _parse_feature(entry: Mapping) -> FeatureSpec:
    try:
        fid = entry["id"]
        kind = entry["kind"]
        lo, hi = entry["valid_range"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedCodebook(f"feature entry missing id/kind/valid_range: {exc}") from exc
    if kind not in KINDS:
        raise MalformedCodebook(f"{fid}: unknown kind {kind!r}")
    if not (float(lo) <= float(hi)):
        raise MalformedCodebook(f"{fid}: valid_range lower bound exceeds upper bound")

    rules = []
    for r in entry.get("unit_rules") or ():
        try:
            rlo, rhi = r["range"]
            mult = float(r["multiplier"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCodebook(f"{fid}: bad unit rule: {exc}") from exc
        rules.append(UnitRule(float(rlo), float(rhi), mult, float(r.get("offset", 0.0))))

    implied = entry.get("implied_value")
    options = {int(k): str(v) for k, v in (entry.get("options") or {}).items()}
    spec = FeatureSpec(
        id=str(fid),
        kind=kind,
        valid_range=(float(lo), float(hi)),
        display=str(entry.get("display", "")),
        category=str(entry.get("category", "")),
        special_map=_parse_special_map(entry.get("special_map") or {}, fid),
        implied_value=None if implied is None else float(implied),
        unit_rules=tuple(rules),
        options=options,
    )
    _check_feature_invariants(spec)
    return spec


def _check_feature_invariants(spec: FeatureSpec) -> None:
    lo, hi = spec.valid_range
    for code, repl in spec.special_map.items():
        if lo <= code <= hi:
            raise MalformedCodebook(
                f"{spec.id}: special code {code:g} lies inside valid_range [{lo:g}, {hi:g}]"
            )
        if repl is not MISSING and not (lo <= float(repl) <= hi):
            raise MalformedCodebook(
                f"{spec.id}: special code {code:g} maps to {repl} outside valid_range"
            )
    for rule in spec.unit_rules:
        if rule.multiplier <= 0:
            raise MalformedCodebook(f"{spec.id}: unit rule multiplier must be positive")
        if rule.lo > rule.hi:
            raise MalformedCodebook(f"{spec.id}: unit rule range is inverted")
        if rule.lo <= hi and lo <= rule.hi:
            raise MalformedCodebook(
                f"{spec.id}: unit rule range [{rule.lo:g}, {rule.hi:g}] overlaps valid_range"
            )
    if spec.implied_value is not None and not (lo <= spec.implied_value <= hi):
        raise MalformedCodebook(f"{spec.id}: implied_value outside valid_range")


def schema_from_dict(doc: Mapping) -> FeatureSchema:
    """Build and validate a FeatureSchema from a parsed codebook document."""
    if not isinstance(doc, Mapping) or "features" not in doc or "labels" not in doc:
        raise MalformedCodebook("codebook must be an object with 'features' and 'labels'")
    features = tuple(_parse_feature(e) for e in doc["features"])
    labels = tuple(str(x) for x in doc["labels"])
    if len(features) != N_FEATURES or len(labels) != N_LABELS:
        raise SchemaArity(
            f"codebook declares {len(features)} features and {len(labels)} labels; "
            f"expected {N_FEATURES} and {N_LABELS}"
        )
    ids = [f.id for f in features]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateId(f"duplicate feature ids: {dupes}")
    if len(set(labels)) != len(labels):
        raise DuplicateId("duplicate label ids")
    return FeatureSchema(features=features, labels=labels, version=int(doc.get("version", 1)))


def load_codebook(path: str | Path) -> FeatureSchema:
    """Load and validate a codebook JSON file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read codebook: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedCodebook(f"codebook is not valid JSON: {exc}") from exc
    return schema_from_dict(doc)


def default_codebook_path() -> Path:
    return Path(str(resources.files("cdrisk").joinpath("data/codebook.json")))


def schema_to_dict(schema: FeatureSchema) -> dict:
    """Inverse of schema_from_dict; canonical content for hashing/echoing."""
    features = []
    for f in schema.features:
        entry: dict = {
            "id": f.id,
            "kind": f.kind,
            "valid_range": list(f.valid_range),
            "display": f.display,
            "category": f.category,
        }
        if f.special_map:
            entry["special_map"] = {
                ("%g" % code): ("MISSING" if repl is MISSING else repl)
                for code, repl in sorted(f.special_map.items())
            }
        if f.implied_value is not None:
            entry["implied_value"] = f.implied_value
        if f.unit_rules:
            entry["unit_rules"] = [
                {"range": [r.lo, r.hi], "multiplier": r.multiplier, "offset": r.offset}
                for r in f.unit_rules
            ]
        if f.options:
            entry["options"] = {str(k): v for k, v in sorted(f.options.items())}
        features.append(entry)
    return {"version": schema.version, "features": features, "labels": list(schema.labels)}


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def schema_hash(schema: FeatureSchema) -> int:
    """Hash of the canonical codebook serialization (sorted keys, compact)."""
    canonical = json.dumps(schema_to_dict(schema), sort_keys=True, separators=(",", ":"))
    return fnv1a64(canonical.encode("utf-8"))


# ---------------------------------------------------------------------------
# record cleaning


def _clean_feature(spec: FeatureSpec, raw) -> tuple[float | None, str | None]:
    """Returns (value, None) on success or (None, reason) on rejection."""
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        if spec.implied_value is None:
            return None, REASON_MISSING
        v = spec.implied_value
    else:
        try:
            v = float(raw)
        except (TypeError, ValueError):
            return None, REASON_MISSING
    if spec.special_map:
        mapped = spec.special_map.get(v, v)
        if mapped is MISSING:
            return None, REASON_REFUSED
        v = float(mapped)
    for rule in spec.unit_rules:
        if rule.lo <= v <= rule.hi:
            v = (v - rule.offset) * rule.multiplier
            break
    lo, hi = spec.valid_range
    if not (lo <= v <= hi):
        return None, REASON_RANGE
    return v, None


def _clean_label(raw) -> tuple[int | None, str | None]:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return None, REASON_MISSING
    try:
        v = float(raw)
    except (TypeError, ValueError):
        return None, REASON_MISSING
    if v in _LABEL_REFUSED:
        return None, REASON_REFUSED
    if v in _LABEL_MAP:
        return _LABEL_MAP[v], None
    return None, REASON_RANGE


def clean_features(raw: Mapping[str, object], schema: FeatureSchema) -> np.ndarray | Rejected:
    """Clean the 38 feature entries of a raw answer map (labels ignored)."""
    x = np.empty(len(schema.features), dtype=np.float64)
    for i, spec in enumerate(schema.features):
        v, reason = _clean_feature(spec, raw.get(spec.id))
        if reason is not None:
            return Rejected(spec.id, reason)
        x[i] = v
    return x


def clean_record(raw: Mapping[str, object], schema: FeatureSchema) -> CleanRecord | Rejected:
    """Clean one raw row (features and labels) into a CleanRecord.

    Rejection is an outcome, not an exception: the first offending field is
    reported with reason "missing", "refused_code", or "out_of_range".
    """
    x = clean_features(raw, schema)
    if isinstance(x, Rejected):
        return x
    y = np.empty(len(schema.labels), dtype=np.int64)
    for j, label in enumerate(schema.labels):
        v, reason = _clean_label(raw.get(label))
        if reason is not None:
            return Rejected(label, reason)
        y[j] = v
    return CleanRecord(x=x, y=y)


def clean_dataset(
    source: str | Path | io.TextIOBase | Iterable[str],
    schema: FeatureSchema,
) -> tuple[list[CleanRecord], CleanReport]:
    """Clean a CSV stream row by row, preserving input order.

    The header must contain every feature and label id (extra columns are
    ignored). Returns the accepted records plus a report whose counts satisfy
    accepted + sum(rejected.values()) == total_in.
    """
    if isinstance(source, (str, Path)):
        try:
            handle = open(source, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise IoError(f"cannot read CSV: {exc}") from exc
        with handle:
            return clean_dataset(handle, schema)

    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    required = list(schema.feature_ids) + list(schema.labels)
    missing = [c for c in required if c not in header]
    if missing:
        raise HeaderMismatch(f"CSV header is missing columns: {missing}")

    records: list[CleanRecord] = []
    report = CleanReport()
    for row in reader:
        report.total_in += 1
        outcome = clean_record(row, schema)
        if isinstance(outcome, Rejected):
            report.rejected[outcome.reason] = report.rejected.get(outcome.reason, 0) + 1
        else:
            records.append(outcome)
            report.accepted += 1
    return records, report


def record_to_raw(record: CleanRecord, schema: FeatureSchema) -> dict[str, float]:
    """Re-encode a clean record as a raw answer map (already in clean units)."""
    raw: dict[str, float] = {f.id: float(v) for f, v in zip(schema.features, record.x)}
    raw.update({label: int(v) for label, v in zip(schema.labels, record.y)})
    return raw


def records_to_arrays(records: Sequence[CleanRecord]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([r.x for r in records]).astype(np.float64)
    Y = np.stack([r.y for r in records]).astype(np.int64)
    return X, Y


# ---------------------------------------------------------------------------
# clean CSV round trip


def write_clean_csv(records: Sequence[CleanRecord], schema: FeatureSchema, path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(schema.feature_ids) + list(schema.labels))
            for r in records:
                writer.writerow([repr(float(v)) for v in r.x] + [int(v) for v in r.y])
    except OSError as exc:
        raise IoError(f"cannot write clean CSV: {exc}") from exc


def load_clean_csv(path: str | Path, schema: FeatureSchema) -> tuple[np.ndarray, np.ndarray]:
    """Load a clean CSV produced by write_clean_csv (or equivalent)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise HeaderMismatch("clean CSV has no header row")
            required = list(schema.feature_ids) + list(schema.labels)
            missing = [c for c in required if c not in header]
            if missing:
                raise HeaderMismatch(f"clean CSV is missing columns: {missing}")
            cols = [header.index(c) for c in required]
            rows = []
            for lineno, line in enumerate(reader, start=2):
                if not line:
                    continue
                try:
                    rows.append([float(line[c]) for c in cols])
                except (ValueError, IndexError) as exc:
                    raise IoError(f"bad clean CSV row at line {lineno}: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read clean CSV: {exc}") from exc
    if not rows:
        return np.empty((0, N_FEATURES)), np.empty((0, N_LABELS), dtype=np.int64)
    data = np.asarray(rows, dtype=np.float64)
    X = data[:, :N_FEATURES]
    Y = data[:, N_FEATURES:].astype(np.int64)
    return X, Y


# ---------------------------------------------------------------------------
# normalization and splitting


def fit_normalizer(records: Sequence[CleanRecord], split: SplitIndices) -> NormStats:
    """Mean/std over the training split only; zero-variance features get std 1."""
    if len(split.train) == 0:
        raise EmptySplit("cannot fit a normalizer on an empty training split")
    X, _ = records_to_arrays(records)
    Xtr = X[split.train]
    mean = Xtr.mean(axis=0)
    std = Xtr.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return NormStats(mean=mean, std=std)


def apply_normalizer(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def split_dataset(
    n: int,
    labels: np.ndarray,
    seed: int,
    test_fraction: float = 0.2,
) -> SplitIndices:
    """Deterministic stratified 80/20 split.

    Iterative stratification: labels are processed rarest first, and each
    positive example goes to the split that still wants the most positives
    of that label (ties broken by remaining capacity, then seeded). The
    global test count is exactly round(test_fraction * n), and every label's
    positive rate stays nearly identical across the two splits — within the
    2-percentage-point stratification bound at realistic sizes.
    """
    if n < 10:
        raise TooFewRecords(f"need at least 10 records to split, got {n}")
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[:, None]
    if labels.shape[0] != n:
        raise ValueError("labels length does not match n")
    n_labels = labels.shape[1]

    rng = np.random.default_rng(seed)
    n_test = int(round(test_fraction * n))
    capacity = {"train": n - n_test, "test": n_test}
    # how many positives of each label each split still wants
    desire = {
        "train": (1.0 - test_fraction) * labels.sum(axis=0).astype(np.float64),
        "test": test_fraction * labels.sum(axis=0).astype(np.float64),
    }

    unassigned = np.ones(n, dtype=bool)
    assigned: dict[str, list[int]] = {"train": [], "test": []}

    def place(i: int, side: str) -> None:
        assigned[side].append(i)
        unassigned[i] = False
        capacity[side] -= 1
        desire[side][labels[i] == 1] -= 1.0

    active = [j for j in range(n_labels) if labels[:, j].sum() > 0]
    while active:
        counts = [(int(labels[unassigned, j].sum()), j) for j in active]
        counts = [(c, j) for c, j in counts if c > 0]
        if not counts:
            break
        _, j = min(counts)
        members = np.flatnonzero(unassigned & (labels[:, j] == 1))
        for i in members[rng.permutation(len(members))]:
            sides = [s for s in ("train", "test") if capacity[s] > 0]
            if len(sides) == 1:
                place(int(i), sides[0])
                continue
            d_train, d_test = desire["train"][j], desire["test"][j]
            if d_train != d_test:
                side = "train" if d_train > d_test else "test"
            elif capacity["train"] != capacity["test"]:
                side = "train" if capacity["train"] > capacity["test"] else "test"
            else:
                side = "train" if rng.random() < 0.5 else "test"
            place(int(i), side)
        active.remove(j)

    # whatever is left carries no positive labels; fill the capacities
    rest = np.flatnonzero(unassigned)
    rest = rest[rng.permutation(len(rest))]
    for i in rest:
        place(int(i), "test" if capacity["test"] > 0 else "train")

    return SplitIndices(
        train=np.array(sorted(assigned["train"]), dtype=np.int64),
        test=np.array(sorted(assigned["test"]), dtype=np.int64),
        seed=seed,
    )


def cohort_prevalence(
    records: Sequence[CleanRecord],
    schema: FeatureSchema,
    group_feature: str,
    label: str,
) -> dict[int, float]:
    """Percentage of each group value that carries the disease label.

    Only valid for categorical-code features; groups with no members simply
    do not appear.
    """
    fi = schema.feature_index(group_feature)
    if schema.features[fi].kind != "categorical-code":
        raise NotCategorical(f"{group_feature} is {schema.features[fi].kind}, not categorical-code")
    li = schema.label_index(label)

    totals: dict[int, int] = {}
    positives: dict[int, int] = {}
    for r in records:
        g = int(r.x[fi])
        totals[g] = totals.get(g, 0) + 1
        positives[g] = positives.get(g, 0) + int(r.y[li])
    return {g: 100.0 * positives[g] / totals[g] for g in sorted(totals)}
