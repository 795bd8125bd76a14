"""Feature attributions: Kernel SHAP, an exact-Shapley oracle, k-means
background summarization, and global importance aggregation.

A coalition value v(S) is the background-weighted expected risk of a hybrid
input that takes the explained point on S and a background centroid
elsewhere. Kernel SHAP fits a weighted least squares over coalition
indicator vectors with the Shapley kernel weight
pi(z) = (M-1) / (C(M,|z|) * |z| * (M-|z|)); the efficiency constraint
(attributions sum to fx - base) is enforced by eliminating the last feature
from the regression, so local accuracy holds by construction. For M <= 14
all 2^M - 2 proper coalitions are enumerated and the solution matches the
brute-force Shapley values; above that, coalitions are sampled by size in
proportion to kernel mass, each paired with its complement.

Everything here works on normalized feature vectors; callers normalize with
the model's own stats (see prepare_background).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import KTooLarge, TooFewPoints, TooManyFeatures
from .ingest import CleanRecord, apply_normalizer, records_to_arrays
from .model import RiskModel, forward_batch

EXACT_MODE_MAX = 14
DEFAULT_BUDGET_EXTRA = 2048

RiskFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Background:
    """K reference points (normalized) with cluster-size-proportional weights."""

    centroids: np.ndarray
    weights: np.ndarray


@dataclass
class Attribution:
    """Per-feature SHAP values for one prediction.

    base + phi.sum() == fx up to float error (enforced by construction).
    singular flags a rank-deficient regression solved by least-norm fallback.
    """

    phi: np.ndarray
    base: float
    fx: float
    singular: bool = False


@dataclass
class GlobalImportance:
    disease: str
    feature_ids: tuple[str, ...]
    scores: np.ndarray             # mean |phi| per feature
    signed: np.ndarray             # mean phi per feature (sign-preserving view)
    sample_size: int
    seed: int


def _as_risk_fn(model: RiskModel | RiskFn) -> RiskFn:
    if callable(model):
        return model
    return lambda X: forward_batch(model, X)[:, 1]


# ---------------------------------------------------------------------------
# k-means background


def _inertia(points: np.ndarray, centers: np.ndarray, assign: np.ndarray) -> float:
    return float(np.sum((points - centers[assign]) ** 2))


def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass is on already-chosen points (duplicates)
            remaining = np.setdiff1d(np.arange(n), np.array(chosen))
            pick = int(rng.choice(remaining)) if len(remaining) else int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        chosen.append(pick)
        d2 = np.minimum(d2, ((points - points[pick]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _lloyd(
    points: np.ndarray,
    centers: np.ndarray,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations to an assignment fixpoint; returns an inertia trace
    (recorded after each assignment step, so it is non-increasing)."""
    assign = _nearest(points, centers)
    trace = [_inertia(points, centers, assign)]
    for _ in range(max_iter):
        for c in range(len(centers)):
            members = points[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                # reseed a starved cluster to the point farthest from its centroid
                far = int(np.argmax(((points - centers[assign]) ** 2).sum(axis=1)))
                centers[c] = points[far]
        new_assign = _nearest(points, centers)
        trace.append(_inertia(points, centers, new_assign))
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
    return centers, assign, trace


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> Background:
    """k-means++ seeding plus Lloyd iterations; weights are cluster shares."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k < 1 or n < k:
        raise TooFewPoints(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(points, k, rng)
    centers, assign, _ = _lloyd(points, centers, max_iter)
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    return Background(centroids=centers, weights=counts / n)


def prepare_background(
    model: RiskModel,
    records: Sequence[CleanRecord] | np.ndarray,
    k: int = 100,
    seed: int = 0,
    max_points: int | None = None,
) -> Background:
    """Summarize a dataset into a background in the model's normalized space."""
    if isinstance(records, np.ndarray):
        X = records
    else:
        X, _ = records_to_arrays(records)
    Xn = apply_normalizer(X, model.norm)
    if max_points is not None and len(Xn) > max_points:
        rng = np.random.default_rng(seed)
        Xn = Xn[rng.choice(len(Xn), max_points, replace=False)]
    return kmeans(Xn, min(k, len(Xn)), seed)


# ---------------------------------------------------------------------------
# coalition values


def _coalition_values(
    f: RiskFn,
    x: np.ndarray,
    bg: Background,
    masks: np.ndarray,
    chunk_rows: int = 262144,
) -> np.ndarray:
    """v(S) for every mask row: expected risk of x-on-S, centroid elsewhere."""
    n_masks = len(masks)
    k = len(bg.centroids)
    out = np.empty(n_masks, dtype=np.float64)
    per_chunk = max(1, chunk_rows // k)
    for start in range(0, n_masks, per_chunk):
        z = masks[start : start + per_chunk]
        hybrid = np.where(z[:, None, :], x[None, None, :], bg.centroids[None, :, :])
        risks = f(hybrid.reshape(-1, x.size)).reshape(len(z), k)
        out[start : start + per_chunk] = risks @ bg.weights
    return out


def value_function(
    model: RiskModel | RiskFn,
    x: np.ndarray,
    subset: Iterable[int] | np.ndarray,
    bg: Background,
) -> float:
    """v(S) for one coalition S (indices or boolean mask over features)."""
    x = np.asarray(x, dtype=np.float64)
    subset = np.asarray(list(subset) if not isinstance(subset, np.ndarray) else subset)
    mask = np.zeros(x.size, dtype=bool)
    if subset.dtype == bool:
        mask = subset
    elif subset.size:
        mask[subset.astype(int)] = True
    f = _as_risk_fn(model)
    return float(_coalition_values(f, x, bg, mask[None, :])[0])


# ---------------------------------------------------------------------------
# exact Shapley (oracle)


def _all_masks(m: int) -> np.ndarray:
    idx = np.arange(1 << m, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(bool)


def shapley_from_table(values: np.ndarray, m: int) -> np.ndarray:
    """Brute-force Shapley values from a 2^m table of coalition values.

    values[mask] is v(S) for the bitmask encoding of S (bit i = feature i).
    phi_i = sum over S not containing i of
            |S|! (m-|S|-1)! / m! * (v(S+i) - v(S)).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size != (1 << m):
        raise ValueError(f"expected 2^{m} coalition values, got {values.size}")
    idx = np.arange(1 << m, dtype=np.uint64)
    sizes = np.zeros(1 << m, dtype=np.int64)
    for i in range(m):
        sizes += ((idx >> np.uint64(i)) & np.uint64(1)).astype(np.int64)
    coef = np.array(
        [math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)]
    )
    phi = np.empty(m, dtype=np.float64)
    for i in range(m):
        without = (idx >> np.uint64(i)) & np.uint64(1) == 0
        s_masks = idx[without]
        pair = s_masks | np.uint64(1 << i)
        phi[i] = np.sum(coef[sizes[s_masks]] * (values[pair] - values[s_masks]))
    return phi


def exact_shapley(model: RiskModel | RiskFn, x: np.ndarray, bg: Background) -> np.ndarray:
    """Exact Shapley attribution by full enumeration (practical for M <= 14)."""
    x = np.asarray(x, dtype=np.float64)
    m = x.size
    if m > EXACT_MODE_MAX:
        raise TooManyFeatures(f"exact Shapley enumeration capped at M={EXACT_MODE_MAX}, got {m}")
    f = _as_risk_fn(model)
    values = _coalition_values(f, x, bg, _all_masks(m))
    return shapley_from_table(values, m)


# ---------------------------------------------------------------------------
# kernel SHAP


def _kernel_weight(m: int, s: int) -> float:
    return (m - 1) / (math.comb(m, s) * s * (m - s))


def _solve_constrained_wls(
    masks: np.ndarray,
    weights: np.ndarray,
    targets: np.ndarray,
    f_delta: float,
) -> tuple[np.ndarray, bool]:
    """Weighted least squares with sum(phi) == f_delta enforced by eliminating
    the last feature. Falls back to a least-norm solution when singular."""
    m = masks.shape[1]
    if m == 1:
        return np.array([f_delta]), False
    z = masks.astype(np.float64)
    y = targets - z[:, -1] * f_delta
    X = z[:, :-1] - z[:, -1:]
    XtW = X.T * weights
    A = XtW @ X
    b = XtW @ y
    try:
        head = np.linalg.solve(A, b)
        singular = False
    except np.linalg.LinAlgError:
        head = np.linalg.lstsq(A, b, rcond=None)[0]
        singular = True
    phi = np.empty(m, dtype=np.float64)
    phi[:-1] = head
    phi[-1] = f_delta - head.sum()
    return phi, singular


def _sample_coalitions(
    m: int,
    budget: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Size-stratified coalition draw with complement pairing.

    Small (and large, via complements) coalition sizes carry most of the
    kernel mass, so whole size levels are enumerated while they fit in the
    budget; leftover budget is sampled from the remaining sizes proportional
    to their mass, and sampled weights are rescaled to the leftover mass.
    """
    sizes = np.arange(1, m)
    level_mass = np.array([(m - 1) / (s * (m - s)) for s in sizes])

    masks: list[np.ndarray] = []
    weights: list[float] = []
    enumerated = np.zeros(m - 1, dtype=bool)
    remaining = budget

    for s in range(1, m // 2 + 1):
        comp = m - s
        paired = comp != s
        count = math.comb(m, s) * (2 if paired else 1)
        if count > remaining:
            break  # levels only get larger toward m/2
        base = np.zeros(m, dtype=bool)
        for subset in combinations(range(m), s):
            mask = base.copy()
            mask[list(subset)] = True
            masks.append(mask)
            weights.append(_kernel_weight(m, s))
            if paired:
                masks.append(~mask)
                weights.append(_kernel_weight(m, comp))
        enumerated[s - 1] = True
        if paired:
            enumerated[comp - 1] = True
        remaining -= count

    open_sizes = sizes[~enumerated]
    if remaining > 0 and len(open_sizes):
        open_mass = level_mass[~enumerated]
        probs = open_mass / open_mass.sum()
        dup: dict[bytes, int] = {}
        sampled_masks: list[np.ndarray] = []
        sampled_w: list[float] = []
        draws = 0
        while draws < remaining:
            s = int(rng.choice(open_sizes, p=probs))
            mask = np.zeros(m, dtype=bool)
            mask[rng.permutation(m)[:s]] = True
            for candidate in (mask, ~mask):
                if draws >= remaining:
                    break
                key = candidate.tobytes()
                if key in dup:
                    sampled_w[dup[key]] += 1.0
                else:
                    dup[key] = len(sampled_masks)
                    sampled_masks.append(candidate)
                    sampled_w.append(1.0)
                draws += 1
        scale = open_mass.sum() / sum(sampled_w)
        masks.extend(sampled_masks)
        weights.extend(w * scale for w in sampled_w)

    return np.array(masks), np.array(weights)


def kernel_shap(
    model: RiskModel | RiskFn,
    x: np.ndarray,
    bg: Background,
    budget: int | None = None,
    seed: int | np.random.Generator = 0,
) -> Attribution:
    """SHAP attribution via the kernel-weighted regression.

    Exact mode (all proper coalitions) whenever M <= 14; otherwise sampled
    with `budget` coalitions (default 2M + 2048, minimum 2M).
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.size
    f = _as_risk_fn(model)
    base = float(f(bg.centroids) @ bg.weights)
    fx = float(f(x[None, :])[0])

    if m <= EXACT_MODE_MAX:
        masks = _all_masks(m)[1:-1]  # drop empty and full coalitions
        sizes = masks.sum(axis=1)
        weights = np.array([_kernel_weight(m, int(s)) for s in sizes])
    else:
        if budget is None:
            budget = 2 * m + DEFAULT_BUDGET_EXTRA
        if budget < 2 * m:
            raise ValueError(f"budget must be at least 2M = {2 * m}, got {budget}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        masks, weights = _sample_coalitions(m, budget, rng)

    targets = _coalition_values(f, x, bg, masks) - base
    phi, singular = _solve_constrained_wls(masks, weights, targets, fx - base)
    return Attribution(phi=phi, base=base, fx=fx, singular=singular)


# ---------------------------------------------------------------------------
# global importance


def global_importance(
    model: RiskModel | RiskFn,
    X: np.ndarray,
    bg: Background,
    feature_ids: Sequence[str],
    sample_size: int = 500,
    seed: int = 0,
    budget: int | None = None,
    disease: str = "",
) -> GlobalImportance:
    """Mean |phi| (and mean phi) over a seeded sample of explained points."""
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    take = min(sample_size, len(X))
    idx = rng.choice(len(X), size=take, replace=False)

    total_abs = np.zeros(X.shape[1])
    total = np.zeros(X.shape[1])
    for i in idx:
        attr = kernel_shap(model, X[i], bg, budget=budget, seed=rng)
        total_abs += np.abs(attr.phi)
        total += attr.phi
    if not disease and isinstance(model, RiskModel):
        disease = model.disease
    return GlobalImportance(
        disease=disease,
        feature_ids=tuple(feature_ids),
        scores=total_abs / take,
        signed=total / take,
        sample_size=take,
        seed=seed,
    )


def top_k(
    gi: GlobalImportance,
    k: int = 3,
    exclude: Iterable[str] = (),
) -> list[str]:
    """Highest-importance feature ids after exclusions; ties keep declaration order."""
    excluded = set(exclude)
    keep = [i for i, fid in enumerate(gi.feature_ids) if fid not in excluded]
    if k > len(keep):
        raise KTooLarge(f"k={k} but only {len(keep)} features remain after exclusions")
    ranked = sorted(keep, key=lambda i: (-gi.scores[i], i))
    return [gi.feature_ids[i] for i in ranked[:k]]
