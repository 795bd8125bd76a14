import numpy as np
import pytest
from scipy.stats import spearmanr

from cdrisk.errors import KTooLarge, TooFewPoints, TooManyFeatures
from cdrisk.explainer import (
    Background,
    GlobalImportance,
    _all_masks,
    _lloyd,
    _solve_constrained_wls,
    exact_shapley,
    global_importance,
    kernel_shap,
    kmeans,
    prepare_background,
    shapley_from_table,
    top_k,
    value_function,
)
from cdrisk.ingest import apply_normalizer, records_to_arrays
from cdrisk.model import ModelConfig, init_model


def _jittered_model(m_features, seed, hidden=6, blocks=1):
    model = init_model(ModelConfig(input_dim=m_features, hidden_dim=hidden, n_blocks=blocks, seed=seed))
    rng = np.random.default_rng(seed + 999)
    for p in model.params():
        p += rng.uniform(-0.3, 0.3, size=p.shape)
    return model


def _random_bg(m_features, k, rng):
    c = rng.normal(size=(k, m_features))
    w = rng.random(k) + 0.05
    return Background(centroids=c, weights=w / w.sum())


# --- k-means ---


def test_kmeans_degenerate_k_equals_n():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(6, 3))
    bg = kmeans(pts, 6, seed=1)
    got = sorted(map(tuple, bg.centroids.round(12)))
    want = sorted(map(tuple, pts.round(12)))
    assert got == want
    np.testing.assert_allclose(bg.weights, 1 / 6)


def test_kmeans_two_blobs():
    rng = np.random.default_rng(1)
    pts = np.vstack([
        rng.normal(0.0, 0.01, size=(50, 4)),
        rng.normal(3.0, 0.01, size=(70, 4)),
    ])
    bg = kmeans(pts, 2, seed=5)
    means = sorted(bg.centroids.mean(axis=1))
    assert abs(means[0] - 0.0) < 0.1 and abs(means[1] - 3.0) < 0.1
    assert sorted(bg.weights) == pytest.approx([50 / 120, 70 / 120])
    assert bg.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_kmeans_inertia_non_increasing():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(200, 5))
    init = pts[rng.choice(200, 8, replace=False)].copy()
    _, _, trace = _lloyd(pts, init)
    assert len(trace) >= 2
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_kmeans_too_few_points():
    with pytest.raises(TooFewPoints):
        kmeans(np.zeros((3, 2)), 4, seed=0)


def test_kmeans_starved_cluster_is_reseeded():
    # a center far from every point gets no members; Lloyd must reseed it
    # instead of dividing by zero, and the trace stays monotone
    rng = np.random.default_rng(6)
    pts = np.vstack([rng.normal(0, 0.5, (30, 2)), rng.normal(4, 0.5, (30, 2))])
    init = np.array([[0.0, 0.0], [4.0, 4.0], [1e6, 1e6]])
    centers, assign, trace = _lloyd(pts, init.copy())
    assert np.all(np.isfinite(centers))
    assert centers[2][0] < 1e5  # the stray center moved onto the data
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


# --- value function ---


def test_value_function_full_and_empty_sets():
    rng = np.random.default_rng(3)
    model = _jittered_model(5, seed=3)
    x = rng.normal(size=5)
    bg = _random_bg(5, 4, rng)
    from cdrisk.model import risk_batch

    v_full = value_function(model, x, np.arange(5), bg)
    assert v_full == pytest.approx(float(risk_batch(model, x[None, :])[0]), abs=1e-12)

    v_empty = value_function(model, x, [], bg)
    base = float(risk_batch(model, bg.centroids) @ bg.weights)
    assert v_empty == pytest.approx(base, abs=1e-12)


def test_value_function_single_centroid_hybrid():
    rng = np.random.default_rng(4)
    model = _jittered_model(4, seed=4)
    x = rng.normal(size=4)
    b = rng.normal(size=4)
    bg = Background(centroids=b[None, :], weights=np.array([1.0]))
    subset = [0, 1, 3]  # feature 2 comes from the background
    hybrid = np.array([x[0], x[1], b[2], x[3]])
    from cdrisk.model import risk_batch

    assert value_function(model, x, subset, bg) == pytest.approx(
        float(risk_batch(model, hybrid[None, :])[0]), abs=1e-12
    )


# --- exact Shapley oracle ---


def test_hand_worked_three_player_game():
    table = {
        frozenset(): 0.0, frozenset({0}): 1.0, frozenset({1}): 2.0, frozenset({0, 1}): 4.0,
    }

    def v(mask):
        return table[frozenset(np.flatnonzero(mask)) - {2}]

    values = np.array([v(m) for m in _all_masks(3)])
    phi = shapley_from_table(values, 3)
    np.testing.assert_allclose(phi, [1.5, 2.5, 0.0], atol=1e-12)


def test_exact_shapley_symmetry_axiom():
    # risk symmetric in features 0 and 1; equal values and symmetric background
    rng = np.random.default_rng(5)

    def f(X):
        return np.tanh(X[:, 0] + X[:, 1]) + 0.3 * X[:, 2]

    c = rng.normal(size=(3, 3))
    c[:, 1] = c[:, 0]
    bg = Background(c, np.full(3, 1 / 3))
    x = np.array([0.7, 0.7, -0.2])
    phi = exact_shapley(f, x, bg)
    assert phi[0] == pytest.approx(phi[1], abs=1e-9)


def test_exact_shapley_efficiency():
    rng = np.random.default_rng(6)
    for seed in range(5):
        model = _jittered_model(6, seed=seed)
        x = rng.normal(size=6)
        bg = _random_bg(6, 3, rng)
        phi = exact_shapley(model, x, bg)
        v_full = value_function(model, x, np.arange(6), bg)
        v_empty = value_function(model, x, [], bg)
        assert phi.sum() == pytest.approx(v_full - v_empty, abs=1e-9)


def test_exact_shapley_feature_cap():
    rng = np.random.default_rng(7)
    with pytest.raises(TooManyFeatures):
        exact_shapley(lambda X: X[:, 0], rng.normal(size=15), _random_bg(15, 2, rng))


# --- kernel SHAP ---


def test_kernel_exact_matches_oracle_small_grid():
    rng = np.random.default_rng(8)
    for m in (4, 6, 8):
        for t in range(3):
            model = _jittered_model(m, seed=10 * m + t)
            x = rng.normal(size=m)
            bg = _random_bg(m, int(rng.integers(1, 5)), rng)
            attr = kernel_shap(model, x, bg)
            oracle = exact_shapley(model, x, bg)
            np.testing.assert_allclose(attr.phi, oracle, atol=1e-6)
            assert attr.base + attr.phi.sum() == pytest.approx(attr.fx, abs=1e-9)


def test_kernel_additive_closed_form_exact_mode():
    rng = np.random.default_rng(9)
    m = 8
    a = rng.normal(size=m)
    b = rng.normal(size=m)
    x = rng.normal(size=m)
    attr = kernel_shap(lambda X: X @ a, x, Background(b[None, :], np.array([1.0])))
    np.testing.assert_allclose(attr.phi, a * (x - b), atol=1e-9)


def test_kernel_additive_closed_form_sampled_mode():
    # the coalition game of an additive model is linear, so the sampled
    # regression interpolates it exactly whenever the design has full rank
    rng = np.random.default_rng(10)
    m = 38
    a = rng.normal(size=m)
    b = rng.normal(size=m)
    x = rng.normal(size=m)
    attr = kernel_shap(lambda X: X @ a, x, Background(b[None, :], np.array([1.0])),
                       budget=2 * m + 256, seed=3)
    assert not attr.singular
    np.testing.assert_allclose(attr.phi, a * (x - b), atol=1e-8)


def test_kernel_dummy_axiom_exact_mode():
    rng = np.random.default_rng(11)

    def f(X):  # never reads feature 2
        return np.tanh(X[:, 0] - 0.5 * X[:, 1] + 0.2 * X[:, 3])

    x = rng.normal(size=4)
    bg = _random_bg(4, 3, rng)
    attr = kernel_shap(f, x, bg)
    assert abs(attr.phi[2]) <= 1e-9


def test_kernel_local_accuracy_sampled_mode():
    rng = np.random.default_rng(12)
    model = _jittered_model(20, seed=20)
    x = rng.normal(size=20)
    bg = _random_bg(20, 6, rng)
    attr = kernel_shap(model, x, bg, budget=2 * 20 + 64, seed=1)
    assert attr.base + attr.phi.sum() == pytest.approx(attr.fx, abs=1e-9)


def test_kernel_sampled_budget_floor():
    rng = np.random.default_rng(13)
    model = _jittered_model(16, seed=16)
    with pytest.raises(ValueError):
        kernel_shap(model, rng.normal(size=16), _random_bg(16, 2, rng), budget=8)


def test_singular_design_falls_back_to_least_norm():
    # duplicate coalition rows of rank < m-1 make the normal equations singular
    masks = np.array([
        [True, False, False, False],
        [True, False, False, False],
        [True, True, False, False],
    ])
    weights = np.ones(3)
    targets = np.array([0.5, 0.5, 0.7])
    phi, singular = _solve_constrained_wls(masks, weights, targets, f_delta=1.0)
    assert singular
    assert phi.sum() == pytest.approx(1.0, abs=1e-9)  # efficiency still enforced


# --- global importance / top-k ---


def test_global_importance_single_point_degenerate():
    rng = np.random.default_rng(14)
    model = _jittered_model(6, seed=30)
    X = rng.normal(size=(10, 6))
    bg = _random_bg(6, 3, rng)
    gi = global_importance(model, X, bg, [f"f{i}" for i in range(6)], sample_size=1, seed=4)
    chosen = np.random.default_rng(4).choice(10, size=1, replace=False)[0]
    attr = kernel_shap(model, X[chosen], bg)
    np.testing.assert_allclose(gi.scores, np.abs(attr.phi), atol=1e-12)
    np.testing.assert_allclose(gi.signed, attr.phi, atol=1e-12)


def test_global_importance_deterministic():
    rng = np.random.default_rng(15)
    model = _jittered_model(6, seed=31)
    X = rng.normal(size=(40, 6))
    bg = _random_bg(6, 3, rng)
    ids = [f"f{i}" for i in range(6)]
    g1 = global_importance(model, X, bg, ids, sample_size=12, seed=9)
    g2 = global_importance(model, X, bg, ids, sample_size=12, seed=9)
    np.testing.assert_array_equal(g1.scores, g2.scores)


def test_global_importance_recovers_planted_linear_effects(schema):
    # linear risk over normalized features: importances must rank the big
    # coefficients first even in sampled mode
    rng = np.random.default_rng(16)
    w = np.zeros(38)
    w[[4, 11, 25]] = (1.5, -2.5, 2.0)

    def f(X):
        return 1.0 / (1.0 + np.exp(-(X @ w)))

    X = rng.normal(size=(600, 38))
    bg = kmeans(X, 10, seed=0)
    gi = global_importance(f, X, bg, schema.feature_ids, sample_size=60, seed=2, budget=128)
    best = top_k(gi, k=3)
    assert set(best) == {schema.feature_ids[4], schema.feature_ids[11], schema.feature_ids[25]}


def test_global_importance_stability_across_seeds(schema, trained_small):
    # stability run at spec scale: 5000 records, two point/coalition seeds
    model, _ = trained_small
    from cdrisk.synth import generate
    from tests.conftest import DEMO_PLANTS

    records = generate(schema, 5000, DEMO_PLANTS, seed=7)
    X, _ = records_to_arrays(records)
    Xn = apply_normalizer(X, model.norm)
    bg = prepare_background(model, X, k=16, seed=0)
    g1 = global_importance(model, Xn, bg, schema.feature_ids, sample_size=400, seed=101, budget=384)
    g2 = global_importance(model, Xn, bg, schema.feature_ids, sample_size=400, seed=202, budget=384)
    rho = spearmanr(g1.scores, g2.scores).statistic
    assert rho >= 0.9


def test_top_k_ranking_and_exclusions():
    gi = GlobalImportance(
        disease="D",
        feature_ids=("a", "b", "c", "d"),
        scores=np.array([0.9, 0.2, 0.9, 0.5]),
        signed=np.zeros(4),
        sample_size=10,
        seed=0,
    )
    assert top_k(gi, k=3) == ["a", "c", "d"]  # tie between a and c -> declaration order
    assert top_k(gi, k=2, exclude={"a"}) == ["c", "d"]  # rank 1 excluded, rank 2 promoted
    with pytest.raises(KTooLarge):
        top_k(gi, k=4, exclude={"a"})
