import math

import numpy as np
import pytest

from mtgl.model import GroupCoefficients, MultiTaskDataset, group_support, objective
from mtgl.solver import (
    SolverConfig,
    block_soft_threshold,
    kkt_residual,
    lasso_kkt_residual,
    solve_group_lasso,
    solve_lasso_baseline,
)

# Shrinkage of v=(3,4) at tau=2: scale factor 1 - 2/5 = 0.6.  Frozen after
# checking against numeric minimization of 0.5*||u-v||^2 + tau*||u||
# (scipy.optimize, both a 1-D search along v and an unconstrained 2-D run
# agree to 7 decimals).
BST_EXPECTED = (1.8, 2.4)


def _normalized_design(rng, T, n, M):
    X = rng.standard_normal((T, n, M))
    X *= math.sqrt(n) / np.linalg.norm(X, axis=1, keepdims=True)
    return X


def _orthogonal_design(rng, T, n, M):
    X = np.empty((T, n, M))
    for t in range(T):
        Q, _ = np.linalg.qr(rng.standard_normal((n, M)))
        X[t] = math.sqrt(n) * Q
    return X


def _dataset(rng, T=4, n=30, M=10, orthogonal=False):
    make = _orthogonal_design if orthogonal else _normalized_design
    X = make(rng, T, n, M)
    y = rng.standard_normal((T, n))
    return MultiTaskDataset(X, y)


# ---------------------------------------------------------------------------
# block soft threshold

def test_block_soft_threshold_values():
    np.testing.assert_allclose(
        block_soft_threshold(np.array([3.0, 4.0]), 2.0), BST_EXPECTED, rtol=1e-15
    )
    np.testing.assert_array_equal(
        block_soft_threshold(np.array([3.0, 4.0]), 5.0), [0.0, 0.0]
    )
    v = np.array([0.3, -1.2, 0.0])
    np.testing.assert_array_equal(block_soft_threshold(v, 0.0), v)


def test_block_soft_threshold_is_prox():
    # output minimizes 0.5*||u-v||^2 + tau*||u|| against a sampled cloud
    for seed in range(10):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(4)
        tau = float(rng.uniform(0.1, 2.0))
        u = block_soft_threshold(v, tau)
        best = 0.5 * np.sum((u - v) ** 2) + tau * np.linalg.norm(u)
        for _ in range(200):
            cand = u + rng.standard_normal(4) * rng.uniform(0.001, 1.0)
            val = 0.5 * np.sum((cand - v) ** 2) + tau * np.linalg.norm(cand)
            assert best <= val + 1e-12


def test_block_soft_threshold_rejects_negative_tau():
    with pytest.raises(ValueError):
        block_soft_threshold(np.array([1.0]), -0.1)


# ---------------------------------------------------------------------------
# group solver

def test_zero_response_gives_zero_solution():
    rng = np.random.default_rng(0)
    X = _normalized_design(rng, 3, 20, 6)
    data = MultiTaskDataset(X, np.zeros((3, 20)))
    for lam in (0.01, 1.0):
        res = solve_group_lasso(data, SolverConfig(lam=lam))
        np.testing.assert_array_equal(res.beta_hat.values, np.zeros((6, 3)))
        assert res.converged


def test_orthogonal_closed_form_both_algorithms():
    rng = np.random.default_rng(1)
    data = _dataset(rng, T=4, n=32, M=8, orthogonal=True)
    lam = 0.37
    z = np.einsum("tnm,tn->mt", data.designs, data.responses) / data.n
    expected = np.vstack(
        [block_soft_threshold(z[j], lam * data.T) for j in range(data.M)]
    )
    for algorithm in ("block-coordinate", "proximal-gradient"):
        res = solve_group_lasso(
            data, SolverConfig(lam=lam, algorithm=algorithm, max_iterations=500)
        )
        assert res.converged
        np.testing.assert_allclose(res.beta_hat.values, expected, atol=1e-8)


def test_algorithms_agree_on_general_design():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        data = _dataset(rng, T=3, n=40, M=12)
        lam = float(rng.uniform(0.05, 0.5))
        bcd = solve_group_lasso(data, SolverConfig(lam=lam, max_iterations=3000))
        pg = solve_group_lasso(
            data,
            SolverConfig(lam=lam, algorithm="proximal-gradient", max_iterations=20000),
        )
        assert bcd.converged and pg.converged
        assert objective(data, bcd.beta_hat, lam) == pytest.approx(
            objective(data, pg.beta_hat, lam), rel=1e-9, abs=1e-12
        )


def test_zero_solution_threshold():
    # beta_hat = 0 exactly iff lam >= max_j ||(X^T y)^j|| / (nT); brute-force
    # objective grid on a 2-variable instance agrees with the KKT cutoff.
    rng = np.random.default_rng(2)
    data = _dataset(rng, T=1, n=15, M=2)
    corr = np.einsum("tnm,tn->mt", data.designs, data.responses) / data.n
    cutoff = float(np.max(np.linalg.norm(corr, axis=1)))

    above = solve_group_lasso(data, SolverConfig(lam=cutoff * 1.0001))
    np.testing.assert_array_equal(above.beta_hat.values, np.zeros((2, 1)))
    below = solve_group_lasso(data, SolverConfig(lam=cutoff * 0.99))
    assert np.linalg.norm(below.beta_hat.values) > 0

    grid = np.linspace(-1.0, 1.0, 201)
    b0, b1 = np.meshgrid(grid, grid, indexing="ij")
    X, y = data.designs[0], data.responses[0]
    fits = X[:, 0][:, None, None] * b0 + X[:, 1][:, None, None] * b1
    sq = np.sum((fits - y[:, None, None]) ** 2, axis=0) / data.n
    for lam, expect_zero in ((cutoff * 1.0001, True), (cutoff * 0.5, False)):
        vals = sq + 2.0 * lam * (np.abs(b0) + np.abs(b1))
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        is_zero = grid[i] == 0.0 and grid[j] == 0.0
        assert is_zero == expect_zero


def test_kkt_residual_semantics():
    rng = np.random.default_rng(3)
    data = _dataset(rng, T=3, n=25, M=6)

    # orthogonal-to-y columns -> 0 residual at beta = 0
    X = data.designs.copy()
    y_perp = np.zeros((3, 25))
    data_perp = MultiTaskDataset(X, y_perp)
    assert kkt_residual(data_perp, GroupCoefficients.zeros(6, 3), 0.5) == 0.0

    # beta = 0 with lam below the max correlation -> strictly positive
    corr = np.einsum("tnm,tn->mt", data.designs, data.responses) / (25 * 3)
    max_corr = float(np.max(np.linalg.norm(corr, axis=1)))
    resid = kkt_residual(data, GroupCoefficients.zeros(6, 3), 0.5 * max_corr)
    assert resid == pytest.approx(0.5 * max_corr, rel=1e-12)

    res = solve_group_lasso(data, SolverConfig(lam=0.2, kkt_tolerance=1e-9))
    assert res.converged
    assert kkt_residual(data, res.beta_hat, 0.2) <= 1e-9


def test_converged_solution_beats_perturbations():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        data = _dataset(rng, T=2, n=30, M=8)
        lam = 0.15
        res = solve_group_lasso(data, SolverConfig(lam=lam, kkt_tolerance=1e-10))
        assert res.converged
        base = objective(data, res.beta_hat, lam)
        for _ in range(300):
            scale = 10.0 ** rng.uniform(-3, 0)
            step = rng.standard_normal((8, 2))
            cand = GroupCoefficients(res.beta_hat.values + scale * step)
            assert base <= objective(data, cand, lam) + 1e-12


def test_objective_trace_monotone():
    for algorithm in ("block-coordinate", "proximal-gradient"):
        rng = np.random.default_rng(11)
        data = _dataset(rng, T=3, n=40, M=10)
        res = solve_group_lasso(
            data, SolverConfig(lam=0.1, algorithm=algorithm, max_iterations=5000)
        )
        trace = np.array(res.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        assert res.iterations == len(trace) - 1 or res.iterations == len(trace)


def test_warm_start_and_iteration_cap():
    rng = np.random.default_rng(4)
    data = _dataset(rng, T=2, n=20, M=6)
    capped = solve_group_lasso(
        data, SolverConfig(lam=0.05, max_iterations=1, kkt_tolerance=1e-14)
    )
    assert capped.iterations <= 1
    full = solve_group_lasso(
        data,
        SolverConfig(
            lam=0.05, kkt_tolerance=1e-10, initial=capped.beta_hat, max_iterations=2000
        ),
    )
    assert full.converged


def test_block_coordinate_requires_unit_diagonal():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((2, 10, 4)) * 3.0
    data = MultiTaskDataset(X, rng.standard_normal((2, 10)))
    assert not data.unit_diagonal
    with pytest.raises(ValueError):
        solve_group_lasso(data, SolverConfig(lam=0.3))
    # proximal gradient accepts the same design
    res = solve_group_lasso(
        data, SolverConfig(lam=0.3, algorithm="proximal-gradient", max_iterations=5000)
    )
    assert res.converged


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(lam=0.0)
    with pytest.raises(ValueError):
        SolverConfig(lam=1.0, algorithm="newton")
    with pytest.raises(ValueError):
        SolverConfig(lam=1.0, max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(lam=1.0, kkt_tolerance=0.0)


# ---------------------------------------------------------------------------
# plain Lasso baseline

def test_lasso_zero_response():
    rng = np.random.default_rng(6)
    X = _normalized_design(rng, 2, 12, 5)
    data = MultiTaskDataset(X, np.zeros((2, 12)))
    res = solve_lasso_baseline(data, 0.2)
    np.testing.assert_array_equal(res.beta_hat.values, np.zeros((5, 2)))


def test_lasso_orthogonal_scalar_soft_threshold():
    rng = np.random.default_rng(7)
    data = _dataset(rng, T=1, n=24, M=6, orthogonal=True)
    lam = 0.3
    res = solve_lasso_baseline(data, lam)
    z = (data.designs[0].T @ data.responses[0]) / data.n
    # scalar subgradient condition: beta = sign(z) * max(|z| - lam*T, 0)
    expected = np.sign(z) * np.maximum(np.abs(z) - lam * 1, 0.0)
    np.testing.assert_allclose(res.beta_hat.values[:, 0], expected, atol=1e-10)
    assert lasso_kkt_residual(data, res.beta_hat, lam) <= 1e-8


def test_group_and_lasso_agree_for_single_task():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        data = _dataset(rng, T=1, n=30, M=8)
        lam = float(rng.uniform(0.05, 0.4))
        group = solve_group_lasso(data, SolverConfig(lam=lam, kkt_tolerance=1e-12))
        plain = solve_lasso_baseline(data, lam, kkt_tolerance=1e-12)
        np.testing.assert_allclose(
            group.beta_hat.values, plain.beta_hat.values, atol=1e-8
        )


def test_lasso_decomposes_across_tasks():
    rng = np.random.default_rng(8)
    data = _dataset(rng, T=3, n=20, M=5)
    lam = 0.12
    joint = solve_lasso_baseline(data, lam, kkt_tolerance=1e-12)
    for t in range(3):
        single = MultiTaskDataset(data.designs[t : t + 1], data.responses[t : t + 1])
        # the 1/(nT) loss normalization makes the per-task subproblem a
        # single-task Lasso at penalty lam*T
        solo = solve_lasso_baseline(single, lam * data.T, kkt_tolerance=1e-12)
        np.testing.assert_allclose(
            joint.beta_hat.values[:, t], solo.beta_hat.values[:, 0], atol=1e-10
        )


def test_lasso_handles_unnormalized_columns():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((2, 25, 6))
    X[:, :, 0] *= 4.0  # deliberately badly scaled column
    data = MultiTaskDataset(X, rng.standard_normal((2, 25)))
    res = solve_lasso_baseline(data, 0.1, max_iterations=5000)
    assert res.converged
    assert lasso_kkt_residual(data, res.beta_hat, 0.1) <= 1e-8


def test_solution_support_is_sane():
    rng = np.random.default_rng(10)
    data = _dataset(rng, T=4, n=40, M=12, orthogonal=True)
    res = solve_group_lasso(data, SolverConfig(lam=0.3))
    # block shrinkage produces exact zeros, so tol=0 support is meaningful
    support = group_support(res.beta_hat, 0.0)
    norms = np.linalg.norm(res.beta_hat.values, axis=1)
    assert set(support) == {j for j in range(12) if norms[j] > 0}
