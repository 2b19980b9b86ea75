import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsrk.exceptions import ContractError, InputError
from lsrk.kernels import FunctionEstimate, Gaussian, gram_matrix, rkhs_norm_sq
from lsrk.simulation import SimulationConfig, generate, mu_x1, replication_rng
from lsrk.smoothing import (
    RawTargets,
    RidgeDesign,
    fit_mean_function,
    fit_regularized,
    objective,
    weight_vector,
    weighted_loss,
)

from oracles import cg_fitted_values, loop_gram, loop_loss

K = Gaussian(0.1)


def _instance(rng, n=3, m=2, ties=False):
    sizes = np.full(n, m) if np.isscalar(m) else np.asarray(m)
    pts = rng.uniform(0, 1, sizes.sum())
    if ties:
        pts[1::3] = pts[0]
    return pts, RawTargets(rng.standard_normal(sizes.sum()), sizes)


def test_weight_vector_examples():
    np.testing.assert_array_equal(weight_vector([1]), [1.0])
    np.testing.assert_array_equal(weight_vector([4, 4]), np.full(8, 0.5))
    np.testing.assert_allclose(weight_vector([2, 3]), [2 ** -0.5] * 2 + [3 ** -0.5] * 3)
    with pytest.raises(ContractError):
        weight_vector([2, 0])


def test_weighted_loss_examples(rng):
    pts = np.array([0.1, 0.4, 0.6, 0.9])
    ones = RawTargets(np.ones(4), [2, 2])
    assert weighted_loss(FunctionEstimate.zero(K, pts), ones, pts) == pytest.approx(1.0)
    g = rng.standard_normal(4)
    interp = FunctionEstimate(K, pts, np.linalg.solve(gram_matrix(K, pts), g))
    assert weighted_loss(interp, RawTargets(g, [2, 2]), pts) == pytest.approx(0.0, abs=1e-20)


def test_weighted_loss_matches_loop(rng):
    pts, targets = _instance(rng, n=5, m=[1, 2, 3, 4, 5])
    f = FunctionEstimate(K, rng.uniform(0, 1, 4), rng.standard_normal(4))
    fitted = f(pts)
    assert weighted_loss(f, targets, pts) == pytest.approx(loop_loss(fitted, targets.values, targets.group_sizes), rel=1e-13)


def test_raw_targets_validation():
    with pytest.raises(ContractError):
        RawTargets([1.0, 2.0], [3])
    with pytest.raises(InputError):
        RawTargets([1.0, np.inf], [2])


def test_single_observation_hand_solve():
    for c, lam in [(2.0, 0.1), (-1.5, 3.0)]:
        fit = fit_regularized(RawTargets([c], [1]), [0.3], K, lam)
        # (1/M)/((1/M) + lam) scaling with M = 1
        assert fit.estimate.coefficients[0] == pytest.approx((c / 1) / (1 + lam), rel=1e-14)


def test_large_lambda_shrinks_to_zero(rng):
    pts, targets = _instance(rng, n=4, m=3)
    fit = fit_regularized(targets, pts, K, 1e8)
    assert np.max(np.abs(fit.estimate.coefficients)) < 1e-6
    assert np.max(np.abs(fit.estimate(np.linspace(0, 1, 20)))) < 1e-6


def test_optimal_against_perturbations(rng):
    pts, targets = _instance(rng, n=3, m=2)
    lam = 0.1
    fit = fit_regularized(targets, pts, K, lam)
    best = objective(fit.estimate, targets, pts, lam)
    assert best == pytest.approx(fit.objective, rel=1e-12)
    a = fit.estimate.coefficients
    for _ in range(1000):
        d = rng.standard_normal(a.size)
        d *= rng.uniform(0, 1e-3) / np.linalg.norm(d)
        other = FunctionEstimate(K, fit.estimate.knots, a + d)
        assert objective(other, targets, pts, lam) >= best - 1e-15


@pytest.mark.parametrize("ties", [False, True])
def test_matches_conjugate_gradient(rng, ties):
    for _ in range(10):
        sizes = rng.integers(1, 5, size=rng.integers(2, 7))
        pts, targets = _instance(rng, m=sizes, ties=ties)
        lam = float(10 ** rng.uniform(-3, 0))
        fit = fit_regularized(targets, pts, K, lam)
        ref = cg_fitted_values(K, pts, targets.values, sizes, lam)
        mine = fit.estimate(pts)
        assert np.linalg.norm(mine - ref) <= 1e-6 * max(np.linalg.norm(ref), 1e-12)


def test_ties_are_merged_exactly(rng):
    pts, targets = _instance(rng, n=6, m=3, ties=True)
    design = RidgeDesign(pts, targets.group_sizes)
    assert design.has_ties and design.knots.size < pts.size
    assert design.knot_weight.sum() == pytest.approx(6.0)


def test_equal_group_sizes_reduce_to_kernel_ridge(rng):
    n, m, lam = 5, 4, 0.02
    pts, targets = _instance(rng, n=n, m=m)
    q = loop_gram(K, pts)
    # with M_i = M the loss is (1/N) sum (g - f)^2, so (Q + N lam I) a = g
    a = np.linalg.solve(q + n * m * lam * np.eye(n * m), targets.values)
    fit = fit_regularized(targets, pts, K, lam)
    np.testing.assert_allclose(fit.estimate(pts), q @ a, rtol=1e-8, atol=1e-10)


def test_multiple_targets_share_factorisation(rng):
    pts, targets = _instance(rng, n=5, m=3)
    design = RidgeDesign(pts, targets.group_sizes)
    g2 = rng.standard_normal(pts.size)
    both, _ = design.solve(K, 0.05, np.column_stack([targets.values, g2]))
    one, _ = design.solve(K, 0.05, targets.values)
    np.testing.assert_allclose(both[:, 0], one, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_lambda_monotonicity(seed):
    rng = np.random.default_rng(seed)
    pts, targets = _instance(rng, n=4, m=3)
    design = RidgeDesign(pts, targets.group_sizes)
    norms, losses = [], []
    for lam in (1e-3, 1e-2, 1e-1, 1.0):
        f = fit_regularized(targets, pts, K, lam, design=design).estimate
        norms.append(rkhs_norm_sq(f))
        losses.append(weighted_loss(f, targets, pts))
    assert all(a >= b - 1e-10 * max(1, a) for a, b in zip(norms, norms[1:]))
    assert all(a <= b + 1e-10 * max(1, b) for a, b in zip(losses, losses[1:]))


def test_nonpositive_lambda_rejected(rng):
    pts, targets = _instance(rng)
    with pytest.raises(ContractError):
        fit_regularized(targets, pts, K, 0.0)


def test_mean_of_constant_signal():
    grid = (np.arange(40) + 0.5) / 40
    sizes = np.full(30, 40)
    pts = np.tile(grid, 30)
    fit = fit_mean_function(np.full(pts.size, 3.0), pts, sizes, K, 1e-8)
    t = np.linspace(0.05, 0.95, 91)
    assert np.max(np.abs(fit.estimate(t) - 3.0)) < 1e-3


def test_mean_of_zero_signal(rng):
    pts = rng.uniform(0, 1, 12)
    fit = fit_mean_function(np.zeros(12), pts, [4, 4, 4], K, 0.01)
    np.testing.assert_array_equal(fit.estimate.coefficients, 0.0)


def test_dense_noiseless_mean_tracks_cross_sectional_mean():
    # The sample mean of 200 curves is itself ~0.3 from the population mean
    # (sd of X1 is about 4.3), so the smoother is checked against it instead.
    config = SimulationConfig(study=1, n=200, stn=float("inf"), design="dense", m_dense=50)
    ds, _ = generate(config, replication_rng(3, 0))
    grid = ds.subjects[0].times
    empirical = np.mean([s.u[0] for s in ds.subjects], axis=0)
    # a narrower bandwidth than the default resolves the peak of mu_X1 at t = 0.5
    fit = fit_mean_function(ds.pooled_u()[0], ds.pooled().times, ds.group_sizes, Gaussian(0.03), 1e-8)
    inner = (grid >= 0.05) & (grid <= 0.95)
    assert np.max(np.abs(fit.estimate(grid) - empirical)[inner]) < 1e-3
    assert np.max(np.abs(empirical - mu_x1(grid))) < 4 * 4.3 / np.sqrt(200)
