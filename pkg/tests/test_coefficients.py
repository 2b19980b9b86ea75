import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsrk.coefficients import (
    RIDGE_LADDER,
    CoefficientEstimates,
    EvaluationGrid,
    assemble_gamma_matrix,
    assemble_gamma_vector,
    coefficients_on,
    estimate_coefficients,
    intercept,
    read_coefficient_csv,
    solve_pointwise,
)
from lsrk.covariance import CovarianceSet, ProcessKernels, estimate_covariance_set
from lsrk.data import LongitudinalDataset, SubjectRecord
from lsrk.exceptions import ContractError, InputError, SingularSystemError
from lsrk.kernels import FunctionEstimate, Gaussian, evaluate
from lsrk.selection import SmoothingConfig
from lsrk.simulation import SimulationConfig, generate, replication_rng

from conftest import make_dataset

FIXED = SmoothingConfig.fixed(0.02)


def test_solve_pointwise_examples(rng):
    x, eps = solve_pointwise([[2.0]], [4.0])
    assert x[0] == 2.0 and eps == 0.0
    g = rng.standard_normal(3)
    x, eps = solve_pointwise(np.eye(3), g)
    np.testing.assert_array_equal(x, g)
    assert eps == 0.0


def test_solve_pointwise_near_singular(rng):
    q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    a = q @ np.diag([1.0, 1e-14]) @ q.T
    g = rng.standard_normal(2)
    x, eps = solve_pointwise(a, g)
    assert eps > 0
    assert np.linalg.norm((a + eps * np.eye(2)) @ x - g) <= 1e-8 * np.linalg.norm(g)


def test_solve_pointwise_failures():
    with pytest.raises(SingularSystemError):
        solve_pointwise([[np.nan]], [1.0], t=0.5)
    with pytest.raises(ContractError):
        solve_pointwise(np.eye(2), [1.0])


def test_evaluation_grid():
    g = EvaluationGrid.default()
    assert len(g) == 100 and g.points[0] == 0.005 and g.points[-1] == 0.995
    for bad in ([], [0.5, 0.4], [-0.1, 0.5]):
        with pytest.raises(InputError):
            EvaluationGrid(bad)


def test_gamma_blocks_single_predictor(rng):
    cs = estimate_covariance_set(make_dataset(rng, n=10), ProcessKernels.default(1), FIXED)
    t = 0.42
    np.testing.assert_array_equal(assemble_gamma_matrix(cs, t), [[evaluate(cs.xx(0, 0), t)]])
    np.testing.assert_array_equal(assemble_gamma_vector(cs, t), [evaluate(cs.cov_yx[0], t)])


def test_gamma_blocks_covariates_only(rng):
    ds = make_dataset(rng, n=10, d1=0, d2=2)
    cs = estimate_covariance_set(ds, ProcessKernels(Gaussian(0.1), ()), FIXED)
    for t in (0.1, 0.8):
        np.testing.assert_allclose(assemble_gamma_matrix(cs, t), cs.cov_zz, rtol=1e-15)
    est = coefficients_on(cs, np.linspace(0.1, 0.9, 5))
    assert est.beta.shape == (0, 5) and est.alpha.shape == (2, 5)


def test_gamma_blocks_entrywise(rng):
    cs = estimate_covariance_set(make_dataset(rng, n=12, d1=2, d2=1), ProcessKernels.default(2), FIXED)
    t = 0.5
    m = assemble_gamma_matrix(cs, t)
    ref = np.array(
        [
            [evaluate(cs.xx(0, 0), t), evaluate(cs.xx(0, 1), t), evaluate(cs.cov_xz[(0, 0)], t)],
            [evaluate(cs.xx(0, 1), t), evaluate(cs.xx(1, 1), t), evaluate(cs.cov_xz[(1, 0)], t)],
            [evaluate(cs.cov_xz[(0, 0)], t), evaluate(cs.cov_xz[(1, 0)], t), cs.cov_zz[0, 0]],
        ]
    )
    np.testing.assert_allclose(m, ref, rtol=1e-14)
    t = 0.3
    v = assemble_gamma_vector(cs, t)
    np.testing.assert_allclose(v, [evaluate(cs.cov_yx[0], t), evaluate(cs.cov_yx[1], t), evaluate(cs.cov_yz[0], t)], rtol=1e-14)
    gam_batched = coefficients_on(cs, np.array([t]))
    x, _ = solve_pointwise(assemble_gamma_matrix(cs, t), v)
    np.testing.assert_allclose(gam_batched.beta[:, 0], x[:2], rtol=1e-10)


def test_zero_covariance_vector():
    zero = FunctionEstimate.zero(Gaussian(0.1), [0.5])
    cs = CovarianceSet(zero, (zero,), np.zeros(1), {(0, 0): zero}, {(0, 0): zero}, (zero,), (zero,), np.eye(1))
    np.testing.assert_array_equal(assemble_gamma_vector(cs, 0.3), [0.0, 0.0])


def test_intercept_examples(rng):
    cs = estimate_covariance_set(make_dataset(rng, n=10), ProcessKernels.default(1), FIXED)
    t = 0.6
    assert intercept(cs, [0.0], t) == pytest.approx(evaluate(cs.mu_y, t))
    b = 1.7
    assert intercept(cs, [b], t) == pytest.approx(evaluate(cs.mu_y, t) - b * evaluate(cs.mu_x[0], t))
    est = coefficients_on(cs, np.array([t]))
    assert est.beta0[0] == pytest.approx(intercept(cs, est.beta[:, 0], t), rel=1e-12)


def test_scalar_ratio_identity(rng):
    ds = make_dataset(rng, n=25, d1=1, d2=0)
    est = estimate_coefficients(ds, lambdas=SmoothingConfig(cv_folds=5))
    t = est.grid.points
    ratio = est.covset.cov_yx[0](t) / est.covset.xx(0, 0)(t)
    ok = est.ridge_used == 0
    np.testing.assert_allclose(est.beta[0][ok], ratio[ok], rtol=1e-12)


def test_constant_response_has_no_association(rng):
    grid = (np.arange(50) + 0.5) / 50
    subs = tuple(
        SubjectRecord(str(i), grid, [np.sin(2 * np.pi * grid) * rng.standard_normal()], np.full(50, 2.5), [])
        for i in range(60)
    )
    est = estimate_coefficients(LongitudinalDataset(subs, 1, 0), lambdas=SmoothingConfig.fixed(1e-8))
    assert np.max(np.abs(est.beta0 - 2.5)) < 1e-2
    inner = np.abs(np.sin(2 * np.pi * est.grid.points)) > 0.2
    assert np.max(np.abs(est.beta[0][inner])) < 1e-2


def test_study2_table_shape_and_csv_round_trip(tmp_path):
    ds, _ = generate(SimulationConfig(study=2, n=40), replication_rng(1, 0))
    est = estimate_coefficients(ds, lambdas=FIXED)
    table = est.table()
    assert table.shape == (100, 1 + 1 + 2 + 1 + 1)
    assert np.all(np.isfinite(table))
    assert est.columns() == ["t", "beta0", "beta1", "beta2", "alpha1", "ridge_used"]
    est.write_csv(tmp_path / "c.csv")
    back = read_coefficient_csv(tmp_path / "c.csv")
    for i, name in enumerate(est.columns()):
        np.testing.assert_array_equal(back[name], table[:, i])


def test_at_matches_grid(rng):
    est = estimate_coefficients(make_dataset(rng, n=15, d1=2, d2=1), lambdas=FIXED, grid=EvaluationGrid([0.2, 0.5, 0.8]))
    got = est.at([0.5])
    assert got["beta"][:, 0] == pytest.approx(est.beta[:, 1], rel=1e-12)
    assert got["alpha"][0, 0] == pytest.approx(est.alpha[0, 1], rel=1e-12)
    bare = CoefficientEstimates(est.grid, est.beta0, est.beta, est.alpha, est.ridge_used)
    with pytest.raises(ContractError):
        bare.at(0.5)


def test_dense_noiseless_intercept_recovery():
    config = SimulationConfig(study=1, n=400, design="dense", m_dense=50)
    ds, truth = generate(config, replication_rng(2, 0))
    est = estimate_coefficients(ds)
    t = est.grid.points
    inner = (t >= 0.05) & (t <= 0.95)
    assert np.max(np.abs(est.beta0 - truth["beta0"](t))[inner]) < 0.15


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), k=st.integers(1, 4), log_gap=st.floats(0, 16))
def test_residual_contract(seed, k, log_gap):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    eig = np.logspace(0, -log_gap, k)
    a = (q * eig) @ q.T
    a = (a + a.T) / 2
    g = rng.standard_normal(k)
    x, eps = solve_pointwise(a, g)
    assert any(np.isclose(eps, lvl * np.trace(a) / k, rtol=1e-12, atol=0) for lvl in RIDGE_LADDER)
    assert np.linalg.norm((a + eps * np.eye(k)) @ x - g) <= 1e-8 * max(1.0, np.linalg.norm(g))
