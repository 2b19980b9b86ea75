"""Pointwise recovery of the coefficient functions.

At each time ``t`` the slopes solve ``Gamma_t x = gamma_t`` where
``Gamma_t`` stacks the (cross-)covariances among predictors and
``gamma_t`` their covariances with the response. The intercept then
follows from the mean functions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .covariance import CovarianceSet, ProcessKernels, estimate_covariance_set
from .data import LongitudinalDataset
from .exceptions import ContractError, InputError, SingularSystemError
from .kernels import evaluate
from .selection import SmoothingConfig, select_lambdas_cv
from .smoothing import RidgeDesign

RIDGE_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
MAX_CONDITION = 1e12
MAX_RESIDUAL = 1e-8


@dataclass(frozen=True)
class EvaluationGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).ravel()
        if pts.size == 0:
            raise InputError("evaluation grid is empty")
        if np.any(np.diff(pts) <= 0):
            raise InputError("evaluation grid must be strictly increasing")
        if pts[0] < 0 or pts[-1] > 1:
            raise InputError("evaluation grid must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def default(cls, size: int = 100) -> "EvaluationGrid":
        return cls(np.linspace(0.005, 0.995, size))

    def __len__(self):
        return self.points.size


@dataclass(frozen=True, eq=False)
class CoefficientEstimates:
    """Coefficient functions on a grid: ``beta`` is (d1, G), ``alpha`` is (d2, G)."""

    grid: EvaluationGrid
    beta0: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    ridge_used: np.ndarray
    covset: Optional[CovarianceSet] = None
    config: Optional[SmoothingConfig] = None

    @property
    def d1(self) -> int:
        return self.beta.shape[0]

    @property
    def d2(self) -> int:
        return self.alpha.shape[0]

    def at(self, t) -> dict:
        """Evaluate the fitted coefficient functions at arbitrary times."""
        if self.covset is None:
            raise ContractError("on-demand evaluation needs the covariance set")
        est = coefficients_on(self.covset, t)
        return {"beta0": est.beta0, "beta": est.beta, "alpha": est.alpha, "ridge_used": est.ridge_used}

    def table(self) -> np.ndarray:
        """Rows ``t, beta0, beta1.., alpha1.., ridge_used``."""
        return np.column_stack([self.grid.points, self.beta0, self.beta.T, self.alpha.T, self.ridge_used])

    def columns(self) -> list:
        return (
            ["t", "beta0"]
            + [f"beta{p + 1}" for p in range(self.d1)]
            + [f"alpha{q + 1}" for q in range(self.d2)]
            + ["ridge_used"]
        )

    def write_csv(self, path, time_map=None) -> None:
        table = self.table()
        if time_map is not None:
            table = table.copy()
            table[:, 0] = time_map(table[:, 0])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns())
            for row in table:
                writer.writerow([repr(float(x)) for x in row])


def read_coefficient_csv(path) -> dict:
    """Load a coefficient table written by :meth:`CoefficientEstimates.write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def assemble_gamma_matrix(covset: CovarianceSet, t: float) -> np.ndarray:
    d1, d2 = covset.d1, covset.d2
    out = np.zeros((d1 + d2, d1 + d2))
    for p1 in range(d1):
        for p2 in range(d1):
            out[p1, p2] = evaluate(covset.xx(p1, p2), t)
        for q in range(d2):
            out[p1, d1 + q] = evaluate(covset.cov_xz[(p1, q)], t)
            out[d1 + q, p1] = out[p1, d1 + q]
    out[d1:, d1:] = covset.cov_zz
    return (out + out.T) / 2


def assemble_gamma_vector(covset: CovarianceSet, t: float) -> np.ndarray:
    return np.array(
        [evaluate(f, t) for f in covset.cov_yx] + [evaluate(f, t) for f in covset.cov_yz],
        dtype=np.float64,
    )


def _batched_systems(covset: CovarianceSet, t: np.ndarray):
    """``Gamma_t`` (G, k, k), ``gamma_t`` (G, k) and the means for every t."""
    d1, d2 = covset.d1, covset.d2
    vals = covset.evaluate_all(t)
    g = t.size
    gam = np.zeros((g, d1 + d2, d1 + d2))
    for p1 in range(d1):
        for p2 in range(p1, d1):
            gam[:, p1, p2] = gam[:, p2, p1] = vals[("xx", p1, p2)]
        for q in range(d2):
            gam[:, p1, d1 + q] = gam[:, d1 + q, p1] = vals[("xz", p1, q)]
    gam[:, d1:, d1:] = covset.cov_zz
    gam = (gam + np.swapaxes(gam, 1, 2)) / 2
    vec = np.column_stack(
        [vals[("yx", p)] for p in range(d1)] + [vals[("yz", q)] for q in range(d2)]
    ).reshape(g, d1 + d2)
    mu_y = vals[("mean_y",)]
    mu_x = np.array([vals[("mean_x", p)] for p in range(d1)]).reshape(d1, g)
    return gam, vec, mu_y, mu_x


def solve_pointwise(gamma_matrix, gamma_vector, t: Optional[float] = None):
    """Solve ``(Gamma + eps I) x = gamma`` with the smallest workable ``eps``.

    ``eps`` runs through ``{0, 1e-10, 1e-8, 1e-6, 1e-4}`` times the mean
    absolute diagonal; a level is accepted when the LU factorisation succeeds,
    the 2-norm condition number is below ``1e12`` and the residual
    ``|(Gamma + eps I) x - gamma|`` is at most ``1e-8 * max(1, |gamma|)``.

    Returns
    -------
    (x, eps)
    """
    a = np.asarray(gamma_matrix, dtype=np.float64)
    b = np.asarray(gamma_vector, dtype=np.float64)
    k = a.shape[0]
    if k < 1 or a.shape != (k, k) or b.shape != (k,):
        raise ContractError("solve_pointwise needs a square system of dimension >= 1")
    scale = abs(float(np.trace(a))) / k
    if scale == 0.0 or not np.isfinite(scale):
        scale = 1.0
    eye = np.eye(k)
    for level in RIDGE_LADDER:
        eps = level * scale
        system = a + eps * eye
        if not np.all(np.isfinite(system)):
            break
        if np.linalg.cond(system) >= MAX_CONDITION:
            continue
        try:
            lu = linalg.lu_factor(system, check_finite=False)
        except (linalg.LinAlgError, ValueError):
            continue
        if np.any(np.diag(lu[0]) == 0):
            continue
        x = linalg.lu_solve(lu, b, check_finite=False)
        if np.linalg.norm(system @ x - b) > MAX_RESIDUAL * max(1.0, float(np.linalg.norm(b))):
            continue
        return x, eps
    where = "" if t is None else f" at t={t:g}"
    raise SingularSystemError(f"coefficient system is singular{where} even with ridge {RIDGE_LADDER[-1]:g}*scale", t=t)


def intercept(covset: CovarianceSet, coefs_at_t, t: float) -> float:
    """Plug-in intercept ``mu_Y - sum beta_p mu_Xp - sum alpha_q mu_Zq``."""
    coefs = np.asarray(coefs_at_t, dtype=np.float64)
    d1 = covset.d1
    value = evaluate(covset.mu_y, t)
    for p in range(d1):
        value -= coefs[p] * evaluate(covset.mu_x[p], t)
    for q in range(covset.d2):
        value -= coefs[d1 + q] * covset.mu_z[q]
    return float(value)


def coefficients_on(covset: CovarianceSet, t) -> CoefficientEstimates:
    """Solve the pointwise systems at every time in ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
    d1, d2 = covset.d1, covset.d2
    if d1 + d2 == 0:
        raise ContractError("model has no predictors")
    gam, vec, mu_y, mu_x = _batched_systems(covset, t)
    sol = np.empty((t.size, d1 + d2))
    ridge = np.empty(t.size)
    for i in range(t.size):
        sol[i], ridge[i] = solve_pointwise(gam[i], vec[i], t=float(t[i]))
    beta = sol[:, :d1].T
    alpha = sol[:, d1:].T
    beta0 = mu_y - np.sum(beta * mu_x, axis=0) - (alpha.T @ covset.mu_z if d2 else 0.0)
    grid = EvaluationGrid(t) if np.all(np.diff(t) > 0) and t[0] >= 0 and t[-1] <= 1 else None
    return CoefficientEstimates(grid, beta0, beta, alpha, ridge, covset)


def estimate_coefficients(
    dataset: LongitudinalDataset,
    kernels: Optional[ProcessKernels] = None,
    lambdas: Optional[SmoothingConfig] = None,
    grid: Optional[EvaluationGrid] = None,
) -> CoefficientEstimates:
    """Full pipeline: lambdas (CV where requested), means, covariances, pointwise solves.

    Parameters
    ----------
    dataset : LongitudinalDataset
    kernels : ProcessKernels, optional
        Defaults to Gaussian kernels with bandwidth 0.1 for every process.
    lambdas : SmoothingConfig, optional
        Defaults to cross-validating every family.
    grid : EvaluationGrid, optional
        Defaults to 100 points on [0.005, 0.995].
    """
    kernels = kernels or ProcessKernels.default(dataset.d1)
    lambdas = lambdas or SmoothingConfig()
    grid = grid or EvaluationGrid.default()
    design = RidgeDesign(dataset.pooled().times, dataset.group_sizes)
    resolved = select_lambdas_cv(dataset, kernels, lambdas, design=design)
    covset = estimate_covariance_set(dataset, kernels, resolved, design=design)
    est = coefficients_on(covset, grid.points)
    return CoefficientEstimates(grid, est.beta0, est.beta, est.alpha, est.ridge_used, covset, resolved)
