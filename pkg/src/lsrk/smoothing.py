"""Subject-weighted RKHS ridge smoother.

Given raw targets ``g_ij`` observed at pooled times ``T_ij`` this finds the
function ``f`` in ``H(K)`` minimising

    (1/n) sum_i (1/M_i) sum_j (g_ij - f(T_ij))**2 + lam * ||f||^2.

By the representer theorem ``f = sum a_k K(., T_k)`` and the minimiser
solves ``(W Q + n lam I) a = W g`` with ``W = diag(1/M_i)``. The system is
solved in the symmetric form ``(W^1/2 Q W^1/2 + n lam I) b = W^1/2 g`` with
``a = W^1/2 b`` so a Cholesky factorisation applies.

Tied knots are merged before solving. Every observation at a tied time
point contributes to one kernel section, so the merged system has the same
minimiser and needs only one row per distinct time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .exceptions import ContractError, InputError, NumericalError
from .kernels import FunctionEstimate, Kernel, evaluate, gram_matrix, rkhs_norm_sq

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
LAMBDA_GRID = tuple(np.logspace(-6, 0, 10))
FACTOR_CACHE = 4


@dataclass(frozen=True, eq=False)
class RawTargets:
    """Targets ``g`` in pooled order together with the subject sizes ``M_i``."""

    values: np.ndarray
    group_sizes: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        sizes = np.array(self.group_sizes, dtype=np.int64).ravel()
        if np.any(sizes < 1):
            raise ContractError("every subject needs at least one observation")
        if sizes.sum() != values.shape[0]:
            raise ContractError(f"{values.shape[0]} targets do not match group sizes summing to {sizes.sum()}")
        if not np.all(np.isfinite(values)):
            raise InputError("raw targets must be finite")
        values.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "group_sizes", sizes)


@dataclass(frozen=True)
class SmoothingFit:
    estimate: FunctionEstimate
    lam: float
    objective: float
    jitter: float = 0.0


def weight_vector(group_sizes) -> np.ndarray:
    """Per-observation weights ``1/sqrt(M_i)``."""
    sizes = np.asarray(group_sizes, dtype=np.int64).ravel()
    if sizes.size == 0 or np.any(sizes < 1):
        raise ContractError("group sizes must all be at least 1")
    return np.repeat(1.0 / np.sqrt(sizes), sizes)


def weighted_loss(f: FunctionEstimate, targets: RawTargets, points) -> float:
    points = np.asarray(points, dtype=np.float64).ravel()
    if points.shape != targets.values.shape:
        raise ContractError("points and targets differ in length")
    resid = targets.values - evaluate(f, points)
    return _loss(resid, targets.group_sizes)


def _loss(resid, sizes) -> float:
    w = np.repeat(1.0 / sizes, sizes)
    return float(np.sum(w * resid * resid) / sizes.shape[0])


class RidgeDesign:
    """Knot bookkeeping and cached Gram matrices for one set of pooled times.

    Parameters
    ----------
    points : array of shape (N,)
        Pooled observation times.
    group_sizes : array of shape (n,)
        Observations per subject, in pooled order.
    """

    def __init__(self, points, group_sizes):
        points = np.asarray(points, dtype=np.float64).ravel()
        sizes = np.asarray(group_sizes, dtype=np.int64).ravel()
        if sizes.size == 0 or np.any(sizes < 1):
            raise ContractError("group sizes must all be at least 1")
        if sizes.sum() != points.shape[0]:
            raise ContractError("group sizes do not match the number of points")
        self.points = points
        self.group_sizes = sizes
        self.n = sizes.shape[0]
        self.obs_weight = np.repeat(1.0 / sizes, sizes)

        _, first, inverse = np.unique(points, return_index=True, return_inverse=True)
        # distinct knots in order of first appearance
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        self.knots = points[first[order]]
        self.inverse = rank[inverse.ravel()]
        self.knot_weight = np.bincount(self.inverse, weights=self.obs_weight, minlength=self.knots.size)
        self._gram: dict = {}
        self._factors: dict = {}

    @property
    def has_ties(self) -> bool:
        return self.knots.size < self.points.size

    def gram(self, kernel: Kernel) -> np.ndarray:
        key = kernel.factors()
        if key not in self._gram:
            self._gram[key] = gram_matrix(kernel, self.knots)
        return self._gram[key]

    def aggregate(self, g) -> np.ndarray:
        """Weighted sums ``sum (1/M_i) g_ij`` over observations tied at each knot."""
        g = np.asarray(g, dtype=np.float64)
        wg = self.obs_weight.reshape((-1,) + (1,) * (g.ndim - 1)) * g
        if g.ndim == 1:
            return np.bincount(self.inverse, weights=wg, minlength=self.knots.size)
        out = np.zeros((self.knots.size, g.shape[1]))
        np.add.at(out, self.inverse, wg)
        return out

    def factor(self, kernel: Kernel, lam: float):
        """Cholesky factor of ``W^1/2 Q W^1/2 + n lam I`` with jitter escalation.

        The most recent few factorisations are cached, since kernels often
        coincide across targets (e.g. equal bandwidths).
        """
        key = (kernel.factors(), float(lam))
        if key not in self._factors:
            if len(self._factors) >= FACTOR_CACHE:
                self._factors.pop(next(iter(self._factors)))
            self._factors[key] = self._factor(kernel, lam)
        return self._factors[key]

    def _factor(self, kernel: Kernel, lam: float):
        if not lam > 0:
            raise ContractError(f"smoothing parameter must be positive, got {lam!r}")
        sw = np.sqrt(self.knot_weight)
        system = sw[:, None] * self.gram(kernel) * sw[None, :]
        system[np.diag_indices_from(system)] += self.n * lam
        prev = 0.0
        for jitter in JITTER_LADDER:
            if jitter:
                system[np.diag_indices_from(system)] += jitter - prev
            try:
                return linalg.cho_factor(system, lower=True, check_finite=False), jitter
            except linalg.LinAlgError:
                prev = jitter
                continue
        raise NumericalError(
            f"ridge system is singular for lambda={lam:g} even with jitter {JITTER_LADDER[-1]:g}; "
            "use a larger smoothing parameter"
        )

    def solve(self, kernel: Kernel, lam: float, g):
        """Expansion coefficients over ``self.knots`` for targets ``g``.

        ``g`` may be (N,) or (N, r) to fit r targets sharing kernel and lambda.
        Returns ``(coefficients, jitter)``.
        """
        (cho, jitter) = self.factor(kernel, lam)
        sw = np.sqrt(self.knot_weight)
        h = self.aggregate(g)
        rhs = h / (sw if h.ndim == 1 else sw[:, None])
        b = linalg.cho_solve(cho, rhs, check_finite=False)
        return (b * sw if b.ndim == 1 else b * sw[:, None]), jitter

    def fitted(self, kernel: Kernel, coefficients) -> np.ndarray:
        """Fitted values at every pooled point (not just distinct knots)."""
        return (self.gram(kernel) @ coefficients)[self.inverse]


def fit_regularized(
    targets: RawTargets,
    points,
    kernel: Kernel,
    lam: float,
    design: Optional[RidgeDesign] = None,
) -> SmoothingFit:
    """Penalised weighted least-squares fit of ``targets`` in ``H(kernel)``.

    Parameters
    ----------
    targets : RawTargets
        Raw values ``g_ij`` and subject sizes.
    points : array of shape (N,)
        Pooled times ``T_ij`` in the same order as the targets.
    kernel : Kernel
        Reproducing kernel of the hypothesis space.
    lam : float
        Smoothing parameter, strictly positive.
    design : RidgeDesign, optional
        Precomputed design for ``points``; reuses its cached Gram matrices.

    Returns
    -------
    SmoothingFit
        The expansion over the distinct pooled knots, ``lam``, and the
        achieved objective value.
    """
    if design is None:
        design = RidgeDesign(points, targets.group_sizes)
    elif design.points.shape != targets.values.shape:
        raise ContractError("design does not match the targets")
    coef, jitter = design.solve(kernel, lam, targets.values)
    if jitter:
        logger.warning("ridge system for %s needed jitter %g at lambda=%g", kernel, jitter, lam)
    quad = float(coef @ design.gram(kernel) @ coef)
    resid = targets.values - design.fitted(kernel, coef)
    objective = _loss(resid, design.group_sizes) + lam * quad
    return SmoothingFit(FunctionEstimate(kernel, design.knots, coef), float(lam), objective, jitter)


def fit_mean_function(values, points, group_sizes, kernel: Kernel, lam: float, design=None) -> SmoothingFit:
    """Smoothed mean of one observed variable (``U_p`` or ``V``) over [0, 1]."""
    return fit_regularized(RawTargets(values, group_sizes), points, kernel, lam, design=design)


def objective(f: FunctionEstimate, targets: RawTargets, points, lam: float) -> float:
    """Loss plus penalty for an arbitrary expansion."""
    return weighted_loss(f, targets, points) + lam * rkhs_norm_sq(f)
