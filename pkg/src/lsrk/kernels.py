"""Reproducing kernels on [0, 1], Gram matrices, and representer expansions.

Two kernel shapes are supported: a Gaussian ``exp(-(s - t)**2 / (2 theta**2))``
and the pointwise product of two kernels. Products of reproducing kernels are
again reproducing kernels, which is what lets covariance and cross-covariance
functions be fitted in ``H(K1 K2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from ._backend import core
from .exceptions import ContractError, InputError

TOL_PSD = 1e-8
MAX_KNOTS = 5000


@dataclass(frozen=True)
class Gaussian:
    theta: float

    def __post_init__(self):
        theta = float(self.theta)
        if not (theta > 0 and math.isfinite(theta)):
            raise InputError(f"Gaussian bandwidth must be positive, got {self.theta!r}")
        object.__setattr__(self, "theta", theta)

    @property
    def depth(self) -> int:
        return 1

    def factors(self) -> tuple:
        return (1.0 / (2.0 * self.theta * self.theta),)

    def to_dict(self) -> dict:
        return {"type": "gaussian", "theta": self.theta}

    def __str__(self):
        return f"gaussian({self.theta:g})"


@dataclass(frozen=True)
class Product:
    left: "Kernel"
    right: "Kernel"

    def __post_init__(self):
        if self.depth > 2:
            raise InputError("product kernels nest at most one level deep")

    @property
    def depth(self) -> int:
        return 1 + max(self.left.depth, self.right.depth)

    def factors(self) -> tuple:
        # sorted so that K1*K2 and K2*K1 produce bit-identical matrices
        return tuple(sorted(self.left.factors() + self.right.factors()))

    def to_dict(self) -> dict:
        return {"type": "product", "left": self.left.to_dict(), "right": self.right.to_dict()}

    def __str__(self):
        return f"{self.left}*{self.right}"


Kernel = Union[Gaussian, Product]


def kernel_from_dict(data: dict) -> Kernel:
    kind = data.get("type")
    if kind == "gaussian":
        return Gaussian(data["theta"])
    if kind == "product":
        return Product(kernel_from_dict(data["left"]), kernel_from_dict(data["right"]))
    raise InputError(f"unknown kernel type {kind!r}")


def _coefs(k: Kernel) -> np.ndarray:
    return np.array(k.factors(), dtype=np.float64)


def kernel_eval(k: Kernel, s: float, t: float) -> float:
    d = float(s) - float(t)
    out = 1.0
    for c in k.factors():
        out *= math.exp(-d * d * c)
    return out


def gram_matrix(k: Kernel, points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).ravel()
    if points.size == 0:
        raise ContractError("gram_matrix needs at least one point")
    if points.size > MAX_KNOTS:
        raise InputError(
            f"{points.size} knots exceed the dense Gram cap of {MAX_KNOTS}; raise lsrk.kernels.MAX_KNOTS"
        )
    return core.gram(points, _coefs(k))


def cross_gram_matrix(k: Kernel, s, t) -> np.ndarray:
    """Matrix ``[K(s_i, t_j)]``."""
    return core.cross_gram(np.asarray(s, dtype=np.float64).ravel(), np.asarray(t, dtype=np.float64).ravel(), _coefs(k))


def product_gram_matrix(k1: Kernel, k2: Kernel, points) -> np.ndarray:
    """Gram matrix of the pointwise product kernel ``k1 * k2``.

    Equal to the Hadamard product of the two Gram matrices.
    """
    return gram_matrix(Product(k1, k2), points)


def check_nonneg_definite(m, tol: float = TOL_PSD) -> bool:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > tol * scale:
        raise ContractError("matrix is not symmetric")
    return bool(np.linalg.eigvalsh(m).min() >= -tol)


@dataclass(frozen=True, eq=False)
class FunctionEstimate:
    """Representer expansion ``f(t) = sum_k a_k K(t, knot_k)``."""

    kernel: Kernel
    knots: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        knots = np.array(self.knots, dtype=np.float64).ravel()
        coefficients = np.array(self.coefficients, dtype=np.float64).ravel()
        if knots.shape != coefficients.shape:
            raise InputError("knots and coefficients must have the same length")
        if not np.all(np.isfinite(coefficients)):
            raise InputError("coefficients must be finite")
        knots.setflags(write=False)
        coefficients.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coefficients", coefficients)

    def __call__(self, t):
        return evaluate(self, t)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "knots": self.knots.tolist(),
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FunctionEstimate":
        return cls(kernel_from_dict(data["kernel"]), data["knots"], data["coefficients"])

    @classmethod
    def zero(cls, kernel: Kernel, knots) -> "FunctionEstimate":
        knots = np.asarray(knots, dtype=np.float64)
        return cls(kernel, knots, np.zeros_like(knots))


def evaluate(f: FunctionEstimate, t):
    """Value of ``f`` at a scalar or array of times."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
    if f.knots.size == 0:
        out = np.zeros(t.shape)
    else:
        out = core.expansion(t, f.knots, _coefs(f.kernel), f.coefficients)
    return float(out[0]) if scalar else out


def evaluate_many(kernel: Kernel, knots, coefficients, t) -> np.ndarray:
    """Evaluate several expansions sharing ``kernel`` and ``knots``.

    ``coefficients`` has shape (knots, functions); the result has shape
    (len(t), functions).
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
    return core.expansion(t, np.asarray(knots, dtype=np.float64), _coefs(kernel), np.asarray(coefficients))


def rkhs_norm_sq(f: FunctionEstimate) -> float:
    """Squared RKHS norm ``a' Q a`` of the expansion."""
    if f.knots.size == 0:
        return 0.0
    a = f.coefficients
    return float(a @ gram_matrix(f.kernel, f.knots) @ a)
