"""Gauss-Legendre quadrature and the MADE / WASE error summaries.

Both summaries average range-normalised integrated errors over the
coefficient functions included in the comparison. The normaliser is the
number of functions actually summed, so a model without scalar covariates
still gets a finite value.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .exceptions import ContractError

QUAD_NODES = 50
RANGE_GRID = np.linspace(0.0, 1.0, 1001)


@lru_cache(maxsize=32)
def _legendre(nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_nodes(a: float, b: float, nodes: int = QUAD_NODES):
    """Nodes and weights of the ``nodes``-point rule mapped to [a, b]."""
    if nodes < 1:
        raise ContractError("quadrature needs at least one node")
    if not a < b:
        raise ContractError("quadrature interval must satisfy a < b")
    x, w = _legendre(int(nodes))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


class SampledFunction:
    """A function known on a sorted grid.

    Calling it on exactly that grid returns the stored values; any other
    times are linearly interpolated, with constant extension past the ends.
    """

    def __init__(self, t, values):
        self.t = np.asarray(t, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ContractError("sampled function needs matching 1-d grid and values")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if t.shape == self.t.shape and np.array_equal(t, self.t):
            return self.values
        return np.interp(t, self.t, self.values)


def gauss_legendre_integrate(f: Callable, a: float, b: float, nodes: int = QUAD_NODES) -> float:
    """Integrate a vectorised ``f`` over [a, b]; exact for degree <= 2*nodes - 1."""
    t, w = gauss_legendre_nodes(a, b, nodes)
    return float(np.dot(w, np.asarray(f(t), dtype=np.float64)))


def function_range(f: Callable, name: str = "function") -> float:
    values = np.asarray(f(RANGE_GRID), dtype=np.float64)
    r = float(values.max() - values.min())
    if r == 0.0:
        raise ContractError(f"{name} is flat on [0, 1]; its range cannot normalise an error")
    return r


def integrated_errors(truth: Sequence[Callable], estimated: Sequence[Callable], names=None, nodes: int = QUAD_NODES):
    """Per-function ``(int |e|, int e^2, range)`` with ``e = truth - estimate``."""
    if len(truth) != len(estimated):
        raise ContractError("truth and estimate lists differ in length")
    names = names or [f"f{i}" for i in range(len(truth))]
    t, w = gauss_legendre_nodes(0.0, 1.0, nodes)
    out = []
    for f, g, name in zip(truth, estimated, names):
        err = np.asarray(f(t), dtype=np.float64) - np.asarray(g(t), dtype=np.float64)
        out.append((float(w @ np.abs(err)), float(w @ (err * err)), function_range(f, name)))
    return out


def made(truth: Sequence[Callable], estimated: Sequence[Callable], names=None, nodes: int = QUAD_NODES) -> float:
    """Mean absolute deviation error over the supplied coefficient functions."""
    errs = integrated_errors(truth, estimated, names, nodes)
    if not errs:
        raise ContractError("MADE needs at least one function")
    return sum(a / r for a, _, r in errs) / len(errs)


def wase(truth: Sequence[Callable], estimated: Sequence[Callable], names=None, nodes: int = QUAD_NODES) -> float:
    """Weighted average squared error over the supplied coefficient functions."""
    errs = integrated_errors(truth, estimated, names, nodes)
    if not errs:
        raise ContractError("WASE needs at least one function")
    return sum(s / (r * r) for _, s, r in errs) / len(errs)


@dataclass
class MetricsReport:
    """MADE / WASE for one fit, or aggregated over Monte Carlo replications."""

    made: float
    wase: float
    per_function_ise: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
