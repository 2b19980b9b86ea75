"""Mean functions, raw covariance targets and the smoothed covariance set.

Hypothesis spaces follow from where sample paths live: with ``Y`` in
``H(K)`` and ``X_p`` in ``H(K_p)``,

* ``C_{X_p1 X_p2}`` is fitted in ``H(K_p1 K_p2)``,
* ``C_{X_p Z_q}`` in ``H(K_p)``,
* ``C_{Y X_p}`` in ``H(K K_p)``,
* ``C_{Y Z_q}`` in ``H(K)``.

Raw targets are products of centred observations at common times, the
diagonal included, so measurement-error variance is not removed from the
``XX`` targets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import LongitudinalDataset
from .exceptions import ContractError, InsufficientDataError
from .kernels import FunctionEstimate, Gaussian, Kernel, Product, evaluate, evaluate_many, kernel_from_dict
from .smoothing import RawTargets, RidgeDesign

FAMILIES = ("mean_y", "mean_x", "xx", "xz", "yx", "yz")


@dataclass(frozen=True)
class ProcessKernels:
    """Base kernel for the response (``y``) and for each functional predictor."""

    y: Kernel
    x: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))

    @classmethod
    def default(cls, d1: int, theta: float = 0.1) -> "ProcessKernels":
        return cls(Gaussian(theta), tuple(Gaussian(theta) for _ in range(d1)))

    def for_pair(self, pair: tuple) -> Kernel:
        family = pair[0]
        if family == "mean_y" or family == "yz":
            return self.y
        if family in ("mean_x", "xz"):
            return self.x[pair[1]]
        if family == "xx":
            return Product(self.x[pair[1]], self.x[pair[2]])
        if family == "yx":
            return Product(self.y, self.x[pair[1]])
        raise ContractError(f"unknown target family {family!r}")

    def to_dict(self) -> dict:
        return {"y": self.y.to_dict(), "x": [k.to_dict() for k in self.x]}

    @classmethod
    def from_dict(cls, data: dict) -> "ProcessKernels":
        return cls(kernel_from_dict(data["y"]), tuple(kernel_from_dict(k) for k in data["x"]))


def family_pairs(family: str, d1: int, d2: int) -> list:
    """All target keys of one family; indices are 0-based."""
    if family == "mean_y":
        return [("mean_y",)]
    if family == "mean_x":
        return [("mean_x", p) for p in range(d1)]
    if family == "xx":
        return [("xx", p1, p2) for p1 in range(d1) for p2 in range(p1, d1)]
    if family == "xz":
        return [("xz", p, q) for p in range(d1) for q in range(d2)]
    if family == "yx":
        return [("yx", p) for p in range(d1)]
    if family == "yz":
        return [("yz", q) for q in range(d2)]
    raise ContractError(f"unknown target family {family!r}")


def pair_label(pair: tuple) -> str:
    return pair[0] + "".join(f":{i + 1}" for i in pair[1:])


def parse_pair_label(label: str) -> tuple:
    """Inverse of :func:`pair_label`."""
    family, *idx = label.split(":")
    if family not in FAMILIES:
        raise ContractError(f"unknown target family in label {label!r}")
    try:
        return (family,) + tuple(int(i) - 1 for i in idx)
    except ValueError:
        raise ContractError(f"malformed pair label {label!r}")


def scalar_means(dataset: LongitudinalDataset) -> np.ndarray:
    """Sample means of the scalar covariates."""
    return dataset.covariates().mean(axis=0) if dataset.d2 else np.empty(0)


def scalar_covariances(dataset: LongitudinalDataset) -> np.ndarray:
    """Covariance matrix of the scalar covariates with divisor ``n``."""
    if dataset.n < 2:
        raise InsufficientDataError("scalar covariances need at least 2 subjects")
    z = dataset.covariates()
    zc = z - z.mean(axis=0)
    out = zc.T @ zc / dataset.n
    return (out + out.T) / 2


@dataclass(frozen=True, eq=False)
class Means:
    mu_y: FunctionEstimate
    mu_x: tuple
    mu_z: np.ndarray


class CenteredData:
    """Centred observations in pooled order, shared by all raw targets."""

    def __init__(self, dataset: LongitudinalDataset, means: Means):
        t = dataset.pooled().times
        self.sizes = dataset.group_sizes
        self.vc = dataset.pooled_v() - evaluate(means.mu_y, t)
        u = dataset.pooled_u()
        self.uc = np.empty((dataset.d1, t.size))
        for p in range(dataset.d1):
            self.uc[p] = u[p] - evaluate(means.mu_x[p], t)
        zc = dataset.covariates() - means.mu_z
        self.zc = np.ascontiguousarray(np.repeat(zc, self.sizes, axis=0).T)
        self.d1, self.d2 = dataset.d1, dataset.d2

    def values(self, pair: tuple) -> np.ndarray:
        family = pair[0]
        idx = pair[1:]
        bounds = {"xx": (self.d1, self.d1), "xz": (self.d1, self.d2), "yx": (self.d1,), "yz": (self.d2,)}
        if family not in bounds or len(idx) != len(bounds[family]):
            raise ContractError(f"invalid covariance pair {pair!r}")
        for i, hi in zip(idx, bounds[family]):
            if not 0 <= i < hi:
                raise ContractError(f"index out of range in pair {pair!r}")
        if family == "xx":
            return self.uc[idx[0]] * self.uc[idx[1]]
        if family == "xz":
            return self.uc[idx[0]] * self.zc[idx[1]]
        if family == "yx":
            return self.vc * self.uc[idx[0]]
        return self.vc * self.zc[idx[0]]


def raw_targets(dataset: LongitudinalDataset, means: Means, pair: tuple) -> RawTargets:
    """Raw covariance products for one pair, e.g. ``("yx", 0)`` or ``("xx", 0, 1)``."""
    return RawTargets(CenteredData(dataset, means).values(pair), dataset.group_sizes)


def observed_values(dataset: LongitudinalDataset, pair: tuple) -> np.ndarray:
    """Uncentred observations used as targets for a mean-function fit."""
    if pair[0] == "mean_y":
        return dataset.pooled_v()
    return dataset.pooled_u()[pair[1]]


def _fit_group(design: RidgeDesign, kernels: ProcessKernels, pairs, targets, lambdas) -> dict:
    """Fit every pair, solving pairs sharing kernel and lambda together."""
    groups: dict = {}
    for pair, g in zip(pairs, targets):
        kernel = kernels.for_pair(pair)
        groups.setdefault((kernel.factors(), lambdas[pair]), []).append((pair, kernel, g))
    out = {}
    for (_, lam), members in groups.items():
        kernel = members[0][1]
        coef, _ = design.solve(kernel, lam, np.column_stack([m[2] for m in members]))
        for col, (pair, k, _) in enumerate(members):
            out[pair] = FunctionEstimate(k, design.knots, coef[:, col])
    return out


def fit_means(dataset: LongitudinalDataset, kernels: ProcessKernels, lambdas, design=None) -> Means:
    """Smoothed mean functions for ``Y`` and each ``X_p`` plus covariate means.

    ``lambdas`` maps target keys (``("mean_y",)``, ``("mean_x", p)``) to
    smoothing parameters; see ``SmoothingConfig.pair_lambdas``.
    """
    if design is None:
        design = RidgeDesign(dataset.pooled().times, dataset.group_sizes)
    pairs = family_pairs("mean_y", dataset.d1, dataset.d2) + family_pairs("mean_x", dataset.d1, dataset.d2)
    fits = _fit_group(design, kernels, pairs, [observed_values(dataset, p) for p in pairs], lambdas)
    return Means(
        fits[("mean_y",)],
        tuple(fits[("mean_x", p)] for p in range(dataset.d1)),
        scalar_means(dataset),
    )


@dataclass(frozen=True, eq=False)
class CovarianceSet:
    """All estimated ingredients of the pointwise coefficient system.

    ``cov_xx`` is keyed by ``(p1, p2)`` with ``p1 <= p2``; use :meth:`xx`
    for symmetric access.
    """

    mu_y: FunctionEstimate
    mu_x: tuple
    mu_z: np.ndarray
    cov_xx: dict
    cov_xz: dict
    cov_yx: tuple
    cov_yz: tuple
    cov_zz: np.ndarray
    lambdas: dict = field(default_factory=dict)

    @property
    def d1(self) -> int:
        return len(self.mu_x)

    @property
    def d2(self) -> int:
        return int(np.asarray(self.mu_z).shape[0])

    def xx(self, p1: int, p2: int) -> FunctionEstimate:
        return self.cov_xx[(min(p1, p2), max(p1, p2))]

    def functions(self) -> dict:
        """Every fitted function keyed by its target pair."""
        out = {("mean_y",): self.mu_y}
        out.update({("mean_x", p): f for p, f in enumerate(self.mu_x)})
        out.update({("xx",) + k: f for k, f in self.cov_xx.items()})
        out.update({("xz",) + k: f for k, f in self.cov_xz.items()})
        out.update({("yx", p): f for p, f in enumerate(self.cov_yx)})
        out.update({("yz", q): f for q, f in enumerate(self.cov_yz)})
        return out

    def evaluate_all(self, t) -> dict:
        """Evaluate every function on ``t``, batching expansions that share a kernel."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        funcs = self.functions()
        groups: dict = {}
        for key, f in funcs.items():
            groups.setdefault((f.kernel.factors(), f.knots.size, id(f.knots)), []).append(key)
        values = {}
        for keys in groups.values():
            f0 = funcs[keys[0]]
            same_knots = all(funcs[k].knots is f0.knots or np.array_equal(funcs[k].knots, f0.knots) for k in keys)
            if not same_knots:  # pragma: no cover - estimates share knots by construction
                for k in keys:
                    values[k] = evaluate(funcs[k], t)
                continue
            coef = np.column_stack([funcs[k].coefficients for k in keys])
            out = evaluate_many(f0.kernel, f0.knots, coef, t)
            for col, k in enumerate(keys):
                values[k] = out[:, col]
        return values

    def to_dict(self) -> dict:
        return {
            "d1": self.d1,
            "d2": self.d2,
            "mu_y": self.mu_y.to_dict(),
            "mu_x": [f.to_dict() for f in self.mu_x],
            "mu_z": np.asarray(self.mu_z).tolist(),
            "cov_xx": [{"p1": k[0] + 1, "p2": k[1] + 1, "function": f.to_dict()} for k, f in sorted(self.cov_xx.items())],
            "cov_xz": [{"p": k[0] + 1, "q": k[1] + 1, "function": f.to_dict()} for k, f in sorted(self.cov_xz.items())],
            "cov_yx": [f.to_dict() for f in self.cov_yx],
            "cov_yz": [f.to_dict() for f in self.cov_yz],
            "cov_zz": np.asarray(self.cov_zz).tolist(),
            "lambdas": {pair_label(k): v for k, v in sorted(self.lambdas.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CovarianceSet":
        fe = FunctionEstimate.from_dict
        d2 = data["d2"]
        return cls(
            mu_y=fe(data["mu_y"]),
            mu_x=tuple(fe(f) for f in data["mu_x"]),
            mu_z=np.array(data["mu_z"], dtype=np.float64).reshape(d2),
            cov_xx={(e["p1"] - 1, e["p2"] - 1): fe(e["function"]) for e in data["cov_xx"]},
            cov_xz={(e["p"] - 1, e["q"] - 1): fe(e["function"]) for e in data["cov_xz"]},
            cov_yx=tuple(fe(f) for f in data["cov_yx"]),
            cov_yz=tuple(fe(f) for f in data["cov_yz"]),
            cov_zz=np.array(data["cov_zz"], dtype=np.float64).reshape(d2, d2),
            lambdas={parse_pair_label(k): float(v) for k, v in data.get("lambdas", {}).items()},
        )


def estimate_covariance_set(
    dataset: LongitudinalDataset,
    kernels: ProcessKernels,
    lambdas,
    design: Optional[RidgeDesign] = None,
) -> CovarianceSet:
    """Fit means, then every covariance and cross-covariance function.

    Parameters
    ----------
    dataset : LongitudinalDataset
    kernels : ProcessKernels
        One base kernel per process; products are formed per target.
    lambdas : SmoothingConfig or mapping
        Resolved smoothing parameters. A ``SmoothingConfig`` is expanded with
        ``pair_lambdas``; a mapping must contain every target key.
    design : RidgeDesign, optional
        Reused across calls on the same dataset to share Gram matrices.
    """
    if dataset.n < 2:
        raise InsufficientDataError("covariance estimation needs at least 2 subjects")
    if len(kernels.x) != dataset.d1:
        raise ContractError(f"need {dataset.d1} predictor kernels, got {len(kernels.x)}")
    if hasattr(lambdas, "pair_lambdas"):
        lambdas = lambdas.pair_lambdas(dataset.d1, dataset.d2)
    if design is None:
        design = RidgeDesign(dataset.pooled().times, dataset.group_sizes)

    means = fit_means(dataset, kernels, lambdas, design)
    centered = CenteredData(dataset, means)
    pairs = [p for fam in ("xx", "xz", "yx", "yz") for p in family_pairs(fam, dataset.d1, dataset.d2)]
    fits = _fit_group(design, kernels, pairs, [centered.values(p) for p in pairs], lambdas)
    return CovarianceSet(
        mu_y=means.mu_y,
        mu_x=means.mu_x,
        mu_z=means.mu_z,
        cov_xx={p[1:]: fits[p] for p in pairs if p[0] == "xx"},
        cov_xz={p[1:]: fits[p] for p in pairs if p[0] == "xz"},
        cov_yx=tuple(fits[("yx", p)] for p in range(dataset.d1)),
        cov_yz=tuple(fits[("yz", q)] for q in range(dataset.d2)),
        cov_zz=scalar_covariances(dataset) if dataset.d2 else np.empty((0, 0)),
        lambdas={p: float(lambdas[p]) for p in family_pairs("mean_y", 0, 0) + family_pairs("mean_x", dataset.d1, 0) + pairs},
    )
