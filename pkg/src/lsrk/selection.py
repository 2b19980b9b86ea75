"""Smoothing-parameter configuration and subject-level cross-validation.

Each smoothing target family (``mean_y``, ``mean_x``, ``xx``, ``xz``,
``yx``, ``yz``) gets one lambda. Cross-validation holds out whole subjects
and scores the family's weighted squared error on the held-out raw targets.
Mean functions are selected and fitted first because the covariance targets
depend on them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .covariance import (
    FAMILIES,
    CenteredData,
    ProcessKernels,
    family_pairs,
    fit_means,
    observed_values,
    pair_label,
)
from .data import LongitudinalDataset
from .exceptions import ContractError, InputError, InsufficientDataError
from .kernels import cross_gram_matrix
from .smoothing import LAMBDA_GRID, RidgeDesign

logger = logging.getLogger(__name__)

LambdaSpec = Union[float, str]


def _check_lambda(value: LambdaSpec) -> LambdaSpec:
    if isinstance(value, str):
        if value.lower() != "cv":
            try:
                value = float(value)
            except ValueError:
                raise InputError(f"lambda must be a positive number or 'cv', got {value!r}")
        else:
            return "cv"
    value = float(value)
    if not value > 0:
        raise InputError(f"lambda must be positive, got {value!r}")
    return value


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing parameters per target family, fixed or ``"cv"``.

    ``overrides`` pins individual pairs by label (``"xx:1:2"``, ``"yx:1"``,
    ``"mean_x:2"``; indices 1-based) and always wins over the family value.
    """

    lambda_mean_y: LambdaSpec = "cv"
    lambda_mean_x: LambdaSpec = "cv"
    lambda_xx: LambdaSpec = "cv"
    lambda_xz: LambdaSpec = "cv"
    lambda_yx: LambdaSpec = "cv"
    lambda_yz: LambdaSpec = "cv"
    cv_folds: int = 5
    seed: int = 0
    grid: tuple = LAMBDA_GRID
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        for fam in FAMILIES:
            object.__setattr__(self, f"lambda_{fam}", _check_lambda(getattr(self, f"lambda_{fam}")))
        if int(self.cv_folds) < 2:
            raise InputError("cv_folds must be at least 2")
        grid = tuple(sorted(float(g) for g in self.grid))
        if not grid or grid[0] <= 0:
            raise InputError("lambda grid must be non-empty and positive")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "overrides", {str(k): float(_check_lambda(v)) for k, v in self.overrides.items()})

    @classmethod
    def fixed(cls, value: float, **kwargs) -> "SmoothingConfig":
        return cls(**{f"lambda_{fam}": value for fam in FAMILIES}, **kwargs)

    def family_lambda(self, family: str) -> LambdaSpec:
        return getattr(self, f"lambda_{family}")

    @property
    def is_resolved(self) -> bool:
        return all(self.family_lambda(f) != "cv" for f in FAMILIES)

    def pair_lambdas(self, d1: int, d2: int) -> dict:
        out = {}
        for fam in FAMILIES:
            for pair in family_pairs(fam, d1, d2):
                lam = self.overrides.get(pair_label(pair), self.family_lambda(fam))
                if lam == "cv":
                    raise ContractError(f"lambda for {pair_label(pair)} is unresolved; run select_lambdas_cv first")
                out[pair] = lam
        return out

    def to_dict(self) -> dict:
        out = {f"lambda_{fam}": self.family_lambda(fam) for fam in FAMILIES}
        out.update(cv_folds=int(self.cv_folds), seed=int(self.seed), grid=list(self.grid), overrides=dict(self.overrides))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SmoothingConfig":
        data = dict(data)
        if "grid" in data:
            data["grid"] = tuple(data["grid"])
        return cls(**data)


def make_folds(n: int, k: int, seed: int) -> list:
    """Seeded partition of subject positions ``0..n-1`` into ``k`` folds."""
    if k > n:
        raise InsufficientDataError(f"{k} folds requested for {n} subjects")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(perm[f::k]) for f in range(k)]


class _FoldSet:
    """Training designs and held-out bookkeeping for one fold partition."""

    def __init__(self, dataset: LongitudinalDataset, folds: list):
        pooled = dataset.pooled()
        sizes = dataset.group_sizes
        self.folds = []
        for test in folds:
            mask = np.isin(pooled.subject, test)
            train_sizes = np.delete(sizes, test)
            if mask.sum() == 0 or (~mask).sum() == 0:
                raise InsufficientDataError("a cross-validation fold has no observations")
            design = RidgeDesign(pooled.times[~mask], train_sizes)
            self.folds.append((mask, design, pooled.times[mask], sizes[test]))
        self._cross: dict = {}

    def cross(self, f: int, kernel):
        key = (f, kernel.factors())
        if key not in self._cross:
            _, design, test_t, _ = self.folds[f]
            self._cross[key] = cross_gram_matrix(kernel, test_t, design.knots)
        return self._cross[key]


def _cv_scores(foldset: _FoldSet, families: dict, grid) -> dict:
    """Mean held-out loss per family and lambda.

    ``families`` maps a family name to a list of ``(kernel, g)`` with ``g``
    in pooled order. Folds are the outer loop so that families sharing a
    kernel reuse one factorisation per lambda.
    """
    scores = {fam: np.zeros(len(grid)) for fam in families}
    for f, (mask, design, _, test_sizes) in enumerate(foldset.folds):
        w_test = np.repeat(1.0 / test_sizes, test_sizes)
        for li, lam in enumerate(grid):
            for fam, members in families.items():
                groups: dict = {}
                for kernel, g in members:
                    groups.setdefault(kernel.factors(), (kernel, []))[1].append(g)
                total = 0.0
                for kernel, gs in groups.values():
                    g = np.column_stack(gs)
                    coef, _ = design.solve(kernel, lam, g[~mask])
                    resid = g[mask] - foldset.cross(f, kernel) @ coef
                    total += float(np.sum(w_test[:, None] * resid * resid)) / test_sizes.shape[0]
                scores[fam][li] += total
    k = len(foldset.folds)
    return {fam: s / k for fam, s in scores.items()}


def _argmin_prefer_large(scores, grid) -> float:
    best = 0
    for i in range(len(grid)):
        if scores[i] <= scores[best]:
            best = i
    return float(grid[best])


def cv_select_lambda(points, group_sizes, targets, kernel, grid=LAMBDA_GRID, folds: int = 5, seed: int = 0):
    """Cross-validated lambda for raw targets in a single family.

    Parameters
    ----------
    points : array of shape (N,)
        Pooled times.
    group_sizes : array of shape (n,)
    targets : array of shape (N,) or (N, r)
        Raw targets; columns share ``kernel`` and the selected lambda.
    kernel : Kernel

    Returns
    -------
    (lam, scores)
    """
    from .data import LongitudinalDataset, SubjectRecord

    sizes = np.asarray(group_sizes, dtype=np.int64)
    points = np.asarray(points, dtype=np.float64)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    subjects = tuple(
        SubjectRecord(str(i), points[bounds[i]:bounds[i + 1]], np.empty((0, sizes[i])), np.zeros(sizes[i]), [])
        for i in range(sizes.size)
    )
    shell = LongitudinalDataset(subjects, 0, 0)
    g = np.asarray(targets, dtype=np.float64)
    g = g[:, None] if g.ndim == 1 else g
    grid = tuple(sorted(grid))
    foldset = _FoldSet(shell, make_folds(sizes.size, folds, seed))
    scores = _cv_scores(foldset, {"target": [(kernel, g[:, c]) for c in range(g.shape[1])]}, grid)["target"]
    return _argmin_prefer_large(scores, grid), scores


def select_lambdas_cv(
    dataset: LongitudinalDataset,
    kernels: ProcessKernels,
    config: Optional[SmoothingConfig] = None,
    design: Optional[RidgeDesign] = None,
) -> SmoothingConfig:
    """Resolve every ``"cv"`` entry of ``config`` by subject-level CV.

    Returns a copy of ``config`` with numeric lambdas; families that were
    already fixed are left untouched. The fold partition depends only on
    ``config.seed``, so results are reproducible.
    """
    config = config or SmoothingConfig()
    if config.is_resolved:
        return config
    if config.cv_folds > dataset.n:
        raise InsufficientDataError(f"{config.cv_folds} folds requested for {dataset.n} subjects")
    d1, d2 = dataset.d1, dataset.d2
    try:
        foldset = _FoldSet(dataset, make_folds(dataset.n, config.cv_folds, config.seed))
    except InsufficientDataError:
        foldset = _FoldSet(dataset, make_folds(dataset.n, config.cv_folds, config.seed + 1))

    chosen = {}

    def resolve(families: dict):
        todo = {fam: m for fam, m in families.items() if m and config.family_lambda(fam) == "cv"}
        if todo:
            scores = _cv_scores(foldset, todo, config.grid)
            for fam, s in scores.items():
                chosen[fam] = _argmin_prefer_large(s, config.grid)
                logger.debug("cv %s: %s -> %g", fam, np.array2string(s, precision=4), chosen[fam])

    means_families = {
        fam: [(kernels.for_pair(p), observed_values(dataset, p)) for p in family_pairs(fam, d1, d2)]
        for fam in ("mean_y", "mean_x")
    }
    resolve(means_families)
    partial = replace(config, **{f"lambda_{fam}": chosen.get(fam, config.family_lambda(fam)) for fam in ("mean_y", "mean_x")})

    pairs_mean = family_pairs("mean_y", d1, d2) + family_pairs("mean_x", d1, d2)
    mean_lams = {p: partial.overrides.get(pair_label(p), partial.family_lambda(p[0])) for p in pairs_mean}
    if design is None:
        design = RidgeDesign(dataset.pooled().times, dataset.group_sizes)
    means = fit_means(dataset, kernels, mean_lams, design)
    centered = CenteredData(dataset, means)
    cov_families = {
        fam: [(kernels.for_pair(p), centered.values(p)) for p in family_pairs(fam, d1, d2)]
        for fam in ("xx", "xz", "yx", "yz")
    }
    resolve(cov_families)
    # families with no members (d2 == 0) fall back to the grid's largest value
    resolved = {
        f"lambda_{fam}": chosen.get(fam, config.family_lambda(fam) if config.family_lambda(fam) != "cv" else config.grid[-1])
        for fam in FAMILIES
    }
    return replace(config, **resolved)
