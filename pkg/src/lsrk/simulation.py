"""Data generators for the two simulation designs and the Monte Carlo runner.

Study 1 has one functional predictor; study 2 adds a second functional
predictor and a scalar covariate whose scores are correlated with both
predictors' scores. Measurement-error standard deviations are fixed
constants divided by the signal-to-noise ratio ``stn``; ``stn = inf`` gives
noiseless observations.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .coefficients import coefficients_on
from .covariance import ProcessKernels, estimate_covariance_set
from .data import LongitudinalDataset, SubjectRecord
from .exceptions import ContractError, InputError, LSRKError
from .kernels import check_nonneg_definite
from .metrics import QUAD_NODES, MetricsReport, SampledFunction, gauss_legendre_nodes, integrated_errors
from .selection import SmoothingConfig, select_lambdas_cv
from .smoothing import RidgeDesign

logger = logging.getLogger(__name__)

SD_X1 = 4.2954
SD_X2 = 1.2733
SD_Y = {1: 15.6815, 2: 15.8525}
M_CHOICES = (4, 5, 6, 7, 8)


@dataclass(frozen=True)
class SimulationConfig:
    """One cell of the simulation design.

    ``design="dense"`` replaces the sparse random design by ``m_dense``
    common, equally spaced times per subject (used for recovery checks).
    """

    study: int = 1
    n: int = 100
    stn: float = math.inf
    replications: int = 1
    seed: int = 0
    truncation: int = 50
    design: str = "sparse"
    m_dense: int = 50
    include_intercept: bool = True
    paper_table: bool = True

    def __post_init__(self):
        if self.study not in (1, 2):
            raise InputError(f"study must be 1 or 2, got {self.study!r}")
        if self.n < 2:
            raise InputError("n must be at least 2")
        stn = float(self.stn)
        if not stn > 0:
            raise InputError("stn must be positive (use inf for noiseless data)")
        object.__setattr__(self, "stn", stn)
        if self.replications < 1:
            raise InputError("replications must be at least 1")
        if not 1 <= self.truncation <= 50:
            raise InputError("truncation must be between 1 and 50")
        if self.design not in ("sparse", "dense"):
            raise InputError(f"design must be 'sparse' or 'dense', got {self.design!r}")

    def noise_variances(self) -> dict:
        def var(sd):
            return 0.0 if math.isinf(self.stn) else (sd / self.stn) ** 2

        out = {"x1": var(SD_X1), "y": var(SD_Y[self.study])}
        if self.study == 2:
            out["x2"] = var(SD_X2)
        return out

    def to_dict(self) -> dict:
        out = asdict(self)
        out["stn"] = "inf" if math.isinf(self.stn) else self.stn
        return out


def basis_phi(k: int, t):
    """Cosine basis ``sqrt(2) cos(2 k pi t)``."""
    if not 1 <= k <= 50:
        raise ContractError(f"basis index must be in 1..50, got {k}")
    return math.sqrt(2.0) * np.cos(2.0 * k * np.pi * np.asarray(t, dtype=np.float64))


def basis_psi(k: int, t):
    """Sine basis ``sqrt(2) sin(2 k pi t)`` for k <= 49; the constant 1 for k = 50."""
    if not 1 <= k <= 50:
        raise ContractError(f"basis index must be in 1..50, got {k}")
    t = np.asarray(t, dtype=np.float64)
    if k == 50:
        return np.ones_like(t)
    return math.sqrt(2.0) * np.sin(2.0 * k * np.pi * t)


def _phi_matrix(t, K):
    k = np.arange(1, K + 1)
    return math.sqrt(2.0) * np.cos(2.0 * np.pi * np.outer(t, k))


def _psi_matrix(t, K):
    k = np.arange(1, K + 1)
    out = math.sqrt(2.0) * np.sin(2.0 * np.pi * np.outer(t, k))
    if K == 50:
        out[:, 49] = 1.0
    return out


def x1_score_sd(K: int = 50) -> np.ndarray:
    k = np.arange(1, K + 1)
    return 4.0 * (-1.0) ** k / k**2


def x2_score_sd(K: int = 50) -> np.ndarray:
    k = np.arange(1, K + 1)
    out = math.sqrt(3.0) / 2.0**k
    if K == 50:
        out[49] = math.sqrt(3.0)
    return out


def mu_x1(t, K: int = 50):
    k = np.arange(1, K + 1)
    return _phi_matrix(np.atleast_1d(t), K) @ ((-1.0) ** k * k**-1.5)


def mu_x2(t):
    t = np.asarray(t, dtype=np.float64)
    return np.sin(2 * np.pi * t) - t * np.exp(-t)


def x1_variance(t, K: int = 50):
    """Pointwise variance of X_1 (independent unit-variance scores)."""
    phi = _phi_matrix(np.atleast_1d(t), K)
    return (phi**2) @ (x1_score_sd(K) ** 2)


def beta0(t):
    return 2.0 * np.sin(2.0 * np.pi * np.asarray(t, dtype=np.float64))


def beta1(t):
    return 2.0 * np.exp(np.asarray(t, dtype=np.float64))


def beta2(t):
    t = np.asarray(t, dtype=np.float64)
    return 5.0 * t * np.exp(-t)


def alpha1(t):
    return 2.0 * np.asarray(t, dtype=np.float64)


@dataclass(frozen=True)
class TrueCoefficients:
    """True coefficient functions of a study, keyed by output column name."""

    functions: dict

    @classmethod
    def for_study(cls, study: int) -> "TrueCoefficients":
        if study == 1:
            return cls({"beta0": beta0, "beta1": beta1})
        if study == 2:
            return cls({"beta0": beta0, "beta1": beta1, "beta2": beta2, "alpha1": alpha1})
        raise InputError(f"unknown study {study!r}")

    def names(self, include_intercept: bool = True) -> list:
        return [k for k in self.functions if include_intercept or k != "beta0"]

    def __getitem__(self, name):
        return self.functions[name]


def study2_score_covariance(paper_table: bool = True):
    """Covariance of ``[Z*, xi_1..xi_50, zeta_1..zeta_50]`` and its PSD repair distance.

    With ``paper_table`` the xi/zeta entry for index k is ``0.8**(k+1)``,
    exactly as the 1-based table prints it (``0.8**(l-50)`` at column
    ``l = k + 51``). Otherwise ``0.8**k`` is used; that matrix is indefinite
    and gets clipped. Returns ``(sigma, frobenius_distance_of_repair)``.
    """
    sigma = np.eye(101)
    for l in range(2, 52):
        sigma[0, l - 1] = 0.4 ** (l - 1)
    for l in range(52, 102):
        sigma[0, l - 1] = (-0.3) ** (l - 51)
        sigma[l - 51, l - 1] = 0.8 ** (l - 50 if paper_table else l - 51)
    sigma = np.triu(sigma)
    sigma = sigma + sigma.T - np.diag(np.diag(sigma))
    sigma = (sigma + sigma.T) / 2
    if check_nonneg_definite(sigma, tol=1e-10):
        return sigma, 0.0
    vals, vecs = np.linalg.eigh(sigma)
    repaired = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    repaired = (repaired + repaired.T) / 2
    dist = float(np.linalg.norm(repaired - sigma))
    logger.warning("score covariance is not PSD; clipped eigenvalues (Frobenius distance %.4g)", dist)
    return repaired, dist


def sample_design(n: int, rng: np.random.Generator, choices=M_CHOICES) -> list:
    """Numbers of measurements and sorted uniform times for ``n`` subjects."""
    if n < 1:
        raise InputError("n must be at least 1")
    sizes = rng.choice(np.asarray(choices), size=n)
    return [(int(m), np.sort(rng.uniform(0.0, 1.0, size=m))) for m in sizes]


def _dense_design(n: int, m: int) -> list:
    times = (np.arange(m) + 0.5) / m
    return [(m, times.copy()) for _ in range(n)]


def _design(config: SimulationConfig, rng) -> list:
    if config.design == "dense":
        return _dense_design(config.n, config.m_dense)
    return sample_design(config.n, rng)


def study1_scores(n: int, rng: np.random.Generator, K: int = 50) -> np.ndarray:
    """Unit-variance scores ``xi`` of ``X_1``, shape (n, K)."""
    return rng.standard_normal((n, K))


def study2_scores(n: int, rng: np.random.Generator, sigma: np.ndarray) -> np.ndarray:
    """Correlated ``[Z*, xi_1..xi_50, zeta_1..zeta_50]`` draws, shape (n, 101)."""
    return rng.standard_normal((n, sigma.shape[0])) @ np.linalg.cholesky(sigma).T


def generate_study1(config: SimulationConfig, rng: np.random.Generator):
    """Dataset and truth for the single-predictor design."""
    K = config.truncation
    var = config.noise_variances()
    design = _design(config, rng)
    scores = study1_scores(config.n, rng, K) * x1_score_sd(K)
    subjects = []
    for i, (m, t) in enumerate(design):
        x = mu_x1(t, K) + _phi_matrix(t, K) @ scores[i]
        u = x + math.sqrt(var["x1"]) * rng.standard_normal(m)
        v = beta0(t) + beta1(t) * u + math.sqrt(var["y"]) * rng.standard_normal(m)
        subjects.append(SubjectRecord(str(i + 1), t, u[None, :], v, np.empty(0)))
    data = LongitudinalDataset(tuple(subjects), 1, 0, response_name="y")
    return data, TrueCoefficients.for_study(1)


def generate_study2(config: SimulationConfig, rng: np.random.Generator, sigma=None):
    """Dataset and truth for two functional predictors and one scalar covariate."""
    K = config.truncation
    if K != 50:
        raise InputError("study 2 uses the full 50-term expansions")
    var = config.noise_variances()
    if sigma is None:
        sigma, _ = study2_score_covariance(config.paper_table)
    design = _design(config, rng)
    scores = study2_scores(config.n, rng, sigma)
    z = 1.0 + scores[:, 0]
    xi = scores[:, 1:51] * x1_score_sd(K)
    zeta = scores[:, 51:101] * x2_score_sd(K)
    subjects = []
    for i, (m, t) in enumerate(design):
        x1 = mu_x1(t, K) + _phi_matrix(t, K) @ xi[i]
        x2 = mu_x2(t) + _psi_matrix(t, K) @ zeta[i]
        u1 = x1 + math.sqrt(var["x1"]) * rng.standard_normal(m)
        u2 = x2 + math.sqrt(var["x2"]) * rng.standard_normal(m)
        v = (
            beta0(t) + beta1(t) * u1 + beta2(t) * u2 + alpha1(t) * z[i]
            + math.sqrt(var["y"]) * rng.standard_normal(m)
        )
        subjects.append(SubjectRecord(str(i + 1), t, np.vstack([u1, u2]), v, [z[i]]))
    data = LongitudinalDataset(tuple(subjects), 2, 1, response_name="y")
    return data, TrueCoefficients.for_study(2)


def generate(config: SimulationConfig, rng: np.random.Generator):
    if config.study == 1:
        return generate_study1(config, rng)
    return generate_study2(config, rng)


def replication_rng(seed: int, r: int) -> np.random.Generator:
    """Generator for replication ``r``; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


@dataclass
class ReplicationResult:
    index: int
    made: float = float("nan")
    wase: float = float("nan")
    ise: dict = field(default_factory=dict)
    lambdas: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def fit_and_score(dataset, truth: TrueCoefficients, kernels, smoothing, include_intercept=True, seed=0):
    """Fit one dataset and score it against ``truth`` by quadrature."""
    design = RidgeDesign(dataset.pooled().times, dataset.group_sizes)
    smoothing = replace(smoothing, seed=seed) if not smoothing.is_resolved else smoothing
    resolved = select_lambdas_cv(dataset, kernels, smoothing, design=design)
    covset = estimate_covariance_set(dataset, kernels, resolved, design=design)
    nodes, _ = gauss_legendre_nodes(0.0, 1.0, QUAD_NODES)
    est = coefficients_on(covset, nodes)
    columns = {"beta0": est.beta0}
    columns.update({f"beta{p + 1}": est.beta[p] for p in range(est.d1)})
    columns.update({f"alpha{q + 1}": est.alpha[q] for q in range(est.d2)})
    names = truth.names(include_intercept)
    errs = integrated_errors(
        [truth[k] for k in names], [SampledFunction(nodes, columns[k]) for k in names], names
    )
    made_value = sum(a / r for a, _, r in errs) / len(errs)
    wase_value = sum(s / (r * r) for _, s, r in errs) / len(errs)
    ise = {}
    for k in truth.names(True):
        e = truth[k](nodes) - columns[k]
        ise[k] = float(gauss_legendre_nodes(0.0, 1.0, QUAD_NODES)[1] @ (e * e))
    return made_value, wase_value, ise, resolved


def _run_one(args):
    config, kernels, smoothing, r = args
    with threadpool_limits(limits=1):
        rng = replication_rng(config.seed, r)
        try:
            dataset, truth = generate(config, rng)
            made_value, wase_value, ise, resolved = fit_and_score(
                dataset, truth, kernels, smoothing, config.include_intercept, seed=config.seed + r
            )
        except LSRKError as exc:
            return ReplicationResult(r, error=f"{type(exc).__name__}: {exc}")
        return ReplicationResult(
            r,
            made_value,
            wase_value,
            ise,
            {f: resolved.family_lambda(f) for f in ("mean_y", "mean_x", "xx", "xz", "yx", "yz")},
        )


@dataclass
class MonteCarloResult:
    config: SimulationConfig
    report: MetricsReport
    made_sd: float
    wase_sd: float
    replications: list
    failures: int

    def summary(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "made_mean": self.report.made,
            "made_sd": self.made_sd,
            "wase_mean": self.report.wase,
            "wase_sd": self.wase_sd,
            "mean_ise": self.report.per_function_ise,
            "replications_ok": len(self.replications) - self.failures,
            "failures": self.failures,
        }
        return out


def run_monte_carlo(
    config: SimulationConfig,
    kernels: Optional[ProcessKernels] = None,
    smoothing: Optional[SmoothingConfig] = None,
    threads: int = 1,
) -> MonteCarloResult:
    """Repeat generate-fit-score ``config.replications`` times.

    Each replication draws from its own seeded generator and runs with
    single-threaded BLAS, so results do not depend on ``threads`` or on the
    order in which replications finish.
    """
    kernels = kernels or ProcessKernels.default(1 if config.study == 1 else 2)
    smoothing = smoothing or SmoothingConfig()
    start = time.perf_counter()
    jobs = [(config, kernels, smoothing, r) for r in range(config.replications)]
    if threads > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    results.sort(key=lambda r: r.index)
    ok = [r for r in results if not r.failed]
    failures = len(results) - len(ok)
    for r in results:
        if r.failed:
            logger.warning("replication %d failed: %s", r.index, r.error)
    if ok:
        made_vals = np.array([r.made for r in ok])
        wase_vals = np.array([r.wase for r in ok])
        names = list(ok[0].ise)
        ise = {k: float(np.mean([r.ise[k] for r in ok])) for k in names}
        made_mean, wase_mean = float(made_vals.mean()), float(wase_vals.mean())
        made_sd = float(made_vals.std(ddof=1)) if len(ok) > 1 else 0.0
        wase_sd = float(wase_vals.std(ddof=1)) if len(ok) > 1 else 0.0
    else:
        made_mean = wase_mean = made_sd = wase_sd = float("nan")
        ise = {}
    report = MetricsReport(made_mean, wase_mean, ise, time.perf_counter() - start)
    return MonteCarloResult(config, report, made_sd, wase_sd, results, failures)
