"""Monte Carlo estimation of plug-in risks and asymptotic diagnostics.

All quantities for one horizon ``T`` are computed from a single set of
replications (:func:`run_replications`): replication ``r`` uses stream index
``r`` and results are reduced in index order, so the output does not depend on
how many worker threads are used.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import stats as sps

from .core import (
    ParamTheta,
    efficiency_bound,
    expm_q_batch,
    fisher_info,
    frob,
    gaussian_moments,
    outer,
    q_of_theta,
    rel_frob,
)
from .errors import EstimationError, GridError, ParameterDomainError
from .estimate import (
    SufficientStats,
    _decoupled,
    lan_score_arrays,
    mle_newton,
    s_rule as t_minus_sqrt_t,
    stats_arrays,
    subpath_steps,
)
from .simulate import PathGrid, RngStream, reconstruct_increments, simulate_exact_batch

ESTIMATORS = ("newton", "decoupled", "oracle")
S_RULES = ("t_minus_sqrt_t", "identity")
BATCH_SIZE = 25


@dataclass(frozen=True)
class ExperimentConfig:
    theta: ParamTheta = ParamTheta(1.0, 0.5)
    h: float = 1.0
    T_grid: tuple = (25.0, 50.0, 100.0, 200.0)
    dt: float = 0.01
    n_rep: int = 1000
    master_seed: int = 12345
    s_rule: str = "t_minus_sqrt_t"

    def __post_init__(self):
        if not isinstance(self.theta, ParamTheta):
            object.__setattr__(self, "theta", ParamTheta(*map(float, self.theta)))
        object.__setattr__(self, "T_grid", tuple(float(t) for t in self.T_grid))
        if not self.theta.in_domain():
            raise ParameterDomainError(f"theta={tuple(self.theta)} is outside alpha > |beta|")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.dt > 0:
            raise GridError(f"dt must be positive, got {self.dt}")
        if not self.T_grid:
            raise ValueError("T_grid is empty")
        if any(T < 10 * self.dt for T in self.T_grid):
            raise GridError("every T in T_grid must be at least 10*dt")
        if int(self.n_rep) != self.n_rep or self.n_rep < 2:
            raise ValueError(f"n_rep must be an integer >= 2, got {self.n_rep}")
        if self.s_rule not in S_RULES:
            raise ValueError(f"unknown s_rule {self.s_rule!r}; expected one of {S_RULES}")
        if any(self.sub_horizon(T) < 2 * self.dt for T in self.T_grid):
            raise GridError(f"s_rule {self.s_rule!r} leaves fewer than two steps for some T in T_grid")

    def sub_horizon(self, T: float) -> float:
        return t_minus_sqrt_t(T) if self.s_rule == "t_minus_sqrt_t" else T


@dataclass(frozen=True)
class RiskEstimate:
    matrix: np.ndarray
    se: np.ndarray
    n_rep: int
    n_flagged: int

    def max_se(self) -> float:
        return float(self.se.max())


@dataclass(frozen=True)
class Replications:
    """Per-replication outputs for one ``(config, T, estimator, dt)``.

    ``flagged`` marks replications excluded from risk averages (non-convergence
    or a clamped decoupled estimate on either the full or the sub-path).
    """

    T: float
    S: float
    theta_T: np.ndarray
    theta_S: np.ndarray
    x_T: np.ndarray
    delta_T: np.ndarray
    delta_S: np.ndarray
    flagged: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return ~self.flagged

    @property
    def n_rep(self) -> int:
        return len(self.flagged)

    @property
    def n_flagged(self) -> int:
        return int(self.flagged.sum())


def worker_count() -> int:
    """Worker threads from ``LANPREDICT_THREADS`` (0 or unset = CPU count)."""
    raw = os.environ.get("LANPREDICT_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError(f"LANPREDICT_THREADS must be >= 0, got {n}")
    return n if n > 0 else (os.cpu_count() or 1)


def _fit(stats: SufficientStats, estimator: str, theta: ParamTheta) -> tuple[tuple, bool]:
    if estimator == "oracle":
        return (theta.alpha, theta.beta), False
    try:
        init, clamped = _decoupled(stats)
    except EstimationError:
        return (math.nan, math.nan), True
    if estimator == "decoupled":
        return (init.alpha, init.beta), clamped
    try:
        res = mle_newton(stats, init=init)
    except (EstimationError, ParameterDomainError):
        return (math.nan, math.nan), True
    return (res.theta_hat.alpha, res.theta_hat.beta), False


def _stats_row(s: dict, j: int) -> SufficientStats:
    return SufficientStats(*(float(s[k][j]) for k in ("T", "S1", "S2", "e0", "eT", "a0", "aT")))


def _run_batch(cfg: ExperimentConfig, grid: PathGrid, m: int, estimator: str, indices):
    theta = cfg.theta
    states = simulate_exact_batch(theta, grid, cfg.master_seed, indices)
    dw = reconstruct_increments(theta, states, grid.dt)
    sub = states[:, : m + 1]
    st_T = stats_arrays(states, grid.dt)
    st_S = stats_arrays(sub, grid.dt)
    k = len(indices)
    th_T = np.empty((k, 2))
    th_S = np.empty((k, 2))
    flag = np.zeros(k, dtype=bool)
    for j in range(k):
        th_T[j], f1 = _fit(_stats_row(st_T, j), estimator, theta)
        th_S[j], f2 = _fit(_stats_row(st_S, j), estimator, theta)
        flag[j] = f1 or f2
    return (
        th_T,
        th_S,
        states[:, -1].copy(),
        lan_score_arrays(states, dw, grid.T),
        lan_score_arrays(sub, dw[:, :m], m * grid.dt),
        flag,
    )


@lru_cache(maxsize=16)
def _run_cached(cfg: ExperimentConfig, T: float, estimator: str, dt: float) -> Replications:
    grid = PathGrid.from_horizon(T, dt)
    m = min(subpath_steps(grid.T, cfg.sub_horizon(grid.T), dt), grid.n_steps)
    batches = [
        range(s, min(s + BATCH_SIZE, cfg.n_rep)) for s in range(0, cfg.n_rep, BATCH_SIZE)
    ]
    workers = min(worker_count(), len(batches))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _run_batch(cfg, grid, m, estimator, b), batches))
    else:
        parts = [_run_batch(cfg, grid, m, estimator, b) for b in batches]
    cols = [np.concatenate(c) for c in zip(*parts)]
    return Replications(grid.T, m * dt, *cols)


def run_replications(
    cfg: ExperimentConfig, T: float, estimator: str = "newton", dt: float | None = None
) -> Replications:
    """Simulate ``cfg.n_rep`` exact paths of horizon ``T`` and fit each of them."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    return _run_cached(cfg, float(T), estimator, float(cfg.dt if dt is None else dt))


def _summarise(losses: np.ndarray, scale: float, n_rep: int, n_flagged: int) -> RiskEstimate:
    n = len(losses)
    if n < 2:
        raise EstimationError(f"only {n} usable replications")
    mat = scale * losses.mean(axis=0)
    mat = 0.5 * (mat + mat.T)
    se = scale * losses.std(axis=0, ddof=1) / math.sqrt(n)
    return RiskEstimate(mat, se, n_rep, n_flagged)


def _reps(cfg, T, estimator, reps):
    return reps if reps is not None else run_replications(cfg, T, estimator)


def _qer_losses(cfg: ExperimentConfig, thetas: np.ndarray) -> np.ndarray:
    de = expm_q_batch(thetas, cfg.h) - expm_q_batch(cfg.theta.as_array(), cfg.h)
    qinv = fisher_info(cfg.theta)
    return 0.5 * de @ qinv @ np.swapaxes(de, -1, -2)


def _qep_losses(cfg: ExperimentConfig, thetas: np.ndarray, x: np.ndarray) -> np.ndarray:
    de = expm_q_batch(thetas, cfg.h) - expm_q_batch(cfg.theta.as_array(), cfg.h)
    return outer(np.einsum("nij,nj->ni", de, x))


def estimate_qer(cfg: ExperimentConfig, T: float, estimator: str = "newton", reps=None) -> RiskEstimate:
    """``T`` times the QER of the plug-in, integrated analytically over the stationary law."""
    r = _reps(cfg, T, estimator, reps)
    return _summarise(_qer_losses(cfg, r.theta_T[r.ok]), r.T, r.n_rep, r.n_flagged)


def estimate_qep(cfg: ExperimentConfig, T: float, estimator: str = "newton", reps=None) -> RiskEstimate:
    """``T`` times the QEP, evaluated at the terminal state of the estimation path."""
    r = _reps(cfg, T, estimator, reps)
    return _summarise(_qep_losses(cfg, r.theta_T[r.ok], r.x_T[r.ok]), r.T, r.n_rep, r.n_flagged)


def estimate_aux_risks(
    cfg: ExperimentConfig, T: float, estimator: str = "newton", reps=None
) -> tuple[RiskEstimate, RiskEstimate]:
    """``T``-scaled QER and QEP of the plug-in fitted on ``[0, S]`` only."""
    r = _reps(cfg, T, estimator, reps)
    ok = r.ok
    qer = _summarise(_qer_losses(cfg, r.theta_S[ok]), r.T, r.n_rep, r.n_flagged)
    qep = _summarise(_qep_losses(cfg, r.theta_S[ok], r.x_T[ok]), r.T, r.n_rep, r.n_flagged)
    return qer, qep


def estimator_variance(cfg: ExperimentConfig, T: float, estimator: str = "newton", reps=None) -> RiskEstimate:
    """``T E(theta_hat - theta)^2``, to be compared with ``Q(theta)``."""
    r = _reps(cfg, T, estimator, reps)
    err = r.theta_T[r.ok] - cfg.theta.as_array()
    return _summarise(outer(err), r.T, r.n_rep, r.n_flagged)


class DriftCheck(NamedTuple):
    mc: float
    analytic: float
    se: float


def drift_analytic(theta, T: float, S: float) -> float:
    ratio = S / T
    return (ratio * (1.0 / ratio - 1.0) ** 2 + (1.0 - ratio)) * float(np.trace(fisher_info(theta)))


def lan_drift_check(cfg: ExperimentConfig, T: float, reps=None) -> DriftCheck:
    """Mean of ``|Delta_T - sqrt(T/S) Delta_S|^2`` against its closed form."""
    r = reps if reps is not None else run_replications(cfg, T, "oracle")
    d = r.delta_T - math.sqrt(r.T / r.S) * r.delta_S
    sq = (d * d).sum(axis=1)
    return DriftCheck(
        float(sq.mean()), drift_analytic(cfg.theta, r.T, r.S), float(sq.std(ddof=1) / math.sqrt(len(sq)))
    )


class GapCheck(NamedTuple):
    value: float
    se: float


def theta_gap_check(cfg: ExperimentConfig, T: float, estimator: str = "newton", reps=None) -> GapCheck:
    """``T E|theta_hat_T - theta_hat_S|^2``."""
    r = _reps(cfg, T, estimator, reps)
    d = r.theta_T[r.ok] - r.theta_S[r.ok]
    sq = r.T * (d * d).sum(axis=1)
    return GapCheck(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(len(sq))))


@dataclass(frozen=True)
class NormalityReport:
    cov: np.ndarray
    target: np.ndarray
    rel_err: float
    mean: np.ndarray
    mean_se: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    skew_se: float
    kurt_se: float


def score_normality(cfg: ExperimentConfig, T: float, reps=None) -> NormalityReport:
    """Moments of the LAN score statistic against ``N(0, Q^{-1})``."""
    r = reps if reps is not None else run_replications(cfg, T, "oracle")
    d = r.delta_T
    n = len(d)
    cov = np.cov(d, rowvar=False)
    target = fisher_info(cfg.theta)
    return NormalityReport(
        cov=cov,
        target=target,
        rel_err=rel_frob(cov, target),
        mean=d.mean(axis=0),
        mean_se=d.std(axis=0, ddof=1) / math.sqrt(n),
        skewness=sps.skew(d, axis=0),
        excess_kurtosis=sps.kurtosis(d, axis=0),
        skew_se=math.sqrt(6.0 / n),
        kurt_se=math.sqrt(24.0 / n),
    )


class MomentBound(NamedTuple):
    gaussian_moment: float
    literature_constant: float
    mc: float
    mc_se: float


def delta_moment_bound(theta, n_draws: int = 10**6, seed: int = 0) -> MomentBound:
    """Fourth-moment envelope ``4 E(X1^4 + X2^4)`` under the stationary law.

    Returns the Gaussian closed form ``6 a^2 / (a^2 - b^2)^2``, the constant
    ``12 a^2 / (a^2 - b^2)^2`` quoted alongside it in the literature (kept for
    side-by-side reporting), and a Monte Carlo estimate.
    """
    from .simulate import sample_stationary_batch

    m, _ = gaussian_moments(theta)
    a, b = theta
    x = sample_stationary_batch(theta, n_draws, seed)
    v = 4.0 * (x**4).sum(axis=1)
    return MomentBound(
        24.0 * m * m,
        12.0 * a * a / (a * a - b * b) ** 2,
        float(v.mean()),
        float(v.std(ddof=1) / math.sqrt(n_draws)),
    )


@dataclass
class ConvergenceRow:
    T: float
    t_qer: RiskEstimate
    t_qep: RiskEstimate
    t_qer_aux: RiskEstimate
    t_qep_aux: RiskEstimate
    mle_var: RiskEstimate
    bound: np.ndarray
    drift: DriftCheck
    theta_gap: GapCheck
    fisher_inv: np.ndarray

    @property
    def frob_rel_qer(self) -> float:
        return rel_frob(self.t_qer.matrix, self.bound)

    @property
    def frob_rel_qep(self) -> float:
        return rel_frob(self.t_qep.matrix, self.bound)

    @property
    def gap_qer_qep(self) -> float:
        return frob(self.t_qep.matrix - self.t_qer.matrix) / frob(self.bound)

    @property
    def mle_var_rel_err(self) -> float:
        return rel_frob(self.mle_var.matrix, self.fisher_inv)


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    estimator: str
    rows: list
    refinement: dict | None = None


def convergence_row(cfg: ExperimentConfig, T: float, estimator: str = "newton", dt=None) -> ConvergenceRow:
    r = run_replications(cfg, T, estimator, dt)
    qer_aux, qep_aux = estimate_aux_risks(cfg, T, estimator, reps=r)
    return ConvergenceRow(
        T=r.T,
        t_qer=estimate_qer(cfg, T, estimator, reps=r),
        t_qep=estimate_qep(cfg, T, estimator, reps=r),
        t_qer_aux=qer_aux,
        t_qep_aux=qep_aux,
        mle_var=estimator_variance(cfg, T, estimator, reps=r),
        bound=efficiency_bound(cfg.theta, cfg.h),
        drift=lan_drift_check(cfg, T, reps=r),
        theta_gap=theta_gap_check(cfg, T, estimator, reps=r),
        fisher_inv=q_of_theta(cfg.theta)[0],
    )


def convergence_study(cfg: ExperimentConfig, estimator: str = "newton", refine: bool = True) -> ConvergenceReport:
    """Risks and diagnostics over ``cfg.T_grid`` plus a step-halving leg at the largest ``T``."""
    rows = [convergence_row(cfg, T, estimator) for T in sorted(cfg.T_grid)]
    refinement = None
    if refine:
        T_max = max(cfg.T_grid)
        coarse = rows[-1].t_qer
        fine = estimate_qer(cfg, T_max, estimator, reps=run_replications(cfg, T_max, estimator, cfg.dt / 2))
        diff = fine.matrix - coarse.matrix
        combined = np.sqrt(fine.se**2 + coarse.se**2)
        refinement = {
            "T": T_max,
            "dt": cfg.dt,
            "dt_half": cfg.dt / 2,
            "t_qer_dt": coarse.matrix,
            "t_qer_dt_half": fine.matrix,
            "max_abs_diff": float(np.abs(diff).max()),
            "max_z": float(np.max(np.abs(diff) / combined)),
        }
    return ConvergenceReport(cfg, estimator, rows, refinement)


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, master_seed=seed)
