"""Continuous-record likelihood inference for the symmetric bivariate OU model.

The log-likelihood depends on the path only through six functionals (the
horizon, two energy integrals and four endpoint quadratics), so everything
below works from :class:`SufficientStats`. Integrals are left-endpoint sums.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import ParamTheta, ThetaLike, as_theta
from .errors import EstimationError, GridError, ParameterDomainError
from .simulate import PathGrid, SamplePath

LAMBDA_MIN = 1e-6


@dataclass(frozen=True)
class SufficientStats:
    T: float
    S1: float
    S2: float
    e0: float
    eT: float
    a0: float
    aT: float


@dataclass(frozen=True)
class MleResult:
    theta_hat: ParamTheta
    iterations: int
    converged: bool
    log_lik: float
    gradient_norm: float
    method: str = "newton"

    def to_dict(self) -> dict:
        return {
            "theta_hat": [self.theta_hat.alpha, self.theta_hat.beta],
            "converged": self.converged,
            "iterations": self.iterations,
            "log_lik": self.log_lik,
            "gradient_norm": self.gradient_norm,
            "method": self.method,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ScoreStat:
    delta: np.ndarray
    T: float


def stats_arrays(states: np.ndarray, dt: float) -> dict[str, np.ndarray]:
    """Sufficient statistics for ``(..., n+1, 2)`` state arrays, vectorised."""
    x1 = states[..., 0]
    x2 = states[..., 1]
    sq = x1 * x1 + x2 * x2
    ax = 2.0 * x1 * x2
    n = states.shape[-2] - 1
    return {
        "T": np.full(states.shape[:-2], n * dt),
        "S1": dt * sq[..., :-1].sum(axis=-1),
        "S2": dt * ax[..., :-1].sum(axis=-1),
        "e0": sq[..., 0],
        "eT": sq[..., -1],
        "a0": ax[..., 0],
        "aT": ax[..., -1],
    }


def sufficient_stats(path: SamplePath) -> SufficientStats:
    s = stats_arrays(path.states, path.grid.dt)
    return SufficientStats(**{k: float(v) for k, v in s.items()})


def _check(alpha: float, beta: float) -> float:
    det = alpha * alpha - beta * beta
    if not alpha > abs(beta):
        raise ParameterDomainError(f"theta=({alpha}, {beta}) is outside the domain alpha > |beta|")
    return det


def log_likelihood(theta: ThetaLike, stats: SufficientStats) -> float:
    """Log-density of the path up to a theta-free constant."""
    a, b = theta
    det = _check(a, b)
    s = stats
    return (
        math.log(2.0)
        + 0.5 * math.log(det)
        + a * s.T
        - 0.5 * (a * (s.e0 + s.eT) + b * (s.a0 + s.aT))
        - 0.5 * ((a * a + b * b) * s.S1 + 2.0 * a * b * s.S2)
    )


def score(theta: ThetaLike, stats: SufficientStats) -> np.ndarray:
    a, b = theta
    det = _check(a, b)
    s = stats
    return np.array([
        a / det + s.T - 0.5 * (s.e0 + s.eT) - (a * s.S1 + b * s.S2),
        -b / det - 0.5 * (s.a0 + s.aT) - (b * s.S1 + a * s.S2),
    ])


def hessian(theta: ThetaLike, stats: SufficientStats) -> np.ndarray:
    a, b = theta
    det = _check(a, b)
    d2 = det * det
    diag = -(a * a + b * b) / d2 - stats.S1
    off = 2.0 * a * b / d2 - stats.S2
    return np.array([[diag, off], [off, diag]])


def _decoupled(stats: SufficientStats, sigma2: float = 0.5) -> tuple[ParamTheta, bool]:
    # channel y1 = (x1+x2)/2, y2 = (x1-x2)/2: y1^2 = (|x|^2 + x'Ax)/4 etc.
    s = stats
    rates = []
    clamped = False
    for sign in (1.0, -1.0):
        energy = 0.25 * (s.S1 + sign * s.S2)
        if not energy > 0:
            raise EstimationError("zero channel energy; decoupled estimator undefined")
        y0 = 0.25 * (s.e0 + sign * s.a0)
        yT = 0.25 * (s.eT + sign * s.aT)
        lam = (sigma2 * s.T + y0 - yT) / (2.0 * energy)
        if lam <= LAMBDA_MIN:
            lam = LAMBDA_MIN
            clamped = True
        rates.append(lam)
    return ParamTheta(0.5 * (rates[0] + rates[1]), 0.5 * (rates[0] - rates[1])), clamped


def mle_decoupled(path) -> ParamTheta:
    """Channelwise conditional MLE after rotating by ``P``.

    Accepts a :class:`SamplePath` or precomputed :class:`SufficientStats`.
    Non-positive channel rates are clamped to ``LAMBDA_MIN``.
    """
    stats = path if isinstance(path, SufficientStats) else sufficient_stats(path)
    return _decoupled(stats)[0]


def mle_newton(
    stats: SufficientStats,
    init: ThetaLike | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> MleResult:
    """Damped Newton ascent on :func:`log_likelihood`.

    Steps are halved until the iterate stays in the domain and the
    log-likelihood does not decrease. Defaults to the decoupled initializer.
    """
    if init is None:
        init = _decoupled(stats)[0]
    theta = np.array(list(as_theta(init)), dtype=float)
    ll = log_likelihood(theta, stats)
    g = score(theta, stats)
    gnorm = float(np.hypot(*g))
    it = 0
    while gnorm >= tol and it < max_iter:
        it += 1
        step = -np.linalg.solve(hessian(theta, stats), g)
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            if cand[0] > abs(cand[1]):
                ll_c = log_likelihood(cand, stats)
                if ll_c >= ll - 1e-12 * (1.0 + abs(ll)):
                    break
            t *= 0.5
        else:
            raise ParameterDomainError(f"no admissible Newton step from theta={theta.tolist()}")
        theta, ll = cand, ll_c
        g = score(theta, stats)
        gnorm = float(np.hypot(*g))
    converged = gnorm < tol
    result = MleResult(ParamTheta(float(theta[0]), float(theta[1])), it, converged, ll, gnorm)
    if not converged:
        raise EstimationError(
            f"Newton did not converge in {it} iterations (|score|={gnorm:.3e})", iterations=it
        )
    return result


def lan_score_arrays(states: np.ndarray, dw: np.ndarray, T: float) -> np.ndarray:
    """``-T^{-1/2} sum_i M(X_i)' dW_i`` over the last two axes."""
    x = states[..., :-1, :]
    d1 = x[..., 0] * dw[..., 0] + x[..., 1] * dw[..., 1]
    d2 = x[..., 1] * dw[..., 0] + x[..., 0] * dw[..., 1]
    return -np.stack([d1.sum(axis=-1), d2.sum(axis=-1)], axis=-1) / np.sqrt(T)


def lan_score(theta: ThetaLike, path: SamplePath) -> ScoreStat:
    """Central statistic of the LAN expansion, a left-endpoint Ito sum.

    ``path.brown_incr`` must hold the increments of the driving noise; for
    exactly simulated paths these are reconstructed under ``theta``.
    """
    as_theta(theta)
    return ScoreStat(lan_score_arrays(path.states, path.brown_incr, path.T), path.T)


def s_rule(T: float) -> float:
    return T - math.sqrt(T)


def subpath_steps(T: float, S: float, dt: float) -> int:
    if not (0 < S <= T * (1 + 1e-12)):
        raise GridError(f"sub-horizon S={S} must lie in (0, T={T}]")
    m = int(math.floor(S / dt + 1e-9))
    if m < 2:
        raise GridError(f"sub-horizon S={S} is shorter than two grid steps")
    return m


def subpath(path: SamplePath, S: float) -> SamplePath:
    """Restriction of ``path`` to ``[0, S]`` with ``S`` snapped down to the grid."""
    m = min(subpath_steps(path.T, S, path.grid.dt), path.grid.n_steps)
    return SamplePath(
        PathGrid(path.grid.dt, m), path.states[: m + 1].copy(), path.brown_incr[:m].copy(), path.theta
    )
