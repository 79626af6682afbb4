"""Closed-form invariants checked by ``lanpredict selftest``."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .core import (
    A,
    I2,
    efficiency_bound,
    fisher_info,
    moment_MVM,
    q_of_theta,
    qer_limit_given_V,
    rel_frob,
    stationary_cov,
    transition,
    xi_fisher_inv,
    xi_jacobian,
)
from .estimate import SufficientStats, score

THETAS = [(1.0, 0.5), (1.0, 0.0), (2.0, -1.5), (0.3, 0.29), (5.0, 1.0)]
HS = [0.1, 1.0, 3.0]


def _ulp_close(a, b, n_ulp: int) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b)).max()
    return bool(np.all(np.abs(a - b) <= n_ulp * np.spacing(max(scale, np.finfo(float).tiny))))


def run_selftest() -> list[tuple[str, bool]]:
    results = []

    def check(name, ok):
        results.append((name, bool(ok)))

    for th in THETAS:
        q, spectrum = q_of_theta(th)
        check(f"spectral reconstruction {th}", _ulp_close(spectrum.reconstruct(), q, 4))
        check(f"Fisher information inverse {th}", _ulp_close(fisher_info(th) @ q, I2, 8))
        check(f"stationary covariance {th}", _ulp_close(stationary_cov(th), 0.5 * np.linalg.inv(q), 8))
        check(f"E[M Q M'] = I {th}", _ulp_close(moment_MVM(th, q), I2, 8))
        for h in HS:
            check(f"bound vs matrix exponential {th} h={h}",
                  rel_frob(efficiency_bound(th, h), h * h * expm(-2 * h * q)) < 1e-12)
            check(f"bound = QER limit at V=Q {th} h={h}",
                  _ulp_close(efficiency_bound(th, h), qer_limit_given_V(th, h, q), 8))
            _, cov = xi_fisher_inv(th, h)
            j = xi_jacobian(th, h)
            check(f"xi delta method {th} h={h}", _ulp_close(j @ q @ j.T, cov, 8))
        drift, noise = transition(th, 1e4)
        check(f"long-step transition is stationary {th}", np.allclose(noise, stationary_cov(th), rtol=1e-12))
    a, b = 1.0, 0.5
    T = 10.0
    matched = SufficientStats(T, 4 * T / 3, -2 * T / 3, 4 / 3, 4 / 3, -2 / 3, -2 / 3)
    check("expectation-matched statistics annihilate the score", np.allclose(score((a, b), matched), 0, atol=1e-12))
    check("A is an involution", np.array_equal(A @ A, I2))
    return results
