"""Closed-form 2x2 matrix calculus for the symmetric bivariate OU model.

The drift matrix is ``Q(theta) = alpha*I + beta*A`` with ``A = [[0, 1], [1, 0]]``.
Every such matrix is diagonalised by the constant basis ``P = [[1, 1], [1, -1]]``
with eigenvalues ``alpha + beta`` and ``alpha - beta``, so all matrix functions
of ``Q`` are evaluated through that fixed decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DomainError, GridError, ParameterDomainError

A = np.array([[0.0, 1.0], [1.0, 0.0]])
I2 = np.eye(2)
P = np.array([[1.0, 1.0], [1.0, -1.0]])
P_INV = 0.5 * P


@dataclass(frozen=True)
class ParamTheta:
    """Drift parameter ``theta = (alpha, beta)``."""

    alpha: float
    beta: float

    def in_domain(self) -> bool:
        return bool(self.alpha > abs(self.beta))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=float)

    def __iter__(self):
        yield self.alpha
        yield self.beta


@dataclass(frozen=True)
class Spectral:
    """Eigenvalues of ``Q(theta)`` in the fixed basis ``P``."""

    lambda1: float
    lambda2: float

    def diag(self) -> np.ndarray:
        return np.diag([self.lambda1, self.lambda2])

    def reconstruct(self) -> np.ndarray:
        return P @ self.diag() @ P_INV


@dataclass(frozen=True)
class ReparamXi:
    eta: float
    gamma: float


ThetaLike = Union[ParamTheta, Sequence[float], np.ndarray]


def as_theta(theta: ThetaLike, check: bool = True) -> ParamTheta:
    """Coerce ``theta`` to :class:`ParamTheta`, optionally checking the domain."""
    if not isinstance(theta, ParamTheta):
        a, b = theta
        theta = ParamTheta(float(a), float(b))
    if check and not theta.in_domain():
        raise ParameterDomainError(
            f"theta=({theta.alpha}, {theta.beta}) is outside the domain alpha > |beta|"
        )
    return theta


def eigenvalues(theta: ThetaLike) -> tuple[float, float]:
    theta = as_theta(theta)
    return theta.alpha + theta.beta, theta.alpha - theta.beta


def q_of_theta(theta: ThetaLike) -> tuple[np.ndarray, Spectral]:
    """Return ``Q(theta)`` and its spectral pair ``(alpha+beta, alpha-beta)``."""
    theta = as_theta(theta)
    q = theta.alpha * I2 + theta.beta * A
    return q, Spectral(theta.alpha + theta.beta, theta.alpha - theta.beta)


def _from_eigen(f1, f2) -> np.ndarray:
    # P diag(f1, f2) P^{-1} written out; broadcasts over leading axes of f1, f2
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    s = 0.5 * (f1 + f2)
    d = 0.5 * (f1 - f2)
    return np.stack([np.stack([s, d], -1), np.stack([d, s], -1)], -2)


def mat_func(theta: ThetaLike, f: Callable[[float], float]) -> np.ndarray:
    """Evaluate the matrix function ``f(Q(theta))``.

    ``f`` is applied to the two eigenvalues and mapped back through ``P``.
    """
    lam1, lam2 = eigenvalues(theta)
    return _from_eigen(f(lam1), f(lam2))


def expm_q(theta: ThetaLike, s: float) -> np.ndarray:
    """``exp(-s Q(theta))``."""
    lam1, lam2 = eigenvalues(theta)
    return _from_eigen(np.exp(-s * lam1), np.exp(-s * lam2))


def expm_q_batch(thetas: np.ndarray, s: float) -> np.ndarray:
    """``exp(-s Q(theta_k))`` for an ``(n, 2)`` array of parameters, no domain check."""
    thetas = np.asarray(thetas, dtype=float)
    lam1 = thetas[..., 0] + thetas[..., 1]
    lam2 = thetas[..., 0] - thetas[..., 1]
    return _from_eigen(np.exp(-s * lam1), np.exp(-s * lam2))


def stationary_cov(theta: ThetaLike) -> np.ndarray:
    """Stationary covariance ``Q(theta)^{-1} / 2``."""
    return mat_func(theta, lambda lam: 1.0 / (2.0 * lam))


def transition(theta: ThetaLike, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step transition ``X' = drift @ X + N(0, noise_cov)`` over ``dt``.

    ``dt = 0`` is accepted and gives the degenerate step ``(I, 0)``.
    """
    if not dt >= 0:
        raise GridError(f"time step must be non-negative, got dt={dt}")
    drift = expm_q(theta, dt)
    noise_cov = mat_func(theta, lambda lam: -np.expm1(-2.0 * lam * dt) / (2.0 * lam))
    return drift, noise_cov


def m_of_x(x) -> np.ndarray:
    """``M(x) = x1*I + x2*A``; broadcasts over leading axes of ``x``."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([np.stack([x1, x2], -1), np.stack([x2, x1], -1)], -2)


def regression(theta: ThetaLike, h: float, x) -> np.ndarray:
    """Conditional mean ``exp(-h Q(theta)) x`` of the state ``h`` ahead."""
    e = expm_q(theta, h)
    return np.asarray(x, dtype=float) @ e.T


def regression_jacobian(theta: ThetaLike, h: float, x) -> np.ndarray:
    """Jacobian of :func:`regression` in ``(alpha, beta)``: ``-h exp(-hQ) M(x)``."""
    return -h * expm_q(theta, h) @ m_of_x(x)


def fisher_info(theta: ThetaLike) -> np.ndarray:
    """Per-unit-time Fisher information ``Q(theta)^{-1}``."""
    return mat_func(theta, lambda lam: 1.0 / lam)


def fisher_info_inv(theta: ThetaLike) -> np.ndarray:
    return q_of_theta(theta)[0]


def efficiency_bound(theta: ThetaLike, h: float) -> np.ndarray:
    """Optimal limit ``h^2 exp(-2h Q(theta))`` of the normalised plug-in risks."""
    return h * h * expm_q(theta, 2.0 * h)


def gaussian_moments(theta: ThetaLike) -> tuple[float, float]:
    """``(E X1^2, E X1 X2)`` under the stationary law (``E X2^2 = E X1^2``)."""
    theta = as_theta(theta)
    det = theta.alpha**2 - theta.beta**2
    return theta.alpha / (2.0 * det), -theta.beta / (2.0 * det)


def moment_MVM(theta: ThetaLike, V) -> np.ndarray:
    """``E[M(X) V M(X)']`` for ``X`` drawn from the stationary law.

    Equals ``m V + c (VA + AV) + m AVA`` with ``m = E X1^2``, ``c = E X1 X2``.
    In the eigenbasis ``M(X) = P diag(2 Y) P^{-1}`` with independent channels of
    variance ``1/(4 lambda_i)``, so only the diagonal of ``P^{-1} V P`` survives:
    the result is ``P diag(B_ii / lambda_i) P^{-1}``.
    """
    lam1, lam2 = eigenvalues(theta)
    b11, b22 = _eigen_diag(V)
    return _from_eigen(b11 / lam1, b22 / lam2)


def _eigen_diag(V) -> tuple[float, float]:
    # diagonal of P^{-1} V P
    V = np.asarray(V, dtype=float)
    return (
        0.5 * (V[0, 0] + V[0, 1] + V[1, 0] + V[1, 1]),
        0.5 * (V[0, 0] - V[0, 1] - V[1, 0] + V[1, 1]),
    )


def qer_limit_given_V(theta: ThetaLike, h: float, V) -> np.ndarray:
    """Limit of ``T * QER`` for a plug-in whose normalised error has covariance ``V``.

    ``h^2 e^{-hQ} E[M V M'] e^{-hQ}``; every factor is diagonal in the basis ``P``.
    """
    lam1, lam2 = eigenvalues(theta)
    b11, b22 = _eigen_diag(V)
    f1, f2 = np.exp(-h * lam1), np.exp(-h * lam2)
    return h * h * _from_eigen(f1 * f1 * (b11 / lam1), f2 * f2 * (b22 / lam2))


def scalar_qer_limit(lam: float, h: float, sigma2: float, V: float) -> float:
    """Limit QER for the scalar channel ``dX = -lam X dt + sigma dW``."""
    if not lam > 0:
        raise ParameterDomainError(f"rate must be positive, got {lam}")
    return h * h * np.exp(-2.0 * h * lam) * sigma2 / (2.0 * lam) * V


def xi_of_theta(theta: ThetaLike, h: float) -> ReparamXi:
    lam1, lam2 = eigenvalues(theta)
    return ReparamXi(float(np.exp(-h * lam1)), float(np.exp(-h * lam2)))


def xi_jacobian(theta: ThetaLike, h: float) -> np.ndarray:
    xi = xi_of_theta(theta, h)
    return -h * np.array([[xi.eta, xi.eta], [xi.gamma, -xi.gamma]])


def xi_fisher_inv(theta: ThetaLike, h: float) -> tuple[ReparamXi, np.ndarray]:
    """Reparameterisation ``xi = (exp(-h(a+b)), exp(-h(a-b)))`` and its inverse information."""
    lam1, lam2 = eigenvalues(theta)
    xi = xi_of_theta(theta, h)
    cov = 2.0 * h * h * np.diag([lam1 * np.exp(-2.0 * h * lam1), lam2 * np.exp(-2.0 * h * lam2)])
    return xi, cov


def frob(m) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=float)))


def rel_frob(estimate, target) -> float:
    return frob(np.asarray(estimate) - np.asarray(target)) / frob(target)


def outer(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u[..., :, None] * u[..., None, :]


def lowner_leq(a, b, tol: float | None = None) -> bool:
    """Loewner order test ``a <= b``: all eigenvalues of ``sym(b - a)`` are >= -tol."""
    diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    diff = 0.5 * (diff + diff.T)
    if tol is None:
        tol = 1e-10 * (1.0 + frob(diff))
    return bool(np.linalg.eigvalsh(diff).min() >= -tol)


def lipschitz_envelope(theta_box, h: float, x) -> float:
    """Lipschitz constant in ``theta`` of ``r(x, .)`` valid over a parameter box.

    ``theta_box`` is ``((alpha_lo, alpha_hi), (beta_lo, beta_hi))``. The bound
    ``sqrt(2) h ||P||^2 ||exp(-h D)|| ||x||`` is convex in ``theta`` so its sup over
    the box is attained at a corner.
    """
    (a_lo, a_hi), (b_lo, b_hi) = theta_box
    corners = [(a, b) for a in (a_lo, a_hi) for b in (b_lo, b_hi)]
    if not all(a > abs(b) for a, b in corners):
        raise DomainError(f"parameter box {theta_box} is not inside alpha > |beta|")
    p_norm2 = frob(P) ** 2
    env = max(
        np.sqrt(np.exp(-2.0 * h * (a + b)) + np.exp(-2.0 * h * (a - b))) for a, b in corners
    )
    return float(np.sqrt(2.0) * h * p_norm2 * env * np.linalg.norm(x))


def outer_diff_bound(U, V, W) -> bool:
    """Check ``||(U-V)^2 - (W-V)^2|| <= ||U-W||^2 + 2 ||U-W|| ||W-V||``."""
    U, V, W = (np.asarray(v, dtype=float) for v in (U, V, W))
    lhs = frob(outer(U - V) - outer(W - V))
    uw = np.linalg.norm(U - W)
    rhs = uw * uw + 2.0 * uw * np.linalg.norm(W - V)
    # rounding slack for the equality cases
    return bool(lhs <= rhs * (1.0 + 1e-12) + 1e-300)
