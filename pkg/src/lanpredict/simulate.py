"""Exact and Euler sampling of stationary bivariate OU paths on a uniform grid.

Each replication draws from its own Philox stream keyed by ``(master_seed,
stream_index)``, so a path depends only on its index and never on scheduling.
Gaussian variates come from numpy's ``Generator.standard_normal`` (ziggurat).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .core import P, ParamTheta, ThetaLike, as_theta, eigenvalues, q_of_theta
from .errors import GridError

RNG_DESCRIPTION = (
    f"numpy {np.__version__} Philox4x64 key=(master_seed, stream_index); "
    "Generator.standard_normal (ziggurat)"
)


@dataclass(frozen=True)
class PathGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise GridError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise GridError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @classmethod
    def from_horizon(cls, T: float, dt: float) -> "PathGrid":
        if not dt > 0:
            raise GridError(f"dt must be positive, got {dt}")
        # tolerate T/dt landing a hair below an integer
        return cls(dt, int(np.floor(T / dt + 1e-9)))

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed % 2**64, self.stream_index % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SamplePath:
    """States ``X_{t_i}`` on a uniform grid plus Brownian increments ``dW_i``.

    ``theta`` records the parameter used at simulation time; it is only there
    so tests can re-derive the increments.
    """

    grid: PathGrid
    states: np.ndarray
    brown_incr: np.ndarray
    theta: ParamTheta | None = field(default=None)

    def __post_init__(self):
        n = self.grid.n_steps
        if self.states.shape != (n + 1, 2) or self.brown_incr.shape != (n, 2):
            raise GridError(
                f"path arrays {self.states.shape}, {self.brown_incr.shape} do not match n_steps={n}"
            )

    @property
    def T(self) -> float:
        return self.grid.T


def reconstruct_increments(theta: ThetaLike, states: np.ndarray, dt: float) -> np.ndarray:
    """``dW_i = (X_{i+1} - X_i) + Q X_i dt``; works on ``(..., n+1, 2)`` arrays."""
    q, _ = q_of_theta(theta)
    x = states[..., :-1, :]
    return np.diff(states, axis=-2) + dt * (x @ q.T)


def _channel_params(theta: ThetaLike, dt: float):
    lam = np.array(eigenvalues(theta))
    rho = np.exp(-lam * dt)
    init_sd = np.sqrt(1.0 / (4.0 * lam))
    step_sd = np.sqrt(-np.expm1(-2.0 * lam * dt) / (4.0 * lam))
    return rho, init_sd, step_sd


def _ar1(rho: float, y0, eps: np.ndarray) -> np.ndarray:
    """``y_{k+1} = rho y_k + eps_k`` along the last axis, returning ``y_0..y_n``."""
    y0 = np.asarray(y0, dtype=float)
    tail = lfilter([1.0], [1.0, -rho], eps, axis=-1, zi=(rho * y0)[..., None])[0]
    return np.concatenate([y0[..., None], tail], axis=-1)


def _exact_states(theta: ThetaLike, grid: PathGrid, z: np.ndarray) -> np.ndarray:
    # z: (..., n+1, 2) standard normals; row 0 seeds the stationary start
    rho, init_sd, step_sd = _channel_params(theta, grid.dt)
    y = np.empty_like(z)
    for k in range(2):
        y[..., k] = _ar1(rho[k], z[..., 0, k] * init_sd[k], z[..., 1:, k] * step_sd[k])
    return y @ P.T


def sample_stationary_init(theta: ThetaLike, rng: RngStream) -> np.ndarray:
    """One draw from the stationary law ``N(0, Q^{-1}/2)``."""
    _, init_sd, _ = _channel_params(theta, 1.0)
    z = rng.generator().standard_normal(2)
    return P @ (z * init_sd)


def sample_stationary_batch(theta: ThetaLike, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. stationary draws from a single stream (for moment oracles)."""
    _, init_sd, _ = _channel_params(theta, 1.0)
    z = RngStream(seed).generator().standard_normal((n, 2))
    return (z * init_sd) @ P.T


def simulate_exact(theta: ThetaLike, grid: PathGrid, rng: RngStream) -> SamplePath:
    """Stationary path with the exact Gaussian transition law at the grid nodes."""
    theta = as_theta(theta)
    z = rng.generator().standard_normal((grid.n_steps + 1, 2))
    states = _exact_states(theta, grid, z)
    dw = reconstruct_increments(theta, states, grid.dt)
    return SamplePath(grid, states, dw, theta)


def simulate_exact_batch(
    theta: ThetaLike, grid: PathGrid, master_seed: int, indices
) -> np.ndarray:
    """States of ``simulate_exact`` for several stream indices, shape ``(k, n+1, 2)``.

    Row ``j`` is bit-identical to ``simulate_exact(theta, grid, RngStream(seed, indices[j])).states``.
    """
    theta = as_theta(theta)
    n = grid.n_steps
    z = np.empty((len(indices), n + 1, 2))
    for j, idx in enumerate(indices):
        z[j] = RngStream(master_seed, int(idx)).generator().standard_normal((n + 1, 2))
    return _exact_states(theta, grid, z)


def simulate_euler(theta: ThetaLike, grid: PathGrid, rng: RngStream) -> SamplePath:
    """Euler-Maruyama path with exactly recorded increments (validation sampler)."""
    theta = as_theta(theta)
    q, _ = q_of_theta(theta)
    z = rng.generator().standard_normal((grid.n_steps + 1, 2))
    _, init_sd, _ = _channel_params(theta, 1.0)
    dw = np.sqrt(grid.dt) * z[1:]
    step = np.eye(2) - grid.dt * q
    states = np.empty_like(z)
    states[0] = P @ (z[0] * init_sd)
    for i in range(grid.n_steps):
        states[i + 1] = step @ states[i] + dw[i]
    return SamplePath(grid, states, dw, theta)


def decouple_path(path: SamplePath) -> tuple[np.ndarray, np.ndarray]:
    """Rotate into the eigenbasis, ``y = P^{-1} x``.

    The channels are independent scalar OU processes with rates ``alpha+beta``
    and ``alpha-beta`` and diffusion variance 1/2 per unit time.
    """
    x = path.states
    return 0.5 * (x[:, 0] + x[:, 1]), 0.5 * (x[:, 0] - x[:, 1])


def recompose(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    return np.column_stack([y1 + y2, y1 - y2])


def path_to_csv(path: SamplePath, header_lines=()) -> str:
    """Serialise a path as ``t,x1,x2,dw1,dw2``; dw columns are empty on the last row."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x1", "x2", "dw1", "dw2"])
    t = path.grid.times
    n = path.grid.n_steps
    for i in range(n + 1):
        x1, x2 = path.states[i]
        if i < n:
            dw1, dw2 = path.brown_incr[i]
            w.writerow([repr(float(t[i])), repr(float(x1)), repr(float(x2)), repr(float(dw1)), repr(float(dw2))])
        else:
            w.writerow([repr(float(t[i])), repr(float(x1)), repr(float(x2)), "", ""])
    return buf.getvalue()


def path_from_csv(text: str) -> SamplePath:
    """Inverse of :func:`path_to_csv` (comment lines are skipped)."""
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
    header, body = rows[0], [r for r in rows[1:] if r]
    if header != ["t", "x1", "x2", "dw1", "dw2"]:
        raise GridError(f"unexpected path header {header}")
    t = np.array([float(r[0]) for r in body])
    states = np.array([[float(r[1]), float(r[2])] for r in body])
    dw = np.array([[float(r[3]), float(r[4])] for r in body[:-1]])
    dt = float(t[1] - t[0])
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise GridError("path grid is not uniform")
    return SamplePath(PathGrid(dt, len(body) - 1), states, dw)
