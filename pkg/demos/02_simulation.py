# coding: utf-8

# # Exact simulation of the bivariate process
#
# Rotating by P decouples the system into two scalar OU channels with rates
# `alpha + beta` and `alpha - beta`. Each channel is an exact AR(1) on the grid,
# so there is no discretisation error in the states themselves.

# %%
import numpy as np

from lanpredict import core
from lanpredict.simulate import (
    PathGrid,
    RngStream,
    decouple_path,
    path_to_csv,
    simulate_euler,
    simulate_exact,
    simulate_exact_batch,
)

theta = (1.0, 0.5)
grid = PathGrid.from_horizon(50.0, 0.01)
path = simulate_exact(theta, grid, RngStream(master_seed=1, stream_index=0))
print(path.states.shape, path.brown_incr.shape)
print("first rows:\n", path.states[:3])

# %% [markdown]
# Replication `r` of a seed always draws from Philox stream `r`, so a batch
# reproduces single-path calls bit for bit.

# %%
batch = simulate_exact_batch(theta, grid, 1, range(4))
print("batch row 0 == single path:", np.array_equal(batch[0], path.states))

# %% [markdown]
# Stationarity: the empirical covariance of `X_T` over many paths matches
# `Q^{-1}/2`.

# %%
ends = simulate_exact_batch(theta, PathGrid(0.05, 40), 7, range(20_000))[:, -1]
print("empirical:\n", np.cov(ends, rowvar=False))
print("closed form:\n", core.stationary_cov(theta))

# %% [markdown]
# The decoupled channels have variances `1/(4 lambda_i)`.

# %%
y1, y2 = decouple_path(path)
print("channel variances along one path:", y1.var(), y2.var())
print("targets:", 1 / (4 * 1.5), 1 / (4 * 0.5))

# %% [markdown]
# Euler-Maruyama is biased at coarse steps. Its scalar stationary variance is
# `sigma^2 / (2 lam - lam^2 dt)`, so the fast channel inflates by
# `1 / (1 - lam dt / 2)`.

# %%
for dt in (0.2, 0.05):
    g = PathGrid(dt, int(round(20 / dt)))
    y = np.array([decouple_path(simulate_euler(theta, g, RngStream(3, i)))[0][-1] for i in range(3000)])
    print(f"dt={dt}: Euler var {y.var():.4f}, theory {0.5 / (3.0 - 2.25 * dt):.4f}, exact {1/6:.4f}")

# %% [markdown]
# Paths serialise to a small CSV with a comment header.

# %%
print(path_to_csv(simulate_exact(theta, PathGrid(0.1, 3), RngStream(1, 0)), ["demo path"]))
