# coding: utf-8

# # Closed-form matrix functions of Q(theta)
#
# The drift matrix is `Q = alpha*I + beta*A` with `A` the swap matrix. Every
# Q(theta) shares the eigenvectors (1, 1) and (1, -1), so exponentials, inverses
# and the efficiency bound reduce to scalar functions of two eigenvalues.

# %%
import numpy as np
import scipy.linalg

from lanpredict import core

theta = core.ParamTheta(1.0, 0.5)
q, spectrum = core.q_of_theta(theta)
print("Q =\n", q)
print("eigenvalues:", spectrum.lambda1, spectrum.lambda2)

# %% [markdown]
# The one-step-ahead regression matrix `exp(-hQ)` agrees with a general-purpose
# Pade routine to rounding level.

# %%
h = 1.0
ours = core.expm_q(theta, h)
print(ours)
print("rel diff vs scipy:", core.rel_frob(ours, scipy.linalg.expm(-h * q)))

# %% [markdown]
# The efficiency bound `h^2 exp(-2hQ)` is what `T` times any regular plug-in
# risk can at best converge to.

# %%
nu = core.efficiency_bound(theta, h)
print("bound =\n", nu)
print("Fisher information (per unit time) =\n", core.fisher_info(theta))
print("stationary covariance =\n", core.stationary_cov(theta))

# %% [markdown]
# The bound is also the delta-method variance `J Q J'` averaged over the
# stationary law, with `J = -h exp(-hQ) M(x)`. Check that numerically.

# %%
rng = np.random.default_rng(0)
x = rng.multivariate_normal(np.zeros(2), core.stationary_cov(theta), size=200_000)
jac = core.regression_jacobian(theta, h, x)
mc = (jac @ q @ np.swapaxes(jac, -1, -2)).mean(axis=0)
print("MC delta-method average =\n", mc)
print("rel err:", core.rel_frob(mc, nu))

# %% [markdown]
# Shrinking the horizon kills the bound quadratically, and pushing theta towards
# the boundary `alpha = |beta|` makes the slow channel dominate.

# %%
for hh in (0.1, 0.5, 1.0, 2.0):
    print(f"h={hh:4}: trace bound = {np.trace(core.efficiency_bound(theta, hh)):.5f}")
for b in (0.0, 0.5, 0.9, 0.99):
    print(f"beta={b:4}: eigenvalues of bound = {np.linalg.eigvalsh(core.efficiency_bound((1.0, b), h)).round(5)}")
