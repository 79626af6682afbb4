"""Acceptance suite at the default experiment configuration.

Every criterion is evaluated at its stated tolerance with theta=(1, 0.5), h=1,
dt=0.01, n_rep=1000 and master seed 12345. Each test records one PASS/FAIL
line, printed again in the terminal summary.
"""

import json
import math
import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest
import scipy.linalg

from lanpredict import core
from lanpredict.estimate import SufficientStats, log_likelihood, score
from lanpredict.risk import (
    ExperimentConfig,
    convergence_study,
    delta_moment_bound,
    estimate_qep,
    estimate_qer,
    run_replications,
    score_normality,
)
from lanpredict.simulate import sample_stationary_batch

CFG = ExperimentConfig()
THETA = CFG.theta
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture(scope="module")
def study():
    return convergence_study(CFG, "newton")


def row_at(study, T):
    return next(r for r in study.rows if r.T == T)


def mp_expm_oracle(mat):
    # mpmath's Taylor scaling-and-squaring at 40 digits
    with mpmath.workdps(40):
        e = mpmath.expm(mpmath.matrix(mat.tolist()), method="taylor")
        return np.array([[float(e[i, j]) for j in range(2)] for i in range(2)])


def test_c01_bound_exactness(criterion):
    q, _ = core.q_of_theta(THETA)
    target = CFG.h**2 * mp_expm_oracle(-2 * CFG.h * q)
    ours = core.efficiency_bound(THETA, CFG.h)
    err = core.rel_frob(ours, target)
    err_scipy = core.rel_frob(ours, CFG.h**2 * scipy.linalg.expm(-2 * CFG.h * q))
    ok = criterion.record("1", err < 1e-12 and err_scipy < 1e-12,
                          f"rel err vs mpmath {err:.2e}, vs scipy expm {err_scipy:.2e} (< 1e-12)")
    assert ok


def test_c02_fisher_identity(criterion):
    q, _ = core.q_of_theta(THETA)
    closed = core.moment_MVM(THETA, q)
    ulps = np.abs(closed - np.eye(2)) / np.spacing(1.0)
    x = sample_stationary_batch(THETA, 10**5, 2)
    m = core.m_of_x(x)
    prods = m @ q @ np.swapaxes(m, -1, -2)
    mean = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(len(x))
    z = np.abs(mean - np.eye(2)) / se
    ok = criterion.record("2", ulps.max() <= 8 and z.max() <= 3,
                          f"closed form {ulps.max():.0f} ulp (<= 8), MC max |z| {z.max():.2f} (<= 3)")
    assert ok


def test_c03_plug_in_efficiency(study, criterion):
    rel = {r.T: r.frob_rel_qer for r in study.rows}
    ok_a = criterion.record("3a", rel[100.0] < 0.15, f"T*rho vs bound at T=100: rel {rel[100.0]:.4f} (< 0.15)")
    ok_b = criterion.record("3b", rel[200.0] < rel[25.0],
                            f"rel err T=200 {rel[200.0]:.4f} < T=25 {rel[25.0]:.4f}")
    assert ok_a and ok_b


def test_c04_risk_equivalence(study, criterion):
    gap = {r.T: r.gap_qer_qep for r in study.rows}
    qep = row_at(study, 100.0).frob_rel_qep
    ok_a = criterion.record("4a", gap[200.0] < gap[25.0],
                            f"|T*R - T*rho|/|bound| T=200 {gap[200.0]:.4f} < T=25 {gap[25.0]:.4f}")
    ok_b = criterion.record("4b", qep < 0.20, f"T*R vs bound at T=100: rel {qep:.4f} (< 0.20)")
    assert ok_a and ok_b


def test_c05_mle_efficiency(study, criterion):
    row = row_at(study, 100.0)
    rate = max(r.mle_var.n_flagged / r.mle_var.n_rep for r in study.rows)
    ok = criterion.record("5", row.mle_var_rel_err < 0.15 and rate < 0.01,
                          f"T*Cov(theta_hat) vs Q rel {row.mle_var_rel_err:.4f} (< 0.15), flag rate {rate:.3%} (< 1%)")
    assert ok


def test_c06_convolution_lower_bound(study, criterion):
    margins = {}
    for r in study.rows:
        upper = r.t_qer.matrix + 3 * r.t_qer.se
        margins[r.T] = float(np.linalg.eigvalsh(0.5 * (upper + upper.T) - r.bound).min())
    ok = all(core.lowner_leq(r.bound, r.t_qer.matrix + 3 * r.t_qer.se) for r in study.rows)
    detail = ", ".join(f"T={T:g}: {m:+.4f}" for T, m in margins.items())
    assert criterion.record("6", ok, f"min eig(T*rho + 3 SE - bound): {detail}")


def test_c07_lan_score(criterion):
    rep = score_normality(CFG, 100.0)
    skew = np.abs(rep.skewness).max()
    kurt = np.abs(rep.excess_kurtosis).max()
    ok = criterion.record("7", rep.rel_err < 0.10 and skew < 0.25 and kurt < 0.5,
                          f"cov rel {rep.rel_err:.4f} (< 0.10), max |skew| {skew:.3f} (< 0.25), "
                          f"max |ex. kurt| {kurt:.3f} (< 0.5)")
    assert ok


def test_c08_score_drift(study, criterion):
    d = row_at(study, 100.0).drift
    z = abs(d.mc - d.analytic) / d.se
    ok = criterion.record("8", z <= 3 and abs(d.analytic - 0.296296) < 1e-6,
                          f"MC {d.mc:.5f} vs analytic {d.analytic:.6f}, |z| {z:.2f} (<= 3)")
    assert ok


def test_c09_theta_gap(study, criterion):
    gaps = [r.theta_gap for r in study.rows]
    inversions = [
        (a, b) for a, b in zip(gaps, gaps[1:]) if b.value >= a.value
    ]
    compatible = all(b.value - a.value <= 3 * math.hypot(a.se, b.se) for a, b in inversions)
    ok = gaps[-1].value < gaps[0].value and len(inversions) <= 1 and compatible
    seq = " > ".join(f"{g.value:.4f}" for g in gaps)
    assert criterion.record("9", ok, f"T*E|theta_T - theta_S|^2 over T grid: {seq}; inversions {len(inversions)}")


def test_c10_estimator_cross_validation(criterion):
    newton = run_replications(CFG, 100.0, "newton")
    dec = run_replications(CFG, 100.0, "decoupled")
    both = newton.ok & dec.ok
    dist = np.linalg.norm(newton.theta_T[both] - dec.theta_T[both], axis=1)
    frac = float((dist < 0.05).mean())
    worst = 0.0
    for fn in (estimate_qer, estimate_qep):
        a, b = fn(CFG, 100.0, "newton", reps=newton), fn(CFG, 100.0, "decoupled", reps=dec)
        worst = max(worst, float((np.abs(a.matrix - b.matrix) / np.sqrt(a.se**2 + b.se**2)).max()))
    ok = criterion.record("10", frac >= 0.95 and worst <= 3,
                          f"|newton - decoupled| < 0.05 on {frac:.1%} (>= 95%), risk max |z| {worst:.2f} (<= 3)")
    assert ok


def test_c11_gradient_checks(criterion):
    rng = np.random.default_rng(11)
    worst_score = worst_jac = 0.0
    for _ in range(100):
        a = rng.uniform(0.3, 3.0)
        t = np.array([a, rng.uniform(-0.9, 0.9) * a])
        T = rng.uniform(1, 200)
        S1 = rng.uniform(0.2, 2.0) * T
        e0, eT = rng.uniform(0, 3, 2)
        stats = SufficientStats(T, S1, rng.uniform(-0.9, 0.9) * S1, e0, eT,
                                rng.uniform(-1, 1) * e0, rng.uniform(-1, 1) * eT)
        step = 1e-3 * min(t[0] - abs(t[1]), 1.0)
        fd = np.array([
            (-log_likelihood(t + 2 * e, stats) + 8 * log_likelihood(t + e, stats)
             - 8 * log_likelihood(t - e, stats) + log_likelihood(t - 2 * e, stats)) / (12 * step)
            for e in np.eye(2) * step
        ])
        g = score(t, stats)
        worst_score = max(worst_score, np.linalg.norm(fd - g) / np.linalg.norm(g))
        h = rng.uniform(0.1, 3.0)
        x = rng.standard_normal(2) * rng.uniform(0.1, 5)
        hs = 1e-6
        fd_j = np.column_stack([
            (core.regression(t + e, h, x) - core.regression(t - e, h, x)) / (2 * hs) for e in np.eye(2) * hs
        ])
        jac = core.regression_jacobian(t, h, x)
        worst_jac = max(worst_jac, core.rel_frob(fd_j, jac))
    ok = criterion.record("11", worst_score < 1e-8 and worst_jac < 1e-6,
                          f"max rel err score {worst_score:.2e} (< 1e-8), regression Jacobian {worst_jac:.2e} (< 1e-6)")
    assert ok


def test_c12a_outer_difference_inequality(criterion):
    rng = np.random.default_rng(12)
    triples = rng.standard_normal((10_000, 3, 2)) * rng.uniform(0.01, 10, (10_000, 1, 1))
    n_ok = sum(core.outer_diff_bound(*t) for t in triples)
    assert criterion.record("12a", n_ok == len(triples), f"outer-product difference bound on {n_ok}/10000 triples")


def test_c12b_lipschitz_envelope(criterion):
    rng = np.random.default_rng(13)
    box = ((0.8, 1.4), (0.2, 0.6))
    n_ok = 0
    for _ in range(10_000):
        t1 = np.array([rng.uniform(*box[0]), rng.uniform(*box[1])])
        t2 = np.array([rng.uniform(*box[0]), rng.uniform(*box[1])])
        x = rng.standard_normal(2) * rng.uniform(0.1, 5)
        lhs = np.linalg.norm(core.regression(t1, CFG.h, x) - core.regression(t2, CFG.h, x))
        n_ok += lhs <= core.lipschitz_envelope(box, CFG.h, x) * np.linalg.norm(t1 - t2)
    assert criterion.record("12b", n_ok == 10_000, f"Lipschitz envelope on {n_ok}/10000 (theta, theta', x)")


def _run_convergence(threads, out_dir):
    env = dict(os.environ, LANPREDICT_THREADS=str(threads))
    proc = subprocess.run(
        [sys.executable, "-m", "lanpredict", "convergence",
         "--config", os.path.join(ROOT, "configs", "default.json"), "--out_dir", str(out_dir)],
        env=env, capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    files = {}
    for name in ("convergence.csv", "risks.csv"):
        text = (out_dir / name).read_text()
        files[name] = [ln for ln in text.splitlines() if not ln.startswith("#")]
    files["refinement.json"] = json.loads((out_dir / "refinement.json").read_text())["refinement"]
    return files


@pytest.mark.slow
def test_c12c_cli_determinism_across_threads(tmp_path, criterion):
    (tmp_path / "t1").mkdir()
    (tmp_path / "t4").mkdir()
    a = _run_convergence(1, tmp_path / "t1")
    b = _run_convergence(4, tmp_path / "t4")
    ok = a == b
    n_rows = len(a["convergence.csv"]) - 1
    assert criterion.record("12c", ok and n_rows == 4,
                            f"convergence rows identical with LANPREDICT_THREADS=1 and 4 ({n_rows} rows)")


def test_c13_moment_bound(criterion):
    mb = delta_moment_bound(THETA, n_draws=10**6, seed=0)
    z = abs(mb.mc - mb.gaussian_moment) / mb.mc_se
    ok = abs(mb.gaussian_moment - 10.6667) < 1e-4 and z <= 3
    assert criterion.record("13", ok, f"MC {mb.mc:.4f} vs Gaussian moment {mb.gaussian_moment:.4f} "
                                      f"(|z| {z:.2f} <= 3); printed constant {mb.literature_constant:.4f} reported only")
