"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(estimation failure rate >= 1%), 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .core import (
    ParamTheta,
    efficiency_bound,
    fisher_info,
    stationary_cov,
    xi_fisher_inv,
)
from .errors import LanPredictError
from .estimate import MleResult, _decoupled, log_likelihood, mle_newton, score, sufficient_stats
from .risk import (
    ESTIMATORS,
    S_RULES,
    ExperimentConfig,
    convergence_row,
    convergence_study,
    lan_drift_check,
    run_replications,
    score_normality,
    theta_gap_check,
)
from .simulate import RNG_DESCRIPTION, PathGrid, RngStream, path_from_csv, path_to_csv, simulate_exact

DEFAULTS = {
    "alpha": 1.0,
    "beta": 0.5,
    "h": 1.0,
    "T_grid": [25.0, 50.0, 100.0, 200.0],
    "dt": 0.01,
    "n_rep": 1000,
    "seed": 12345,
    "estimator": "newton",
    "s_rule": "t_minus_sqrt_t",
    "out_dir": None,
    "format": "csv",
}
CONFIG_KEYS = tuple(DEFAULTS)
MAX_FLAG_RATE = 0.01

RISK_COLUMNS = ["T", "stat", "n_rep", "n_flagged", "m11", "m12", "m21", "m22", "se11", "se12", "se21", "se22"]
CONVERGENCE_COLUMNS = [
    "T", "trace_t_qer", "trace_t_qep", "trace_bound", "frob_rel_qer", "frob_rel_qep",
    "gap_qer_qep", "drift_mc", "drift_analytic", "theta_gap",
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _grid(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lanpredict", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lanpredict {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, mc=True):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--h", type=float)
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--out_dir")
        if mc:
            p.add_argument("--T_grid", type=_grid, help="comma separated horizons")
            p.add_argument("--dt", type=float)
            p.add_argument("--n_rep", type=int)
            p.add_argument("--seed", type=int)
            p.add_argument("--estimator", choices=[e for e in ESTIMATORS])
            p.add_argument("--s_rule", choices=list(S_RULES))

    common(sub.add_parser("bound", help="print the efficiency bound and related matrices"), mc=False)
    p = sub.add_parser("simulate", help="simulate one exact path and write it as CSV")
    common(p)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--index", type=int, default=0, help="replication stream index")
    p.add_argument("--dump-path", dest="dump_path")
    p = sub.add_parser("estimate", help="fit both estimators on a fresh or supplied path")
    common(p)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--path", help="path CSV with header t,x1,x2,dw1,dw2")
    p = sub.add_parser("risk", help="risk table at a single horizon")
    common(p)
    p.add_argument("--T", type=float, default=None)
    common(sub.add_parser("convergence", help="full convergence study over T_grid"))
    p = sub.add_parser("check-lan", help="score normality, drift and estimator-gap diagnostics")
    common(p)
    p.add_argument("--T", type=float, default=None)
    common(sub.add_parser("selftest", help="closed-form invariants"), mc=False)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    def bad(msg):
        raise UsageError(msg)

    for key in ("alpha", "beta", "h", "dt"):
        if not isinstance(cfg[key], (int, float)) or not math.isfinite(cfg[key]):
            bad(f"{key} must be a finite number")
    if not cfg["alpha"] > abs(cfg["beta"]):
        bad(f"alpha={cfg['alpha']}, beta={cfg['beta']} outside the domain alpha > |beta|")
    if not cfg["h"] > 0:
        bad(f"h must be positive, got {cfg['h']}")
    if not cfg["dt"] > 0:
        bad(f"dt must be positive, got {cfg['dt']}")
    if not cfg["T_grid"] or any(not T >= 10 * cfg["dt"] for T in cfg["T_grid"]):
        bad(f"T_grid must be non-empty with every T >= 10*dt, got {cfg['T_grid']}")
    if not isinstance(cfg["n_rep"], int) or cfg["n_rep"] < 2:
        bad(f"n_rep must be an integer >= 2, got {cfg['n_rep']}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        bad(f"seed must be a non-negative integer, got {cfg['seed']}")
    if cfg["estimator"] not in ESTIMATORS:
        bad(f"estimator must be one of {ESTIMATORS}")
    if cfg["s_rule"] not in S_RULES:
        bad(f"s_rule must be one of {S_RULES}")
    if cfg["format"] not in ("csv", "json"):
        bad("format must be csv or json")


def experiment_config(cfg: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            theta=ParamTheta(float(cfg["alpha"]), float(cfg["beta"])),
            h=float(cfg["h"]),
            T_grid=tuple(cfg["T_grid"]),
            dt=float(cfg["dt"]),
            n_rep=int(cfg["n_rep"]),
            master_seed=int(cfg["seed"]),
            s_rule=cfg["s_rule"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def header_lines(cfg: dict, command: str) -> list[str]:
    return [
        f"lanpredict {__version__} {command}",
        f"created {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
        f"config {json.dumps(cfg, sort_keys=True)}",
        f"seed {cfg.get('seed')}",
        f"rng {RNG_DESCRIPTION}",
    ]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows, header=()) -> str:
    out = [f"# {line}" for line in header]
    out.append(",".join(columns))
    out.extend(",".join(_fmt(r[c]) for c in columns) for r in rows)
    return "\n".join(out) + "\n"


def json_text(payload, header=()) -> str:
    return json.dumps({"meta": list(header), **payload}, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(cfg: dict, name: str, text: str, stdout) -> None:
    if cfg.get("out_dir"):
        write_atomic(os.path.join(cfg["out_dir"], name), text)
    else:
        stdout.write(text)


def risk_rows(row) -> list[dict]:
    out = []
    for stat, est in (
        ("t_qer", row.t_qer),
        ("t_qep", row.t_qep),
        ("t_qer_aux", row.t_qer_aux),
        ("t_qep_aux", row.t_qep_aux),
        ("mle_var", row.mle_var),
    ):
        m, s = est.matrix, est.se
        out.append({
            "T": row.T, "stat": stat, "n_rep": est.n_rep, "n_flagged": est.n_flagged,
            "m11": m[0, 0], "m12": m[0, 1], "m21": m[1, 0], "m22": m[1, 1],
            "se11": s[0, 0], "se12": s[0, 1], "se21": s[1, 0], "se22": s[1, 1],
        })
    b = row.bound
    out.append({
        "T": row.T, "stat": "bound", "n_rep": 0, "n_flagged": 0,
        "m11": b[0, 0], "m12": b[0, 1], "m21": b[1, 0], "m22": b[1, 1],
        "se11": 0.0, "se12": 0.0, "se21": 0.0, "se22": 0.0,
    })
    return out


def convergence_record(row) -> dict:
    return {
        "T": row.T,
        "trace_t_qer": float(np.trace(row.t_qer.matrix)),
        "trace_t_qep": float(np.trace(row.t_qep.matrix)),
        "trace_bound": float(np.trace(row.bound)),
        "frob_rel_qer": row.frob_rel_qer,
        "frob_rel_qep": row.frob_rel_qep,
        "gap_qer_qep": row.gap_qer_qep,
        "drift_mc": row.drift.mc,
        "drift_analytic": row.drift.analytic,
        "theta_gap": row.theta_gap.value,
    }


def _flag_rate(rows) -> float:
    return max(r.t_qer.n_flagged / r.t_qer.n_rep for r in rows)


def _T(args, cfg) -> float:
    T = float(args.T) if getattr(args, "T", None) is not None else float(max(cfg["T_grid"]))
    if not (math.isfinite(T) and T >= 10 * cfg["dt"]):
        raise UsageError(f"T must be >= 10*dt={10 * cfg['dt']}, got {T}")
    if getattr(args, "index", 0) < 0:
        raise UsageError(f"index must be non-negative, got {args.index}")
    return T


def cmd_bound(args, cfg, stdout) -> int:
    theta = ParamTheta(cfg["alpha"], cfg["beta"])
    xi, xi_cov = xi_fisher_inv(theta, cfg["h"])
    payload = {
        "alpha": theta.alpha,
        "beta": theta.beta,
        "h": cfg["h"],
        "efficiency_bound": efficiency_bound(theta, cfg["h"]),
        "fisher_info": fisher_info(theta),
        "xi": [xi.eta, xi.gamma],
        "xi_fisher_inv": xi_cov,
        "stationary_cov": stationary_cov(theta),
    }
    if cfg["format"] == "json":
        stdout.write(json_text(payload, header_lines(cfg, "bound")))
    else:
        np.set_printoptions(precision=6, suppress=True)
        for key, val in payload.items():
            stdout.write(f"{key}: {np.array2string(np.asarray(val), separator=', ') if isinstance(val, (np.ndarray, list)) else val}\n")
    return 0


def cmd_simulate(args, cfg, stdout) -> int:
    theta = ParamTheta(cfg["alpha"], cfg["beta"])
    grid = PathGrid.from_horizon(_T(args, cfg), cfg["dt"])
    path = simulate_exact(theta, grid, RngStream(cfg["seed"], args.index))
    text = path_to_csv(path, header_lines(cfg, "simulate"))
    if args.dump_path:
        write_atomic(args.dump_path, text)
    else:
        emit(cfg, "path.csv", text, stdout)
    return 0


def _decoupled_result(stats) -> MleResult:
    theta, clamped = _decoupled(stats)
    g = score(theta, stats)
    return MleResult(theta, 0, not clamped, log_likelihood(theta, stats), float(np.hypot(*g)), "decoupled")


def cmd_estimate(args, cfg, stdout) -> int:
    if args.path:
        try:
            with open(args.path) as fh:
                path = path_from_csv(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read path {args.path}: {exc}") from exc
    else:
        grid = PathGrid.from_horizon(_T(args, cfg), cfg["dt"])
        path = simulate_exact(ParamTheta(cfg["alpha"], cfg["beta"]), grid, RngStream(cfg["seed"], args.index))
    stats = sufficient_stats(path)
    dec = _decoupled_result(stats)
    newton = mle_newton(stats, init=dec.theta_hat)
    payload = {"results": [newton.to_dict(), dec.to_dict()]}
    emit(cfg, "estimate.json", json_text(payload, header_lines(cfg, "estimate")), stdout)
    return 0


def cmd_risk(args, cfg, stdout) -> int:
    ecfg = experiment_config(cfg)
    T = _T(args, cfg)
    experiment_config({**cfg, "T_grid": [T]})
    row = convergence_row(ecfg, T, cfg["estimator"])
    header = header_lines(cfg, "risk")
    if cfg["format"] == "json":
        text = json_text({"risks": risk_rows(row)}, header)
    else:
        text = csv_text(RISK_COLUMNS, risk_rows(row), header)
    emit(cfg, "risks." + cfg["format"], text, stdout)
    return 2 if _flag_rate([row]) >= MAX_FLAG_RATE else 0


def cmd_convergence(args, cfg, stdout) -> int:
    ecfg = experiment_config(cfg)
    report = convergence_study(ecfg, cfg["estimator"])
    header = header_lines(cfg, "convergence")
    conv = [convergence_record(r) for r in report.rows]
    risks = [rr for r in report.rows for rr in risk_rows(r)]
    if cfg["format"] == "json":
        emit(cfg, "convergence.json",
             json_text({"convergence": conv, "risks": risks, "refinement": report.refinement}, header), stdout)
    else:
        emit(cfg, "convergence.csv", csv_text(CONVERGENCE_COLUMNS, conv, header), stdout)
        if cfg.get("out_dir"):
            write_atomic(os.path.join(cfg["out_dir"], "risks.csv"), csv_text(RISK_COLUMNS, risks, header))
            write_atomic(os.path.join(cfg["out_dir"], "refinement.json"),
                         json_text({"refinement": report.refinement}, header))
    return 2 if _flag_rate(report.rows) >= MAX_FLAG_RATE else 0


def lan_checks(ecfg: ExperimentConfig, T: float, estimator: str) -> list[tuple[str, bool, str]]:
    """Score normality, drift and estimator-gap checks at horizon ``T``."""
    rep = run_replications(ecfg, T, "oracle")
    norm = score_normality(ecfg, T, reps=rep)
    drift = lan_drift_check(ecfg, T, reps=rep)
    checks = [
        ("score covariance within 10% of Fisher information", norm.rel_err < 0.10, f"rel_err={norm.rel_err:.4f}"),
        ("score |skewness| < 0.25", bool(np.all(np.abs(norm.skewness) < 0.25)), f"skew={norm.skewness.round(4).tolist()}"),
        ("score |excess kurtosis| < 0.5", bool(np.all(np.abs(norm.excess_kurtosis) < 0.5)),
         f"kurt={norm.excess_kurtosis.round(4).tolist()}"),
        ("score drift within 3 SE of closed form", abs(drift.mc - drift.analytic) <= 3 * drift.se,
         f"mc={drift.mc:.5f} analytic={drift.analytic:.5f} se={drift.se:.5f}"),
    ]
    gaps = [theta_gap_check(ecfg, t, estimator) for t in sorted(ecfg.T_grid)]
    if len(gaps) >= 2:
        ok = gaps[-1].value < gaps[0].value
        checks.append(("estimator gap decreasing over T_grid", ok, " ".join(f"{g.value:.4f}" for g in gaps)))
    return checks


def cmd_check_lan(args, cfg, stdout) -> int:
    ecfg = experiment_config(cfg)
    T = _T(args, {**cfg, "T_grid": [100.0]})
    experiment_config({**cfg, "T_grid": [T]})
    checks = lan_checks(ecfg, T, cfg["estimator"])
    for name, ok, detail in checks:
        stdout.write(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})\n")
    return 0 if all(ok for _, ok, _ in checks) else 3


def cmd_selftest(args, cfg, stdout) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    for name, ok in results:
        stdout.write(f"{'PASS' if ok else 'FAIL'}  {name}\n")
    return 0 if all(ok for _, ok in results) else 3


COMMANDS = {
    "bound": cmd_bound,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "risk": cmd_risk,
    "convergence": cmd_convergence,
    "check-lan": cmd_check_lan,
    "selftest": cmd_selftest,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg, stdout)
    except UsageError as exc:
        stderr.write(f"lanpredict: error: {exc}\n")
        return 1
    except LanPredictError as exc:
        stderr.write(f"lanpredict: numerical failure: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
