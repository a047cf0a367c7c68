"""Command-line entry point: simulate, verify, covariance.

Outputs are machine-readable and deterministic: a rerun with the same
config and seed produces byte-identical CSV.  Numbers are written with
Python's shortest round-trip repr, which preserves every bit of a
double.  JSON summaries carry seeds, library versions and wall-clock
timings (the one part of an output that is allowed to differ between
reruns).

Exit codes: 0 success (verify: all checks passed), 1 validation or
usage error, 2 runtime abort (divergent ensemble), 3 verification
failure.
"""

import argparse
import json
import math
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, parse_config
from .ensemble import (CheckEntry, CheckReport, girsanov_crosscheck, martingale_check,
                       mean_equation_residual, observable_series, ou_covariance_check,
                       run_ensemble)
from .errors import ConfigError, DivergenceError, OusseError, ValidationError
from .model import diffusion_operator, drift_operator, consistency_residual
from .noise import SeedPolicy, TimeGrid, ou_covariance, sample_ou_values
from .oracle import build_liouvillian, propagate_lindblad

__all__ = ["main", "cmd_simulate", "cmd_verify", "cmd_covariance"]


def _fmt(x) -> str:
    # repr of a double is the shortest string that round-trips exactly
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):  # before int: bool would match there
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _versions():
    return {"ousse": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _report_doc(report: CheckReport) -> dict:
    return {
        "name": report.name,
        "passed": bool(report.passed),
        "entries": [
            {"label": e.label, "time": float(e.time), "statistic": float(e.statistic),
             "threshold": float(e.threshold), "passed": bool(e.passed)}
            for e in report.entries
        ],
        "details": _jsonable(report.details),
    }


# ---------------------------------------------------------------------------
# simulate

def _series_header(dim: int, observables) -> list:
    cols = ["t", "mean_weight", "mean_weight_stderr"]
    for i in range(dim):
        for j in range(i, dim):
            cols += [f"eta_re_{i}_{j}", f"eta_im_{i}_{j}"]
    for name, _ in observables:
        cols += [f"{name}_mean", f"{name}_stderr"]
    return cols


def cmd_simulate(cfg: ExperimentConfig, out_dir: str) -> int:
    t0 = time.perf_counter()
    est = run_ensemble(cfg.model, cfg.grid, cfg.n_traj, SeedPolicy(cfg.master_seed),
                       cfg.mode, cfg.initial,
                       output_nodes=(cfg.output_nodes or None), level=cfg.level)
    series = {name: observable_series(est, o) for name, o in cfg.observables}
    elapsed = time.perf_counter() - t0

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "series.csv")
    d = est.dim
    with open(csv_path, "w", newline="") as f:
        f.write(",".join(_series_header(d, cfg.observables)) + "\n")
        for row, t in enumerate(est.times):
            vals = [t, est.mean_weight[row], est.mean_weight_stderr[row]]
            for i in range(d):
                for j in range(i, d):
                    vals += [est.eta[row, i, j].real, est.eta[row, i, j].imag]
            for name, _ in cfg.observables:
                vals += [series[name][row][1], series[name][row][2]]
            f.write(",".join(_fmt(v) for v in vals) + "\n")

    summary = {
        "command": "simulate",
        "versions": _versions(),
        "master_seed": cfg.master_seed,
        "mode": cfg.mode,
        "n_traj": cfg.n_traj,
        "n_used": est.n_used,
        "divergence_count": len(est.diverged),
        "diverged_indices": list(est.diverged),
        "grid": {"dt": cfg.grid.dt, "T": cfg.grid.horizon, "level": cfg.level},
        "output_times": [float(t) for t in est.times],
        "timings": {"seconds": elapsed},
        "files": {"series": "series.csv"},
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(_jsonable(summary), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {csv_path} ({est.times.size} rows, {est.n_used} trajectories)")
    return 0


# ---------------------------------------------------------------------------
# verify

def _consistency_report(cfg: ExperimentConfig) -> CheckReport:
    m = cfg.model
    eps = cfg.checks.perturb_drift_epsilon
    xs = np.linspace(-5.0, 5.0, 21)
    entries = []
    for x in xs:
        resid = consistency_residual(m, float(x), drift_shift=eps)
        a = drift_operator(m, float(x)) + (m.gamma * x) * diffusion_operator(m, float(x))
        thr = 1e-12 * (1.0 + float(np.max(np.abs(a))))
        entries.append(CheckEntry(f"x={x:g}", 0.0, resid, thr, resid <= thr))
    passed = all(e.passed for e in entries)
    return CheckReport("consistency", passed, tuple(entries),
                       {"perturb_drift_epsilon": eps, "x_range": [-5.0, 5.0], "points": 21})


def _reference_estimate(cfg: ExperimentConfig):
    if cfg.initial.ndim == 1:
        mode = "linear"
    elif cfg.model.kind == "random_hamiltonian":
        mode = "density_linear"
    else:
        raise ValidationError(
            "run.initial: the reference-measure checks need a state vector initial "
            "(or a density matrix with the random_hamiltonian kind)"
        )
    return run_ensemble(cfg.model, cfg.grid, cfg.n_traj, SeedPolicy(cfg.master_seed),
                        mode, cfg.initial, output_nodes=(cfg.output_nodes or None),
                        level=cfg.level)


def _lindblad_oracle_report(cfg: ExperimentConfig, est) -> CheckReport:
    m = cfg.model
    if not (m.h_poly.is_constant and m.b_poly.is_constant):
        raise ValidationError(
            "checks.suites: lindblad_oracle needs an x-independent generator "
            "(for the random_hamiltonian kind that means gamma = 0)"
        )
    liou = build_liouvillian(m.h_poly.coefficients[0], m.b_poly.coefficients[0])
    rho0 = cfg.initial if cfg.initial.ndim == 2 else np.outer(cfg.initial, cfg.initial.conj())
    dt = est.grid.dt
    entries = []
    for j, t in enumerate(est.times):
        ref = propagate_lindblad(liou, rho0, float(t))
        dev = float(np.max(np.abs(est.eta[j] - ref)))
        thr = 3.0 * float(est.eta_stderr[j].max()) + cfg.checks.c_disc * dt
        entries.append(CheckEntry("eta_vs_exponential", float(t), dev, thr, dev <= thr))
    passed = all(e.passed for e in entries)
    return CheckReport("lindblad_oracle", passed, tuple(entries),
                       {"dt": dt, "c_disc": cfg.checks.c_disc})


def _covariance_nodes(grid: TimeGrid, points: int = 5):
    ks = sorted({max(1, round(grid.n_steps * i / points)) for i in range(1, points + 1)})
    return ks


def cmd_verify(cfg: ExperimentConfig, out_dir: str) -> int:
    t0 = time.perf_counter()
    reports = []
    est = None

    def reference():
        nonlocal est
        if est is None:
            est = _reference_estimate(cfg)
        return est

    for suite in cfg.checks.suites:
        if suite == "consistency":
            reports.append(_consistency_report(cfg))
        elif suite == "martingale":
            reports.append(martingale_check(reference(), c_disc=cfg.checks.c_disc))
        elif suite == "mean_equation":
            reports.append(mean_equation_residual(cfg.model, reference(),
                                                  c_fd=cfg.checks.c_fd))
        elif suite == "covariance":
            reports.append(ou_covariance_check(
                SeedPolicy(cfg.master_seed).substream("verify-ou"), cfg.grid,
                cfg.model.gamma, cfg.checks.covariance_n_paths,
                _covariance_nodes(cfg.grid)))
        elif suite == "girsanov":
            if cfg.initial.ndim != 1:
                raise ValidationError(
                    "checks.suites: girsanov needs a state vector initial")
            if cfg.observables:
                obs = cfg.observables[0][1]
            else:
                obs = np.zeros((cfg.model.dim, cfg.model.dim), dtype=complex)
                obs[0, 0] = 1.0
            reports.append(girsanov_crosscheck(
                cfg.model, cfg.grid, cfg.n_traj,
                SeedPolicy(cfg.master_seed).substream("verify-girsanov"),
                obs, list(cfg.checks.girsanov_times), cfg.initial,
                c_disc=cfg.checks.c_disc, level=cfg.level))
        elif suite == "lindblad_oracle":
            reports.append(_lindblad_oracle_report(cfg, reference()))

    passed = all(r.passed for r in reports)
    doc = {
        "command": "verify",
        "versions": _versions(),
        "master_seed": cfg.master_seed,
        "passed": passed,
        "checks": [_report_doc(r) for r in reports],
        "timings": {"seconds": time.perf_counter() - t0},
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as f:
        json.dump(_jsonable(doc), f, indent=2, sort_keys=True)
        f.write("\n")
    for r in reports:
        worst = max(r.entries, key=lambda e: e.statistic - e.threshold, default=None)
        extra = f" (worst statistic {worst.statistic:.3g} vs {worst.threshold:.3g})" if worst else ""
        print(f"{r.name}: {'pass' if r.passed else 'FAIL'}{extra}")
    print(f"report: {path}")
    return 0 if passed else 3


# ---------------------------------------------------------------------------
# covariance

def cmd_covariance(gamma: float, horizon: float, dt: float, n_paths: int, seed: int,
                   out_dir: str, points: int = 5) -> int:
    if not (gamma >= 0 and math.isfinite(gamma)):
        raise ValidationError(f"gamma must be a finite number >= 0, got {gamma}")
    if dt <= 0 or horizon <= 0:
        raise ValidationError("dt and T must be > 0")
    n_steps = int(round(horizon / dt))
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValidationError(f"T must be an integer multiple of dt, got T/dt = {horizon / dt}")
    if n_paths < 2:
        raise ValidationError(f"need at least 2 paths, got {n_paths}")
    grid = TimeGrid(dt, n_steps)
    if gamma * dt >= 1.0:
        raise ValidationError(f"gamma*dt = {gamma * dt:.3g} >= 1: unstable step")

    nodes = np.asarray(_covariance_nodes(grid, points), dtype=int)
    samples = sample_ou_values(SeedPolicy(seed), grid, gamma, n_paths, nodes)
    times = nodes * dt
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "covariance.csv")
    with open(path, "w", newline="") as f:
        f.write("t,s,analytic,empirical,stderr\n")
        for a in range(nodes.size):
            for b in range(a + 1):
                prod = samples[:, a] * samples[:, b]
                emp = float(prod.mean())
                se = float(prod.std(ddof=1) / math.sqrt(n_paths))
                ana = float(ou_covariance(float(times[a]), float(times[b]), gamma))
                f.write(",".join([_fmt(times[a]), _fmt(times[b]), _fmt(ana),
                                  _fmt(emp), _fmt(se)]) + "\n")
    print(f"wrote {path} ({nodes.size * (nodes.size + 1) // 2} pairs, {n_paths} paths)")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="ousse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an ensemble and write the time series")
    sim.add_argument("--config", required=True, help="path to a JSON experiment config")
    sim.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    sim.add_argument("--threads", type=int, default=None,
                     help="scheduling hint; never changes results")
    sim.add_argument("--out", default=None, help="output directory (default: from config)")

    ver = sub.add_parser("verify", help="run the structural check battery")
    ver.add_argument("--config", required=True)
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--threads", type=int, default=None)
    ver.add_argument("--out", default=None)

    cov = sub.add_parser("covariance", help="tabulate OU covariance, closed form vs sampled")
    cov.add_argument("--gamma", type=float, required=True)
    cov.add_argument("--tmax", type=float, required=True, metavar="T")
    cov.add_argument("--dt", type=float, required=True)
    cov.add_argument("--n-paths", type=int, default=100000)
    cov.add_argument("--seed", type=int, default=0)
    cov.add_argument("--points", type=int, default=5)
    cov.add_argument("--threads", type=int, default=None)
    cov.add_argument("--out", default=".")
    return p


def _load_config(args) -> ExperimentConfig:
    try:
        with open(args.config, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError([f"$: cannot read config file: {e}"])
    cfg = parse_config(text)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        if args.command == "covariance":
            return cmd_covariance(args.gamma, args.tmax, args.dt, args.n_paths,
                                  args.seed, args.out, args.points)
        cfg = _load_config(args)
        out_dir = args.out if args.out is not None else cfg.out_dir
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        return cmd_verify(cfg, out_dir)
    except ConfigError as e:
        for line in e.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 1
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DivergenceError as e:
        print(f"aborted: {e}", file=sys.stderr)
        return 2
    except OusseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
