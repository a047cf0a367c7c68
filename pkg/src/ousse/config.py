"""Experiment configuration: JSON schema, validation, canonical form.

A document has five blocks: ``model`` (operator polynomials as nested
arrays of [re, im] pairs), ``grid`` (dt and horizon T), ``run`` (mode,
trajectory count, master seed, output times, observables, initial
state), ``checks`` (which verification suites and their tolerances)
and ``output`` (target directory).  Parsing collects every problem it
can find, not just the first, and reports each with the dotted path of
the offending field.

The canonical form materializes all defaults, sorts keys, and writes
numbers with Python's shortest round-trip repr, so parse -> serialize
-> parse is a fixed point and reruns are byte-identical.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import MODES
from .errors import ConfigError, ValidationError
from .linalg import hermitian_residual, hermitian_tolerance
from .model import (MAX_DEGREE, ModelSpec, OperatorPolynomial, make_measurement_model,
                    make_random_hamiltonian)
from .noise import TimeGrid

__all__ = ["ExperimentConfig", "CheckConfig", "parse_config", "KNOWN_SUITES"]

KNOWN_SUITES = ("consistency", "martingale", "covariance", "mean_equation",
                "girsanov", "lindblad_oracle")

_MAX_LEVEL = 4


class _Ctx:
    def __init__(self):
        self.errors = []

    def err(self, path, msg):
        self.errors.append(f"{path}: {msg}")


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _get_num(ctx, block, key, path, default=None, required=False):
    if key not in block:
        if required:
            ctx.err(f"{path}.{key}", "missing required field")
        return default
    v = block[key]
    if not _is_num(v) or not math.isfinite(v):
        ctx.err(f"{path}.{key}", f"expected a finite number, got {v!r}")
        return default
    return float(v)


def _get_int(ctx, block, key, path, default=None, required=False, minimum=None):
    if key not in block:
        if required:
            ctx.err(f"{path}.{key}", "missing required field")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, int):
        ctx.err(f"{path}.{key}", f"expected an integer, got {v!r}")
        return default
    if minimum is not None and v < minimum:
        ctx.err(f"{path}.{key}", f"must be >= {minimum}, got {v}")
        return default
    return v


def _parse_complex_entry(ctx, v, path):
    if (not isinstance(v, list) or len(v) != 2
            or not all(_is_num(u) and math.isfinite(u) for u in v)):
        ctx.err(path, f"expected a [re, im] pair of finite numbers, got {v!r}")
        return 0.0j
    return complex(v[0], v[1])


def _parse_matrix(ctx, node, path, dim=None):
    if not isinstance(node, list) or not node:
        ctx.err(path, "expected a non-empty list of rows")
        return None
    d = len(node)
    if dim is not None and d != dim:
        ctx.err(path, f"expected a {dim}x{dim} matrix, got {d} rows")
        return None
    out = np.zeros((d, d), dtype=complex)
    for i, row in enumerate(node):
        if not isinstance(row, list) or len(row) != d:
            ctx.err(f"{path}[{i}]", f"expected a row of {d} entries")
            return None
        for j, v in enumerate(row):
            out[i, j] = _parse_complex_entry(ctx, v, f"{path}[{i}][{j}]")
    return out


def _parse_vector(ctx, node, path, dim=None):
    if not isinstance(node, list) or not node:
        ctx.err(path, "expected a non-empty list of [re, im] pairs")
        return None
    if dim is not None and len(node) != dim:
        ctx.err(path, f"expected {dim} entries, got {len(node)}")
        return None
    return np.array([_parse_complex_entry(ctx, v, f"{path}[{i}]")
                     for i, v in enumerate(node)])


def _parse_poly(ctx, block, key, path, dim, hermitian):
    node = block.get(key)
    if node is None:
        ctx.err(f"{path}.{key}", "missing required operator")
        return None
    if not isinstance(node, dict) or "coefficients" not in node:
        ctx.err(f"{path}.{key}", 'expected an object with a "coefficients" list')
        return None
    coeffs = node["coefficients"]
    if not isinstance(coeffs, list) or not coeffs:
        ctx.err(f"{path}.{key}.coefficients", "expected a non-empty list of matrices")
        return None
    if len(coeffs) > MAX_DEGREE + 1:
        ctx.err(f"{path}.{key}.coefficients",
                f"polynomial degree is capped at {MAX_DEGREE}, got degree {len(coeffs) - 1}")
        return None
    mats = []
    for j, c in enumerate(coeffs):
        m = _parse_matrix(ctx, c, f"{path}.{key}.coefficients[{j}]", dim)
        if m is None:
            return None
        if hermitian and hermitian_residual(m) > hermitian_tolerance(m):
            ctx.err(f"{path}.{key}.coefficients[{j}]", "matrix is not hermitian")
            return None
        mats.append(m)
    return mats


@dataclass(frozen=True)
class CheckConfig:
    suites: tuple
    c_disc: float = 5.0
    c_fd: float = 5.0
    perturb_drift_epsilon: float = 0.0
    covariance_n_paths: int = 10000
    girsanov_times: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    grid: TimeGrid
    mode: str
    n_traj: int
    master_seed: int
    level: int
    output_nodes: tuple          # base-grid node indices, or () for the default stride
    observables: tuple           # ((name, matrix), ...) in canonical (sorted) order
    initial: np.ndarray
    checks: CheckConfig
    out_dir: str
    canonical: dict              # fully-populated document; source of the canonical text

    def canonical_text(self) -> str:
        return json.dumps(self.canonical, sort_keys=True, indent=2) + "\n"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        doc = json.loads(self.canonical_text())
        doc["run"]["master_seed"] = int(seed)
        return parse_config(json.dumps(doc))


def _c2l(z: complex):
    return [float(z.real), float(z.imag)]


def _matrix_doc(m: np.ndarray):
    return [[_c2l(m[i, j]) for j in range(m.shape[1])] for i in range(m.shape[0])]


def _vector_doc(v: np.ndarray):
    return [_c2l(z) for z in v]


def parse_config(source) -> ExperimentConfig:
    """Validate a JSON document (text or already-loaded dict).

    Raises ConfigError carrying every problem found; each message is
    prefixed with the dotted path of the offending field.
    """
    if isinstance(source, (bytes, str)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as e:
            raise ConfigError([f"$: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}"])
    elif isinstance(source, dict):
        doc = json.loads(json.dumps(source))
    else:
        raise ConfigError([f"$: expected JSON text or an object, got {type(source).__name__}"])
    if not isinstance(doc, dict):
        raise ConfigError(["$: top level must be an object"])

    ctx = _Ctx()
    known_blocks = {"model", "grid", "run", "checks", "output"}
    for k in doc:
        if k not in known_blocks:
            ctx.err(k, "unknown block")

    # -- model
    model = None
    dim = None
    mblock = doc.get("model")
    if not isinstance(mblock, dict):
        ctx.err("model", "missing required block")
    else:
        kind = mblock.get("kind")
        if kind not in ("random_hamiltonian", "measurement"):
            ctx.err("model.kind", f'expected "random_hamiltonian" or "measurement", got {kind!r}')
            kind = None
        gamma = _get_num(ctx, mblock, "gamma", "model", required=True)
        if gamma is not None and gamma < 0:
            ctx.err("model.gamma", f"must be >= 0, got {gamma}")
            gamma = None
        dim = _get_int(ctx, mblock, "dim", "model", required=True, minimum=1)
        if kind == "random_hamiltonian":
            h = _parse_poly(ctx, mblock, "H", "model", dim, hermitian=True)
            k = _parse_poly(ctx, mblock, "K", "model", dim, hermitian=True)
            if h is not None and len(h) != 1:
                ctx.err("model.H.coefficients", "this kind takes a single constant H")
                h = None
            if k is not None and len(k) != 1:
                ctx.err("model.K.coefficients", "this kind takes a single constant K")
                k = None
            if h is not None and k is not None and gamma is not None:
                try:
                    model = make_random_hamiltonian(h[0], k[0], gamma)
                except ValidationError as e:
                    ctx.err("model", str(e))
        elif kind == "measurement":
            h = _parse_poly(ctx, mblock, "H", "model", dim, hermitian=True)
            b = _parse_poly(ctx, mblock, "B", "model", dim, hermitian=False)
            if h is not None and b is not None and gamma is not None:
                try:
                    model = make_measurement_model(OperatorPolynomial(tuple(h)),
                                                   OperatorPolynomial(tuple(b)), gamma)
                except ValidationError as e:
                    ctx.err("model", str(e))

    # -- grid
    grid = None
    gblock = doc.get("grid")
    if not isinstance(gblock, dict):
        ctx.err("grid", "missing required block")
    else:
        dt = _get_num(ctx, gblock, "dt", "grid", required=True)
        horizon = _get_num(ctx, gblock, "T", "grid", required=True)
        if dt is not None and dt <= 0:
            ctx.err("grid.dt", f"must be > 0, got {dt}")
            dt = None
        if horizon is not None and horizon <= 0:
            ctx.err("grid.T", f"must be > 0, got {horizon}")
            horizon = None
        if dt is not None and horizon is not None:
            n_steps = int(round(horizon / dt))
            if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
                ctx.err("grid.T", f"must be an integer multiple of dt, got T/dt = {horizon / dt}")
            else:
                try:
                    grid = TimeGrid(dt, n_steps)
                except ValidationError as e:
                    ctx.err("grid", str(e))
    if model is not None and grid is not None and model.gamma * grid.dt >= 1.0:
        ctx.err("grid.dt", f"gamma*dt = {model.gamma * grid.dt:.3g} >= 1: "
                           f"the noise update is unstable at this step")

    # -- run
    rblock = doc.get("run")
    mode = "linear"
    n_traj = None
    master_seed = None
    level = 0
    output_nodes = ()
    observables = []
    initial = None
    if not isinstance(rblock, dict):
        ctx.err("run", "missing required block")
        rblock = {}
    else:
        mode = rblock.get("mode", "linear")
        if mode not in MODES:
            ctx.err("run.mode", f"expected one of {MODES}, got {mode!r}")
            mode = "linear"
        n_traj = _get_int(ctx, rblock, "n_traj", "run", required=True, minimum=2)
        master_seed = _get_int(ctx, rblock, "master_seed", "run", required=True, minimum=0)
        level = _get_int(ctx, rblock, "level", "run", default=0, minimum=0)
        if level is not None and level > _MAX_LEVEL:
            ctx.err("run.level", f"refinement level is capped at {_MAX_LEVEL}, got {level}")
            level = 0
        if "output_times" in rblock:
            times = rblock["output_times"]
            if not isinstance(times, list) or not times:
                ctx.err("run.output_times", "expected a non-empty list of times")
            elif grid is not None:
                nodes = []
                for i, t in enumerate(times):
                    if not _is_num(t) or not math.isfinite(t):
                        ctx.err(f"run.output_times[{i}]", f"expected a finite number, got {t!r}")
                        continue
                    k = int(round(t / grid.dt))
                    if k < 0 or k > grid.n_steps or abs(k * grid.dt - t) > 1e-9 * max(1.0, abs(t)):
                        ctx.err(f"run.output_times[{i}]",
                                f"{t} is not a node of the grid (dt = {grid.dt}, T = {grid.horizon})")
                        continue
                    nodes.append(k)
                output_nodes = tuple(sorted(set(nodes)))
        if "observables" in rblock:
            obs = rblock["observables"]
            if not isinstance(obs, dict):
                ctx.err("run.observables", "expected an object mapping names to matrices")
            else:
                for name in sorted(obs):
                    if not name.isidentifier():
                        ctx.err(f"run.observables.{name}",
                                "name must be a valid identifier (it becomes a CSV column)")
                        continue
                    o = _parse_matrix(ctx, obs[name], f"run.observables.{name}", dim)
                    if o is None:
                        continue
                    if hermitian_residual(o) > hermitian_tolerance(o):
                        ctx.err(f"run.observables.{name}", "matrix is not hermitian")
                        continue
                    observables.append((name, o))
        density = mode in ("density_linear", "sme")
        if "initial" in rblock and dim is not None:
            if density:
                initial = _parse_matrix(ctx, rblock["initial"], "run.initial", dim)
                if initial is not None:
                    tr = float(np.real(np.trace(initial)))
                    if abs(tr - 1.0) > 1e-9:
                        ctx.err("run.initial", f"trace must be 1, got {tr:.12g}")
                        initial = None
            else:
                initial = _parse_vector(ctx, rblock["initial"], "run.initial", dim)
                if initial is not None:
                    nrm2 = float(np.real(np.vdot(initial, initial)))
                    if abs(nrm2 - 1.0) > 1e-9:
                        ctx.err("run.initial", f"squared norm must be 1, got {nrm2:.12g}")
                        initial = None
        if initial is None and dim is not None and not ctx.errors:
            initial = np.zeros(dim, dtype=complex)
            initial[0] = 1.0
            if density:
                initial = np.outer(initial, initial.conj())

    # -- checks
    cblock = doc.get("checks", {})
    checks = None
    if not isinstance(cblock, dict):
        ctx.err("checks", "expected an object")
        cblock = {}
    suites = cblock.get("suites")
    if suites is not None:
        if (not isinstance(suites, list)
                or not all(isinstance(s, str) for s in suites)):
            ctx.err("checks.suites", "expected a list of suite names")
            suites = None
        else:
            for s in suites:
                if s not in KNOWN_SUITES:
                    ctx.err("checks.suites", f"unknown suite {s!r}; known: {KNOWN_SUITES}")
            suites = [s for s in suites if s in KNOWN_SUITES]
    c_disc = _get_num(ctx, cblock, "c_disc", "checks", default=5.0)
    c_fd = _get_num(ctx, cblock, "c_fd", "checks", default=5.0)
    eps = _get_num(ctx, cblock, "perturb_drift_epsilon", "checks", default=0.0)
    cov_n = _get_int(ctx, cblock, "covariance_n_paths", "checks", default=10000, minimum=2)
    if c_disc is not None and c_disc <= 0:
        ctx.err("checks.c_disc", f"must be > 0, got {c_disc}")
    if c_fd is not None and c_fd <= 0:
        ctx.err("checks.c_fd", f"must be > 0, got {c_fd}")
    if eps is not None and eps < 0:
        ctx.err("checks.perturb_drift_epsilon", f"must be >= 0, got {eps}")
    g_times = ()
    if "girsanov_times" in cblock:
        gt = cblock["girsanov_times"]
        if not isinstance(gt, list) or not all(_is_num(t) for t in gt):
            ctx.err("checks.girsanov_times", "expected a list of times")
        else:
            g_times = tuple(float(t) for t in gt)

    # -- output
    oblock = doc.get("output", {})
    out_dir = "."
    if not isinstance(oblock, dict):
        ctx.err("output", "expected an object")
    else:
        out_dir = oblock.get("directory", ".")
        if not isinstance(out_dir, str) or not out_dir:
            ctx.err("output.directory", f"expected a non-empty string, got {out_dir!r}")
            out_dir = "."

    if ctx.errors:
        raise ConfigError(ctx.errors)

    if suites is None:
        suites = ["consistency", "martingale", "covariance", "mean_equation"]
        if mode not in ("density_linear", "sme"):
            suites.append("girsanov")
        if model.h_poly.is_constant and model.b_poly.is_constant:
            suites.append("lindblad_oracle")
    if not g_times:
        g_times = (grid.horizon / 2, grid.horizon)
    checks = CheckConfig(tuple(suites), c_disc, c_fd, eps, cov_n, g_times)

    canonical = {
        "model": _model_doc(model),
        "grid": {"dt": grid.dt, "T": grid.horizon},
        "run": {
            "mode": mode,
            "n_traj": n_traj,
            "master_seed": master_seed,
            "level": level,
            "initial": (_matrix_doc(initial) if initial.ndim == 2 else _vector_doc(initial)),
            "observables": {name: _matrix_doc(o) for name, o in observables},
            **({"output_times": [k * grid.dt for k in output_nodes]} if output_nodes else {}),
        },
        "checks": {
            "suites": list(checks.suites),
            "c_disc": checks.c_disc,
            "c_fd": checks.c_fd,
            "perturb_drift_epsilon": checks.perturb_drift_epsilon,
            "covariance_n_paths": checks.covariance_n_paths,
            "girsanov_times": list(checks.girsanov_times),
        },
        "output": {"directory": out_dir},
    }

    return ExperimentConfig(
        model=model, grid=grid, mode=mode, n_traj=n_traj, master_seed=master_seed,
        level=level, output_nodes=output_nodes, observables=tuple(observables),
        initial=initial, checks=checks, out_dir=out_dir, canonical=canonical,
    )


def _model_doc(m: ModelSpec) -> dict:
    doc = {"kind": m.kind, "dim": m.dim, "gamma": m.gamma}
    if m.kind == "random_hamiltonian":
        # store the physical pair; the OU coupling term of H is implied
        doc["H"] = {"coefficients": [_matrix_doc(m.h_poly.coefficients[0])]}
        doc["K"] = {"coefficients": [_matrix_doc(m.k)]}
    else:
        doc["H"] = {"coefficients": [_matrix_doc(c) for c in m.h_poly.coefficients]}
        doc["B"] = {"coefficients": [_matrix_doc(c) for c in m.b_poly.coefficients]}
    return doc
