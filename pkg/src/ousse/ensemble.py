"""Monte Carlo ensembles with deterministic seeding and structural checks.

Estimates are averages over independent trajectories, each driven by
its own counter-based stream (see the noise module).  Trajectories are
propagated in vectorized chunks of fixed size; per-chunk partial sums
are combined by a compensated pairwise tree in chunk order, so a run
is bitwise reproducible for a given (model, grid, n_traj, SeedPolicy,
mode, chunk_size) regardless of how work is scheduled.  The chunk size
is therefore part of the determinism contract; when a refined grid
would make a chunk exceed a memory budget the size is halved by a
fixed rule, which is again a pure function of the inputs.

A trajectory whose state leaves the finite range poisons only its own
chunk row; the chunk is then recomputed without the dead rows, the
failure is counted, and the run aborts if more than 1% of trajectories
diverge (silent exclusion at a higher rate would bias the averages).

Linear-mode averages are unnormalized under the reference measure: the
mean projector, the memory term E[X rho] and the mean squared norm are
exactly the quantities appearing in the mean-state equation and the
martingale property, so no weight normalization is applied anywhere.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ValidationError
from .linalg import as_operator, as_state, dagger, hermitian_residual, hermitian_tolerance
from .model import ModelSpec
from .noise import SeedPolicy, TimeGrid, ou_covariance, sample_ou_values, sample_wiener
from .oracle import unvec, vec

__all__ = [
    "EnsembleEstimate",
    "CheckEntry",
    "CheckReport",
    "run_ensemble",
    "martingale_check",
    "girsanov_crosscheck",
    "mean_equation_residual",
    "observable_series",
    "ou_covariance_check",
]

_CHUNK_BUDGET = 5 * 10**7        # max floats of increment storage per chunk
_SECOND_MOMENT_MAX_DIM = 8       # full E[vv^H] matrices kept up to this dimension


# ---------------------------------------------------------------------------
# reduction

def _tree_sum(parts, compensated=True):
    """Pairwise tree sum over a list of equal-shaped arrays, in order.

    With ``compensated`` each node combine uses TwoSum error tracking,
    so the result is as if summed in extended precision.  Complex
    arrays are reduced through their float views.
    """
    if not parts:
        raise ValueError("nothing to reduce")
    dtype = parts[0].dtype
    cplx = np.iscomplexobj(parts[0])
    vals = [np.array(p, copy=True).view(np.float64) if cplx else np.array(p, dtype=np.float64)
            for p in parts]
    errs = [np.zeros_like(v) for v in vals] if compensated else None
    while len(vals) > 1:
        nxt_v, nxt_e = [], []
        for i in range(0, len(vals), 2):
            if i + 1 == len(vals):
                nxt_v.append(vals[i])
                if compensated:
                    nxt_e.append(errs[i])
                continue
            a, b = vals[i], vals[i + 1]
            s = a + b
            if compensated:
                z = s - a
                e = (a - (s - z)) + (b - z)
                nxt_e.append(errs[i] + errs[i + 1] + e)
            nxt_v.append(s)
        vals = nxt_v
        if compensated:
            errs = nxt_e
    out = vals[0] + errs[0] if compensated else vals[0]
    return out.view(dtype) if cplx else out.astype(dtype, copy=False)


# ---------------------------------------------------------------------------
# batched propagation

def _chunk_rows(chunk_size: int, n_eff: int) -> int:
    rows = chunk_size
    while rows > 64 and rows * n_eff > _CHUNK_BUDGET:
        rows //= 2
    return rows


def _vec_batch(rho: np.ndarray) -> np.ndarray:
    """Column-stack each matrix of a (n, d, d) stack -> (n, d*d)."""
    n, d, _ = rho.shape
    return rho.transpose(0, 2, 1).reshape(n, d * d)


def _apply(op, psi):
    """(d,d) or (n,d,d) operator applied to (n,d) states."""
    if op.ndim == 2:
        return psi @ op.T
    return np.einsum("nij,nj->ni", op, psi)


def _mul(op, rho):
    """op @ rho with stack broadcast; op (d,d) or (n,d,d), rho (n,d,d)."""
    return np.matmul(op, rho)


def _mulr(rho, op):
    return np.matmul(rho, op)


class _Stepper:
    """Vectorized one-step updates for a fixed model and mode.

    Precomputes whatever is constant (for constant B the whole drift
    family collapses to per-power matrices) and exposes
    ``step(state, x, dw) -> (state, m_values)`` plus the matching OU
    advance.  The arithmetic forms mirror the scalar steppers in the
    dynamics module term by term.
    """

    def __init__(self, m: ModelSpec, mode: str):
        self.m = m
        self.mode = mode
        self.d = m.dim
        self.b_const = m.b_poly.is_constant
        self.h_const = m.h_poly.is_constant
        if self.b_const:
            b0 = m.b_poly.coefficients[0]
            self.b0 = b0
            self.bb0 = dagger(b0) @ b0
            self.s0 = b0 + dagger(b0)
            self.m_zero = bool(np.all(self.s0 == 0.0))
            # drift as per-power matrices: D(x) = sum_j x^j Dj
            self.dmats = [-1j * c for c in m.h_poly.coefficients]
            self.dmats[0] = self.dmats[0] - 0.5 * self.bb0
        else:
            self.m_zero = False

    # -- operator families at a batch of x values

    def _diffusion(self, x):
        if self.b_const:
            return self.b0
        return self.m.b_poly.at(x)

    def _drift_apply(self, x, psi):
        """D(x) psi without materializing (n,d,d) when B is constant."""
        if self.b_const:
            out = psi @ self.dmats[0].T
            xp = x
            for dj in self.dmats[1:]:
                out += xp[:, None] * (psi @ dj.T)
                xp = xp * x
            return out
        b = self.m.b_poly.at(x)
        bdag = b.conj().transpose(0, 2, 1)
        h = self.m.h_poly.coefficients[0] if self.h_const else self.m.h_poly.at(x)
        drift = -1j * h - 0.5 * np.matmul(bdag, b)
        return np.einsum("nij,nj->ni", drift, psi)

    def _hermitian_family(self, x):
        if self.h_const:
            return self.m.h_poly.coefficients[0]
        return self.m.h_poly.at(x)

    # -- state updates; each returns (state, m_values or None)

    def step(self, state, x, dw, dt):
        if self.mode == "linear":
            b = self._diffusion(x)
            out = state + dt * self._drift_apply(x, state) + dw[:, None] * _apply(b, state)
            return out, None
        if self.mode == "nonlinear":
            b = self._diffusion(x)
            if self.m_zero:
                mv = np.zeros(state.shape[0])
            else:
                s = self.s0 if self.b_const else b + b.conj().transpose(0, 2, 1)
                mv = np.einsum("ni,ni->n", np.conj(state), _apply(s, state)).real
            bp = _apply(b, state)
            out = state + dt * (self._drift_apply(x, state)
                                + (0.5 * mv)[:, None] * bp
                                - (mv * mv / 8.0)[:, None] * state)
            out += dw[:, None] * (bp - (0.5 * mv)[:, None] * state)
            nrm = np.sqrt(np.einsum("ni,ni->n", out, np.conj(out)).real)
            return out / nrm[:, None], mv
        if self.mode == "density_linear":
            h = self._hermitian_family(x)
            k = self.m.k
            krho = _mul(k, state) - _mulr(state, k)
            comm_h = _mul(h, state) - _mulr(state, h)
            out = (state + dt * (-1j * comm_h - 0.5 * (_mul(k, krho) - _mulr(krho, k)))
                   - (1j * dw)[:, None, None] * krho)
            return out, None
        # sme
        b = self._diffusion(x)
        bdag = dagger(b) if b.ndim == 2 else b.conj().transpose(0, 2, 1)
        bb = self.bb0 if self.b_const else np.matmul(bdag, b)
        h = self._hermitian_family(x)
        flow = _mul(b, state) + _mulr(state, bdag)
        mv = np.einsum("nii->n", flow).real
        lind = (-1j * (_mul(h, state) - _mulr(state, h))
                - 0.5 * (_mul(bb, state) + _mulr(state, bb))
                + _mulr(_mul(b, state), bdag))
        out = state + dt * lind + dw[:, None, None] * (flow - mv[:, None, None] * state)
        tr = np.einsum("nii->n", out).real
        return out / tr[:, None, None], mv

    def lindblad_batch(self, x, rho):
        """Generator values at a batch of (x, rho) pairs; (n,d,d)."""
        b = self._diffusion(x)
        bdag = dagger(b) if b.ndim == 2 else b.conj().transpose(0, 2, 1)
        bb = self.bb0 if self.b_const else np.matmul(bdag, b)
        h = self._hermitian_family(x)
        return (-1j * (_mul(h, rho) - _mulr(rho, h))
                - 0.5 * (_mul(bb, rho) + _mulr(rho, bb))
                + _mulr(_mul(b, rho), bdag))


def _draw_chunk(seeds: SeedPolicy, lo: int, hi: int, grid: TimeGrid, level: int) -> np.ndarray:
    n_eff = grid.n_steps << level
    dws = np.empty((hi - lo, n_eff))
    for i in range(lo, hi):
        dws[i - lo] = sample_wiener(grid, seeds.stream(i), level)
    return dws


def _chunk_partials(stepper: _Stepper, grid_eff: TimeGrid, dws, initial, out_mask, want_second):
    """Propagate one chunk and accumulate sums at the flagged nodes.

    Returns (partials, valid_mask).  Rows that left the finite range
    contaminate only themselves; the caller drops them and reruns.
    """
    m = stepper.m
    rows = dws.shape[0]
    d = m.dim
    density = stepper.mode in ("density_linear", "sme")
    physical = stepper.mode in ("nonlinear", "sme")
    state = np.tile(initial, (rows,) + (1,) * initial.ndim).astype(complex)
    x = np.zeros(rows)
    decay = 1.0 - m.gamma * grid_eff.dt
    dt = grid_eff.dt

    n_out = int(out_mask.sum())
    p = {
        "n": np.zeros(1),
        "w": np.zeros(n_out), "w2": np.zeros(n_out),
        "v": np.zeros((n_out, d * d), dtype=complex), "v2": np.zeros((n_out, d * d)),
        "xv": np.zeros((n_out, d * d), dtype=complex), "x2v2": np.zeros((n_out, d * d)),
        "g": np.zeros((n_out, d * d), dtype=complex), "g2": np.zeros((n_out, d * d)),
    }
    if want_second:
        p["s"] = np.zeros((n_out, d * d, d * d), dtype=complex)

    def record(j, state, x):
        rho = state if density else state[:, :, None] * np.conj(state[:, None, :])
        v = _vec_batch(rho)
        w = np.einsum("nii->n", rho).real
        p["w"][j] = w.sum()
        p["w2"][j] = (w * w).sum()
        p["v"][j] = v.sum(axis=0)
        av2 = (v.real * v.real + v.imag * v.imag)
        p["v2"][j] = av2.sum(axis=0)
        p["xv"][j] = (x[:, None] * v).sum(axis=0)
        p["x2v2"][j] = ((x * x)[:, None] * av2).sum(axis=0)
        lv = _vec_batch(stepper.lindblad_batch(x, rho))
        p["g"][j] = lv.sum(axis=0)
        p["g2"][j] = (lv.real * lv.real + lv.imag * lv.imag).sum(axis=0)
        if want_second:
            p["s"][j] = v.T @ np.conj(v)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        j = 0
        if out_mask[0]:
            record(0, state, x)
            j = 1
        for k in range(grid_eff.n_steps):
            state, mv = stepper.step(state, x, dws[:, k], dt)
            if physical:
                x = decay * x + mv * dt + dws[:, k]
            else:
                x = decay * x + dws[:, k]
            if out_mask[k + 1]:
                record(j, state, x)
                j += 1

    flat = state.reshape(rows, d * d if density else d)
    valid = np.all(np.isfinite(flat.view(np.float64)), axis=1) & np.isfinite(x)
    p["n"][0] = rows
    return p, valid


@dataclass(frozen=True)
class EnsembleEstimate:
    """Ensemble averages with per-quantity standard errors.

    ``eta`` is the mean state (unnormalized under the reference
    measure in linear modes), ``memory_term`` the mean of ``X rho``,
    ``generator_mean`` the mean of the Lindblad generator applied along
    the paths; ``second_moments``, kept for small dimensions, holds the
    per-node matrices E[vec(rho) vec(rho)^H] from which the standard
    error of any linear observable follows.
    """

    grid: TimeGrid              # the grid actually integrated (refined if level > 0)
    base_grid: TimeGrid
    level: int
    mode: str
    master_seed: int
    n_traj: int
    n_used: int
    diverged: tuple
    node_indices: np.ndarray    # output nodes, in base-grid units
    times: np.ndarray
    mean_weight: np.ndarray
    mean_weight_stderr: np.ndarray
    eta: np.ndarray             # (n_out, d, d)
    eta_stderr: np.ndarray
    memory_term: np.ndarray
    memory_term_stderr: np.ndarray
    generator_mean: np.ndarray
    generator_mean_stderr: np.ndarray
    second_moments: np.ndarray  # (n_out, d^2, d^2) or None

    @property
    def dim(self) -> int:
        return self.eta.shape[1]


@dataclass(frozen=True)
class CheckEntry:
    label: str
    time: float
    statistic: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    entries: tuple
    details: dict


def _entry_se(sum2, mean_abs2, n):
    var = np.maximum(0.0, (sum2 - n * mean_abs2) / max(n - 1, 1))
    return np.sqrt(var / n)


def run_ensemble(m: ModelSpec, grid: TimeGrid, n_traj: int, seeds: SeedPolicy, mode: str,
                 initial, *, output_nodes=None, level: int = 0, chunk_size: int = 4096,
                 compensated: bool = True) -> EnsembleEstimate:
    """Propagate ``n_traj`` trajectories and average at the output nodes.

    ``output_nodes`` are node indices of the base grid (default: every
    node up to 200, then a uniform stride), and ``level`` halves every
    step that many times via bridge refinement of the same per-stream
    noise, so runs at different levels share their Brownian paths and
    report at identical times.
    """
    from .dynamics import MODES  # cycle-free: dynamics does not import ensemble

    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    if n_traj < 2:
        raise ValidationError(f"need at least 2 trajectories, got {n_traj}")
    if m.gamma * grid.dt >= 1.0:
        raise ValidationError(
            f"gamma*dt = {m.gamma * grid.dt:.3g} >= 1: the OU update is unstable; refine the grid"
        )
    if mode == "density_linear" and m.kind != "random_hamiltonian":
        raise ValidationError("density_linear mode needs the random_hamiltonian kind")

    density = mode in ("density_linear", "sme")
    if density:
        initial = as_operator(initial)
        tr = float(np.real(np.trace(initial)))
        if abs(tr - 1.0) > 1e-9:
            raise ValidationError(f"initial trace must be 1, got {tr:.12g}")
    else:
        initial = as_state(initial)
        nrm2 = float(np.real(np.vdot(initial, initial)))
        if abs(nrm2 - 1.0) > 1e-9:
            raise ValidationError(f"initial norm^2 must be 1, got {nrm2:.12g}")
    if initial.shape[0] != m.dim:
        raise ValidationError(f"initial dimension {initial.shape[0]} != model dimension {m.dim}")

    if output_nodes is None:
        stride = max(1, math.ceil(grid.n_steps / 200))
        nodes = list(range(0, grid.n_steps + 1, stride))
        if nodes[-1] != grid.n_steps:
            nodes.append(grid.n_steps)
        output_nodes = nodes
    nodes = np.asarray(sorted(set(int(k) for k in output_nodes)), dtype=int)
    if nodes.size == 0 or nodes[0] < 0 or nodes[-1] > grid.n_steps:
        raise ValidationError(f"output nodes must lie in [0, {grid.n_steps}]")

    grid_eff = grid.refined(level)
    out_mask = np.zeros(grid_eff.n_steps + 1, dtype=bool)
    out_mask[nodes << level] = True

    stepper = _Stepper(m, mode)
    want_second = m.dim <= _SECOND_MOMENT_MAX_DIM
    rows = _chunk_rows(chunk_size, grid_eff.n_steps)

    parts = []
    diverged = []
    for lo in range(0, n_traj, rows):
        hi = min(lo + rows, n_traj)
        dws = _draw_chunk(seeds, lo, hi, grid, level)
        p, valid = _chunk_partials(stepper, grid_eff, dws, initial, out_mask, want_second)
        if not valid.all():
            bad = np.flatnonzero(~valid)
            diverged.extend(int(i) for i in (lo + bad))
            if len(diverged) > 0.01 * n_traj:
                raise DivergenceError(
                    f"{len(diverged)} of {n_traj} trajectories diverged (> 1%); "
                    f"refine the grid or check the model"
                )
            # divergence is row-local and deterministic, so a rerun on the
            # surviving rows reproduces them exactly
            p, valid2 = _chunk_partials(stepper, grid_eff, dws[valid], initial, out_mask,
                                        want_second)
            if not valid2.all():
                raise DivergenceError("trajectories diverged irreproducibly across reruns")
        parts.append(p)

    total = {k: _tree_sum([p[k] for p in parts], compensated) for k in parts[0]}
    n = int(round(float(total["n"][0])))
    if n < 2:
        raise DivergenceError("fewer than 2 trajectories survived")

    d = m.dim
    n_out = nodes.size
    mean_w = total["w"] / n
    var_w = np.maximum(0.0, (total["w2"] - n * mean_w**2) / (n - 1))
    vmean = total["v"] / n
    cmean = total["xv"] / n
    gmean = total["g"] / n

    def stack(vflat):
        return np.stack([unvec(vflat[j], d) for j in range(n_out)])

    est = EnsembleEstimate(
        grid=grid_eff,
        base_grid=grid,
        level=level,
        mode=mode,
        master_seed=seeds.master_seed,
        n_traj=n_traj,
        n_used=n,
        diverged=tuple(diverged),
        node_indices=nodes,
        times=nodes * grid.dt,
        mean_weight=mean_w,
        mean_weight_stderr=np.sqrt(var_w / n),
        eta=stack(vmean),
        eta_stderr=stack(_entry_se(total["v2"], np.abs(vmean) ** 2, n)).real,
        memory_term=stack(cmean),
        memory_term_stderr=stack(_entry_se(total["x2v2"], np.abs(cmean) ** 2, n)).real,
        generator_mean=stack(gmean),
        generator_mean_stderr=stack(_entry_se(total["g2"], np.abs(gmean) ** 2, n)).real,
        second_moments=(total["s"] / n) if want_second else None,
    )
    return est


# ---------------------------------------------------------------------------
# checks

def observable_series(est: EnsembleEstimate, observable):
    """Series of ``Tr(O eta_t)`` with standard errors; list of (t, mean, se).

    When the full second-moment matrices are stored the standard error
    is the exact sample one for the scalar ``Tr(O rho_i)``; otherwise a
    conservative triangle-inequality bound from the entrywise errors.
    """
    o = as_operator(observable)
    if o.shape[0] != est.dim:
        raise ValidationError(f"observable dimension {o.shape[0]} != estimate dimension {est.dim}")
    if hermitian_residual(o) > hermitian_tolerance(o):
        raise ValidationError("observable must be hermitian")
    w = vec(dagger(o))
    out = []
    n = est.n_used
    for j, t in enumerate(est.times):
        mean = float(np.real(np.einsum("i,i->", np.conj(w), vec(est.eta[j]))))
        if est.second_moments is not None:
            e_abs2 = float(np.real(np.conj(w) @ est.second_moments[j] @ w))
            var = max(0.0, (e_abs2 - mean * mean) * n / (n - 1))
            se = math.sqrt(var / n)
        else:
            se = float(np.sum(np.abs(o) * est.eta_stderr[j].T))
        out.append((float(t), mean, se))
    return out


def martingale_check(est: EnsembleEstimate, c_disc: float = 5.0) -> CheckReport:
    """Mean squared norm against 1 at every output node.

    Pass rule per node: ``|mean - 1| <= 3 stderr + c_disc * dt`` with
    dt the step actually integrated.
    """
    if est.mode not in ("linear", "density_linear"):
        raise ValidationError(
            f"martingale statistic needs a reference-measure run, got mode {est.mode!r}"
        )
    dt = est.grid.dt
    entries = []
    for j, t in enumerate(est.times):
        dev = abs(float(est.mean_weight[j]) - 1.0)
        thr = 3.0 * float(est.mean_weight_stderr[j]) + c_disc * dt
        entries.append(CheckEntry("mean_weight", float(t), dev, thr, dev <= thr))
    passed = all(e.passed for e in entries)
    return CheckReport("martingale", passed, tuple(entries),
                       {"n_traj": est.n_used, "dt": dt, "c_disc": c_disc})


def girsanov_crosscheck(m: ModelSpec, grid: TimeGrid, n_traj: int, seeds: SeedPolicy,
                        observable, t_list, initial, *, c_disc: float = 5.0,
                        level: int = 0, chunk_size: int = 4096) -> CheckReport:
    """Weighted reference-measure vs physical-measure estimates of one mean.

    The two sides use independent substreams of ``seeds`` and are
    therefore independent estimators of the same physical expectation;
    they must agree within ``3 sqrt(se_Q^2 + se_P^2) + c_disc dt``.
    """
    o = as_operator(observable)
    nodes = _times_to_nodes(t_list, grid)
    est_q = run_ensemble(m, grid, n_traj, seeds.substream("girsanov-reference"), "linear",
                         initial, output_nodes=nodes, level=level, chunk_size=chunk_size)
    est_p = run_ensemble(m, grid, n_traj, seeds.substream("girsanov-physical"), "nonlinear",
                         initial, output_nodes=nodes, level=level, chunk_size=chunk_size)
    series_q = observable_series(est_q, o)
    series_p = observable_series(est_p, o)
    dt = est_q.grid.dt
    entries = []
    for (t, mq, sq), (_, mp, sp) in zip(series_q, series_p):
        diff = abs(mq - mp)
        thr = 3.0 * math.hypot(sq, sp) + c_disc * dt
        entries.append(CheckEntry("weighted_vs_physical", t, diff, thr, diff <= thr))
    passed = all(e.passed for e in entries)
    return CheckReport("girsanov", passed, tuple(entries),
                       {"n_traj": n_traj, "dt": dt, "c_disc": c_disc,
                        "diverged": {"reference": est_q.diverged, "physical": est_p.diverged}})


def _times_to_nodes(t_list, grid: TimeGrid):
    nodes = []
    for t in t_list:
        k = int(round(float(t) / grid.dt))
        if k < 0 or k > grid.n_steps or abs(k * grid.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"time {t!r} is not a grid node (dt = {grid.dt})")
        nodes.append(k)
    return nodes


def _sd_commutator(a_abs: np.ndarray, sd: np.ndarray) -> np.ndarray:
    """Upper bound on the entrywise sd of [A, M] from the sd of M."""
    return a_abs @ sd + sd @ a_abs


def mean_equation_residual(m: ModelSpec, est: EnsembleEstimate, c_fd: float = 5.0) -> CheckReport:
    """Finite-difference check of the mean-state equation on an estimate.

    At each interior output node the central difference of ``eta`` is
    compared against the equation's right-hand side.  Two routes exist:
    the random_hamiltonian kind also assembles the memory form
    ``-i[H, eta] - 1/2 [K, [K, eta]] + i gamma [K, E[X rho]]`` from the
    stored memory term, and every kind is checked against the stored
    ensemble mean of the generator values (the non-closed general
    equation).  Pass rule per node and route: max-abs residual entry
    within ``3 * propagated stderr + c_fd * dt``, with the stderr
    propagated entrywise by triangle inequality (conservative).
    """
    if est.mode not in ("linear", "density_linear"):
        raise ValidationError(
            f"the mean-state equation is estimated under the reference measure; "
            f"got mode {est.mode!r}"
        )
    if est.times.size < 3:
        raise ValidationError("need at least 3 output nodes for a central difference")
    dt = est.grid.dt
    entries = []
    aggregates = {"assembled": [], "generator": []}
    routes = []
    if m.kind == "random_hamiltonian":
        h0 = m.h_poly.coefficients[0]
        k_abs = np.abs(m.k)
        h_abs = np.abs(h0)
        routes.append("assembled")
    routes.append("generator")

    for j in range(1, est.times.size - 1):
        span = est.times[j + 1] - est.times[j - 1]
        fd = (est.eta[j + 1] - est.eta[j - 1]) / span
        fd_sd = np.sqrt(est.eta_stderr[j + 1] ** 2 + est.eta_stderr[j - 1] ** 2) / span
        t = float(est.times[j])
        for route in routes:
            if route == "assembled":
                eta = est.eta[j]
                kk = m.k @ eta - eta @ m.k
                rhs = (-1j * (h0 @ eta - eta @ h0)
                       - 0.5 * (m.k @ kk - kk @ m.k)
                       + 1j * m.gamma * (m.k @ est.memory_term[j] - est.memory_term[j] @ m.k))
                sd_eta = est.eta_stderr[j]
                rhs_sd = (_sd_commutator(h_abs, sd_eta)
                          + 0.5 * _sd_commutator(k_abs, _sd_commutator(k_abs, sd_eta))
                          + m.gamma * _sd_commutator(k_abs, est.memory_term_stderr[j]))
            else:
                rhs = est.generator_mean[j]
                rhs_sd = est.generator_mean_stderr[j]
            resid = np.abs(fd - rhs)
            thr = 3.0 * (fd_sd + rhs_sd) + c_fd * dt
            # report the entry closest to (or past) its own allowance
            worst = np.unravel_index(int(np.argmax(resid - thr)), resid.shape)
            entries.append(CheckEntry(route, t, float(resid[worst]), float(thr[worst]),
                                      bool(np.all(resid <= thr))))
            aggregates[route].append(float(resid.max()))
    passed = all(e.passed for e in entries)
    details = {"dt": dt, "c_fd": c_fd,
               "mean_residual": {r: float(np.mean(v)) for r, v in aggregates.items() if v}}
    return CheckReport("mean_equation", passed, tuple(entries), details)


def ou_covariance_check(seeds: SeedPolicy, grid: TimeGrid, gamma: float, n_paths: int,
                        t_nodes, *, frac_required: float = 0.95,
                        chunk_size: int = 4096) -> CheckReport:
    """Empirical OU covariance on a (t, s) grid against the closed form.

    The process has known zero mean, so the uncentred product estimator
    is used; its standard error comes from the empirical fourth
    moments.  A point passes at 3 stderr; the check passes when at
    least ``frac_required`` of the points do.
    """
    nodes = np.asarray(sorted(set(int(k) for k in t_nodes)), dtype=int)
    samples = sample_ou_values(seeds, grid, gamma, n_paths, nodes, chunk_size=chunk_size)
    times = nodes * grid.dt
    entries = []
    n_pass = 0
    for a in range(nodes.size):
        for b in range(a, nodes.size):
            prod = samples[:, a] * samples[:, b]
            emp = float(prod.mean())
            se = float(prod.std(ddof=1) / math.sqrt(n_paths))
            ana = ou_covariance(float(times[a]), float(times[b]), gamma)
            dev = abs(emp - ana)
            ok = dev <= 3.0 * se
            n_pass += ok
            entries.append(CheckEntry(f"cov({times[a]:g},{times[b]:g})", float(times[b]),
                                      dev, 3.0 * se, ok))
    frac = n_pass / len(entries)
    passed = frac >= frac_required
    return CheckReport("ou_covariance", passed, tuple(entries),
                       {"gamma": gamma, "n_paths": n_paths, "fraction_passed": frac,
                        "fraction_required": frac_required})
