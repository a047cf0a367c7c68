"""Euler-Maruyama integrators for the four stochastic equations.

Modes
-----
``linear``          non-normalized state under the reference measure,
                    d psi = D(x) psi dt + B(x) psi dW
``nonlinear``       normalized state under the physical measure; the
                    measurement drift m = <B + B^dag> feeds back into
                    both the state update and the OU path
``density_linear``  density-matrix form of the linear equation
                    (random_hamiltonian kind only, commutator form)
``sme``             nonlinear stochastic master equation with trace
                    renormalization after every step

All modes share one contract: the OU value x is advanced with the same
increment that drives the state, m (where present) is evaluated at the
step start, and a non-finite or collapsing state raises a structured
error naming the step.  The scheme is plain Euler-Maruyama throughout;
accuracy is checked by convergence-order tests, not by higher-order
steppers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ValidationError
from .linalg import as_operator, as_state, dagger, matrix_exp
from .model import ModelSpec, diffusion_operator, drift_operator
from .noise import NoisePath, TimeGrid, ou_path, sample_wiener

__all__ = [
    "Trajectory",
    "DensityTrajectory",
    "step_linear",
    "step_nonlinear",
    "step_density_linear",
    "step_sme",
    "lindblad_apply",
    "propagate",
    "exact_commuting_solution",
]

MODES = ("linear", "nonlinear", "density_linear", "sme")
MAX_STEPS = 10**6


@dataclass(frozen=True)
class Trajectory:
    """One realized state path with its noise and likelihood weights."""

    grid: TimeGrid
    states: np.ndarray          # (n_steps+1, d) complex
    weights: np.ndarray         # (n_steps+1,) squared norms
    X: np.ndarray               # (n_steps+1,) OU values
    m_record: np.ndarray        # (n_steps,) drift record; empty outside nonlinear mode
    measure: str                # "Q" | "physical"

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass(frozen=True)
class DensityTrajectory:
    grid: TimeGrid
    matrices: np.ndarray        # (n_steps+1, d, d) complex
    X: np.ndarray
    measure: str
    m_record: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def _finite(arr) -> bool:
    return bool(np.all(np.isfinite(arr.view(float))))


def step_linear(psi, x: float, dw: float, dt: float, m: ModelSpec):
    """One Euler-Maruyama step of the linear state equation."""
    d_op = drift_operator(m, x)
    b = diffusion_operator(m, x)
    out = psi + dt * (d_op @ psi) + dw * (b @ psi)
    if not _finite(out):
        raise DivergenceError("linear step produced a non-finite state")
    return out


def step_nonlinear(psi_hat, x: float, dw_hat: float, dt: float, m: ModelSpec):
    """One step of the normalized equation; returns (state, m value).

    The drift value m is computed from the incoming state, used in both
    the quadratic drift correction and the shifted diffusion operator,
    and returned so the caller can advance the OU path under the
    physical measure with the same value.
    """
    nrm2 = float(np.real(np.vdot(psi_hat, psi_hat)))
    if abs(nrm2 - 1.0) > 1e-9:
        raise ValidationError(f"nonlinear step requires a unit state, got norm^2 = {nrm2:.12g}")
    b = diffusion_operator(m, x)
    mval = float(np.real(np.vdot(psi_hat, (b + dagger(b)) @ psi_hat)))
    eye = np.eye(m.dim)
    g = drift_operator(m, x) + (0.5 * mval) * b - (mval * mval / 8.0) * eye
    d_stoch = b - (0.5 * mval) * eye
    out = psi_hat + dt * (g @ psi_hat) + dw_hat * (d_stoch @ psi_hat)
    if not _finite(out):
        raise DivergenceError("nonlinear step produced a non-finite state")
    nrm = float(np.linalg.norm(out))
    if nrm < 1e-12:
        raise DivergenceError(f"state norm collapsed to {nrm:.3e} before renormalization")
    return out / nrm, mval


def step_density_linear(rho, x: float, dw: float, dt: float, m: ModelSpec):
    """Linear density step in commutator form; hermiticity is structural."""
    if m.kind != "random_hamiltonian":
        raise ValidationError(
            f"density_linear integrates the commutator-form equation, which needs the "
            f"random_hamiltonian kind; got {m.kind!r}"
        )
    h = m.h_poly(x)
    k = m.k
    krho = k @ rho - rho @ k
    out = rho + dt * (-1j * (h @ rho - rho @ h) - 0.5 * (k @ krho - krho @ k)) - (1j * dw) * krho
    if not _finite(out):
        raise DivergenceError("density step produced a non-finite matrix")
    return out


def step_sme(rho_tilde, x: float, dw_hat: float, dt: float, m: ModelSpec):
    """One step of the nonlinear master equation, trace-renormalized."""
    tr = float(np.real(np.trace(rho_tilde)))
    if abs(tr - 1.0) > 1e-9:
        raise ValidationError(f"sme step requires unit trace, got {tr:.12g}")
    b = diffusion_operator(m, x)
    bdag = dagger(b)
    flow = b @ rho_tilde + rho_tilde @ bdag
    mval = float(np.real(np.trace(flow)))
    out = rho_tilde + dt * lindblad_apply(m, x, rho_tilde) + dw_hat * (flow - mval * rho_tilde)
    if not _finite(out):
        raise DivergenceError("sme step produced a non-finite matrix")
    tr1 = float(np.real(np.trace(out)))
    if tr1 < 1e-12:
        raise DivergenceError(f"trace collapsed to {tr1:.3e} before renormalization")
    return out / tr1


def lindblad_apply(m: ModelSpec, x: float, rho) -> np.ndarray:
    """Generator value ``-i[H(x), rho] - 1/2 {B^dag B, rho} + B rho B^dag``."""
    h = m.h_poly(x)
    b = m.b_poly(x)
    bdag = dagger(b)
    bb = bdag @ b
    return -1j * (h @ rho - rho @ h) - 0.5 * (bb @ rho + rho @ bb) + b @ rho @ bdag


def _resolve_noise(noise, grid: TimeGrid):
    """Return the increment array for the run; linear modes also get X."""
    if isinstance(noise, NoisePath):
        if noise.grid != grid:
            raise ValidationError("noise path grid does not match the propagation grid")
        return noise.dW, noise.X
    if isinstance(noise, np.random.Generator):
        return sample_wiener(grid, noise), None
    dw = np.asarray(noise, dtype=float)
    if dw.shape != (grid.n_steps,):
        raise ValidationError(f"expected {grid.n_steps} increments, got shape {dw.shape}")
    return dw, None


def propagate(mode: str, initial, noise, m: ModelSpec, grid: TimeGrid):
    """Integrate one trajectory and keep the full path.

    ``noise`` may be a NoisePath (increments replayed; in the nonlinear
    modes only its dW is used, because X must be rebuilt with the
    running drift), a Generator (increments drawn in the documented
    order), or a raw increment array.  Linear modes evolve under the
    reference measure; nonlinear and sme modes evolve under the
    physical measure, advancing X with the recorded m values.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    if grid.n_steps > MAX_STEPS:
        raise ValidationError(f"n_steps {grid.n_steps} exceeds the per-trajectory cap {MAX_STEPS}")
    if m.gamma * grid.dt >= 1.0:
        raise ValidationError(
            f"gamma*dt = {m.gamma * grid.dt:.3g} >= 1: the OU update is unstable; refine the grid"
        )
    dw, x_given = _resolve_noise(noise, grid)
    n = grid.n_steps
    dt = grid.dt
    decay = 1.0 - m.gamma * dt

    density = mode in ("density_linear", "sme")
    if density:
        state = as_operator(initial)
        tr = float(np.real(np.trace(state)))
        if abs(tr - 1.0) > 1e-9:
            raise ValidationError(f"initial trace must be 1, got {tr:.12g}")
        states = np.empty((n + 1, m.dim, m.dim), dtype=complex)
    else:
        state = as_state(initial)
        nrm2 = float(np.real(np.vdot(state, state)))
        if abs(nrm2 - 1.0) > 1e-9:
            raise ValidationError(f"initial norm^2 must be 1, got {nrm2:.12g}")
        states = np.empty((n + 1, m.dim), dtype=complex)
    if state.shape[0] != m.dim:
        raise ValidationError(f"initial dimension {state.shape[0]} != model dimension {m.dim}")

    physical = mode in ("nonlinear", "sme")
    if physical:
        # X must carry the running measurement drift; a precomputed
        # reference-measure path would be inconsistent here.
        x_out = np.empty(n + 1)
        x_out[0] = 0.0
    else:
        x_out = x_given if x_given is not None else ou_path(dw, m.gamma, grid)

    states[0] = state
    m_record = np.empty(n if physical else 0)
    # overflow is the very condition the finiteness checks detect
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            xk = x_out[k]
            try:
                if mode == "linear":
                    state = step_linear(state, xk, dw[k], dt, m)
                elif mode == "nonlinear":
                    state, mval = step_nonlinear(state, xk, dw[k], dt, m)
                elif mode == "density_linear":
                    state = step_density_linear(state, xk, dw[k], dt, m)
                else:
                    b = m.b_poly(xk)
                    mval = float(np.real(np.trace((b + dagger(b)) @ state)))
                    state = step_sme(state, xk, dw[k], dt, m)
            except DivergenceError as err:
                raise DivergenceError(f"{err} at step {k} (t = {k * dt:.6g})", step=k) from None
            states[k + 1] = state
            if physical:
                m_record[k] = mval
                x_out[k + 1] = decay * xk + mval * dt + dw[k]

    measure = "physical" if physical else "Q"
    if density:
        return DensityTrajectory(grid, states, x_out, measure, m_record)
    weights = np.einsum("ki,ki->k", states, np.conj(states)).real
    return Trajectory(grid, states, weights, x_out, m_record, measure)


def exact_commuting_solution(psi0, h, k, x_t: float, t: float):
    """Closed-form state for constant commuting ``H`` and ``K``.

    When ``[H, K] = 0`` the linear equation integrates to
    ``psi_t = exp(-i (H t + X_t K)) psi0``: the Ito correction of the
    stochastic exponential cancels the ``-K^2/2`` drift term exactly,
    and the OU reversion is absorbed because ``X_t = W_t - gamma
    int X ds``.  Propagation is unitary, so the input norm is
    preserved.  Evaluate at the integrator's own discrete ``X[k]`` to
    isolate the state-stepping error from the noise discretization.
    """
    h = as_operator(h)
    k = as_operator(k)
    scale = 1.0 + float(np.max(np.abs(h))) * float(np.max(np.abs(k)))
    comm = float(np.max(np.abs(h @ k - k @ h)))
    if comm > 1e-12 * scale:
        raise ValidationError(
            f"H and K do not commute (residual {comm:.3e}); no closed-form solution"
        )
    return matrix_exp(-1j * (t * h + x_t * k)) @ as_state(psi0)
