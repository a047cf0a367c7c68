"""Wiener and Ornstein-Uhlenbeck sample paths on a fixed time grid.

Reproducibility contract
------------------------
Every stochastic quantity in the package is a pure function of
``(master seed, trajectory index, draw index)``.  Streams come from the
counter-based Philox generator keyed per trajectory, and all Gaussian
variates are produced by an explicit Box-Muller transform,

    z = sqrt(-2 log(1 - u1)) * cos(2 pi u2),

consuming exactly two uniforms per normal.  Relying on a fixed
transform rather than ``Generator.normal`` pins the uniform-to-normal
mapping, so results are stable across numpy versions and platforms.

Draw order within one trajectory stream: first the ``n_steps`` base
Wiener increments, then, per refinement level, the bridge variates that
split each coarse increment in two (in time order).  Refining therefore
extends a stream instead of reshuffling it, and estimates at different
step sizes can share the same Brownian path.

The OU path follows the Euler rule

    X[k+1] = (1 - gamma dt) X[k] + dW[k],    X[0] = 0,

evaluated exactly in this form; the batched ensemble kernels replicate
the same expression so that single-path and ensemble runs agree
bitwise.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "TimeGrid",
    "NoisePath",
    "SeedPolicy",
    "make_noise_path",
    "gaussians",
    "sample_wiener",
    "refine_increments",
    "ou_path",
    "ou_path_physical",
    "ou_covariance",
    "sample_ou_values",
]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    """SplitMix64 finalizer; bijective on 64-bit integers."""
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k dt`` for ``k = 0 .. n_steps``."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive and finite, got {self.dt!r}")
        if self.n_steps < 1:
            raise ValidationError(f"n_steps must be >= 1, got {self.n_steps!r}")

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def refined(self, level: int) -> "TimeGrid":
        """The grid with each step halved ``level`` times."""
        if level < 0:
            raise ValidationError("refinement level must be >= 0")
        return TimeGrid(self.dt / (1 << level), self.n_steps * (1 << level))


@dataclass(frozen=True)
class NoisePath:
    """A realized (dW, X) pair on a grid, replayable into any integrator."""

    grid: TimeGrid
    dW: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        dw = np.array(self.dW, dtype=float)
        x = np.array(self.X, dtype=float)
        if dw.shape != (self.grid.n_steps,):
            raise ValidationError(f"dW must have {self.grid.n_steps} entries, got {dw.shape}")
        if x.shape != (self.grid.n_steps + 1,):
            raise ValidationError(f"X must have {self.grid.n_steps + 1} entries, got {x.shape}")
        if x[0] != 0.0:
            raise ValidationError(f"X[0] must be 0, got {x[0]!r}")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(x))):
            raise ValidationError("noise path contains non-finite entries")
        for arr in (dw, x):
            arr.flags.writeable = False
        object.__setattr__(self, "dW", dw)
        object.__setattr__(self, "X", x)


def make_noise_path(grid: TimeGrid, gamma: float, stream: np.random.Generator, level: int = 0) -> NoisePath:
    """Draw increments and integrate the OU path in one go.

    With ``level > 0`` the returned path lives on ``grid.refined(level)``.
    """
    fine = grid.refined(level)
    dw = sample_wiener(grid, stream, level)
    return NoisePath(fine, dw, ou_path(dw, gamma, fine))


@dataclass(frozen=True)
class SeedPolicy:
    """Maps (master seed, trajectory index) to independent streams.

    Trajectory ``i`` gets a Philox key derived by avalanche-mixing the
    master seed with ``i``; the mixing is injective in ``i``, so stream
    collisions cannot occur within one policy.  ``substream`` derives a
    policy for an independent family of streams (used e.g. to give the
    two legs of a measure-change comparison unrelated noise).
    """

    master_seed: int

    def __post_init__(self):
        if not isinstance(self.master_seed, int) or isinstance(self.master_seed, bool):
            raise ValidationError(f"master seed must be an int, got {self.master_seed!r}")
        if self.master_seed < 0:
            raise ValidationError("master seed must be non-negative")

    def stream_key(self, index: int) -> int:
        if index < 0:
            raise ValidationError("trajectory index must be non-negative")
        h = _mix64((self.master_seed & _MASK) ^ _mix64(index & _MASK))
        return (h << 64) | _mix64(h ^ (index & _MASK))

    def stream(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.stream_key(index)))

    def substream(self, label: str) -> "SeedPolicy":
        h = self.master_seed & _MASK
        for byte in label.encode("utf8"):
            h = _mix64(h ^ byte)
        return SeedPolicy(h)


def gaussians(stream: np.random.Generator, n: int) -> np.ndarray:
    """``n`` standard normals via the pinned Box-Muller transform."""
    u = stream.random(2 * n)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    return r * np.cos(2.0 * np.pi * u[1::2])


def sample_wiener(grid: TimeGrid, stream: np.random.Generator, level: int = 0) -> np.ndarray:
    """Wiener increments over ``grid``, optionally bridge-refined.

    ``level = 0`` returns the ``n_steps`` base increments with standard
    deviation ``sqrt(dt)``.  ``level = L`` halves every step ``L``
    times using Brownian-bridge midpoints, consuming the stream in the
    documented draw order; the result has ``n_steps * 2**L`` entries
    whose pairwise sums reproduce the coarser increments exactly.
    """
    dw = np.sqrt(grid.dt) * gaussians(stream, grid.n_steps)
    h = grid.dt
    for _ in range(level):
        dw = refine_increments(dw, h, stream)
        h *= 0.5
    return dw


def refine_increments(dw: np.ndarray, h: float, stream: np.random.Generator) -> np.ndarray:
    """Split increments over steps of size ``h`` into halves.

    The first half is ``dw/2 + sqrt(h)/2 * xi`` with ``xi`` standard
    normal; the second is the exact remainder, so the sum of each pair
    equals the original increment bitwise.
    """
    xi = gaussians(stream, dw.size)
    first = 0.5 * dw + (0.5 * np.sqrt(h)) * xi
    out = np.empty(2 * dw.size, dtype=float)
    out[0::2] = first
    out[1::2] = dw - first
    return out


def _check_gamma(gamma: float, dt: float) -> float:
    gamma = float(gamma)
    if not (gamma >= 0.0 and np.isfinite(gamma)):
        raise ValidationError(f"gamma must be finite and >= 0, got {gamma!r}")
    if gamma * dt >= 1.0:
        raise ValidationError(
            f"gamma*dt = {gamma * dt:.3g} >= 1: the Euler OU update is unstable; refine the grid"
        )
    return gamma


def ou_path(dw: np.ndarray, gamma: float, grid: TimeGrid) -> np.ndarray:
    """OU path driven by ``dw`` on ``grid``; returns values at all nodes.

    ``X[0] = 0`` and ``X[k+1] = (1 - gamma dt) X[k] + dW[k]``; the
    update is applied literally in this arithmetic form (replay
    contract).  ``dw`` must contain exactly ``n_steps`` increments.
    """
    gamma = _check_gamma(gamma, grid.dt)
    dw = np.asarray(dw, dtype=float)
    if dw.shape != (grid.n_steps,):
        raise ValidationError(f"expected {grid.n_steps} increments, got shape {dw.shape}")
    decay = 1.0 - gamma * grid.dt
    x = np.empty(grid.n_steps + 1)
    x[0] = 0.0
    acc = 0.0
    for k in range(grid.n_steps):
        acc = decay * acc + dw[k]
        x[k + 1] = acc
    return x


def ou_path_physical(dw: np.ndarray, m: np.ndarray, gamma: float, grid: TimeGrid) -> np.ndarray:
    """OU path with an extra drift, ``X[k+1] = (1-gamma dt) X[k] + m[k] dt + dW[k]``.

    ``m`` holds the drift evaluated at the step starts.  With ``m``
    identically zero this reproduces :func:`ou_path` exactly.
    """
    gamma = _check_gamma(gamma, grid.dt)
    dw = np.asarray(dw, dtype=float)
    m = np.asarray(m, dtype=float)
    if dw.shape != (grid.n_steps,) or m.shape != (grid.n_steps,):
        raise ValidationError(
            f"expected {grid.n_steps} increments and drift values, got {dw.shape} and {m.shape}"
        )
    decay = 1.0 - gamma * grid.dt
    x = np.empty(grid.n_steps + 1)
    x[0] = 0.0
    acc = 0.0
    for k in range(grid.n_steps):
        acc = decay * acc + m[k] * grid.dt + dw[k]
        x[k + 1] = acc
    return x


def ou_covariance(t, s, gamma: float):
    """Exact covariance ``E[X_t X_s]`` of the OU process started at zero.

    For ``gamma > 0`` this is ``exp(-gamma (t+s)) expm1(2 gamma min(t,s)) / (2 gamma)``,
    written with ``expm1`` so small ``gamma t`` does not cancel; the
    ``gamma = 0`` limit is ``min(t, s)`` (plain Brownian motion).
    """
    gamma = float(gamma)
    if not (gamma >= 0.0 and np.isfinite(gamma)):
        raise ValidationError(f"gamma must be finite and >= 0, got {gamma!r}")
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(t_arr < 0.0) or np.any(s_arr < 0.0):
        raise ValidationError("times must be non-negative")
    lo = np.minimum(t_arr, s_arr)
    if gamma == 0.0:
        out = lo
    else:
        out = np.exp(-gamma * (t_arr + s_arr)) * np.expm1(2.0 * gamma * lo) / (2.0 * gamma)
    if np.isscalar(t) and np.isscalar(s):
        return float(out)
    return out


def sample_ou_values(
    policy: SeedPolicy,
    grid: TimeGrid,
    gamma: float,
    n_paths: int,
    at_indices=None,
    chunk_size: int = 4096,
) -> np.ndarray:
    """OU path values for many trajectories, shape ``(n_paths, len(at_indices))``.

    Row ``i`` is driven by stream ``i`` of ``policy`` with the same
    draw order as the single-path functions, so any row can be replayed
    in isolation.  ``at_indices`` defaults to every grid node.
    """
    gamma = _check_gamma(gamma, grid.dt)
    if at_indices is None:
        at_indices = np.arange(grid.n_steps + 1)
    idx = np.asarray(at_indices, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() > grid.n_steps):
        raise ValidationError(f"output indices must lie in [0, {grid.n_steps}]")
    out = np.empty((n_paths, idx.size))
    decay = 1.0 - gamma * grid.dt
    want = np.zeros(grid.n_steps + 1, dtype=bool)
    want[idx] = True
    for lo in range(0, n_paths, chunk_size):
        hi = min(lo + chunk_size, n_paths)
        dw = np.empty((hi - lo, grid.n_steps))
        for i in range(lo, hi):
            dw[i - lo] = np.sqrt(grid.dt) * gaussians(policy.stream(i), grid.n_steps)
        x = np.zeros(hi - lo)
        cols = {}
        if want[0]:
            cols[0] = x.copy()
        for k in range(grid.n_steps):
            x = decay * x + dw[:, k]
            if want[k + 1]:
                cols[k + 1] = x.copy()
        for j, node in enumerate(idx):
            out[lo:hi, j] = cols[node]
    return out
