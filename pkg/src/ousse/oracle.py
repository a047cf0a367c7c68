"""Independent reference solutions for closed or constant-coefficient cases.

Vectorization convention (fixed, do not change): ``vec`` stacks
columns, i.e. ``vec(rho) = rho.ravel(order="F")``, under which
``vec(A X B) = (B^T kron A) vec(X)``.  Both superoperator factors below
follow from that choice; mixing conventions is the classic silent bug
in Liouvillian code, so every builder here goes through the same two
helpers.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import as_operator, dagger, hermitian_residual, hermitian_tolerance, matrix_exp

__all__ = [
    "Liouvillian",
    "build_liouvillian",
    "propagate_lindblad",
    "dephasing_coherence",
    "vec",
    "unvec",
]


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).ravel(order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


def _left(a: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> a rho."""
    return np.kron(np.eye(a.shape[0]), a)


def _right(a: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> rho a."""
    return np.kron(a.T, np.eye(a.shape[0]))


@dataclass(frozen=True)
class Liouvillian:
    matrix: np.ndarray          # (d^2, d^2) acting on column-stacked matrices
    dim: int

    def apply(self, rho) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)


def build_liouvillian(h, b) -> Liouvillian:
    """Matrix form of ``rho -> -i[H,rho] - 1/2 {B^dag B, rho} + B rho B^dag``.

    Constant operators only: this is the generator of the closed mean
    equation in the memoryless limit and of the constant-B case, used
    as the deterministic cross-check for trajectory averages.
    """
    h = as_operator(h)
    b = as_operator(b)
    if h.shape != b.shape:
        raise ValidationError(f"H shape {h.shape} != B shape {b.shape}")
    res = hermitian_residual(h)
    tol = hermitian_tolerance(h)
    if res > tol:
        raise ValidationError(f"H is not hermitian: residual {res:.3e} exceeds {tol:.3e}")
    bb = dagger(b) @ b
    mat = (
        -1j * (_left(h) - _right(h))
        - 0.5 * (_left(bb) + _right(bb))
        + np.kron(np.conj(b), b)
    )
    return Liouvillian(mat, h.shape[0])


def propagate_lindblad(liou: Liouvillian, rho0, t: float) -> np.ndarray:
    """``unvec(exp(t M) vec(rho0))``; trace-preserving by construction."""
    if t < 0.0:
        raise ValidationError(f"time must be >= 0, got {t!r}")
    rho0 = as_operator(rho0)
    if rho0.shape[0] != liou.dim:
        raise ValidationError(f"state dimension {rho0.shape[0]} != generator dimension {liou.dim}")
    return unvec(matrix_exp(t * liou.matrix) @ vec(rho0), liou.dim)


def dephasing_coherence(t, gamma: float):
    """Coherence decay factor of the pure-dephasing model, ``E[e^{-2i X_t}]``.

    Derivation: with commuting constant ``K = sigma_z`` and ``H = 0``
    the state is ``exp(-i X_t sigma_z) psi0``, so the off-diagonal term
    picks up ``e^{-2i X_t}``; X_t is a centred Gaussian, and the
    characteristic function gives ``exp(-2 Var X_t)``.  Written via
    ``expm1`` so small gamma*t does not cancel:

        gamma > 0:  exp(expm1(-2 gamma t) / gamma)
        gamma = 0:  exp(-2 t)            (Brownian phase limit)

    Decreasing in t, increasing in gamma: coloured noise dephases more
    slowly than its white-noise limit.
    """
    gamma = float(gamma)
    if not (gamma >= 0.0 and np.isfinite(gamma)):
        raise ValidationError(f"gamma must be finite and >= 0, got {gamma!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValidationError("time must be >= 0")
    if gamma == 0.0:
        out = np.exp(-2.0 * t_arr)
    else:
        out = np.exp(np.expm1(-2.0 * gamma * t_arr) / gamma)
    if np.isscalar(t):
        return float(out)
    return out
