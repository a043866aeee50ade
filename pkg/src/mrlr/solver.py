"""Per-iteration linearized step solvers.

The step problem is the joint least squares

    min_{x, dt}  || [y_hat; 0] - [[D, -J], [C, 0]] [x; dt] ||^2

over representation coefficients x and the transform step dt.  ``solve_naive``
solves the stacked system directly via an SVD-backed pseudo-inverse and is the
reference oracle.  ``solve_block`` eliminates x through the Schur complement of
the Gram block T1 = D^T D + C^T C, whose (cached) inverse is constant across
inner iterations, and never forms x at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import InvalidInputError, SingularSystemError

__all__ = [
    "GramCache",
    "StepSolution",
    "build_gram_cache",
    "solve_naive",
    "solve_block",
    "objective",
]

_RCOND_LIMIT = 1e-12  # damp when estimated condition exceeds 1e12


@dataclass(frozen=True)
class GramCache:
    """T1 = D^T D + C^T C and its inverse, reusable across inner iterations."""

    t1: np.ndarray
    t1_inv: np.ndarray
    damping: float = 0.0


@dataclass(frozen=True)
class StepSolution:
    """Solved step with diagnostics.

    ``residual_norm`` is ||u - R z|| at the solution; ``objective`` is its
    square (the penalized model misfit).  ``x`` is only populated by the
    naive path.
    """

    delta_tau: np.ndarray
    residual_norm: float
    objective: float | None = None
    x: np.ndarray | None = None


def _check_dims(d_s, c_s, jac, y_hat):
    d_s = np.asarray(d_s, dtype=np.float64)
    jac = np.asarray(jac, dtype=np.float64)
    y = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    c = np.asarray(c_s, dtype=np.float64).reshape(-1)
    if d_s.ndim != 2 or jac.ndim != 2:
        raise InvalidInputError("D and J must be matrices")
    m, n = d_s.shape
    if jac.shape[0] != m or y.shape[0] != m:
        raise InvalidInputError(f"row mismatch: D {d_s.shape}, J {jac.shape}, y {y.shape}")
    if c.shape[0] != n:
        raise InvalidInputError(f"penalty length {c.shape[0]} != atom count {n}")
    if np.any(c < 0):
        raise InvalidInputError("penalties must be nonnegative")
    return d_s, c, jac, y


def _spd_factor(mat: np.ndarray):
    """Cholesky factor with a single damped retry; returns (factor, damping)."""
    dim = mat.shape[0]
    lam = 1e-8 * float(np.trace(mat)) / dim
    try:
        cho = sla.cho_factor(mat, lower=True, check_finite=False)
        anorm = np.abs(mat).sum(axis=0).max()
        rcond, info = lapack.dpocon(cho[0], anorm, lower=1)
        if info == 0 and rcond > _RCOND_LIMIT:
            return cho, 0.0
    except np.linalg.LinAlgError:
        pass
    try:
        damped = mat + lam * np.eye(dim)
        cho = sla.cho_factor(damped, lower=True, check_finite=False)
        anorm = np.abs(damped).sum(axis=0).max()
        rcond, info = lapack.dpocon(cho[0], anorm, lower=1)
        if info == 0 and rcond > _RCOND_LIMIT:
            return cho, lam
    except np.linalg.LinAlgError:
        pass
    raise SingularSystemError(f"system of size {dim} is singular beyond damping")


def build_gram_cache(d_s, c_s) -> GramCache:
    """Precompute T1 = D^T D + diag(c)^2 and its inverse.

    T1 does not depend on the transform, so one cache serves every inner
    iteration run against the same truncated dictionary and penalties.
    """
    d_s = np.asarray(d_s, dtype=np.float64)
    c = np.asarray(c_s, dtype=np.float64).reshape(-1)
    if d_s.ndim != 2 or c.shape[0] != d_s.shape[1]:
        raise InvalidInputError(f"penalty length {c.shape} does not match D {d_s.shape}")
    if np.any(c < 0):
        raise InvalidInputError("penalties must be nonnegative")
    t1 = d_s.T @ d_s
    t1[np.diag_indices_from(t1)] += c * c
    cho, lam = _spd_factor(t1)
    t1_inv = sla.cho_solve(cho, np.eye(t1.shape[0]), check_finite=False)
    t1_inv = 0.5 * (t1_inv + t1_inv.T)
    return GramCache(t1=t1, t1_inv=t1_inv, damping=lam)


def solve_naive(d_s, c_s, jac, y_hat) -> StepSolution:
    """Reference solve of the stacked least-squares system.

    Builds R = [[D, -J], [C, 0]] explicitly and solves with the SVD
    pseudo-inverse, returning both x and the step.  Rank-deficient systems
    get the minimum-norm solution.
    """
    d_s, c, jac, y = _check_dims(d_s, c_s, jac, y_hat)
    m, n = d_s.shape
    q = jac.shape[1]
    r = np.zeros((m + n, n + q), dtype=np.float64)
    r[:m, :n] = d_s
    r[:m, n:] = -jac
    r[m:, :n] = np.diag(c)
    u = np.concatenate([y, np.zeros(n)])
    z, _, _, _ = np.linalg.lstsq(r, u, rcond=None)
    if not np.isfinite(z).all():
        raise SingularSystemError("least-squares solve produced non-finite values")
    resid = float(np.linalg.norm(u - r @ z))
    return StepSolution(
        delta_tau=z[n:].copy(),
        residual_norm=resid,
        objective=resid * resid,
        x=z[:n].copy(),
    )


def solve_block(d_s, c_s, jac, y_hat, cache: GramCache) -> StepSolution:
    """Schur-complement solve for the step only.

    With T2 = D^T J and T3 = J^T J, the step solves

        (T3 - T2^T T1^{-1} T2) dt = T2^T T1^{-1} D^T y - J^T y

    using the cached T1 inverse; x is never formed.  The residual norm is
    recovered from ||u - R z||^2 = ||y||^2 - u^T R z, which needs only
    quantities already at hand.
    """
    d_s, c, jac, y = _check_dims(d_s, c_s, jac, y_hat)
    n = d_s.shape[1]
    if cache.t1.shape != (n, n):
        raise InvalidInputError(f"cache built for {cache.t1.shape[0]} atoms, got {n}")
    g1 = d_s.T @ y
    g2 = jac.T @ y
    t2 = d_s.T @ jac
    t3 = jac.T @ jac
    w1 = cache.t1_inv @ g1
    wt2 = cache.t1_inv @ t2
    schur = t3 - t2.T @ wt2
    schur = 0.5 * (schur + schur.T)
    cho, _ = _spd_factor(schur)
    dt = sla.cho_solve(cho, t2.T @ w1 - g2, check_finite=False)
    if not np.isfinite(dt).all():
        raise SingularSystemError("block solve produced non-finite step")
    # u^T R z with x eliminated: g1.w1 + w1.(T2 dt) - g2.dt
    ur_z = float(g1 @ w1 + w1 @ (t2 @ dt) - g2 @ dt)
    resid_sq = max(float(y @ y) - ur_z, 0.0)
    return StepSolution(
        delta_tau=dt,
        residual_norm=float(np.sqrt(resid_sq)),
        objective=resid_sq,
        x=None,
    )


def objective(d_s, c_s, x, delta_tau, jac, y_hat) -> float:
    """Penalized misfit ||C x||^2 + ||y - D x + J dt||^2 at an arbitrary point."""
    d_s, c, jac, y = _check_dims(d_s, c_s, jac, y_hat)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    dt = np.asarray(delta_tau, dtype=np.float64).reshape(-1)
    e = y - d_s @ x + jac @ dt
    return float(np.dot(c * x, c * x) + e @ e)
