"""Representation-based classification of aligned crops.

Two coders over the same dictionary: an analytic l2-regularized
(collaborative) solve and an l1 sparse solve by accelerated proximal
gradient.  The decision rule picks the training class whose atoms
reconstruct the query with the smallest residual; outside-data atoms may
receive coefficients but never count toward any class residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import imageops
from .align import AlignConfig, AlignResult, align
from .dictionary import Dictionary
from .errors import InvalidInputError
from .imageops import Image
from .transform import SimilarityParams

__all__ = [
    "CodingResult",
    "crc_code",
    "src_code",
    "classify",
    "recognize_pipeline",
]


@dataclass(frozen=True)
class CodingResult:
    """Coefficients, per-class reconstruction residuals, and the arg-min label."""

    x: np.ndarray
    class_labels: np.ndarray
    class_residuals: np.ndarray
    predicted: int
    converged: bool = True
    objective_history: np.ndarray | None = None


def _check_query(dictionary: Dictionary, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape != (dictionary.m,):
        raise InvalidInputError(f"query length {y.size} != dictionary m={dictionary.m}")
    return y


def _class_residuals(dictionary: Dictionary, y: np.ndarray, x: np.ndarray):
    labels = dictionary.subject_labels()
    res = np.empty(labels.size, dtype=np.float64)
    train = ~dictionary.outside
    for i, lab in enumerate(labels):
        mask = train & (dictionary.labels == lab)
        res[i] = np.linalg.norm(y - dictionary.atoms[:, mask] @ x[mask])
    return labels, res


def _finish(dictionary, y, x, converged=True, history=None) -> CodingResult:
    labels, res = _class_residuals(dictionary, y, x)
    return CodingResult(
        x=x,
        class_labels=labels,
        class_residuals=res,
        predicted=int(labels[int(np.argmin(res))]),
        converged=converged,
        objective_history=history,
    )


def crc_code(dictionary: Dictionary, y, lam: float = 1e-3) -> CodingResult:
    """Ridge coding x = (D^T D + lam I)^{-1} D^T y with per-class residuals."""
    if lam <= 0:
        raise InvalidInputError("lambda must be positive")
    y = _check_query(dictionary, y)
    g = dictionary.atoms.T @ dictionary.atoms
    g[np.diag_indices_from(g)] += lam
    cho = sla.cho_factor(g, lower=True, check_finite=False)
    x = sla.cho_solve(cho, dictionary.atoms.T @ y, check_finite=False)
    return _finish(dictionary, y, x)


def _soft(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _l1_objective(dictionary, y, x, lam):
    r = y - dictionary.atoms @ x
    return float(r @ r + lam * np.abs(x).sum())


def _l1_violation(g: np.ndarray, x: np.ndarray, lam: float) -> float:
    """Worst coordinatewise violation of the subgradient optimality conditions."""
    on = x != 0
    v = 0.0
    if on.any():
        v = float(np.abs(g[on] + lam * np.sign(x[on])).max())
    if (~on).any():
        v = max(v, float(np.maximum(np.abs(g[~on]) - lam, 0.0).max()))
    return v


def src_code(
    dictionary: Dictionary,
    y,
    lam: float = 1e-3,
    max_iters: int = 1000,
    tol: float = 1e-6,
) -> CodingResult:
    """Sparse coding min_x ||y - D x||^2 + lam ||x||_1 by accelerated shrinkage.

    Accelerated proximal gradient with fixed step 1/L (L from the top
    eigenvalue of 2 D^T D) and a monotone restart: whenever the accelerated
    candidate would raise the objective, momentum resets and the step is
    retaken from the previous iterate, so recorded objectives never increase.
    Stops when the l1 subgradient residual falls below ``tol``; if the budget
    runs out first, the best iterate is returned flagged unconverged.
    """
    if lam <= 0:
        raise InvalidInputError("lambda must be positive")
    if max_iters < 1:
        raise InvalidInputError("max_iters must be at least 1")
    y = _check_query(dictionary, y)
    d = dictionary.atoms
    gram = d.T @ d
    lip = 2.0 * float(sla.eigh(gram, eigvals_only=True, subset_by_index=(d.shape[1] - 1, d.shape[1] - 1))[0])
    lip = max(lip, 1e-12)
    step = 1.0 / lip
    dty = d.T @ y

    x = np.zeros(d.shape[1])
    z = x
    t = 1.0
    fx = _l1_objective(dictionary, y, x, lam)
    history = [fx]
    converged = False
    for _ in range(max_iters):
        grad_z = 2.0 * (gram @ z - dty)
        cand = _soft(z - step * grad_z, lam * step)
        f_cand = _l1_objective(dictionary, y, cand, lam)
        if f_cand > fx:
            # restart: plain shrinkage step from x is non-increasing for step <= 1/L
            t = 1.0
            grad_x = 2.0 * (gram @ x - dty)
            cand = _soft(x - step * grad_x, lam * step)
            f_cand = _l1_objective(dictionary, y, cand, lam)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = cand + ((t - 1.0) / t_next) * (cand - x)
        x, fx, t = cand, f_cand, t_next
        history.append(fx)
        if _l1_violation(2.0 * (gram @ x - dty), x, lam) <= tol:
            converged = True
            break
    return _finish(dictionary, y, x, converged=converged, history=np.asarray(history))


def classify(result: CodingResult) -> int:
    """Label with the smallest class residual; ties resolve to the lower label."""
    return int(result.class_labels[int(np.argmin(result.class_residuals))])


def recognize_pipeline(
    y_w: Image,
    dictionary: Dictionary,
    tau0: SimilarityParams,
    align_cfg: AlignConfig | None = None,
    coder: str = "crc",
    lam: float = 1e-3,
) -> tuple[int, AlignResult, CodingResult]:
    """Align, then code the unit-normalized aligned crop, then classify."""
    if coder not in ("crc", "src"):
        raise InvalidInputError(f"coder must be 'crc' or 'src', got {coder!r}")
    res = align(y_w, dictionary, tau0, align_cfg or AlignConfig())
    y = imageops.vectorize_normalize(res.aligned)
    coding = crc_code(dictionary, y, lam) if coder == "crc" else src_code(dictionary, y, lam)
    return classify(coding), res, coding
