"""Two-loop alignment: outer locality-dictionary reselection, inner Gauss-Newton.

Each outer pass recomputes the locality adaptor at the current estimate,
truncates to the most correlated atoms (when ``s`` is set), and caches the
Gram inverse; the inner loop then takes pure Gauss-Newton steps on the
similarity parameters until the step norm drops below tolerance.  The outer
loop stops as soon as the selected atom set repeats, since that set is the
only state carried between outer passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dictionary as dict_mod
from . import imageops, solver, transform
from .dictionary import Dictionary
from .errors import AlignmentError, InvalidInputError, MrlrError
from .imageops import Image
from .transform import SimilarityParams

__all__ = [
    "AlignConfig",
    "AlignResult",
    "InnerRecord",
    "Probe",
    "RoaPoint",
    "align",
    "corner_displacement",
    "perturb",
    "region_of_attraction",
]


@dataclass(frozen=True)
class AlignConfig:
    """Alignment knobs.

    ``s`` absent runs the full dictionary every outer pass; setting it keeps
    only the ``s`` least-penalized atoms.  ``use_outside`` controls whether
    outside-data atoms join the alignment pool.
    """

    sigma: float = 0.2
    s: int | None = None
    max_outer: int = 3
    max_inner: int = 30
    tol_step: float = 1e-4
    use_outside: bool = True

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidInputError("sigma must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidInputError("iteration limits must be at least 1")
        if self.s is not None and self.s < 1:
            raise InvalidInputError("s must be at least 1 when given")
        if self.tol_step <= 0:
            raise InvalidInputError("tol_step must be positive")


@dataclass(frozen=True)
class InnerRecord:
    outer: int
    inner: int
    step_norm: float
    residual_norm: float
    objective: float


@dataclass
class AlignResult:
    """Final transform, aligned crop, and the full iteration trace."""

    tau_final: SimilarityParams
    aligned: Image
    trace: list[InnerRecord] = field(default_factory=list)
    selected_atoms: list[np.ndarray] = field(default_factory=list)
    converged: bool = False


def align(y_w: Image, dct: Dictionary, tau0: SimilarityParams, cfg: AlignConfig) -> AlignResult:
    """Align an observed crop against the dictionary starting from ``tau0``.

    Raises AlignmentError (with the partial trace attached) if a warp
    degenerates or the step solver fails.
    """
    frame = dct.frame
    pool = np.flatnonzero(~dct.outside) if not cfg.use_outside else np.arange(dct.n)
    if pool.size == 0:
        raise InvalidInputError("alignment pool is empty")
    s = cfg.s
    if s is not None and s > pool.size:
        raise InvalidInputError(f"s={s} exceeds the {pool.size}-atom alignment pool")
    s_eff = pool.size if s is None else s
    atoms_pool = dct.atoms if pool.size == dct.n else dct.atoms[:, pool]

    grads = imageops.spatial_gradient(y_w)
    tau = tau0
    trace: list[InnerRecord] = []
    selected: list[np.ndarray] = []
    prev_idx: np.ndarray | None = None
    converged_outer = False
    inner_hit_tol = False

    try:
        for outer in range(1, cfg.max_outer + 1):
            y_hat, _ = imageops.warp_jacobian(y_w, tau, frame, grads)
            c_pool = dict_mod.adaptor_penalties(atoms_pool, y_hat, cfg.sigma)
            idx = dict_mod.select_top_s(c_pool, s_eff)
            if prev_idx is not None and idx.size == prev_idx.size and np.array_equal(idx, prev_idx):
                converged_outer = True
                break
            prev_idx = idx
            selected.append(pool[idx])

            if idx.size == pool.size:
                d_s = atoms_pool
                c_s = c_pool
            else:
                d_s = atoms_pool[:, idx]
                c_s = c_pool[idx]
            cache = solver.build_gram_cache(d_s, c_s)

            inner_hit_tol = False
            for inner in range(1, cfg.max_inner + 1):
                y_hat, jac = imageops.warp_jacobian(y_w, tau, frame, grads)
                sol = solver.solve_block(d_s, c_s, jac, y_hat, cache)
                tau = transform.add_step(tau, sol.delta_tau)
                step_norm = float(np.linalg.norm(sol.delta_tau))
                trace.append(
                    InnerRecord(
                        outer=outer,
                        inner=inner,
                        step_norm=step_norm,
                        residual_norm=sol.residual_norm,
                        objective=sol.objective,
                    )
                )
                if step_norm <= cfg.tol_step:
                    inner_hit_tol = True
                    break
    except MrlrError as exc:
        raise AlignmentError(f"alignment failed: {exc}", trace=trace, selected_atoms=selected) from exc

    return AlignResult(
        tau_final=tau,
        aligned=imageops.warp(y_w, tau, frame),
        trace=trace,
        selected_atoms=selected,
        converged=converged_outer and inner_hit_tol,
    )


# ---------------------------------------------------------------------------
# Region-of-attraction sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Probe:
    """A query image together with its ground-truth transform."""

    image: Image
    tau_true: SimilarityParams


@dataclass(frozen=True)
class RoaPoint:
    axis: str
    magnitude: float
    trials: int
    successes: int
    rate: float


_AXES = ("tx", "ty", "rot", "scale")


def corner_displacement(tau_a: SimilarityParams, tau_b: SimilarityParams, frame) -> float:
    """Mean displacement of the four frame corners between two transforms, in pixels."""
    corners = [(0.0, 0.0), (frame.width - 1.0, 0.0), (0.0, frame.height - 1.0), (frame.width - 1.0, frame.height - 1.0)]
    total = 0.0
    for p in corners:
        xa, ya = transform.apply_point(tau_a, p)
        xb, yb = transform.apply_point(tau_b, p)
        total += math.hypot(xa - xb, ya - yb)
    return total / len(corners)


def perturb(tau: SimilarityParams, axis: str, magnitude: float, frame) -> SimilarityParams:
    """Compose a canonical-frame perturbation onto ``tau``.

    Translations are fractions of the frame width; rotation is in degrees
    about the frame center; scale is a relative factor about the center.
    """
    if axis not in _AXES:
        raise InvalidInputError(f"axis must be one of {_AXES}, got {axis!r}")
    cx = (frame.width - 1.0) / 2.0
    cy = (frame.height - 1.0) / 2.0
    if axis == "tx":
        p = SimilarityParams(1.0, 0.0, magnitude * frame.width, 0.0)
    elif axis == "ty":
        p = SimilarityParams(1.0, 0.0, 0.0, magnitude * frame.width)
    elif axis == "rot":
        th = math.radians(magnitude)
        ca, sa = math.cos(th), math.sin(th)
        p = SimilarityParams(ca, sa, cx - ca * cx + sa * cy, cy - sa * cx - ca * cy)
    else:
        f = 1.0 + magnitude
        if f <= 0:
            raise InvalidInputError(f"scale perturbation {magnitude} collapses the transform")
        p = SimilarityParams(f, 0.0, cx * (1.0 - f), cy * (1.0 - f))
    return transform.compose(tau, p)


def _trial_rng(seed: int, axis: str, mag_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, _AXES.index(axis), mag_index, trial])


def _run_trial(dct, probe: Probe, axis, magnitude, rng, cfg, tol_px):
    sign = 1.0 if rng.random() < 0.5 else -1.0
    tau0 = perturb(probe.tau_true, axis, sign * magnitude, dct.frame)
    try:
        res = align(probe.image, dct, tau0, cfg)
    except AlignmentError:
        return False
    return corner_displacement(res.tau_final, probe.tau_true, dct.frame) <= tol_px


def region_of_attraction(
    dct: Dictionary,
    probes: Probe | Sequence[Probe],
    axis: str,
    magnitudes: Sequence[float],
    trials: int,
    seed: int,
    cfg: AlignConfig | None = None,
    tol_px: float = 1.0,
    threads: int = 0,
) -> list[RoaPoint]:
    """Success rate of alignment under axis-wise initial perturbations.

    Each trial perturbs a probe's ground-truth transform along ``axis`` with
    a random sign, runs alignment, and scores success when the recovered
    transform lands within ``tol_px`` mean corner displacement.  Failures
    raised by the solver count as non-success.  Trials cycle through the
    probes; per-trial RNG streams are keyed by (seed, axis, magnitude index,
    trial) so results do not depend on scheduling order.
    """
    if isinstance(probes, Probe):
        probes = [probes]
    probes = list(probes)
    if not probes:
        raise InvalidInputError("need at least one probe")
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    cfg = cfg or AlignConfig()

    def point(mi: int, mag: float) -> RoaPoint:
        args = [
            (probes[t % len(probes)], _trial_rng(seed, axis, mi, t))
            for t in range(trials)
        ]
        if threads and threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(
                    pool.map(lambda a: _run_trial(dct, a[0], axis, mag, a[1], cfg, tol_px), args)
                )
        else:
            outcomes = [_run_trial(dct, p, axis, mag, rng, cfg, tol_px) for p, rng in args]
        wins = sum(outcomes)
        return RoaPoint(axis=axis, magnitude=float(mag), trials=trials, successes=wins, rate=wins / trials)

    return [point(mi, mag) for mi, mag in enumerate(magnitudes)]
