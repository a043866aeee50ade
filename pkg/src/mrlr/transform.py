"""Planar similarity transforms parametrized as (a, b, tx, ty).

A transform maps a point (x, y) to (a*x - b*y + tx, b*x + a*y + ty),
i.e. (a + i*b) acts as a complex scale-rotation followed by a translation.
The action is linear in the four parameters, so an additive step on the
parameter vector is a valid group-free update rule for descent methods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidTransformError

__all__ = [
    "SimilarityParams",
    "IDENTITY",
    "apply_point",
    "compose",
    "invert",
    "to_vector",
    "add_step",
    "from_rect",
]


@dataclass(frozen=True)
class SimilarityParams:
    """Similarity transform; scale is sqrt(a**2 + b**2), must be positive."""

    a: float
    b: float
    tx: float
    ty: float

    def __post_init__(self):
        vals = (self.a, self.b, self.tx, self.ty)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidTransformError(f"non-finite transform parameters {vals}")
        if self.a * self.a + self.b * self.b == 0.0:
            raise InvalidTransformError("degenerate transform: a**2 + b**2 == 0")

    @property
    def scale(self) -> float:
        return math.hypot(self.a, self.b)


IDENTITY = SimilarityParams(1.0, 0.0, 0.0, 0.0)


def apply_point(tau: SimilarityParams, p):
    """Apply ``tau`` to a point (x, y); works elementwise on coordinate arrays."""
    x, y = p
    return (tau.a * x - tau.b * y + tau.tx, tau.b * x + tau.a * y + tau.ty)


def compose(t1: SimilarityParams, t2: SimilarityParams) -> SimilarityParams:
    """Return the transform applying ``t2`` first, then ``t1``."""
    return SimilarityParams(
        a=t1.a * t2.a - t1.b * t2.b,
        b=t1.a * t2.b + t1.b * t2.a,
        tx=t1.a * t2.tx - t1.b * t2.ty + t1.tx,
        ty=t1.b * t2.tx + t1.a * t2.ty + t1.ty,
    )


def invert(tau: SimilarityParams) -> SimilarityParams:
    """Inverse transform; raises InvalidTransformError on degenerate input."""
    d = tau.a * tau.a + tau.b * tau.b
    if d == 0.0 or not math.isfinite(d):
        raise InvalidTransformError("cannot invert degenerate transform")
    ia = tau.a / d
    ib = -tau.b / d
    return SimilarityParams(
        a=ia,
        b=ib,
        tx=-(ia * tau.tx - ib * tau.ty),
        ty=-(ib * tau.tx + ia * tau.ty),
    )


def to_vector(tau: SimilarityParams) -> np.ndarray:
    """Parameter 4-vector (a, b, tx, ty)."""
    return np.array([tau.a, tau.b, tau.tx, tau.ty], dtype=np.float64)


def add_step(tau: SimilarityParams, delta) -> SimilarityParams:
    """Additive parameter update; raises if the result is degenerate."""
    d = np.asarray(delta, dtype=np.float64)
    if d.shape != (4,):
        raise InvalidInputError(f"step must be a 4-vector, got shape {d.shape}")
    return SimilarityParams(
        a=tau.a + float(d[0]),
        b=tau.b + float(d[1]),
        tx=tau.tx + float(d[2]),
        ty=tau.ty + float(d[3]),
    )


def from_rect(box, frame) -> SimilarityParams:
    """Initial transform from an axis-aligned detector box.

    ``box`` is (x, y, w, h) in observed-image pixels.  The canonical frame's
    origin maps to the box's top-left corner and the scale is isotropic,
    taken from the width ratio; any aspect mismatch is absorbed by that
    single scale.
    """
    x, y, w, h = box
    if not all(math.isfinite(float(v)) for v in (x, y, w, h)):
        raise InvalidInputError("box values must be finite")
    if w <= 0 or h <= 0:
        raise InvalidInputError(f"box must have positive size, got w={w}, h={h}")
    return SimilarityParams(a=float(w) / float(frame.width), b=0.0, tx=float(x), ty=float(y))
