"""Grayscale image containers, bilinear warping, gradients, and the warp Jacobian.

All sampling clamps coordinates to the image border (replicate padding), so
warps never inject synthetic zero-background that would bias l2 normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidTransformError, ZeroNormError
from .transform import SimilarityParams, apply_point

__all__ = [
    "Image",
    "Frame",
    "sample_bilinear",
    "warp",
    "vectorize_normalize",
    "spatial_gradient",
    "jacobian",
    "warp_jacobian",
]


@dataclass(frozen=True)
class Frame:
    """Canonical aligned-crop geometry; ``m`` is the vectorized dimension."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(f"frame dims must be positive, got {self.width}x{self.height}")

    @property
    def m(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Image:
    """Row-major float64 intensity grid. Observed images live in [0, 1] by
    ingestion convention; derived grids (gradients) may take any finite value."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.float64))
        if px.ndim != 2 or px.shape[0] <= 0 or px.shape[1] <= 0:
            raise InvalidInputError(f"image must be a 2-d grid, got shape {px.shape}")
        if not np.isfinite(px).all():
            raise InvalidInputError("image contains non-finite values")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def frame(self) -> Frame:
        return Frame(self.width, self.height)


def _sample(px: np.ndarray, x, y):
    """Bilinear sample with clamp-to-border; x, y may be arrays."""
    h, w = px.shape
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    top = (1.0 - fx) * px[y0, x0] + fx * px[y0, x1]
    bot = (1.0 - fx) * px[y1, x0] + fx * px[y1, x1]
    return (1.0 - fy) * top + fy * bot


def sample_bilinear(img: Image, p):
    """Bilinear interpolation at continuous coordinates (x, y).

    Coordinates outside [0, w-1] x [0, h-1] are clamped to the border.
    Accepts scalars or equally shaped coordinate arrays.
    """
    x, y = p
    out = _sample(img.pixels, np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out)
    return out


def _grid(frame: Frame):
    xs, ys = np.meshgrid(
        np.arange(frame.width, dtype=np.float64),
        np.arange(frame.height, dtype=np.float64),
    )
    return xs, ys


def warp(img: Image, tau: SimilarityParams, frame: Frame) -> Image:
    """Pull observed pixels into the canonical frame.

    Output pixel at canonical coordinate p takes the bilinear sample of
    ``img`` at ``apply_point(tau, p)``; ``tau`` maps the canonical frame
    into the observed image.
    """
    if not isinstance(tau, SimilarityParams):
        raise InvalidTransformError("warp needs a SimilarityParams transform")
    xs, ys = _grid(frame)
    u, v = apply_point(tau, (xs, ys))
    return Image(_sample(img.pixels, u, v))


def vectorize_normalize(img: Image) -> np.ndarray:
    """Row-major vectorization scaled to unit l2 norm."""
    vec = img.pixels.reshape(-1)
    nrm = np.linalg.norm(vec)
    if nrm == 0.0:
        raise ZeroNormError("cannot normalize an all-zero image")
    return vec / nrm


def spatial_gradient(img: Image) -> tuple[Image, Image]:
    """Per-pixel intensity gradients (d/dx, d/dy).

    Central differences in the interior, one-sided at the borders.
    """
    px = img.pixels
    h, w = px.shape
    if h < 2 or w < 2:
        raise InvalidInputError("gradient needs at least 2 pixels along each axis")
    gx = np.empty_like(px)
    gy = np.empty_like(px)
    gx[:, 1:-1] = (px[:, 2:] - px[:, :-2]) * 0.5
    gx[:, 0] = px[:, 1] - px[:, 0]
    gx[:, -1] = px[:, -1] - px[:, -2]
    gy[1:-1, :] = (px[2:, :] - px[:-2, :]) * 0.5
    gy[0, :] = px[1, :] - px[0, :]
    gy[-1, :] = px[-1, :] - px[-2, :]
    return Image(gx), Image(gy)


def warp_jacobian(
    img: Image,
    tau: SimilarityParams,
    frame: Frame,
    grads: tuple[Image, Image] | None = None,
):
    """Normalized warp vector and its Jacobian with respect to (a, b, tx, ty).

    Returns ``(y_hat, J)`` where ``y_hat`` is the unit-normalized vectorized
    warp and ``J`` is m x 4.  Column k is the derivative of ``y_hat`` along
    parameter k: image gradients are sampled at the warped coordinates and
    pushed through the coordinate derivatives ([x, -y, 1, 0] for the x
    coordinate, [y, x, 0, 1] for the y coordinate), then the normalization
    projector (I - y_hat y_hat^T)/||v|| is applied.

    Gradients are zeroed per axis for samples that fall strictly outside the
    image, where the clamped sampler is constant and the true derivative
    vanishes.  Passing precomputed ``grads`` (from :func:`spatial_gradient`)
    avoids recomputing them across iterations.
    """
    if grads is None:
        grads = spatial_gradient(img)
    gx_img, gy_img = grads
    xs, ys = _grid(frame)
    u, v = apply_point(tau, (xs, ys))

    vals = _sample(img.pixels, u, v).reshape(-1)
    gx = _sample(gx_img.pixels, u, v).reshape(-1)
    gy = _sample(gy_img.pixels, u, v).reshape(-1)

    # Clamped samples are insensitive to motion along the clamped axis.
    gx = gx * ((u >= 0.0) & (u <= img.width - 1.0)).reshape(-1)
    gy = gy * ((v >= 0.0) & (v <= img.height - 1.0)).reshape(-1)

    nrm = np.linalg.norm(vals)
    if nrm == 0.0:
        raise ZeroNormError("warp has zero norm; cannot normalize")
    y_hat = vals / nrm

    xf = xs.reshape(-1)
    yf = ys.reshape(-1)
    jv = np.empty((vals.size, 4), dtype=np.float64)
    jv[:, 0] = gx * xf + gy * yf
    jv[:, 1] = -gx * yf + gy * xf
    jv[:, 2] = gx
    jv[:, 3] = gy

    jac = (jv - np.outer(y_hat, y_hat @ jv)) / nrm
    return y_hat, jac


def jacobian(img: Image, tau: SimilarityParams, frame: Frame) -> np.ndarray:
    """Jacobian of the normalized warp with respect to the transform parameters."""
    return warp_jacobian(img, tau, frame)[1]
