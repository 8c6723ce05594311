"""Pixel-grid primitives: smoothing, gradients, morphology, components, disks.

Scalar grids are 2-D float64 arrays (row-major, shape (height, width)).
Binary masks are 2-D uint8 arrays with values in {0, 1}.
All functions are pure and never mutate their inputs.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

# 8-connectivity for component labelling
_CONN8 = np.ones((3, 3), dtype=int)


def as_grid(values) -> np.ndarray:
    """Validate and return a float64 scalar grid."""
    g = np.asarray(values, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ValueError(f"scalar grid must be 2-D and non-empty, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("scalar grid contains non-finite values")
    return g


def as_mask(bits) -> np.ndarray:
    """Validate and return a uint8 binary mask."""
    m = np.asarray(bits)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"binary mask must be 2-D and non-empty, got shape {m.shape}")
    out = m.astype(np.uint8, copy=True)
    if not np.isin(out, (0, 1)).all():
        raise ValueError("binary mask values must be 0 or 1")
    return out


def check_odd_size(size: int) -> int:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"structuring element size must be odd and >= 1, got {size}")
    return int(size)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian kernel, radius ceil(3*sigma), normalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(grid: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate (edge) padding."""
    g = as_grid(grid)
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(g, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return out


def gradient_magnitude(grid: np.ndarray) -> np.ndarray:
    """Gradient magnitude via central differences (one-sided at borders)."""
    g = as_grid(grid)
    if g.shape[0] < 2 or g.shape[1] < 2:
        raise ValueError("gradient needs at least 2 pixels along each axis")
    dy, dx = np.gradient(g)
    return np.hypot(dx, dy)


def erode(mask: np.ndarray, size: int) -> np.ndarray:
    """Binary erosion with a size x size square element; outside pixels count as 1."""
    return ndimage.minimum_filter(as_mask(mask), size=size, mode="constant", cval=1)


def dilate(mask: np.ndarray, size: int) -> np.ndarray:
    """Binary dilation with a size x size square element; outside pixels count as 0."""
    return ndimage.maximum_filter(as_mask(mask), size=size, mode="constant", cval=0)


def morph_open_close(mask: np.ndarray, size: int) -> np.ndarray:
    """Opening followed by closing with the same square element.

    The border convention (erosion pads with 1, dilation with 0) keeps the
    all-ones mask a fixed point and makes the combined filter idempotent.
    """
    check_odd_size(size)
    opened = dilate(erode(mask, size), size)
    return erode(dilate(opened, size), size)


def remove_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop 8-connected components of 1s with area < min_area."""
    if min_area < 0:
        raise ValueError(f"min_area must be >= 0, got {min_area}")
    m = as_mask(mask)
    if min_area == 0:
        return m
    labels, n = ndimage.label(m, structure=_CONN8)
    if n == 0:
        return m
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return keep[labels].astype(np.uint8)


def rasterize_disk(center: tuple[float, float], radius: float,
                   width: int, height: int) -> np.ndarray:
    """Binary mask of the disk (px-cx)^2 + (py-cy)^2 <= r^2, clipped to the image."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    cx, cy = center
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    return ((xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius).astype(np.uint8)
