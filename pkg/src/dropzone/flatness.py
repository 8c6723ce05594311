"""Depth normalization and gradient-based flatness masks (geometry branch).

The flat mask is computed from normalized depth in five stages:
Gaussian smoothing, gradient magnitude, a local window vote on
sub-threshold gradients, morphological open/close, and small-component
removal.  Bit 1 means flat; the complement is the geometric unsafe mask.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import imgcore


@dataclass(frozen=True)
class FlatnessParams:
    """Tunables for the flatness filter.

    min_component_area=None means "0.1% of the image pixels", resolved per
    image at call time.
    """
    sigma: float = 1.0
    grad_threshold: float = 1.0
    window: int = 3
    flat_ratio: float = 0.4
    morph_size: int = 5
    min_component_area: int | None = None
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.grad_threshold <= 0:
            raise ValueError("grad_threshold must be positive")
        imgcore.check_odd_size(self.window)
        if not 0.0 <= self.flat_ratio <= 1.0:
            raise ValueError("flat_ratio must lie in [0, 1]")
        imgcore.check_odd_size(self.morph_size)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.min_component_area is not None and self.min_component_area < 0:
            raise ValueError("min_component_area must be >= 0")

    def resolve_min_area(self, height: int, width: int) -> int:
        if self.min_component_area is not None:
            return self.min_component_area
        return int(0.001 * height * width)


def normalize_depth(depth: np.ndarray, epsilon: float = 1e-6) -> np.ndarray:
    """Min-max normalize a depth grid to [0, 1); constant grids map to zero."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = imgcore.as_grid(depth)
    lo = d.min()
    hi = d.max()
    return (d - lo) / (hi - lo + epsilon)


def flat_vote(norm_depth: np.ndarray, params: FlatnessParams) -> np.ndarray:
    """Pre-cleanup flat mask: smooth, gradient, local sub-threshold vote."""
    d = imgcore.as_grid(norm_depth)
    h, w = d.shape
    if h < params.window or w < params.window:
        raise ValueError(
            f"image {w}x{h} smaller than vote window {params.window}x{params.window}")

    smooth = imgcore.gaussian_smooth(d, params.sigma)
    grad = imgcore.gradient_magnitude(smooth)
    sub = (grad < params.grad_threshold).astype(np.float64)

    # Window vote with windows clipped at the borders: the denominator is the
    # clipped window size, so border pixels are not penalized.
    box = np.ones((params.window, params.window))
    counts = ndimage.correlate(sub, box, mode="constant", cval=0.0)
    denom = ndimage.correlate(np.ones_like(sub), box, mode="constant", cval=0.0)
    return (counts / denom >= params.flat_ratio).astype(np.uint8)


def flatness_mask(norm_depth: np.ndarray, params: FlatnessParams) -> np.ndarray:
    """Binary flat mask (1 = flat) from a normalized depth grid."""
    h, w = np.asarray(norm_depth).shape
    flat = flat_vote(norm_depth, params)
    flat = imgcore.morph_open_close(flat, params.morph_size)
    return imgcore.remove_small_components(flat, params.resolve_min_area(h, w))


def gradient_unsafe(flat: np.ndarray) -> np.ndarray:
    """Complement of the flat mask; bit 1 = geometrically unsafe."""
    return (1 - imgcore.as_mask(flat)).astype(np.uint8)
