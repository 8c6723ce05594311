"""Pessimistic fusion of unsafe masks and overlay rendering."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import imgcore

# Fixed blend constant so overlay PNGs are golden-file testable.
TINT_ALPHA = 0.35
UNSAFE_COLOR = (255, 0, 0)
SAFE_COLOR = (0, 255, 0)

PROVENANCES = ("initial", "refined", "geometric-only", "semantic-only")


@dataclass
class SafetyMap:
    """Binary unsafe mask (1 = unsafe) with its origin in the pipeline."""
    unsafe: np.ndarray
    provenance: str

    def __post_init__(self):
        self.unsafe = imgcore.as_mask(self.unsafe)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


def fuse(semantic: np.ndarray, geometric: np.ndarray,
         provenance: str = "initial") -> SafetyMap:
    """Pixelwise OR of the two unsafe masks (pessimistic union)."""
    s = imgcore.as_mask(semantic)
    g = imgcore.as_mask(geometric)
    if s.shape != g.shape:
        raise ValueError(f"mask dims differ: {s.shape} vs {g.shape}")
    return SafetyMap(np.maximum(s, g), provenance)


def render_overlay(rgb: np.ndarray, safety: SafetyMap) -> np.ndarray:
    """Alpha-blend a red tint over unsafe pixels and green over safe ones."""
    img = np.asarray(rgb, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("rgb must be an HxWx3 array")
    if img.shape[:2] != safety.unsafe.shape:
        raise ValueError("rgb and safety map dims differ")
    tint = np.where(safety.unsafe[..., None].astype(bool),
                    np.array(UNSAFE_COLOR, dtype=np.float64),
                    np.array(SAFE_COLOR, dtype=np.float64))
    out = (1.0 - TINT_ALPHA) * img + TINT_ALPHA * tint
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def save_png(path, image: np.ndarray) -> Path:
    """Write an image (RGB uint8 or binary mask) as a deterministic PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = (arr.astype(np.uint8) * 255) if arr.max() <= 1 else arr.astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")
    return path


def load_mask_png(path) -> np.ndarray:
    """Read a binary mask PNG (255 = unsafe/set)."""
    arr = np.asarray(Image.open(path).convert("L"))
    return (arr >= 128).astype(np.uint8)
