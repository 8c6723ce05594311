"""Deterministic synthetic dataset generator for tests and demos.

Frames are small RGB scenes with a marked landing pad and a moving block;
depth is a flat plane with a sharp step band, so the geometry branch flags a
deterministic unsafe region.  Ground-truth masks are derived with the same
flatness parameters the pipeline will run with, which makes the bundled
dataset a predictions-equal-ground-truth fixture when the semantic branch is
quiet.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import flatness
from .flatness import FlatnessParams

WIDTH = 160
HEIGHT = 120


def _frame_rgb(i: int) -> np.ndarray:
    rgb = np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8)
    xs = np.linspace(60, 160, WIDTH, dtype=np.uint8)
    rgb[..., 1] = xs[None, :]  # greenish lawn gradient
    rgb[..., 0] = 40
    rgb[..., 2] = 30
    # landing pad: light square with a dark H stripe
    rgb[80:110, 20:50] = (200, 200, 200)
    rgb[85:105, 33:37] = (60, 60, 60)
    # a dark block that drifts right with the frame index
    x = 70 + (3 * i) % 60
    rgb[30:45, x:x + 12] = (30, 30, 30)
    return rgb


def _frame_depth(rise: float = 50.0) -> np.ndarray:
    # A wide ramp: its slope exceeds the synthetic gradient threshold, so the
    # band x in [100, 130) is non-flat while the plane around it stays flat.
    depth = np.full((HEIGHT, WIDTH), 100.0)
    ramp = np.linspace(0.0, rise, 30)
    depth[:, 100:130] += ramp[None, :]
    depth[:, 130:] += rise
    return depth


def synthetic_flatness_params() -> FlatnessParams:
    """Flatness settings matched to the synthetic ramp's slope."""
    return FlatnessParams(grad_threshold=0.02)


def make_synthetic_dataset(root, n_frames: int = 10,
                           params: FlatnessParams | None = None,
                           all_unsafe: bool = False) -> Path:
    """Write rgb/, depth/, gt/ plus pad_labels.json under root.

    With ``all_unsafe=True`` every ground-truth mask is fully unsafe (pair
    it with a stub hazard covering the frame to exercise the no-candidate
    path).
    """
    root = Path(root)
    for sub in ("rgb", "depth", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    params = params or synthetic_flatness_params()

    depth = _frame_depth()
    norm = flatness.normalize_depth(depth, params.epsilon)
    unsafe = flatness.gradient_unsafe(flatness.flatness_mask(norm, params))
    if all_unsafe:
        unsafe = np.ones_like(unsafe)

    for i in range(n_frames):
        fid = f"{i:06d}"
        Image.fromarray(_frame_rgb(i)).save(root / "rgb" / f"{fid}.png")
        np.save(root / "depth" / f"{fid}.npy", depth)
        Image.fromarray((unsafe * 255).astype(np.uint8)).save(
            root / "gt" / f"{fid}.png")

    n_batches = n_frames // 5
    labels = {f"batch_{b:03d}": True for b in range(n_batches)}
    (root / "pad_labels.json").write_text(
        json.dumps(labels, indent=2, sort_keys=True), encoding="utf-8")

    config = {
        "flatness": {"grad_threshold": params.grad_threshold,
                     "sigma": params.sigma,
                     "window": params.window,
                     "flat_ratio": params.flat_ratio,
                     "morph_size": params.morph_size,
                     "epsilon": params.epsilon},
        "zones": {"default_radius": 20.0},
        "backend": "stub",
        "stride": 1,
        "runs_per_frame": 1,
    }
    if all_unsafe:
        config["stub_hazards"] = {"person": [0, 0, WIDTH, HEIGHT]}
    import yaml

    (root / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=True),
                                      encoding="utf-8")
    return root
