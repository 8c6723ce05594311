"""Hex-lattice drop-zone candidates: generation, scoring, feasibility, sorting."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fusion, imgcore

NO_CANDIDATE_FILENAME = "no_candidate_overlay.png"


@dataclass(frozen=True)
class ZoneParams:
    default_radius: float = 100.0
    eta: float = 0.95
    top_k: int = 30
    top_n: int = 3

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.default_radius <= 0:
            raise ValueError("default_radius must be positive")
        if self.top_n > self.top_k:
            raise ValueError("top_n must not exceed top_k")


@dataclass
class CandidateZone:
    index: int
    cx: float
    cy: float
    radius: float
    safe_ratio: float
    area: int
    truth_ratio: float | None = None


def hex_centers(width: int, height: int, radius: float) -> list[tuple[float, float]]:
    """Hexagonal lattice centers: column spacing 2r, row spacing sqrt(3)*r.

    The lattice is anchored at (r, r) with odd rows offset by +r; centers are
    kept while their disk still intersects the image.  An image smaller than
    2r along both axes degenerates to a single center at the image center.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if width < 2 * radius and height < 2 * radius:
        return [(width / 2.0, height / 2.0)]
    dy = math.sqrt(3.0) * radius
    centers = []
    j = 0
    while True:
        y = radius + j * dy
        if y - radius >= height:
            break
        x0 = radius + (radius if j % 2 else 0.0)
        i = 0
        while True:
            x = x0 + i * 2.0 * radius
            if x - radius >= width:
                break
            centers.append((x, y))
            i += 1
        j += 1
    return centers


def radius_from_hpad(w: float, h: float) -> float:
    """Candidate radius from the landing-pad bounding box: half its diagonal."""
    if w <= 0 or h <= 0:
        raise ValueError(f"bounding-box sides must be positive, got {w}x{h}")
    return 0.5 * math.hypot(w, h)


def safe_ratio(center: tuple[float, float], radius: float,
               unsafe: np.ndarray) -> float:
    """Fraction of safe pixels inside the (clipped) disk support."""
    mask = imgcore.as_mask(unsafe)
    h, w = mask.shape
    disk = imgcore.rasterize_disk(center, radius, w, h)
    support = int(disk.sum())
    if support == 0:
        raise ValueError("disk does not intersect the image")
    bad = int((mask & disk).sum())
    return 1.0 - bad / support


def _sort_key(width: int, height: int):
    cx0, cy0 = width / 2.0, height / 2.0

    def key(item):
        orig_idx, zone = item
        dist = math.hypot(zone.cx - cx0, zone.cy - cy0)
        return (-zone.safe_ratio, -zone.area, dist, orig_idx)

    return key


def generate_candidates(safety: fusion.SafetyMap, params: ZoneParams,
                        hpad_size: tuple[float, float] | None = None
                        ) -> list[CandidateZone]:
    """Feasible circles (safe ratio >= eta), sorted and truncated to top_k.

    Sort order: safe ratio desc, clipped disk area desc, distance from the
    image center asc, lattice enumeration order as the final tiebreak.
    Indices are reassigned 0..k-1 after sorting.
    """
    h, w = safety.unsafe.shape
    radius = (radius_from_hpad(*hpad_size) if hpad_size is not None
              else params.default_radius)
    zones = []
    for cx, cy in hex_centers(w, h, radius):
        disk = imgcore.rasterize_disk((cx, cy), radius, w, h)
        support = int(disk.sum())
        if support == 0:
            continue
        bad = int((safety.unsafe & disk).sum())
        ratio = 1.0 - bad / support
        if ratio >= params.eta:
            zones.append(CandidateZone(0, cx, cy, radius, ratio, support))
    ordered = sorted(enumerate(zones), key=_sort_key(w, h))
    result = [zone for _, zone in ordered[:params.top_k]]
    for i, zone in enumerate(result):
        zone.index = i
    return result


def no_candidate_artifact(safety: fusion.SafetyMap, rgb: np.ndarray,
                          out_dir) -> Path:
    """Write the no-candidate overlay PNG; the ranked list stays empty."""
    overlay = fusion.render_overlay(rgb, safety)
    return fusion.save_png(Path(out_dir) / NO_CANDIDATE_FILENAME, overlay)


def candidates_agent_json(candidates: list[CandidateZone],
                          width: int, height: int) -> list[dict]:
    """Normalized candidate records in the wire schema used by the ranker."""
    out = []
    for zone in candidates:
        out.append({
            "index": zone.index,
            "cx_norm": round(zone.cx / width, 6),
            "cy_norm": round(zone.cy / height, 6),
            "r_norm_w": round(zone.radius / width, 6),
            "r_norm_h": round(zone.radius / height, 6),
            "safe_ratio": round(zone.safe_ratio, 4),
        })
    return out


def write_candidates_file(path, candidates: list[CandidateZone],
                          width: int, height: int, ranked: list[dict]) -> Path:
    """Serialize candidates (normalized + exact pixel geometry) and ranking."""
    payload = {
        "width": width,
        "height": height,
        "candidates": candidates_agent_json(candidates, width, height),
        "candidates_px": [
            {"index": z.index, "cx": z.cx, "cy": z.cy, "r": z.radius,
             "safe_ratio": z.safe_ratio, "area": z.area}
            for z in candidates
        ],
        "ranked": ranked,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return path
