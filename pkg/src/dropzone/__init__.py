"""Geometric-semantic safe drop zone detection for delivery drones."""

from .config import RunConfig
from .flatness import FlatnessParams, flatness_mask, gradient_unsafe, normalize_depth
from .fusion import SafetyMap, fuse, render_overlay
from .semantic import ClassMaskSet, PromptVocabulary, aggregate_unsafe, binarize
from .zones import CandidateZone, ZoneParams, generate_candidates, hex_centers

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "FlatnessParams", "flatness_mask", "gradient_unsafe", "normalize_depth",
    "SafetyMap", "fuse", "render_overlay",
    "ClassMaskSet", "PromptVocabulary", "aggregate_unsafe", "binarize",
    "CandidateZone", "ZoneParams", "generate_candidates", "hex_centers",
    "__version__",
]
