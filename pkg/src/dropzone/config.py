"""Run configuration: defaults for every pipeline knob, YAML overrides."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .flatness import FlatnessParams
from .semantic import PromptVocabulary, VISDRONE10
from .zones import ZoneParams


@dataclass
class RunConfig:
    flatness: FlatnessParams = field(default_factory=FlatnessParams)
    zones: ZoneParams = field(default_factory=ZoneParams)
    theta_d: float = 0.5
    vocabulary: tuple[str, ...] = VISDRONE10
    backend: str = "stub"  # stub | replay | live
    runs_per_frame: int = 5
    stride: int = 29
    frame_ids: tuple[str, ...] | None = None
    agent1_mode: str = "multi-frame"  # or single-frame
    refine_iterations: int = 1
    default_preference: str = "highest safe ratio"
    preferences: dict[str, str] = field(default_factory=dict)  # batch id -> text
    out_dir: str = "out"
    # stub backend knobs
    stub_hazards: dict[str, list] = field(default_factory=dict)
    stub_hpad: list | None = None
    # replay backend locations
    detection_fixtures: str = "fixtures/detection"
    vlm_fixtures: str = "fixtures/vlm"
    # live endpoints (keys come from env vars)
    detection_endpoint: str = ""
    vlm_endpoint: str = ""
    vlm_model: str = "o3-2025-04-16"

    def __post_init__(self):
        if not 0.0 <= self.theta_d <= 1.0:
            raise ValueError("theta_d must lie in [0, 1]")
        if self.runs_per_frame < 1:
            raise ValueError("runs_per_frame must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.backend not in ("stub", "replay", "live"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.agent1_mode not in ("multi-frame", "single-frame"):
            raise ValueError(f"unknown agent1_mode {self.agent1_mode!r}")

    def initial_vocabulary(self) -> PromptVocabulary:
        return PromptVocabulary.of(self.vocabulary)

    def preference_for(self, batch_id: str) -> str:
        return self.preferences.get(batch_id, self.default_preference)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        data = dict(data or {})
        flat = data.pop("flatness", {})
        zone = data.pop("zones", {})
        cfg = RunConfig(
            flatness=FlatnessParams(**flat) if not isinstance(flat, FlatnessParams) else flat,
            zones=ZoneParams(**zone) if not isinstance(zone, ZoneParams) else zone,
            **data)
        return cfg

    @staticmethod
    def from_yaml(path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        return RunConfig.from_dict(data)
