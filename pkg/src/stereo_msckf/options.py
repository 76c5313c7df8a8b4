"""Tunable filter behaviour."""

from __future__ import annotations

from dataclasses import dataclass, field

from .update.triangulation import TriangulationConfig


@dataclass
class FilterConfig:
    max_cams: int = 20
    observability_constraint: bool = True
    h_projection: bool = True
    rotation_threshold: float = 0.26
    translation_threshold: float = 0.4
    gate_confidence: float = 0.95
    min_track_length: int = 2
    depth_floor: float = 0.01
    triangulation: TriangulationConfig = field(default_factory=TriangulationConfig)

    def __post_init__(self):
        if self.max_cams < 3:
            raise ValueError("max_cams must be at least 3")
