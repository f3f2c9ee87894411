"""Box terrain: axis-aligned boxes on flat ground, plus layout JSON I/O.

The planar testbed only uses the x extent and top height of each box, but the
layout format keeps full 2D footprints so layouts stay exchangeable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LAYOUT_SCHEMA_VERSION = 1
DEFAULT_HALF_WIDTH = 0.40   # box half-width from edge to center


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    center_xy: tuple[float, float]
    half_extents: tuple[float, float]
    height: float

    @property
    def x_min(self) -> float:
        return self.center_xy[0] - self.half_extents[0]

    @property
    def x_max(self) -> float:
        return self.center_xy[0] + self.half_extents[0]


@dataclass
class BoxLayout:
    boxes: list[Box] = field(default_factory=list)
    final_target: tuple[float, float, float] = (3.0, 0.0, 0.0)  # x, y, yaw

    def validate(self) -> None:
        for b in self.boxes:
            if b.height <= 0:
                raise LayoutError("box heights must be positive")
            if b.half_extents[0] <= 0 or b.half_extents[1] <= 0:
                raise LayoutError("box half-extents must be positive")
        spans = sorted((b.x_min, b.x_max) for b in self.boxes)
        for (a0, a1), (b0, b1) in zip(spans[:-1], spans[1:]):
            if b0 < a1 - 1e-9:
                raise LayoutError("box footprints must not overlap")

    def support_height(self, x: np.ndarray) -> np.ndarray:
        """Terrain height under planar coordinate x (ground = 0)."""
        x = np.asarray(x, dtype=np.float64)
        h = np.zeros_like(x)
        for b in self.boxes:
            inside = (x >= b.x_min) & (x <= b.x_max)
            h = np.where(inside, np.maximum(h, b.height), h)
        return h

    def boxes_sorted(self) -> list[Box]:
        return sorted(self.boxes, key=lambda b: b.x_min)

    def to_dict(self) -> dict:
        return {
            "version": LAYOUT_SCHEMA_VERSION,
            "boxes": [
                {"center_xy": list(b.center_xy), "half_extents": list(b.half_extents),
                 "height": b.height}
                for b in self.boxes
            ],
            "final_target": list(self.final_target),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoxLayout":
        if d.get("version") != LAYOUT_SCHEMA_VERSION:
            raise LayoutError(f"unsupported layout schema version: {d.get('version')}")
        layout = cls(
            boxes=[
                Box(tuple(b["center_xy"]), tuple(b["half_extents"]), float(b["height"]))
                for b in d.get("boxes", [])
            ],
            final_target=tuple(d.get("final_target", (3.0, 0.0, 0.0))),
        )
        layout.validate()
        return layout

    @classmethod
    def from_json(cls, path: str | Path) -> "BoxLayout":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)


def single_box_layout(edge_x: float = 2.0, height: float = 0.5,
                      half_width: float = DEFAULT_HALF_WIDTH) -> BoxLayout:
    """One box with its front edge at edge_x, as used by the nominal tasks."""
    center = edge_x + half_width
    layout = BoxLayout(
        boxes=[Box((center, 0.0), (half_width, half_width), height)],
        final_target=(center, 0.0, 0.0),
    )
    layout.validate()
    return layout


def flat_layout(target_x: float = 1.5) -> BoxLayout:
    return BoxLayout(boxes=[], final_target=(target_x, 0.0, 0.0))
