"""Floor-plan geometry: physical anchors, first-order virtual anchors, visibility.

Walls are two-sided line segments. A virtual anchor (VA) is the mirror image of
a physical anchor (PA) across the supporting line of one wall; the specular
path through it is valid only while the reflection point falls strictly inside
the wall segment and neither leg of the path is blocked by another wall.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class InvalidGeometryError(ValueError):
    """Raised for degenerate walls, non-finite points or malformed floor plans."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidGeometryError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def distance(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def as_point(p) -> Point2:
    if isinstance(p, Point2):
        return p
    x, y = p
    return Point2(float(x), float(y))


@dataclass(frozen=True)
class WallSegment:
    a: Point2
    b: Point2

    @property
    def length(self) -> float:
        return self.a.distance(self.b)

    @property
    def degenerate(self) -> bool:
        return self.a.x == self.b.x and self.a.y == self.b.y


@dataclass(frozen=True)
class FloorPlan:
    walls: tuple[WallSegment, ...]
    roi_center: Point2
    roi_radius: float

    def __post_init__(self):
        if not self.roi_radius > 0:
            raise InvalidGeometryError("roi_radius must be positive")
        for i, w in enumerate(self.walls):
            if w.degenerate:
                raise InvalidGeometryError(f"wall {i} has zero length")
            for p in (w.a, w.b):
                if not self.contains(p):
                    raise InvalidGeometryError(f"wall {i} endpoint {tuple(p)} outside ROI")

    def contains(self, p: Point2) -> bool:
        return p.distance(self.roi_center) <= self.roi_radius

    @classmethod
    def from_coords(cls, walls: Iterable[Sequence[Sequence[float]]], roi_center=(0.0, 0.0), roi_radius=40.0):
        segs = tuple(WallSegment(as_point(a), as_point(b)) for a, b in walls)
        return cls(segs, as_point(roi_center), float(roi_radius))


@dataclass(frozen=True)
class FeatureTruth:
    """Ground truth of one radio feature; ``index == 1`` is the PA itself."""

    anchor: int
    index: int
    position: Point2
    wall: int | None = field(default=None)

    @property
    def is_pa(self) -> bool:
        return self.index == 1


@dataclass(frozen=True)
class SpecularPath:
    reflection_point: Point2
    length: float


@dataclass(frozen=True)
class AgentTruth:
    x: float
    y: float
    vx: float
    vy: float
    entry_slot: int = 1

    def __post_init__(self):
        if self.entry_slot < 1:
            raise ValueError("entry_slot must be >= 1")

    @property
    def position(self) -> Point2:
        return Point2(self.x, self.y)


def mirror_point(p: Point2, wall: WallSegment) -> Point2:
    """Reflect ``p`` across the infinite line through ``wall``."""
    if wall.degenerate:
        raise InvalidGeometryError("cannot mirror across a zero-length wall")
    ax, ay = wall.a
    dx, dy = wall.b.x - ax, wall.b.y - ay
    t = ((p.x - ax) * dx + (p.y - ay) * dy) / (dx * dx + dy * dy)
    fx, fy = ax + t * dx, ay + t * dy
    return Point2(2.0 * fx - p.x, 2.0 * fy - p.y)


def enumerate_virtual_anchors(plan: FloorPlan, pas: Sequence[Point2]) -> list[FeatureTruth]:
    """PA (m, 1) followed by one first-order VA per wall, ordered by (m, wall)."""
    if len(pas) == 0:
        raise ValueError("at least one physical anchor is required")
    out = []
    for m, pa in enumerate(pas, start=1):
        pa = as_point(pa)
        out.append(FeatureTruth(m, 1, pa))
        for w_idx, wall in enumerate(plan.walls):
            out.append(FeatureTruth(m, w_idx + 2, mirror_point(pa, wall), wall=w_idx))
    return out


def _orient(p: Point2, q: Point2, r: Point2) -> float:
    return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)


def _on_segment(p: Point2, q: Point2, r: Point2) -> bool:
    # r collinear with p-q; check bounding box
    return min(p.x, q.x) <= r.x <= max(p.x, q.x) and min(p.y, q.y) <= r.y <= max(p.y, q.y)


def segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool:
    """Closed-segment intersection test; touching at an endpoint counts."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def _blocked(p: Point2, q: Point2, walls: Sequence[WallSegment], skip: int | None = None) -> bool:
    for i, w in enumerate(walls):
        if i == skip:
            continue
        if segments_intersect(p, q, w.a, w.b):
            return True
    return False


def specular_path(agent: Point2, feature: FeatureTruth, plan: FloorPlan) -> SpecularPath | None:
    """Valid first-order reflection through ``feature`` (a VA), or None."""
    if feature.wall is None:
        raise ValueError("specular_path needs a virtual anchor")
    wall = plan.walls[feature.wall]
    va = feature.position
    # agent -> VA segment against the wall's supporting line
    ax, ay = wall.a
    wx, wy = wall.b.x - ax, wall.b.y - ay
    sx, sy = va.x - agent.x, va.y - agent.y
    denom = sx * wy - sy * wx
    if denom == 0.0:
        return None
    qx, qy = ax - agent.x, ay - agent.y
    s = (qx * wy - qy * wx) / denom  # along agent -> VA
    t = (qx * sy - qy * sx) / denom  # along wall
    if not (0.0 < s < 1.0 and 0.0 < t < 1.0):
        return None
    refl = Point2(agent.x + s * sx, agent.y + s * sy)
    pa = mirror_point(va, wall)
    if _blocked(pa, refl, plan.walls, skip=feature.wall):
        return None
    if _blocked(refl, agent, plan.walls, skip=feature.wall):
        return None
    return SpecularPath(refl, agent.distance(va))


def visible_features(agent: Point2, plan: FloorPlan, features: Iterable[FeatureTruth]) -> dict[int, list[FeatureTruth]]:
    """Per-anchor list of features with an unobstructed LOS or specular path."""
    agent = as_point(agent)
    if not plan.contains(agent):
        raise InvalidGeometryError(f"agent {tuple(agent)} outside ROI")
    out: dict[int, list[FeatureTruth]] = {}
    for f in features:
        out.setdefault(f.anchor, [])
        if f.wall is None:
            ok = not _blocked(agent, f.position, plan.walls)
        else:
            ok = specular_path(agent, f, plan) is not None
        if ok:
            out[f.anchor].append(f)
    return out
