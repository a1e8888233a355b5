"""Scene model, constraint residuals, similarity transforms and degeneracy checks.

All coordinates are abstract scene units with the y axis pointing up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .catalog import ClauseDef, ClauseInstance, format_number

Pt = tuple[float, float]

EPS_CONSTRUCT = 1e-9
OVERLAP_TOL = 1e-9
SCALE_FREE = frozenset({"collinear", "parallel", "perpendicular", "convex", "angle_const"})
LENGTH_TYPE = frozenset({"midpoint", "dist_eq", "dist_const", "on_circle"})


class MissingPointError(KeyError):
    pass


class DegenerateInputError(ValueError):
    """A direction vector needed by a residual has zero length."""


# Scene ------------------------------------------------------------------------

@dataclass(frozen=True)
class Stroke:
    kind: str  # "segment" (A, B) | "circle" (O, through A) | "arc" (O, from A, to B)
    points: tuple[str, ...]
    dashed: bool = False

    @property
    def shape(self) -> str:
        return "line" if self.kind == "segment" else "curve"

    @property
    def style(self) -> tuple[str, str]:
        return ("dashed" if self.dashed else "solid", self.shape)


@dataclass(frozen=True)
class Annotation:
    kind: str  # "angle" (A, B, C) with vertex B | "length" (A, B)
    points: tuple[str, ...]
    value: float

    @property
    def text(self) -> str:
        if self.kind == "angle":
            return f"{format_number(self.value)}°"
        return format_number(self.value)


@dataclass(frozen=True)
class Scene:
    points: dict[str, Pt] = field(default_factory=dict)
    strokes: tuple[Stroke, ...] = ()
    labels: tuple[str, ...] = ()
    annotations: tuple[Annotation, ...] = ()

    def __post_init__(self):
        for name, (x, y) in self.points.items():
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"point {name} has non-finite coordinates")

    def radius(self, stroke: Stroke) -> float:
        o, a = self.points[stroke.points[0]], self.points[stroke.points[1]]
        return math.hypot(a[0] - o[0], a[1] - o[1])


# Vector helpers and closed-form constructions -----------------------------------

def _sub(a: Pt, b: Pt) -> Pt:
    return (a[0] - b[0], a[1] - b[1])


def _cross(u: Pt, v: Pt) -> float:
    return u[0] * v[1] - u[1] * v[0]


def _dot(u: Pt, v: Pt) -> float:
    return u[0] * v[0] + u[1] * v[1]


def _norm(u: Pt) -> float:
    return math.hypot(u[0], u[1])


def dist(a: Pt, b: Pt) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def angle_at(a: Pt, b: Pt, c: Pt) -> float:
    """Unsigned angle ABC in radians, in [0, pi]."""
    u, v = _sub(a, b), _sub(c, b)
    if _norm(u) == 0 or _norm(v) == 0:
        raise DegenerateInputError("angle with a zero-length ray")
    return math.atan2(abs(_cross(u, v)), _dot(u, v))


def midpoint(a: Pt, b: Pt) -> Pt:
    return ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)


def foot(p: Pt, a: Pt, b: Pt) -> Pt:
    """Orthogonal projection of ``p`` onto line ``ab``."""
    d = _sub(b, a)
    dd = _dot(d, d)
    if dd == 0:
        raise DegenerateInputError("line through coincident points")
    k = _dot(_sub(p, a), d) / dd
    return (a[0] + k * d[0], a[1] + k * d[1])


def reflect(p: Pt, a: Pt, b: Pt) -> Pt:
    h = foot(p, a, b)
    return (2 * h[0] - p[0], 2 * h[1] - p[1])


def rotate(p: Pt, center: Pt, theta: float) -> Pt:
    """Rotate ``p`` about ``center`` counter-clockwise by ``theta`` radians."""
    c, s = math.cos(theta), math.sin(theta)
    x, y = p[0] - center[0], p[1] - center[1]
    return (center[0] + c * x - s * y, center[1] + s * x + c * y)


def circumcenter(a: Pt, b: Pt, c: Pt) -> Pt:
    bx, by = b[0] - a[0], b[1] - a[1]
    cx, cy = c[0] - a[0], c[1] - a[1]
    d = 2 * (bx * cy - by * cx)
    if d == 0:
        raise DegenerateInputError("collinear points have no circumcenter")
    b2, c2 = bx * bx + by * by, cx * cx + cy * cy
    return (a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d)


# Constraints ------------------------------------------------------------------

@dataclass(frozen=True)
class BoundConstraint:
    """A catalog constraint with param names replaced by point names/values."""

    primitive: str
    points: tuple[str, ...]
    value: Optional[float] = None

    @property
    def scale_free(self) -> bool:
        return self.primitive in SCALE_FREE


def bind_constraints(defn: ClauseDef, inst: ClauseInstance) -> list[BoundConstraint]:
    out = []
    for c in defn.constraints:
        pts, value = [], None
        for arg in c.args:
            bound = inst.args[arg]
            if isinstance(bound, str):
                pts.append(bound)
            else:
                value = float(bound)
        out.append(BoundConstraint(c.primitive, tuple(pts), value))
    return out


def _unit(u: Pt) -> Pt:
    n = _norm(u)
    if n == 0:
        raise DegenerateInputError("zero-length direction vector")
    return (u[0] / n, u[1] / n)


def evaluate_constraint(
    c: BoundConstraint,
    points: Union[Scene, Mapping[str, Pt]],
    length_scale: float = 1.0,
) -> float:
    """Non-negative residual of ``c``; zero iff the constraint holds exactly.

    ``length_scale`` multiplies the numeric target of ``dist_const``, so a scene
    scaled by ``s`` can be checked against ``s * v``.
    """
    if isinstance(points, Scene):
        points = points.points
    try:
        p = [points[n] for n in c.points]
    except KeyError as exc:
        raise MissingPointError(f"{c.primitive}: point {exc.args[0]} not in scene") from None

    kind = c.primitive
    if kind == "collinear":
        u, v = _sub(p[1], p[0]), _sub(p[2], p[0])
        nu, nv = _norm(u), _norm(v)
        if nu == 0 or nv == 0:
            raise DegenerateInputError("collinear with coincident points")
        return abs(_cross(u, v)) / (nu * nv)
    if kind == "midpoint":
        m = midpoint(p[1], p[2])
        return dist(p[0], m)
    if kind == "dist_eq":
        return abs(dist(p[0], p[1]) - dist(p[2], p[3]))
    if kind == "dist_const":
        return abs(dist(p[0], p[1]) - c.value * length_scale)
    if kind == "angle_const":
        return abs(angle_at(p[0], p[1], p[2]) - math.radians(c.value))
    if kind == "parallel":
        return abs(_cross(_unit(_sub(p[1], p[0])), _unit(_sub(p[3], p[2]))))
    if kind == "perpendicular":
        return abs(_dot(_unit(_sub(p[1], p[0])), _unit(_sub(p[3], p[2]))))
    if kind == "on_circle":
        return abs(dist(p[1], p[0]) - dist(p[1], p[2]))
    if kind == "convex":
        n = len(p)
        worst = math.inf
        for i in range(n):
            e1 = _unit(_sub(p[(i + 1) % n], p[i]))
            e2 = _unit(_sub(p[(i + 2) % n], p[(i + 1) % n]))
            worst = min(worst, _cross(e1, e2))
        return max(0.0, -worst)
    raise ValueError(f"unknown primitive {kind!r}")


def max_residual(constraints: Iterable[BoundConstraint], points: Union[Scene, Mapping[str, Pt]]) -> float:
    return max((evaluate_constraint(c, points) for c in constraints), default=0.0)


# Similarity transforms ----------------------------------------------------------

@dataclass(frozen=True)
class SimilarityTransform:
    theta: float = 0.0  # radians
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def apply(self, p: Pt) -> Pt:
        c, s = math.cos(self.theta), math.sin(self.theta)
        x, y = p
        return (
            self.scale * (c * x - s * y) + self.tx,
            self.scale * (s * x + c * y) + self.ty,
        )

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        scale_range: tuple[float, float] = (0.5, 1.5),
        shift: float = 0.0,
    ) -> "SimilarityTransform":
        theta = rng.uniform(0.0, 2 * math.pi)
        scale = rng.uniform(*scale_range)
        tx, ty = rng.uniform(-shift, shift, size=2) if shift else (0.0, 0.0)
        return cls(float(theta), float(scale), float(tx), float(ty))


def apply_similarity(scene: Scene, t: SimilarityTransform) -> Scene:
    """Map every point through ``p -> s R(theta) p + t``; circle radii follow."""
    return replace(scene, points={n: t.apply(p) for n, p in scene.points.items()})


# Degeneracy ---------------------------------------------------------------------

@dataclass(frozen=True)
class DegeneracyThresholds:
    min_pair_dist: float = 0.15
    min_angle: float = 8.0  # degrees
    max_extent: float = 20.0

    def __post_init__(self):
        if min(self.min_pair_dist, self.min_angle, self.max_extent) <= 0:
            raise ValueError("degeneracy thresholds must be positive")


def arc_angles(center: Pt, a: Pt, b: Pt) -> tuple[float, float]:
    """Start angle and signed sweep (|sweep| <= pi) of the minor arc from a to b."""
    start = math.atan2(a[1] - center[1], a[0] - center[0])
    end = math.atan2(b[1] - center[1], b[0] - center[0])
    sweep = (end - start + math.pi) % (2 * math.pi) - math.pi
    return start, sweep


def _in_sweep(angle: float, start: float, sweep: float) -> bool:
    rel = (angle - start) % (2 * math.pi)
    if sweep >= 0:
        return rel <= sweep
    return rel >= 2 * math.pi + sweep or rel == 0


def scene_bounds(scene: Scene) -> tuple[float, float, float, float]:
    """Bounding box ``(xmin, ymin, xmax, ymax)`` of points, circles and arcs."""
    xs = [p[0] for p in scene.points.values()]
    ys = [p[1] for p in scene.points.values()]
    if not xs:
        raise ValueError("empty scene")
    for s in scene.strokes:
        if s.kind == "segment":
            continue
        o = scene.points[s.points[0]]
        r = scene.radius(s)
        if s.kind == "circle":
            xs += [o[0] - r, o[0] + r]
            ys += [o[1] - r, o[1] + r]
        else:
            start, sweep = arc_angles(o, scene.points[s.points[1]], scene.points[s.points[2]])
            for k in range(4):
                ang = k * math.pi / 2
                if _in_sweep(ang, start, sweep):
                    xs.append(o[0] + r * math.cos(ang))
                    ys.append(o[1] + r * math.sin(ang))
    return min(xs), min(ys), max(xs), max(ys)


def check_degeneracy(scene: Scene, thresholds: DegeneracyThresholds = DegeneracyThresholds()) -> list[str]:
    """List visual/numerical degeneracies; empty means the scene is acceptable.

    Checked: point pairs closer than ``min_pair_dist``, two segments meeting at
    a shared endpoint under ``min_angle`` degrees, and a bounding box larger
    than ``max_extent``. Curves take part only through the extent check.
    """
    report = []
    names = list(scene.points)
    pts = scene.points
    for i, a in enumerate(names):
        pa = pts[a]
        for b in names[i + 1:]:
            d = dist(pa, pts[b])
            if d < thresholds.min_pair_dist:
                report.append(f"pair distance {d:.3g} < {thresholds.min_pair_dist:g} ({a}, {b})")

    incident: dict[str, list[tuple[Pt, str]]] = {}
    for s in scene.strokes:
        if s.kind != "segment":
            continue
        a, b = s.points
        ab = _sub(pts[b], pts[a])
        if _norm(ab) == 0:
            report.append(f"zero-length segment {a}{b}")
            continue
        incident.setdefault(a, []).append((_unit(ab), b))
        incident.setdefault(b, []).append((_unit((-ab[0], -ab[1])), a))
    min_rad = math.radians(thresholds.min_angle)
    for vertex, rays in incident.items():
        for i in range(len(rays)):
            for j in range(i + 1, len(rays)):
                (u, p), (v, q) = rays[i], rays[j]
                ang = math.atan2(abs(_cross(u, v)), _dot(u, v))
                # exact overlap (a sub-segment drawn along an existing one) reads as one line
                if OVERLAP_TOL < ang < min_rad:
                    report.append(
                        f"stroke angle {math.degrees(ang):.3g}° < {thresholds.min_angle:g}° "
                        f"at {vertex} ({vertex}{p}, {vertex}{q})"
                    )

    if names:
        x0, y0, x1, y1 = scene_bounds(scene)
        extent = max(x1 - x0, y1 - y0)
        if extent > thresholds.max_extent:
            report.append(f"extent {extent:.3g} > {thresholds.max_extent:g}")
    return report
