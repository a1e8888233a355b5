"""Sketch functions: per-clause analytic constructors and scene construction.

Each catalog clause id maps to a constructor that receives the coordinates of
the clause's prerequisite points (keyed by *param* name), its numeric values
and an rng, and returns coordinates for its new points. Independent clauses
return a canonical configuration that :func:`construct_scene` then rotates,
zooms and places. The catalog constraints are re-evaluated on every accepted
step, so a constructor bug cannot leak an invalid figure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .catalog import Catalog, ClauseDef, ClauseInstance
from .geometry import (
    EPS_CONSTRUCT,
    Annotation,
    DegeneracyThresholds,
    DegenerateInputError,
    Pt,
    Scene,
    SimilarityTransform,
    Stroke,
    bind_constraints,
    check_degeneracy,
    circumcenter,
    dist,
    evaluate_constraint,
    foot,
    midpoint,
    reflect,
    rotate,
    scene_bounds,
)
from .selector import ClauseGroup

logger = logging.getLogger(__name__)

Constructor = Callable[[Mapping[str, Pt], Mapping[str, float], np.random.Generator], dict[str, Pt]]

MAX_CLAUSE_RETRIES = 64
MAX_GROUP_RETRIES = 8


class ConstructionExhausted(RuntimeError):
    """No non-degenerate construction found within the retry budgets."""


@dataclass(frozen=True)
class _Entry:
    fn: Constructor
    stochastic: bool


_REGISTRY: dict[str, _Entry] = {}


def register(clause_id: str, stochastic: bool = True):
    def deco(fn: Constructor) -> Constructor:
        _REGISTRY[clause_id] = _Entry(fn, stochastic)
        return fn

    return deco


def constructor_for(clause_id: str) -> Constructor:
    return _REGISTRY[clause_id].fn


def missing_constructors(catalog: Catalog) -> list[str]:
    return [c.id for c in catalog if c.id not in _REGISTRY]


def _sign(rng: np.random.Generator) -> int:
    return 1 if rng.random() < 0.5 else -1


def _polar(r: float, theta: float) -> Pt:
    return (r * math.cos(theta), r * math.sin(theta))


# Independent clauses: canonical configurations, counter-clockwise, unit-ish scale.

@register("segment")
def _segment(ref, num, rng):
    return {"A": (0.0, 0.0), "B": (rng.uniform(1.0, 3.0), 0.0)}


@register("triangle")
def _triangle(ref, num, rng):
    L = rng.uniform(1.5, 3.0)
    return {
        "A": (0.0, 0.0),
        "B": (L, 0.0),
        "C": (rng.uniform(-0.2, 1.2) * L, rng.uniform(0.4, 1.2) * L),
    }


@register("circle")
def _circle(ref, num, rng):
    return {"O": (0.0, 0.0), "A": (rng.uniform(1.0, 2.0), 0.0)}


@register("square")
def _square(ref, num, rng):
    L = rng.uniform(1.0, 2.5)
    return {"A": (0.0, 0.0), "B": (L, 0.0), "C": (L, L), "D": (0.0, L)}


@register("segment_length")
def _segment_length(ref, num, rng):
    return {"A": (0.0, 0.0), "B": (num["v"], 0.0)}


@register("angle_annot")
def _angle_annot(ref, num, rng):
    t = math.radians(num["t"])
    return {
        "B": (0.0, 0.0),
        "C": (rng.uniform(1.0, 2.5), 0.0),
        "A": _polar(rng.uniform(1.0, 2.5), t),
    }


@register("circle_radius")
def _circle_radius(ref, num, rng):
    return {"O": (0.0, 0.0), "A": (num["r"], 0.0)}


@register("isosceles_triangle")
def _isosceles(ref, num, rng):
    b, h = rng.uniform(0.6, 1.5), rng.uniform(0.8, 2.5)
    return {"A": (0.0, h), "B": (-b, 0.0), "C": (b, 0.0)}


@register("rectangle")
def _rectangle(ref, num, rng):
    w, h = rng.uniform(1.5, 3.0), rng.uniform(0.8, 2.0)
    return {"A": (0.0, 0.0), "B": (w, 0.0), "C": (w, h), "D": (0.0, h)}


@register("parallelogram")
def _parallelogram(ref, num, rng):
    w, h = rng.uniform(1.5, 3.0), rng.uniform(0.8, 2.0)
    k = _sign(rng) * rng.uniform(0.3, 1.0)
    return {"A": (0.0, 0.0), "B": (w, 0.0), "C": (w + k, h), "D": (k, h)}


@register("right_triangle")
def _right_triangle(ref, num, rng):
    t = math.radians(num["t"])
    return {
        "B": (0.0, 0.0),
        "C": (rng.uniform(1.0, 2.5), 0.0),
        "A": _polar(rng.uniform(1.0, 2.5), t),
    }


@register("trapezoid")
def _trapezoid(ref, num, rng):
    w, h = rng.uniform(2.0, 3.5), rng.uniform(0.8, 2.0)
    d1, d2 = rng.uniform(-0.3, 0.6), rng.uniform(-0.3, 0.6)
    return {"A": (0.0, 0.0), "B": (w, 0.0), "C": (w - d2, h), "D": (d1, h)}


@register("sas_triangle")
def _sas_triangle(ref, num, rng):
    return {
        "B": (0.0, 0.0),
        "C": (num["w"], 0.0),
        "A": _polar(num["v"], math.radians(num["t"])),
    }


# Dependent clauses: coordinates follow from the prerequisite points.

@register("midpoint", stochastic=False)
def _midpoint(ref, num, rng):
    return {"M": midpoint(ref["A"], ref["B"])}


@register("on_circle")
def _on_circle(ref, num, rng):
    o = ref["O"]
    r = dist(o, ref["A"])
    x, y = _polar(r, rng.uniform(0.0, 2 * math.pi))
    return {"P": (o[0] + x, o[1] + y)}


@register("parallel_line")
def _parallel_line(ref, num, rng):
    a, b, p = ref["A"], ref["B"], ref["P"]
    k = _sign(rng) * rng.uniform(0.5, 1.5)
    return {"Q": (p[0] + k * (b[0] - a[0]), p[1] + k * (b[1] - a[1]))}


@register("perpendicular_foot", stochastic=False)
def _perpendicular_foot(ref, num, rng):
    return {"H": foot(ref["P"], ref["A"], ref["B"])}


@register("reflect_point", stochastic=False)
def _reflect_point(ref, num, rng):
    return {"Q": reflect(ref["P"], ref["A"], ref["B"])}


@register("angle_at_point")
def _angle_at_point(ref, num, rng):
    a, b = ref["A"], ref["B"]
    r = dist(a, b) * rng.uniform(0.6, 1.4)
    u = ((b[0] - a[0]) / dist(a, b), (b[1] - a[1]) / dist(a, b))
    d = rotate((a[0] + r * u[0], a[1] + r * u[1]), a, _sign(rng) * math.radians(num["t"]))
    return {"D": d}


@register("point_at_distance")
def _point_at_distance(ref, num, rng):
    a = ref["A"]
    x, y = _polar(num["v"], rng.uniform(0.0, 2 * math.pi))
    return {"D": (a[0] + x, a[1] + y)}


@register("rotate_point")
def _rotate_point(ref, num, rng):
    return {"Q": rotate(ref["P"], ref["O"], _sign(rng) * math.radians(num["t"]))}


@register("circumcenter", stochastic=False)
def _circumcenter(ref, num, rng):
    return {"O": circumcenter(ref["A"], ref["B"], ref["C"])}


@register("medians", stochastic=False)
def _medians(ref, num, rng):
    a, b, c = ref["A"], ref["B"], ref["C"]
    return {
        "M": midpoint(b, c),
        "N": midpoint(a, c),
        "G": ((a[0] + b[0] + c[0]) / 3, (a[1] + b[1] + c[1]) / 3),
    }


@register("square_on_segment")
def _square_on_segment(ref, num, rng):
    a, b = ref["A"], ref["B"]
    n = rotate(b, a, _sign(rng) * math.pi / 2)
    n = (n[0] - a[0], n[1] - a[1])
    return {"C": (b[0] + n[0], b[1] + n[1]), "D": (a[0] + n[0], a[1] + n[1])}


# Scene assembly -----------------------------------------------------------------

class _Draft:
    __slots__ = ("points", "strokes", "labels", "annotations")

    def __init__(self, points=None, strokes=None, labels=None, annotations=None):
        self.points: dict[str, Pt] = points or {}
        self.strokes: list[Stroke] = strokes or []
        self.labels: list[str] = labels or []
        self.annotations: list[Annotation] = annotations or []

    def copy(self) -> "_Draft":
        return _Draft(dict(self.points), list(self.strokes), list(self.labels), list(self.annotations))

    def freeze(self) -> Scene:
        return Scene(dict(self.points), tuple(self.strokes), tuple(self.labels), tuple(self.annotations))

    def _has_stroke(self, s: Stroke) -> bool:
        for t in self.strokes:
            if t.kind != s.kind:
                continue
            if s.kind == "segment" and set(t.points) == set(s.points):
                return True
            if s.kind == "arc" and t.points[0] == s.points[0] and set(t.points[1:]) == set(s.points[1:]):
                return True
            if s.kind == "circle" and t.points[0] == s.points[0]:
                o = self.points[s.points[0]]
                r1, r2 = dist(o, self.points[t.points[1]]), dist(o, self.points[s.points[1]])
                if abs(r1 - r2) <= 1e-9 * (1 + r1):
                    return True
        return False

    def add(self, defn: ClauseDef, inst: ClauseInstance, coords: Mapping[str, Pt]) -> None:
        for pname, xy in coords.items():
            self.points[inst.args[pname]] = (float(xy[0]), float(xy[1]))
        for d in defn.sketch:
            names = tuple(inst.args[a] if isinstance(inst.args[a], str) else a for a in d.args)
            if d.kind in ("segment", "circle", "arc"):
                stroke = Stroke(d.kind, names, d.dashed)
                if not self._has_stroke(stroke):
                    self.strokes.append(stroke)
            elif d.kind == "point":
                if names[0] not in self.labels:
                    self.labels.append(names[0])
            else:
                value = float(inst.args[d.args[-1]])
                ann = Annotation(d.kind, names[:-1], value)
                if ann not in self.annotations:
                    self.annotations.append(ann)


def _place_independent(
    defn: ClauseDef,
    canon: Mapping[str, Pt],
    draft: _Draft,
    rng: np.random.Generator,
) -> dict[str, Pt]:
    # numeric lengths pin the scale; everything else is zoomed too
    scale_range = (1.0, 1.0) if any(p.kind == "len" for p in defn.params) else (0.5, 1.5)
    cx = sum(p[0] for p in canon.values()) / len(canon)
    cy = sum(p[1] for p in canon.values()) / len(canon)
    centered = {k: (x - cx, y - cy) for k, (x, y) in canon.items()}
    t = SimilarityTransform.random(rng, scale_range)
    if draft.points:
        x0, y0, x1, y1 = scene_bounds(draft.freeze())
        ox, oy = _polar(rng.uniform(2.0, 5.0), rng.uniform(0.0, 2 * math.pi))
        target = ((x0 + x1) / 2 + ox, (y0 + y1) / 2 + oy)
    else:
        target = tuple(rng.uniform(-1.0, 1.0, size=2))
    t = SimilarityTransform(t.theta, t.scale, float(target[0]), float(target[1]))
    return {k: t.apply(p) for k, p in centered.items()}


def _try_clause(defn, inst, draft, rng, thresholds, eps) -> _Draft | None:
    ref = {p.name: draft.points[inst.args[p.name]] for p in defn.ref_params}
    num = inst.numbers
    try:
        coords = _REGISTRY[defn.id].fn(ref, num, rng)
        if defn.is_independent:
            coords = _place_independent(defn, coords, draft, rng)
        trial = draft.copy()
        trial.add(defn, inst, coords)
        residual = max(
            (evaluate_constraint(c, trial.points) for c in bind_constraints(defn, inst)),
            default=0.0,
        )
    except DegenerateInputError:
        return None
    if residual > eps:
        logger.debug("%s residual %.3g > %.3g", inst.text(), residual, eps)
        return None
    if check_degeneracy(trial.freeze(), thresholds):
        return None
    return trial


def construct_scene(
    group: ClauseGroup,
    catalog: Catalog,
    thresholds: DegeneracyThresholds = DegeneracyThresholds(),
    rng: np.random.Generator | None = None,
    eps: float = EPS_CONSTRUCT,
    clause_retries: int = MAX_CLAUSE_RETRIES,
    group_retries: int = MAX_GROUP_RETRIES,
) -> Scene:
    """Assign coordinates to every point of ``group`` and collect its drawing.

    Each clause is retried up to ``clause_retries`` times until its constraints
    hold to ``eps`` and the partial scene passes :func:`check_degeneracy`; the
    whole group is rebuilt up to ``group_retries`` times before giving up.
    """
    rng = rng if rng is not None else np.random.default_rng()
    defs = [catalog.get(inst.clause_id) for inst in group.instances]
    missing = [d.id for d in defs if d.id not in _REGISTRY]
    if missing:
        raise KeyError(f"no sketch function for clause(s) {', '.join(missing)}")

    for attempt in range(group_retries):
        draft = _Draft()
        for defn, inst in zip(defs, group.instances):
            tries = clause_retries if _REGISTRY[defn.id].stochastic else 1
            for _ in range(tries):
                accepted = _try_clause(defn, inst, draft, rng, thresholds, eps)
                if accepted is not None:
                    draft = accepted
                    break
            else:
                logger.debug("group attempt %d failed at %s", attempt, inst.text())
                break
        else:
            return draft.freeze()
    raise ConstructionExhausted(
        f"could not construct [{'; '.join(group.texts())}] after {group_retries} attempts"
    )


def group_residual(group: ClauseGroup, catalog: Catalog, points: Mapping[str, Pt]) -> float:
    worst = 0.0
    for inst in group.instances:
        for c in bind_constraints(catalog.get(inst.clause_id), inst):
            worst = max(worst, evaluate_constraint(c, points))
    return worst


def scene_from_points(group: ClauseGroup, catalog: Catalog, points: Mapping[str, Pt]) -> Scene:
    """Rebuild the drawing of ``group`` from stored coordinates (no construction)."""
    draft = _Draft()
    for inst in group.instances:
        defn = catalog.get(inst.clause_id)
        names = [inst.args[p.name] for p in defn.new_params]
        missing = [n for n in names if n not in points]
        if missing:
            raise KeyError(f"no coordinates for point(s) {', '.join(missing)}")
        draft.add(defn, inst, {p.name: points[inst.args[p.name]] for p in defn.new_params})
    return draft.freeze()
