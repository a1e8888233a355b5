"""Vector rendering of scenes: layout, colour/mask augmentation and SVG output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Pt, Scene, Stroke, arc_angles, scene_bounds

__all__ = [
    "CanvasSpec",
    "Palette",
    "StylePlan",
    "MaskParams",
    "MaskPlan",
    "PixelScene",
    "layout",
    "plan_style",
    "plan_mask",
    "render",
    "contrast_ratio",
    "stroke_lengths",
    "masked_lengths",
]


@dataclass(frozen=True)
class CanvasSpec:
    width: int = 512
    height: int = 512
    margin: int = 32
    stroke_width: float = 2.0
    font_size: float = 16.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("canvas dimensions must be positive")
        if not 0 <= self.margin < min(self.width, self.height) / 2:
            raise ValueError("margin must be smaller than half the canvas")


@dataclass(frozen=True)
class Palette:
    strokes: tuple[str, ...] = (
        "#1a1a1a", "#b71c1c", "#0d47a1", "#1b5e20", "#4a148c", "#bf360c",
        "#004d40", "#3e2723", "#880e4f", "#1a237e", "#263238", "#5d4037",
    )
    backgrounds: tuple[str, ...] = (
        "#ffffff", "#fff8e1", "#e3f2fd", "#f1f8e9", "#fce4ec", "#eceff1",
    )
    version: str = "1"


def _luminance(color: str) -> float:
    c = color.lstrip("#")
    if len(c) == 3:
        c = "".join(ch * 2 for ch in c)
    out = []
    for i in (0, 2, 4):
        v = int(c[i:i + 2], 16) / 255
        out.append(v / 12.92 if v <= 0.04045 else ((v + 0.055) / 1.055) ** 2.4)
    return 0.2126 * out[0] + 0.7152 * out[1] + 0.0722 * out[2]


def contrast_ratio(a: str, b: str) -> float:
    """WCAG contrast ratio between two ``#rrggbb`` colours."""
    la, lb = sorted((_luminance(a), _luminance(b)), reverse=True)
    return (la + 0.05) / (lb + 0.05)


MIN_CONTRAST = 3.0


# Layout ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PixelScene:
    """A scene mapped onto the canvas (pixels, y axis pointing down)."""

    scene: Scene
    canvas: CanvasSpec
    points: dict[str, Pt]
    scale: float  # pixels per scene unit
    label_anchors: dict[str, Pt] = field(default_factory=dict)

    @property
    def strokes(self) -> tuple[Stroke, ...]:
        return self.scene.strokes

    def radius(self, stroke: Stroke) -> float:
        o, a = self.points[stroke.points[0]], self.points[stroke.points[1]]
        return math.hypot(a[0] - o[0], a[1] - o[1])


def layout(scene: Scene, canvas: CanvasSpec = CanvasSpec()) -> PixelScene:
    """Fit the scene's bounding box into the canvas minus margins.

    Aspect ratio is preserved and the figure is centred; y is flipped so the
    result is in screen coordinates.
    """
    if not scene.points:
        raise ValueError("cannot lay out an empty scene")
    x0, y0, x1, y1 = scene_bounds(scene)
    w, h = x1 - x0, y1 - y0
    if w <= 0 and h <= 0:
        raise ValueError("scene has zero extent")
    avail_w = canvas.width - 2 * canvas.margin
    avail_h = canvas.height - 2 * canvas.margin
    scale = min(avail_w / w if w > 0 else math.inf, avail_h / h if h > 0 else math.inf)
    mx, my = (x0 + x1) / 2, (y0 + y1) / 2
    cx, cy = canvas.width / 2, canvas.height / 2
    pts = {n: (cx + scale * (x - mx), cy - scale * (y - my)) for n, (x, y) in scene.points.items()}
    pix = PixelScene(scene, canvas, pts, scale)
    anchors = {name: _label_anchor(name, pix) for name in scene.labels}
    return PixelScene(scene, canvas, pts, scale, anchors)


def _label_anchor(name: str, pix: PixelScene) -> Pt:
    p = pix.points[name]
    sx = sy = 0.0
    n = 0
    for s in pix.strokes:
        others = []
        if s.kind == "segment" and name in s.points:
            others = [q for q in s.points if q != name]
        elif s.kind == "circle" and s.points[1] == name:
            others = [s.points[0]]
        for q in others:
            d = (pix.points[q][0] - p[0], pix.points[q][1] - p[1])
            norm = math.hypot(*d)
            if norm > 0:
                sx += d[0] / norm
                sy += d[1] / norm
                n += 1
    off = 0.9 * pix.canvas.font_size
    norm = math.hypot(sx, sy)
    if n == 0 or norm < 1e-6 * n:
        return (p[0] + 8.0, p[1] - 8.0)
    return (p[0] - off * sx / norm, p[1] - off * sy / norm)


# Style -----------------------------------------------------------------------------

@dataclass(frozen=True)
class StylePlan:
    background: str
    stroke_colors: tuple[str, ...]
    text_color: str
    dash: str = "8 6"


def plan_style(scene: Scene, rng: np.random.Generator, palette: Palette = Palette()) -> StylePlan:
    """Draw a background and one independent colour per stroke (contrast >= 3:1)."""
    if not palette.strokes or not palette.backgrounds:
        raise ValueError("palette must contain stroke and background colours")
    bg = palette.backgrounds[int(rng.integers(len(palette.backgrounds)))]
    usable = [c for c in palette.strokes if contrast_ratio(c, bg) >= MIN_CONTRAST]
    if not usable:
        raise ValueError(f"no stroke colour reaches {MIN_CONTRAST}:1 contrast on {bg}")
    picks = rng.integers(len(usable), size=len(scene.strokes) + 1)
    colors = tuple(usable[i] for i in picks[:-1])
    return StylePlan(bg, colors, usable[int(picks[-1])])


# Stroke geometry in pixels -------------------------------------------------------

def _arc_span(pix: PixelScene, s: Stroke) -> tuple[float, float]:
    """Start angle and positive sweep of an arc stroke in pixel space."""
    start, sweep = arc_angles(pix.points[s.points[0]], pix.points[s.points[1]], pix.points[s.points[2]])
    if sweep < 0:
        start, sweep = start + sweep, -sweep
    return start % (2 * math.pi), sweep


def stroke_lengths(pix: PixelScene) -> list[float]:
    out = []
    for s in pix.strokes:
        if s.kind == "segment":
            a, b = (pix.points[n] for n in s.points)
            out.append(math.hypot(b[0] - a[0], b[1] - a[1]))
        elif s.kind == "circle":
            out.append(2 * math.pi * pix.radius(s))
        else:
            out.append(pix.radius(s) * _arc_span(pix, s)[1])
    return out


Rect = tuple[float, float, float, float]  # x, y, w, h


def _segment_in_rect(a: Pt, b: Pt, r: Rect) -> Optional[tuple[float, float]]:
    # Liang-Barsky clipping, returns the parameter interval inside the rect
    x0, y0, x1, y1 = r[0], r[1], r[0] + r[2], r[1] + r[3]
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, a[0] - x0), (dx, x1 - a[0]), (-dy, a[1] - y0), (dy, y1 - a[1])):
        if p == 0:
            if q < 0:
                return None
            continue
        t = q / p
        if p < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    return (t0, t1) if t0 < t1 else None


def _circle_in_rect(c: Pt, radius: float, r: Rect) -> list[tuple[float, float]]:
    """Angular intervals (within [0, 2pi)) of a circle lying inside a rect."""
    x0, y0, x1, y1 = r[0], r[1], r[0] + r[2], r[1] + r[3]
    cuts = [0.0, 2 * math.pi]
    for xv in (x0, x1):
        k = (xv - c[0]) / radius
        if -1 <= k <= 1:
            a = math.acos(k)
            cuts += [a % (2 * math.pi), (-a) % (2 * math.pi)]
    for yv in (y0, y1):
        k = (yv - c[1]) / radius
        if -1 <= k <= 1:
            a = math.asin(k)
            cuts += [a % (2 * math.pi), (math.pi - a) % (2 * math.pi)]
    cuts.sort()
    out = []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi - lo <= 0:
            continue
        mid = (lo + hi) / 2
        px, py = c[0] + radius * math.cos(mid), c[1] + radius * math.sin(mid)
        if x0 <= px <= x1 and y0 <= py <= y1:
            out.append((lo, hi))
    return out


def _merge(intervals: list[tuple[float, float]]) -> float:
    total = 0.0
    cur_lo = cur_hi = None
    for lo, hi in sorted(intervals):
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def _clip_to_span(intervals, start: float, sweep: float):
    # intersect [0, 2pi) intervals with the arc span [start, start + sweep] (mod 2pi)
    out = []
    for lo, hi in intervals:
        for shift in (0.0, 2 * math.pi):
            a, b = max(lo + shift, start), min(hi + shift, start + sweep)
            if a < b:
                out.append((a, b))
    return out


def masked_lengths(pix: PixelScene, patches: Sequence[Rect]) -> list[float]:
    """Length of each stroke (pixels) covered by the union of ``patches``."""
    out = []
    for s in pix.strokes:
        if s.kind == "segment":
            a, b = (pix.points[n] for n in s.points)
            spans = [iv for r in patches if (iv := _segment_in_rect(a, b, r))]
            out.append(_merge(spans) * math.hypot(b[0] - a[0], b[1] - a[1]))
            continue
        c, radius = pix.points[s.points[0]], pix.radius(s)
        spans = [iv for r in patches for iv in _circle_in_rect(c, radius, r)]
        if s.kind == "arc":
            spans = _clip_to_span(spans, *_arc_span(pix, s))
        out.append(_merge(spans) * radius)
    return out


def _point_on_stroke(pix: PixelScene, s: Stroke, u: float) -> Pt:
    if s.kind == "segment":
        a, b = (pix.points[n] for n in s.points)
        return (a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]))
    c, radius = pix.points[s.points[0]], pix.radius(s)
    if s.kind == "circle":
        ang = 2 * math.pi * u
    else:
        start, sweep = _arc_span(pix, s)
        ang = start + u * sweep
    return (c[0] + radius * math.cos(ang), c[1] + radius * math.sin(ang))


# Masking --------------------------------------------------------------------------

@dataclass(frozen=True)
class MaskParams:
    p_mask: float = 0.5
    max_patches: int = 2
    min_side: float = 8.0
    max_side: float = 24.0
    max_fraction: float = 0.05
    max_tries: int = 50


@dataclass(frozen=True)
class MaskPlan:
    patches: tuple[Rect, ...] = ()


def plan_mask(pix: PixelScene, rng: np.random.Generator, params: MaskParams = MaskParams()) -> MaskPlan:
    """Choose up to ``max_patches`` small rectangles, each centred near a stroke.

    Patches are accepted only while the union covers at most ``max_fraction``
    of the total stroke length.
    """
    if rng.random() >= params.p_mask or not pix.strokes:
        return MaskPlan()
    lengths = np.asarray(stroke_lengths(pix))
    total = float(lengths.sum())
    if total <= 0:
        return MaskPlan()
    weights = lengths / total
    count = int(rng.integers(1, params.max_patches + 1))
    patches: list[Rect] = []
    for _ in range(count):
        for _ in range(params.max_tries):
            s = pix.strokes[int(rng.choice(len(weights), p=weights))]
            px, py = _point_on_stroke(pix, s, float(rng.random()))
            w, h = rng.uniform(params.min_side, params.max_side, size=2)
            jx, jy = rng.uniform(-0.25, 0.25, size=2)
            rect = (float(px - w * (0.5 + jx)), float(py - h * (0.5 + jy)), float(w), float(h))
            if sum(masked_lengths(pix, patches + [rect])) <= params.max_fraction * total:
                patches.append(rect)
                break
    return MaskPlan(tuple(patches))


# SVG ------------------------------------------------------------------------------

def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _stroke_svg(pix: PixelScene, s: Stroke, color: str, width: float, dash: str) -> str:
    dash_attr = f' stroke-dasharray="{dash}"' if s.dashed else ""
    common = f'stroke="{color}" stroke-width="{_f(width)}"{dash_attr}'
    tag = " ".join(s.points)
    if s.kind == "segment":
        a, b = (pix.points[n] for n in s.points)
        return (f'<line class="segment" data-points="{tag}" x1="{_f(a[0])}" y1="{_f(a[1])}" '
                f'x2="{_f(b[0])}" y2="{_f(b[1])}" {common}/>')
    c, radius = pix.points[s.points[0]], pix.radius(s)
    if s.kind == "circle":
        return (f'<circle class="circle" data-points="{tag}" cx="{_f(c[0])}" cy="{_f(c[1])}" '
                f'r="{_f(radius)}" fill="none" {common}/>')
    a, b = pix.points[s.points[1]], pix.points[s.points[2]]
    _, sweep = arc_angles(c, a, b)
    flag = 1 if sweep > 0 else 0
    return (f'<path class="arc" data-points="{tag}" d="M {_f(a[0])} {_f(a[1])} A {_f(radius)} {_f(radius)} '
            f'0 0 {flag} {_f(b[0])} {_f(b[1])}" fill="none" {common}/>')


def _unit(v: Pt) -> Pt:
    n = math.hypot(*v)
    return (v[0] / n, v[1] / n)


def _angle_svg(pix: PixelScene, pts: tuple[str, ...], text: str, value: float, color: str, font: float) -> list[str]:
    a, b, c = (pix.points[n] for n in pts)
    u = _unit((a[0] - b[0], a[1] - b[1]))
    v = _unit((c[0] - b[0], c[1] - b[1]))
    reach = min(math.hypot(a[0] - b[0], a[1] - b[1]), math.hypot(c[0] - b[0], c[1] - b[1]))
    r = max(6.0, min(18.0, 0.35 * reach))
    if abs(value - 90.0) < 1e-9:
        p1 = (b[0] + r * 0.7 * u[0], b[1] + r * 0.7 * u[1])
        p3 = (b[0] + r * 0.7 * v[0], b[1] + r * 0.7 * v[1])
        p2 = (p1[0] + r * 0.7 * v[0], p1[1] + r * 0.7 * v[1])
        d = f"M {_f(p1[0])} {_f(p1[1])} L {_f(p2[0])} {_f(p2[1])} L {_f(p3[0])} {_f(p3[1])}"
    else:
        s, e = (b[0] + r * u[0], b[1] + r * u[1]), (b[0] + r * v[0], b[1] + r * v[1])
        flag = 1 if u[0] * v[1] - u[1] * v[0] > 0 else 0
        d = f"M {_f(s[0])} {_f(s[1])} A {_f(r)} {_f(r)} 0 0 {flag} {_f(e[0])} {_f(e[1])}"
    bis = (u[0] + v[0], u[1] + v[1])
    if math.hypot(*bis) < 1e-9:
        bis = (-u[1], u[0])
    bis = _unit(bis)
    tr = r + 0.9 * font
    tx, ty = b[0] + tr * bis[0], b[1] + tr * bis[1]
    return [
        f'<path class="angle-mark" data-points="{" ".join(pts)}" d="{d}" fill="none" stroke="{color}" stroke-width="1.50"/>',
        f'<text class="angle-label" x="{_f(tx)}" y="{_f(ty)}" fill="{color}" text-anchor="middle" '
        f'dominant-baseline="central">{_esc(text)}</text>',
    ]


def _length_svg(pix: PixelScene, pts: tuple[str, ...], text: str, color: str, font: float) -> str:
    a, b = (pix.points[n] for n in pts)
    m = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
    n = _unit((-(b[1] - a[1]), b[0] - a[0]))
    center = (pix.canvas.width / 2, pix.canvas.height / 2)
    if (m[0] - center[0]) * n[0] + (m[1] - center[1]) * n[1] < 0:
        n = (-n[0], -n[1])
    off = 0.8 * font
    return (f'<text class="length-label" data-points="{" ".join(pts)}" x="{_f(m[0] + off * n[0])}" '
            f'y="{_f(m[1] + off * n[1])}" fill="{color}" text-anchor="middle" '
            f'dominant-baseline="central">{_esc(text)}</text>')


def render(pix: PixelScene, style: StylePlan, mask: MaskPlan = MaskPlan()) -> str:
    """Emit a standalone SVG 1.1 document; output is a pure function of the inputs."""
    cv = pix.canvas
    if len(style.stroke_colors) != len(pix.strokes):
        raise ValueError("style plan does not match the scene's strokes")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{cv.width}" height="{cv.height}" '
        f'viewBox="0 0 {cv.width} {cv.height}">',
        f'<rect class="background" x="0" y="0" width="{cv.width}" height="{cv.height}" fill="{style.background}"/>',
        '<g class="strokes" stroke-linecap="round">',
    ]
    for s, color in zip(pix.strokes, style.stroke_colors):
        out.append(_stroke_svg(pix, s, color, cv.stroke_width, style.dash))
    out.append("</g>")
    out.append(f'<g class="annotations" font-family="sans-serif" font-size="{_f(cv.font_size)}">')
    for ann in pix.scene.annotations:
        if ann.kind == "angle":
            out += _angle_svg(pix, ann.points, ann.text, ann.value, style.text_color, cv.font_size)
        else:
            out.append(_length_svg(pix, ann.points, ann.text, style.text_color, cv.font_size))
    out.append("</g>")
    out.append(f'<g class="labels" font-family="sans-serif" font-size="{_f(cv.font_size)}">')
    for name in pix.scene.labels:
        x, y = pix.label_anchors.get(name, pix.points[name])
        out.append(f'<circle class="point" cx="{_f(pix.points[name][0])}" cy="{_f(pix.points[name][1])}" '
                   f'r="{_f(cv.stroke_width * 1.5)}" fill="{style.text_color}"/>')
        out.append(f'<text class="point-label" x="{_f(x)}" y="{_f(y)}" fill="{style.text_color}" '
                   f'text-anchor="middle" dominant-baseline="central">{_esc(name)}</text>')
    out.append("</g>")
    if mask.patches:
        out.append('<g class="mask">')
        for x, y, w, h in mask.patches:
            out.append(f'<rect class="mask-patch" x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
                       f'fill="{style.background}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
