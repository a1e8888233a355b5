from __future__ import annotations

import itertools
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autogeo.geometry import Annotation, Scene, Stroke
from autogeo.render import (
    CanvasSpec,
    MaskParams,
    MaskPlan,
    Palette,
    contrast_ratio,
    layout,
    masked_lengths,
    plan_mask,
    plan_style,
    render,
    stroke_lengths,
)
from autogeo.selector import Complexity, SelectionRules, select_group
from autogeo.sketch import ConstructionExhausted, construct_scene

NS = "{http://www.w3.org/2000/svg}"


def square_scene():
    return Scene(
        {"A": (0.0, 0.0), "B": (1.0, 0.0), "C": (1.0, 1.0), "D": (0.0, 1.0)},
        strokes=tuple(Stroke("segment", p) for p in [("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")]),
        labels=("A", "B", "C", "D"),
    )


def random_scene(catalog, seed, complexity=Complexity.HARD):
    rng = np.random.default_rng(seed)
    while True:
        g = select_group(complexity, catalog, SelectionRules(), rng)
        try:
            return construct_scene(g, catalog, rng=rng)
        except ConstructionExhausted:
            continue


# Oracle: dense sampling of every stroke, independent of the exact clipping code.
def sampled_masked_fraction(pix, patches, n=4000):
    total = covered = 0.0
    for s in pix.strokes:
        pts = [pix.points[k] for k in s.points]
        if s.kind == "segment":
            (ax, ay), (bx, by) = pts
            length = math.hypot(bx - ax, by - ay)
            t = (np.arange(n) + 0.5) / n
            xs, ys = ax + t * (bx - ax), ay + t * (by - ay)
        else:
            (ox, oy), (ax, ay) = pts[0], pts[1]
            r = math.hypot(ax - ox, ay - oy)
            if s.kind == "circle":
                start, sweep = 0.0, 2 * math.pi
            else:
                bx, by = pts[2]
                start = math.atan2(ay - oy, ax - ox)
                sweep = math.atan2(by - oy, bx - ox) - start
                sweep = (sweep + math.pi) % (2 * math.pi) - math.pi
            length = r * abs(sweep)
            ang = start + sweep * (np.arange(n) + 0.5) / n
            xs, ys = ox + r * np.cos(ang), oy + r * np.sin(ang)
        inside = np.zeros(n, bool)
        for x, y, w, h in patches:
            inside |= (xs >= x) & (xs <= x + w) & (ys >= y) & (ys <= y + h)
        total += length
        covered += length * inside.mean()
    return covered / total


def test_canvas_validation():
    with pytest.raises(ValueError):
        CanvasSpec(margin=300)
    with pytest.raises(ValueError):
        CanvasSpec(width=0)


def test_unit_square_layout():
    pix = layout(square_scene(), CanvasSpec())
    assert pix.scale == pytest.approx(448)
    xs = [p[0] for p in pix.points.values()]
    ys = [p[1] for p in pix.points.values()]
    assert (min(xs), max(xs), min(ys), max(ys)) == pytest.approx((32, 480, 32, 480))
    # y axis points down: A (bottom left in scene) is at the bottom of the canvas
    assert pix.points["A"] == pytest.approx((32, 480))


def test_wide_scene_scale():
    s = Scene({"A": (0.0, 0.0), "B": (10.0, 5.0)})
    pix = layout(s)
    assert pix.scale == pytest.approx(448 / 10) == pytest.approx(44.8)
    ys = sorted(p[1] for p in pix.points.values())
    assert (ys[0] + ys[1]) / 2 == pytest.approx(256)


def test_degenerate_layouts():
    with pytest.raises(ValueError):
        layout(Scene({"A": (1.0, 1.0)}))
    with pytest.raises(ValueError):
        layout(Scene())


@pytest.mark.parametrize("seed", range(20))
def test_geometric_fidelity(catalog, seed):
    scene = random_scene(catalog, seed)
    pix = layout(scene)
    names = list(scene.points)
    base = None
    for a, b in itertools.combinations(names, 2):
        d_scene = math.dist(scene.points[a], scene.points[b])
        d_pix = math.dist(pix.points[a], pix.points[b])
        ratio = d_pix / d_scene
        base = base or ratio
        assert ratio == pytest.approx(base, rel=5e-3)


def test_label_anchor_outward():
    pix = layout(square_scene())
    ax, ay = pix.points["A"]
    lx, ly = pix.label_anchors["A"]
    # bottom-left corner: label goes further left and down (screen coordinates)
    assert lx < ax and ly > ay
    lone = layout(Scene({"A": (0, 0), "B": (1, 1)}, labels=("A", "B")))
    assert lone.label_anchors["A"] == pytest.approx((lone.points["A"][0] + 8, lone.points["A"][1] - 8))


def test_palette_contrast():
    pal = Palette()
    assert len(pal.strokes) == 12 and len(pal.backgrounds) == 6
    for fg, bg in itertools.product(pal.strokes, pal.backgrounds):
        assert contrast_ratio(fg, bg) >= 3.0, (fg, bg)
    assert contrast_ratio("#000000", "#ffffff") == pytest.approx(21.0)


def test_style_plan(rng):
    one = Scene({"A": (0, 0), "B": (1, 0)}, strokes=(Stroke("segment", ("A", "B")),))
    plan = plan_style(one, rng)
    assert len(plan.stroke_colors) == 1
    assert plan_style(one, np.random.default_rng(3)) == plan_style(one, np.random.default_rng(3))
    pairs = {(p.background, p.stroke_colors[0]) for p in (plan_style(one, rng) for _ in range(1000))}
    assert len(pairs) >= 10
    pal = Palette()
    for _ in range(200):
        p = plan_style(one, rng)
        assert p.background in pal.backgrounds and p.stroke_colors[0] in pal.strokes
        assert contrast_ratio(p.stroke_colors[0], p.background) >= 3.0


def test_style_filters_low_contrast(rng):
    one = Scene({"A": (0, 0), "B": (1, 0)}, strokes=(Stroke("segment", ("A", "B")),))
    pal = Palette(strokes=("#ffff00", "#000000"), backgrounds=("#ffffff",))
    assert all(plan_style(one, rng, pal).stroke_colors == ("#000000",) for _ in range(50))
    with pytest.raises(ValueError):
        plan_style(one, rng, Palette(strokes=("#fefefe",), backgrounds=("#ffffff",)))


def test_mask_disabled(catalog, rng):
    pix = layout(random_scene(catalog, 1))
    assert plan_mask(pix, rng, MaskParams(p_mask=0.0)) == MaskPlan()


def test_exact_masked_length_matches_sampling(catalog):
    rng = np.random.default_rng(9)
    for seed in range(40):
        pix = layout(random_scene(catalog, seed))
        patches = []
        for _ in range(3):
            x, y = rng.uniform(0, 500, 2)
            patches.append((float(x), float(y), *map(float, rng.uniform(8, 120, 2))))
        exact = sum(masked_lengths(pix, patches)) / sum(stroke_lengths(pix))
        assert exact == pytest.approx(sampled_masked_fraction(pix, patches, 20000), abs=2e-3)


def test_mask_plans_respect_bound(catalog):
    rng = np.random.default_rng(4)
    params = MaskParams(p_mask=1.0)
    masked = 0
    for seed in range(200):
        pix = layout(random_scene(catalog, seed, Complexity(["easy", "medium", "hard"][seed % 3])))
        plan = plan_mask(pix, rng, params)
        assert len(plan.patches) <= 2
        masked += bool(plan.patches)
        for x, y, w, h in plan.patches:
            assert 8 <= w <= 24 and 8 <= h <= 24
            assert sampled_masked_fraction(pix, [(x, y, w, h)]) > 0
        if plan.patches:
            assert sampled_masked_fraction(pix, plan.patches) <= 0.05 + 1e-3
            assert sum(masked_lengths(pix, plan.patches)) <= 0.05 * sum(stroke_lengths(pix)) + 1e-9
    assert masked >= 190


def test_single_segment_document():
    s = Scene({"A": (0, 0), "B": (2, 1)}, strokes=(Stroke("segment", ("A", "B")),), labels=("A", "B"))
    pix = layout(s)
    svg = render(pix, plan_style(s, np.random.default_rng(0)))
    root = ET.fromstring(svg)
    assert root.tag == f"{NS}svg" and root.get("version") == "1.1"
    assert len(list(root.iter(f"{NS}line"))) == 1
    labels = [t.text for t in root.iter(f"{NS}text") if t.get("class") == "point-label"]
    assert labels == ["A", "B"]


def test_angle_text_and_curves():
    s = Scene(
        {"A": (1.0, 1.7320508), "B": (0.0, 0.0), "C": (2.0, 0.0), "O": (3, 3), "P": (4, 3)},
        strokes=(
            Stroke("segment", ("B", "A")), Stroke("segment", ("B", "C")),
            Stroke("circle", ("O", "P"), dashed=True), Stroke("arc", ("B", "C", "A")),
        ),
        labels=("A", "B", "C"),
        annotations=(Annotation("angle", ("A", "B", "C"), 60.0), Annotation("length", ("B", "C"), 2.0)),
    )
    svg = render(layout(s), plan_style(s, np.random.default_rng(1)))
    assert "60°" in svg
    root = ET.fromstring(svg)
    texts = {t.get("class"): t.text for t in root.iter(f"{NS}text") if t.get("class") != "point-label"}
    assert texts == {"angle-label": "60°", "length-label": "2"}
    assert len(list(root.iter(f"{NS}circle"))) == 1 + 3  # one stroke + three point dots
    dashed = [el for el in root.iter() if el.get("stroke-dasharray")]
    assert len(dashed) == 1 and dashed[0].get("class") == "circle"


def test_render_structure_and_determinism(catalog):
    scene = random_scene(catalog, 77)
    pix = layout(scene)
    style = plan_style(scene, np.random.default_rng(2))
    mask = plan_mask(pix, np.random.default_rng(2), MaskParams(p_mask=1.0))
    a, b = render(pix, style, mask), render(pix, style, mask)
    assert a == b
    root = ET.fromstring(a)
    children = list(root)
    assert children[0].get("class") == "background"
    assert children[-1].get("class") == "mask"
    strokes = [el for el in root.iter() if el.get("class") in ("segment", "circle", "arc")]
    assert [tuple(el.get("data-points").split()) for el in strokes] == [s.points for s in scene.strokes]
    for el in strokes:
        assert el.get("stroke") == style.stroke_colors[strokes.index(el)]
    for rect in children[-1]:
        assert rect.get("fill") == style.background


def test_render_rejects_mismatched_style(catalog):
    scene = random_scene(catalog, 3)
    style = plan_style(scene, np.random.default_rng(0))
    other = random_scene(catalog, 4, Complexity.EASY)
    if len(other.strokes) != len(scene.strokes):
        with pytest.raises(ValueError):
            render(layout(other), style)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_mask_invariants_property(catalog, seed):
    rng = np.random.default_rng(seed)
    pix = layout(random_scene(catalog, seed % 500))
    plan = plan_mask(pix, rng)
    if plan.patches:
        assert sum(masked_lengths(pix, plan.patches)) <= 0.05 * sum(stroke_lengths(pix)) + 1e-9
        for patch in plan.patches:
            assert sum(masked_lengths(pix, [patch])) > 0
