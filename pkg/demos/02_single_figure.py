"""Construct, render and caption one clause group by hand."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from autogeo.caption import compose_offline
from autogeo.catalog import reference_catalog
from autogeo.render import MaskParams, layout, plan_mask, plan_style, render
from autogeo.selector import group_from_texts
from autogeo.sketch import construct_scene, group_residual

out = Path(sys.argv[1] if len(sys.argv) > 1 else "figure.svg")
catalog = reference_catalog()
group = group_from_texts(["triangle A B C", "midpoint M A B", "angle_annot D E F 45"], catalog)

rng = np.random.default_rng(7)
scene = construct_scene(group, catalog, rng=rng)
for name, (x, y) in scene.points.items():
    print(f"{name}: ({x:.3f}, {y:.3f})")
print(f"max residual: {group_residual(group, catalog, scene.points):.1e}")

pix = layout(scene)
svg = render(pix, plan_style(scene, rng), plan_mask(pix, rng, MaskParams(p_mask=1.0)))
out.write_text(svg, encoding="utf-8")
print(f"wrote {out} ({len(svg)} bytes)")
print(compose_offline(group, catalog, rng).text())
