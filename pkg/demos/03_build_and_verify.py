"""Build a small dataset, re-verify it and print clause statistics."""

from __future__ import annotations

import sys

from autogeo.builder import MANIFEST_NAME, build_dataset
from autogeo.config import Counts, GenConfig
from autogeo.report import compute_stats, verify_dataset

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
cfg = GenConfig(seed=1, counts=Counts(20, 40, 40), out=out, workers=2)
report = build_dataset(cfg, progress=lambda done, total: None)
print(report.summary())

manifest = f"{out}/{MANIFEST_NAME}"
print(verify_dataset(manifest).format())
print(compute_stats(manifest).format())
