"""Manifest statistics and closed-loop verification of built datasets."""

from __future__ import annotations

import csv
import io
import json
import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .builder import MANIFEST_FIELDS
from .caption import missing_mentions
from .catalog import Catalog, CatalogError, reference_catalog
from .geometry import EPS_CONSTRUCT
from .selector import Complexity, group_from_texts
from .sketch import group_residual, scene_from_points

__all__ = [
    "ManifestError",
    "ClauseStats",
    "StatsReport",
    "VerificationReport",
    "read_manifest",
    "compute_stats",
    "verify_record",
    "verify_dataset",
]

_SVG_NS = "{http://www.w3.org/2000/svg}"
_STROKE_CLASSES = ("segment", "circle", "arc")


class ManifestError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"manifest line {line}: {msg}")
        self.line = line


def read_manifest(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, record)``; malformed lines raise :class:`ManifestError`."""
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON ({exc.msg})", no) from None
            if not isinstance(rec, dict):
                raise ManifestError("record is not an object", no)
            yield no, rec


# Statistics ------------------------------------------------------------------------

@dataclass
class ClauseStats:
    clause: str
    by_complexity: dict[str, int] = field(default_factory=lambda: {c.value: 0 for c in Complexity})
    chars: int = 0
    words: int = 0

    @property
    def total(self) -> int:
        return sum(self.by_complexity.values())

    @property
    def mean_chars(self) -> float:
        return self.chars / self.total if self.total else 0.0

    @property
    def mean_words(self) -> float:
        return self.words / self.total if self.total else 0.0


@dataclass
class StatsReport:
    clauses: dict[str, ClauseStats]
    samples: dict[str, int]
    total_instances: int
    mean_caption_chars: float
    mean_caption_words: float

    def frequency_table(self, complexity: Complexity | str) -> dict[str, int]:
        key = complexity.value if isinstance(complexity, Complexity) else complexity
        return {k: s.by_complexity[key] for k, s in self.clauses.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["clause", "easy", "medium", "hard", "total", "mean_caption_chars", "mean_caption_words"])
        for s in self.clauses.values():
            b = s.by_complexity
            w.writerow([s.clause, b["easy"], b["medium"], b["hard"], s.total,
                        f"{s.mean_chars:.4f}", f"{s.mean_words:.4f}"])
        return buf.getvalue()

    def format(self) -> str:
        lines = [f"{'clause':<22}{'easy':>7}{'medium':>8}{'hard':>7}{'total':>8}{'chars':>9}{'words':>8}"]
        for s in self.clauses.values():
            b = s.by_complexity
            lines.append(f"{s.clause:<22}{b['easy']:>7}{b['medium']:>8}{b['hard']:>7}{s.total:>8}"
                         f"{s.mean_chars:>9.1f}{s.mean_words:>8.1f}")
        n = sum(self.samples.values())
        lines.append(f"samples: {n} ({', '.join(f'{k} {v}' for k, v in self.samples.items())}); "
                     f"instances: {self.total_instances}; mean caption {self.mean_caption_chars:.1f} chars / "
                     f"{self.mean_caption_words:.1f} words")
        return "\n".join(lines)


def compute_stats(manifest: str | Path, catalog: Optional[Catalog] = None) -> StatsReport:
    """Per-clause frequencies by complexity and mean caption lengths.

    A clause's mean caption length averages over its instances, so a clause
    used twice in one sample counts that caption twice.
    """
    catalog = catalog or reference_catalog()
    stats = {c.id: ClauseStats(c.id) for c in catalog.clauses}
    samples = Counter({c.value: 0 for c in Complexity})
    total_chars = total_words = instances = 0
    for no, rec in read_manifest(manifest):
        try:
            complexity = Complexity.parse(rec["complexity"])
            caption = rec["caption"]
            texts = rec["clauses"]
        except (KeyError, ValueError, AttributeError) as exc:
            raise ManifestError(f"missing or invalid field ({exc})", no) from None
        if not isinstance(caption, str) or not isinstance(texts, list):
            raise ManifestError("caption/clauses have the wrong type", no)
        samples[complexity.value] += 1
        chars, words = len(caption), len(caption.split())
        total_chars += chars
        total_words += words
        for text in texts:
            cid = str(text).split()[0] if str(text).split() else ""
            if cid not in stats:
                stats[cid] = ClauseStats(cid)
            s = stats[cid]
            s.by_complexity[complexity.value] += 1
            s.chars += chars
            s.words += words
            instances += 1
    n = sum(samples.values())
    return StatsReport(
        clauses=stats,
        samples=dict(samples),
        total_instances=instances,
        mean_caption_chars=total_chars / n if n else 0.0,
        mean_caption_words=total_words / n if n else 0.0,
    )


# Verification ----------------------------------------------------------------------

@dataclass
class VerificationReport:
    checked: int = 0
    violations: dict[str, list[str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def format(self) -> str:
        if self.ok:
            return f"verified {self.checked} samples: no violations"
        lines = [f"verified {self.checked} samples: {len(self.violations)} with violations"]
        for sid, msgs in self.violations.items():
            lines += [f"  {sid}: {m}" for m in msgs]
        return "\n".join(lines)


def _svg_texts(root: ET.Element, cls: str) -> list[str]:
    return [el.text or "" for el in root.iter(f"{_SVG_NS}text") if el.get("class") == cls]


def verify_record(rec: dict, catalog: Catalog, base_dir: str | Path, eps: float = EPS_CONSTRUCT) -> list[str]:
    """All violations for one manifest record (empty list when valid)."""
    problems: list[str] = []
    keys = set(rec)
    if keys != set(MANIFEST_FIELDS):
        missing = sorted(set(MANIFEST_FIELDS) - keys)
        extra = sorted(keys - set(MANIFEST_FIELDS))
        problems.append(f"field mismatch (missing {missing}, unexpected {extra})")
        if missing:
            return problems
    try:
        group = group_from_texts(rec["clauses"], catalog, Complexity.parse(rec["complexity"]))
    except (CatalogError, ValueError, KeyError, TypeError) as exc:
        return problems + [f"clauses do not parse: {exc}"]

    points = {}
    for name, xy in (rec["points"] or {}).items():
        try:
            x, y = float(xy[0]), float(xy[1])
        except (TypeError, ValueError, IndexError):
            problems.append(f"point {name} has invalid coordinates")
            continue
        if not (math.isfinite(x) and math.isfinite(y)):
            problems.append(f"point {name} is not finite")
        points[name] = (x, y)
    absent = [n for n in group.final_pool if n not in points]
    if absent:
        return problems + [f"no coordinates for {', '.join(absent)}"]
    if problems:
        return problems

    residual = group_residual(group, catalog, points)
    if not residual <= eps:
        problems.append(f"constraint residual {residual:.3g} > {eps:g}")
    stored = rec["max_residual"]
    if not isinstance(stored, (int, float)) or not stored <= eps:
        problems.append(f"recorded max_residual {stored!r} exceeds {eps:g}")

    scene = scene_from_points(group, catalog, points)
    image = Path(base_dir) / str(rec["image"])
    if not image.is_file():
        problems.append(f"image file missing: {rec['image']}")
    else:
        try:
            root = ET.parse(image).getroot()
        except ET.ParseError as exc:
            problems.append(f"image does not parse: {exc}")
        else:
            labels = Counter(_svg_texts(root, "point-label"))
            if labels != Counter(scene.labels):
                problems.append(f"point labels in image {sorted(labels)} != scene {sorted(scene.labels)}")
            anns = Counter(_svg_texts(root, "angle-label") + _svg_texts(root, "length-label"))
            want = Counter(a.text for a in scene.annotations)
            if anns != want:
                problems.append(f"annotations in image {sorted(anns)} != scene {sorted(want)}")
            strokes = sum(1 for el in root.iter() if el.get("class") in _STROKE_CLASSES)
            if strokes != len(scene.strokes):
                problems.append(f"image has {strokes} strokes, scene has {len(scene.strokes)}")

    caption = rec["caption"]
    if not isinstance(caption, str) or not caption.strip():
        problems.append("caption is empty")
    else:
        missing = missing_mentions(caption, group.final_pool, [a.text for a in scene.annotations])
        if missing:
            problems.append(f"caption does not mention {', '.join(missing)}")
    return problems


def verify_dataset(
    manifest: str | Path,
    catalog: Optional[Catalog] = None,
    eps: float = EPS_CONSTRUCT,
) -> VerificationReport:
    """Re-check every sample of a manifest against its clauses, image and caption."""
    catalog = catalog or reference_catalog()
    manifest = Path(manifest)
    report = VerificationReport()
    with open(manifest, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            report.checked += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                report.violations[f"line {no}"] = [f"invalid JSON ({exc.msg})"]
                continue
            if not isinstance(rec, dict):
                report.violations[f"line {no}"] = ["record is not an object"]
                continue
            sid = str(rec.get("id", f"line {no}"))
            problems = verify_record(rec, catalog, manifest.parent, eps)
            if problems:
                report.violations.setdefault(sid, []).extend(problems)
    return report
