"""End-to-end sample generation and deterministic, resumable dataset builds."""

from __future__ import annotations

import functools
import json
import logging
import os
import time
from collections import deque
from contextlib import closing
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from .caption import CaptionDraft, compose_offline, refine
from .catalog import Catalog, load_catalog
from .config import GenConfig, config_to_dict
from .geometry import DegenerateInputError
from .render import layout, plan_mask, plan_style, render
from .selector import Complexity, SelectionExhausted, select_group
from .sketch import ConstructionExhausted, construct_scene, group_residual

__all__ = [
    "MANIFEST_FIELDS",
    "Sample",
    "BuildReport",
    "GenerationAborted",
    "sample_rng",
    "complexity_schedule",
    "sample_id",
    "generate_sample",
    "build_dataset",
]

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = (
    "id", "complexity", "clauses", "points", "max_residual",
    "caption", "caption_mode", "image", "seed", "index",
)
MANIFEST_NAME = "manifest.jsonl"
REPORT_NAME = "run_report.json"
IMAGE_DIR = "images"

_SCHEDULE_KEY = 0x5C4ED  # spawn key reserved for the complexity shuffle


class GenerationAborted(RuntimeError):
    def __init__(self, failures: dict[int, list[str]]):
        self.failures = failures
        detail = "; ".join(f"index {i}: {msgs[-1]}" for i, msgs in sorted(failures.items()))
        super().__init__(f"generation aborted after repeated failures ({detail})")


def sample_rng(seed: int, index: int, salt: int = 0) -> np.random.Generator:
    """Independent stream for one sample attempt, a function of (seed, index, salt) only."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index, salt))))


@functools.lru_cache(maxsize=8)
def _schedule(seed: int, easy: int, medium: int, hard: int) -> tuple[Complexity, ...]:
    blocks = [Complexity.EASY] * easy + [Complexity.MEDIUM] * medium + [Complexity.HARD] * hard
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_SCHEDULE_KEY,))))
    return tuple(blocks[i] for i in rng.permutation(len(blocks)))


def complexity_schedule(cfg: GenConfig) -> tuple[Complexity, ...]:
    """Complexity of every index: the count blocks, shuffled by a seeded permutation."""
    c = cfg.counts
    return _schedule(cfg.seed, c.easy, c.medium, c.hard)


def sample_id(index: int, total: int) -> str:
    return str(index).zfill(max(6, len(str(max(total - 1, 0)))))


@functools.lru_cache(maxsize=4)
def _catalog(path: Optional[str]) -> Catalog:
    return load_catalog(path)


@dataclass(frozen=True)
class Sample:
    id: str
    complexity: str
    clauses: list[str]
    points: dict[str, list[float]]
    max_residual: float
    caption: str
    caption_mode: str
    image: str
    seed: int
    index: int
    # not serialized
    svg: str = field(default="", repr=False, compare=False)
    annotation_texts: tuple[str, ...] = field(default=(), repr=False, compare=False)
    draft: Optional[CaptionDraft] = field(default=None, repr=False, compare=False)

    def record(self) -> dict:
        return {k: getattr(self, k) for k in MANIFEST_FIELDS}

    def manifest_line(self) -> str:
        return json.dumps(self.record(), ensure_ascii=False) + "\n"


def generate_sample(
    cfg: GenConfig,
    index: int,
    salt: int = 0,
    out_dir: str | Path | None = None,
    catalog: Catalog | None = None,
) -> Sample:
    """Run selector, sketch, render and caption for one index.

    Writes ``images/<id>.svg`` under ``out_dir`` when given.
    """
    total = cfg.counts.total
    if not 0 <= index < total:
        raise IndexError(f"index {index} outside 0..{total - 1}")
    catalog = catalog or _catalog(cfg.catalog)
    complexity = complexity_schedule(cfg)[index]
    rng = sample_rng(cfg.seed, index, salt)

    group = select_group(complexity, catalog, cfg.rules, rng)
    scene = construct_scene(
        group, catalog, cfg.thresholds, rng, cfg.eps,
        clause_retries=cfg.clause_retries, group_retries=cfg.group_retries,
    )
    residual = group_residual(group, catalog, scene.points)
    pix = layout(scene, cfg.canvas)
    style = plan_style(scene, rng, cfg.palette)
    mask = plan_mask(pix, rng, cfg.mask)
    svg = render(pix, style, mask)
    draft = compose_offline(group, catalog, rng)

    sid = sample_id(index, total)
    image = f"{IMAGE_DIR}/{sid}.svg"
    if out_dir is not None:
        _write_atomic(Path(out_dir) / image, svg)
    return Sample(
        id=sid,
        complexity=complexity.value,
        clauses=group.texts(),
        points={n: [x, y] for n, (x, y) in scene.points.items()},
        max_residual=residual,
        caption=draft.text(),
        caption_mode="offline",
        image=image,
        seed=cfg.seed,
        index=index,
        svg=svg,
        annotation_texts=tuple(a.text for a in scene.annotations),
        draft=draft,
    )


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


_RECOVERABLE = (SelectionExhausted, ConstructionExhausted, DegenerateInputError, ValueError, ZeroDivisionError)


def _attempt(cfg: GenConfig, out_dir: str, index: int) -> tuple[int, Optional[Sample], list[str]]:
    errors: list[str] = []
    for salt in range(cfg.sample_retries + 1):
        try:
            return index, generate_sample(cfg, index, salt, out_dir), errors
        except _RECOVERABLE as exc:
            errors.append(f"salt {salt}: {type(exc).__name__}: {exc}")
            logger.debug("index %d salt %d failed: %s", index, salt, exc)
    return index, None, errors


@dataclass
class BuildReport:
    out: str
    total: int
    generated: int = 0
    skipped: int = 0
    retries: int = 0
    failed_attempts: int = 0
    wall_time_s: float = 0.0
    workers: int = 1
    status: str = "ok"
    aborted_indices: list[int] = field(default_factory=list)
    caption_modes: dict[str, int] = field(default_factory=dict)

    @property
    def throughput(self) -> float:
        return self.generated / self.wall_time_s if self.wall_time_s > 0 else 0.0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["throughput_samples_per_s"] = self.throughput
        d["throughput_per_worker"] = self.throughput / self.workers
        return d

    def summary(self) -> str:
        return (f"generated: {self.generated}, skipped: {self.skipped}, retries: {self.retries}, "
                f"wall time {self.wall_time_s:.1f}s, {self.throughput:.2f} samples/s")


def _existing_prefix(out: Path, cfg: GenConfig, catalog: Catalog) -> list[str]:
    """Manifest lines of a previous run that can be kept (leading, in order, verified)."""
    from .report import verify_record

    path = out / MANIFEST_NAME
    if not path.exists():
        return []
    kept = []
    with open(path, encoding="utf-8") as fh:
        for expected, line in enumerate(fh):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break
            if (
                not isinstance(rec, dict)
                or rec.get("index") != expected
                or rec.get("seed") != cfg.seed
                or expected >= cfg.counts.total
                or rec.get("id") != sample_id(expected, cfg.counts.total)
                or rec.get("complexity") != complexity_schedule(cfg)[expected].value
                or verify_record(rec, catalog, out, cfg.eps)
            ):
                break
            kept.append(line if line.endswith("\n") else line + "\n")
    return kept


def _ordered_samples(cfg: GenConfig, out: Path, indices: range) -> Iterator[tuple[int, Optional[Sample], list[str]]]:
    work = functools.partial(_attempt, cfg, str(out))
    if cfg.workers == 1:
        for i in indices:
            yield work(i)
        return
    chunk = max(1, min(32, len(indices) // (cfg.workers * 8) or 1))
    pool = ProcessPoolExecutor(max_workers=cfg.workers)
    try:
        # map() yields in submission order, which keeps the manifest in index order
        yield from pool.map(work, indices, chunksize=chunk)
    finally:
        pool.shutdown(wait=True, cancel_futures=True)


def _with_refinement(cfg: GenConfig, stream):
    """Route captions through the refiner, keeping order and capping in-flight calls."""
    if cfg.refiner.mode == "offline":
        yield from stream
        return
    import httpx

    def job(sample: Sample) -> Sample:
        res = refine(sample.draft, cfg.refiner, list(sample.points), sample.annotation_texts, client)
        return _replace_caption(sample, res.caption, res.mode)

    cap = cfg.refiner.max_in_flight
    with httpx.Client(timeout=cfg.refiner.timeout) as client, ThreadPoolExecutor(cap) as pool:
        pending: deque = deque()
        for index, sample, errors in stream:
            pending.append((index, pool.submit(job, sample) if sample else None, errors))
            while len(pending) > cap:
                i, fut, errs = pending.popleft()
                yield i, fut.result() if fut else None, errs
        while pending:
            i, fut, errs = pending.popleft()
            yield i, fut.result() if fut else None, errs


def _replace_caption(sample: Sample, caption: str, mode: str) -> Sample:
    from dataclasses import replace

    return replace(sample, caption=caption, caption_mode=mode)


def build_dataset(
    cfg: GenConfig,
    progress: Optional[Callable[[int, int], None]] = None,
) -> BuildReport:
    """Generate every index of ``cfg`` into ``cfg.out``.

    The manifest is written in index order by a single writer. A rerun keeps
    the verified leading part of an existing manifest and regenerates the rest.
    Raises :class:`GenerationAborted` if an index fails all salted attempts.
    """
    out = Path(cfg.out)
    try:
        (out / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    catalog = _catalog(cfg.catalog)
    total = cfg.counts.total
    report = BuildReport(out=str(out), total=total, workers=cfg.workers)
    start = time.perf_counter()

    kept = _existing_prefix(out, cfg, catalog)
    report.skipped = len(kept)
    failures: dict[int, list[str]] = {}
    # truncating to the kept prefix and appending leaves a resumable file after a crash
    stream = _with_refinement(cfg, _ordered_samples(cfg, out, range(len(kept), total)))
    with open(out / MANIFEST_NAME, "w", encoding="utf-8", newline="\n") as fh, closing(stream):
        fh.writelines(kept)
        for index, sample, errors in stream:
            report.failed_attempts += len(errors)
            if sample is None:
                failures[index] = errors
                break
            report.retries += len(errors)
            fh.write(sample.manifest_line())
            fh.flush()
            report.generated += 1
            report.caption_modes[sample.caption_mode] = report.caption_modes.get(sample.caption_mode, 0) + 1
            if progress:
                progress(len(kept) + report.generated, total)

    report.wall_time_s = time.perf_counter() - start
    if failures:
        report.status = "aborted"
        report.aborted_indices = sorted(failures)
    report_data = report.to_dict()
    report_data["config"] = config_to_dict(cfg)
    _write_atomic(out / REPORT_NAME, json.dumps(report_data, indent=2, ensure_ascii=False) + "\n")
    logger.info("%s", report.summary())
    if failures:
        raise GenerationAborted(failures)
    return report
