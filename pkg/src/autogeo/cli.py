"""Command-line interface: ``generate``, ``stats``, ``verify`` and ``render-one``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .builder import GenerationAborted, build_dataset
from .caption import compose_offline
from .catalog import CatalogError, load_catalog
from .config import ConfigError, Counts, GenConfig, load_config
from .render import layout, plan_mask, plan_style, render
from .report import ManifestError, compute_stats, verify_dataset
from .selector import group_from_texts
from .sketch import ConstructionExhausted, construct_scene

EXIT_OK, EXIT_USAGE, EXIT_ABORTED, EXIT_VIOLATIONS = 0, 1, 2, 3

logger = logging.getLogger("autogeo")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="autogeo", description="Generate seeded geometric figure/caption datasets.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="build a dataset")
    g.add_argument("--config", type=Path, help="TOML config file (defaults used when omitted)")
    g.add_argument("--seed", type=int)
    g.add_argument("--counts", help="E,M,H sample counts, or a single total split 1:2:2")
    g.add_argument("--workers", type=int)
    g.add_argument("--out", type=Path)

    s = sub.add_parser("stats", help="clause frequencies and caption lengths of a manifest")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--csv", type=Path, help="also write the table as CSV")
    s.add_argument("--catalog", type=Path, help="catalog listing the clauses (default: reference)")

    v = sub.add_parser("verify", help="re-check every sample of a manifest")
    v.add_argument("--manifest", type=Path, required=True)
    v.add_argument("--catalog", type=Path, help="default: bundled reference catalog")
    v.add_argument("--eps", type=float, default=1e-9)

    r = sub.add_parser("render-one", help="run the pipeline on an explicit clause group")
    r.add_argument("--clauses", required=True, help='clause texts separated by ";"')
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--config", type=Path)
    return p


def _cmd_generate(args) -> int:
    cfg = load_config(args.config) if args.config else GenConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.counts:
        changes["counts"] = Counts.parse(args.counts)
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.out is not None:
        changes["out"] = str(args.out)
    cfg = cfg.replace(**changes)
    try:
        report = build_dataset(cfg)
    except GenerationAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    print(report.summary())
    return EXIT_OK


def _cmd_stats(args) -> int:
    catalog = load_catalog(args.catalog) if args.catalog else None
    report = compute_stats(args.manifest, catalog)
    print(report.format())
    if args.csv:
        args.csv.write_text(report.to_csv(), encoding="utf-8")
    return EXIT_OK


def _cmd_verify(args) -> int:
    catalog = load_catalog(args.catalog) if args.catalog else None
    report = verify_dataset(args.manifest, catalog, args.eps)
    print(report.format())
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def _cmd_render_one(args) -> int:
    cfg = load_config(args.config) if args.config else GenConfig()
    catalog = load_catalog(cfg.catalog)
    group = group_from_texts(args.clauses.split(";"), catalog)
    rng = np.random.default_rng(args.seed)
    try:
        scene = construct_scene(group, catalog, cfg.thresholds, rng, cfg.eps)
    except ConstructionExhausted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    pix = layout(scene, cfg.canvas)
    svg = render(pix, plan_style(scene, rng, cfg.palette), plan_mask(pix, rng, cfg.mask))
    args.out.write_text(svg, encoding="utf-8")
    print(compose_offline(group, catalog, rng).text())
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "stats": _cmd_stats,
    "verify": _cmd_verify,
    "render-one": _cmd_render_one,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CatalogError, ManifestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
