from __future__ import annotations

import hashlib
import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from autogeo.builder import (
    MANIFEST_FIELDS,
    GenerationAborted,
    build_dataset,
    complexity_schedule,
    generate_sample,
    sample_id,
    sample_rng,
)
from autogeo.caption import RefinerConfig
from autogeo.config import (
    ConfigError,
    Counts,
    GenConfig,
    config_from_dict,
    load_config,
)
from autogeo.geometry import DegeneracyThresholds
from autogeo.report import ManifestError, compute_stats, verify_dataset


def _digest(out: Path) -> str:
    h = hashlib.sha256()
    h.update((out / "manifest.jsonl").read_bytes())
    for p in sorted((out / "images").glob("*.svg")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


# Config -------------------------------------------------------------------------------

def test_default_config_file_matches_defaults():
    from importlib import resources

    cfg = load_config(resources.files("autogeo.data") / "default.toml")
    assert cfg.replace(out="out") == GenConfig()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key"):
        config_from_dict({"sed": 1})
    with pytest.raises(ConfigError, match=r"\[mask\]"):
        config_from_dict({"mask": {"p": 0.1}})
    with pytest.raises(ConfigError):
        config_from_dict({"counts": {"easy": -1}})
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 3")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_config_relative_paths(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('seed = 5\nout = "data"\n[counts]\neasy = 1\nmedium = 0\nhard = 0\n[rules]\nhard_count_max = 6\n')
    cfg = load_config(f)
    assert cfg.out == str(tmp_path / "data")
    assert cfg.counts == Counts(1, 0, 0) and cfg.rules.hard_count_max == 6


def test_counts():
    assert Counts.from_total(1000) == Counts(200, 400, 400)
    assert Counts.parse("10,20,20") == Counts(10, 20, 20)
    assert Counts.parse("50") == Counts(10, 20, 20)
    assert Counts.from_total(7).total == 7
    with pytest.raises(ConfigError):
        Counts.parse("1,2")


# Generation ---------------------------------------------------------------------------

def test_schedule_partition():
    cfg = GenConfig(seed=3, counts=Counts(200, 400, 400))
    sched = complexity_schedule(cfg)
    assert Counter(c.value for c in sched) == {"easy": 200, "medium": 400, "hard": 400}
    assert sched == complexity_schedule(GenConfig(seed=3, counts=Counts(200, 400, 400)))
    assert sched != complexity_schedule(GenConfig(seed=4, counts=Counts(200, 400, 400)))
    # shuffled: the first 50 indices are not all from one block
    assert len({c for c in sched[:50]}) == 3


def test_sample_rng_depends_on_seed_index_salt():
    a = sample_rng(1, 2, 0).integers(1 << 62)
    assert a == sample_rng(1, 2, 0).integers(1 << 62)
    assert a != sample_rng(1, 3, 0).integers(1 << 62)
    assert a != sample_rng(1, 2, 1).integers(1 << 62)
    assert a != sample_rng(2, 2, 0).integers(1 << 62)


def test_sample_ids():
    assert sample_id(7, 50) == "000007"
    assert sample_id(7, 10_000_000) == "0000007"


def test_generate_single_easy(tmp_path):
    cfg = GenConfig(seed=42, counts=Counts(1, 0, 0))
    s = generate_sample(cfg, 0, out_dir=tmp_path)
    assert s.complexity == "easy" and len(s.clauses) == 1
    assert s.max_residual <= 1e-9
    assert (tmp_path / s.image).read_text(encoding="utf-8") == s.svg
    assert list(s.record()) == list(MANIFEST_FIELDS)
    again = generate_sample(cfg, 0)
    assert again.manifest_line() == s.manifest_line() and again.svg == s.svg
    with pytest.raises(IndexError):
        generate_sample(cfg, 1)


def test_small_build(small_build):
    cfg, report = small_build
    out = Path(cfg.out)
    lines = (out / "manifest.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 50 and len(list((out / "images").glob("*.svg"))) == 50
    recs = [json.loads(line) for line in lines]
    assert [r["index"] for r in recs] == list(range(50))
    assert Counter(r["complexity"] for r in recs) == {"easy": 10, "medium": 20, "hard": 20}
    for r in recs:
        assert list(r) == list(MANIFEST_FIELDS)
        assert r["seed"] == 11 and r["caption"] and r["caption_mode"] == "offline"
    run = json.loads((out / "run_report.json").read_text())
    assert run["status"] == "ok" and run["generated"] == 50
    assert run["throughput_samples_per_s"] > 0
    assert report.generated == 50


def test_verify_fresh_build(small_build):
    cfg, _ = small_build
    report = verify_dataset(Path(cfg.out) / "manifest.jsonl")
    assert report.ok, report.format()
    assert report.checked == 50


def test_resume_skips_everything(tmp_path):
    cfg = GenConfig(seed=2, counts=Counts(3, 4, 3), out=str(tmp_path))
    build_dataset(cfg)
    before = _digest(tmp_path)
    report = build_dataset(cfg)
    assert report.skipped == 10 and report.generated == 0
    assert "skipped: 10" in report.summary()
    assert _digest(tmp_path) == before


def test_resume_after_truncation(tmp_path):
    cfg = GenConfig(seed=2, counts=Counts(3, 4, 3), out=str(tmp_path))
    build_dataset(cfg)
    full = _digest(tmp_path)
    manifest = tmp_path / "manifest.jsonl"
    lines = manifest.read_text(encoding="utf-8").splitlines(keepends=True)
    manifest.write_text("".join(lines[:6]) + lines[6][:20], encoding="utf-8")  # crash mid-line
    (tmp_path / "images" / "000008.svg").unlink()
    report = build_dataset(cfg)
    assert report.skipped == 6 and report.generated == 4
    assert _digest(tmp_path) == full


def test_resume_rejects_corrupt_image(tmp_path):
    cfg = GenConfig(seed=2, counts=Counts(2, 1, 1), out=str(tmp_path))
    build_dataset(cfg)
    (tmp_path / "images" / "000001.svg").write_text("<svg", encoding="utf-8")
    report = build_dataset(cfg)
    assert report.skipped == 1 and report.generated == 3
    assert verify_dataset(tmp_path / "manifest.jsonl").ok


def test_worker_count_invariance(tmp_path):
    base = GenConfig(seed=99, counts=Counts(4, 8, 8))
    build_dataset(base.replace(out=str(tmp_path / "one"), workers=1))
    build_dataset(base.replace(out=str(tmp_path / "many"), workers=3))
    assert _digest(tmp_path / "one") == _digest(tmp_path / "many")


def test_abort_reports_index(tmp_path):
    cfg = GenConfig(seed=1, counts=Counts(2, 0, 0), out=str(tmp_path),
                    thresholds=DegeneracyThresholds(max_extent=0.05), group_retries=1, clause_retries=2)
    with pytest.raises(GenerationAborted) as exc:
        build_dataset(cfg)
    assert 0 in exc.value.failures
    assert len(exc.value.failures[0]) == cfg.sample_retries + 1
    run = json.loads((tmp_path / "run_report.json").read_text())
    assert run["status"] == "aborted" and run["aborted_indices"] == [0]
    assert (tmp_path / "manifest.jsonl").read_text() == ""


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        build_dataset(GenConfig(counts=Counts(1, 0, 0), out=str(blocker / "sub")))


# Verification and statistics ------------------------------------------------------------

def _copy_build(src: Path, dst: Path) -> Path:
    import shutil

    shutil.copytree(src, dst)
    return dst / "manifest.jsonl"


def test_verify_detects_perturbation(small_build, tmp_path):
    manifest = _copy_build(Path(small_build[0].out), tmp_path / "b")
    lines = manifest.read_text(encoding="utf-8").splitlines()
    # move the constructed point of a midpoint clause (a free endpoint would go unnoticed)
    for k, line in enumerate(lines):
        rec = json.loads(line)
        mids = [c.split() for c in rec["clauses"] if c.startswith("midpoint ")]
        if mids:
            break
    else:
        pytest.skip("no midpoint clause in this build")
    name = mids[0][1]
    rec["points"][name][0] += 0.1
    lines[k] = json.dumps(rec, ensure_ascii=False)
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    report = verify_dataset(manifest)
    assert list(report.violations) == [rec["id"]]
    assert any("residual" in v for v in report.violations[rec["id"]])


def test_verify_detects_missing_image_and_bad_caption(small_build, tmp_path):
    manifest = _copy_build(Path(small_build[0].out), tmp_path / "b")
    (manifest.parent / "images" / "000003.svg").unlink()
    lines = manifest.read_text(encoding="utf-8").splitlines()
    rec = json.loads(lines[5])
    rec["caption"] = "Nothing to see."
    lines[5] = json.dumps(rec)
    lines.append("{broken")
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    report = verify_dataset(manifest)
    assert any("image file missing" in v for v in report.violations["000003"])
    assert any("caption does not mention" in v for v in report.violations["000005"])
    assert "line 51" in report.violations


def test_verify_detects_label_mismatch(small_build, tmp_path):
    manifest = _copy_build(Path(small_build[0].out), tmp_path / "b")
    svg = manifest.parent / "images" / "000000.svg"
    text = svg.read_text(encoding="utf-8")
    svg.write_text(text.replace('class="point-label"', 'class="other"', 1), encoding="utf-8")
    report = verify_dataset(manifest)
    assert any("point labels" in v for v in report.violations["000000"])


def test_stats(small_build, catalog):
    cfg, _ = small_build
    manifest = Path(cfg.out) / "manifest.jsonl"
    stats = compute_stats(manifest)
    recs = [json.loads(x) for x in manifest.read_text(encoding="utf-8").splitlines()]
    n_inst = sum(len(r["clauses"]) for r in recs)
    assert stats.total_instances == n_inst == sum(s.total for s in stats.clauses.values())
    assert set(stats.clauses) == {c.id for c in catalog}
    # oracle for one clause: mean caption chars over its instances
    cid = "triangle"
    lens = [len(r["caption"]) for r in recs for c in r["clauses"] if c.split()[0] == cid]
    if lens:
        assert stats.clauses[cid].mean_chars == pytest.approx(sum(lens) / len(lens))
    easy = stats.frequency_table("easy")
    assert sum(easy.values()) == 10
    csv_text = stats.to_csv()
    assert csv_text.splitlines()[0].startswith("clause,easy,medium,hard,total")
    assert len(csv_text.splitlines()) == len(catalog) + 1


def test_stats_single_sample(tmp_path, catalog):
    m = tmp_path / "m.jsonl"
    m.write_text(json.dumps({"complexity": "easy", "clauses": ["segment A B"], "caption": "Segment AB."}) + "\n")
    stats = compute_stats(m)
    assert stats.clauses["segment"].total == 1
    assert sum(s.total for k, s in stats.clauses.items() if k != "segment") == 0
    assert stats.clauses["segment"].mean_words == 2


def test_stats_malformed_line(tmp_path):
    m = tmp_path / "m.jsonl"
    m.write_text('{"complexity": "easy", "clauses": [], "caption": "x"}\nnot json\n')
    with pytest.raises(ManifestError) as exc:
        compute_stats(m)
    assert exc.value.line == 2


# Refined mode end to end ------------------------------------------------------------------

class _Upper(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        text = "Refined: " + body["messages"][1]["content"]
        payload = json.dumps({"choices": [{"message": {"content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


def test_refined_build(tmp_path):
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _Upper)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    try:
        host, port = srv.server_address
        refiner = RefinerConfig(mode="refined", endpoint=f"http://{host}:{port}/", timeout=5, max_in_flight=2)
        cfg = GenConfig(seed=5, counts=Counts(2, 3, 3), out=str(tmp_path), refiner=refiner)
        report = build_dataset(cfg)
    finally:
        srv.shutdown()
        srv.server_close()
    assert report.caption_modes == {"refined": 8}
    recs = [json.loads(x) for x in (tmp_path / "manifest.jsonl").read_text(encoding="utf-8").splitlines()]
    assert [r["index"] for r in recs] == list(range(8))
    assert all(r["caption"].startswith("Refined: ") and r["caption_mode"] == "refined" for r in recs)
    assert verify_dataset(tmp_path / "manifest.jsonl").ok
