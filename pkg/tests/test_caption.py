from __future__ import annotations

import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autogeo.caption import (
    DEFAULT_INSTRUCTION,
    CaptionDraft,
    RefinerConfig,
    TemplateError,
    compose_offline,
    fill_template,
    missing_mentions,
    refine,
)
from autogeo.catalog import ClauseInstance, parse_instance
from autogeo.selector import Complexity, SelectionRules, group_from_texts, select_group


def test_fill_template_substitution():
    inst = ClauseInstance("midpoint", {"M": "R", "A": "P", "B": "Q"})
    assert fill_template("{M} is the midpoint of segment {A}{B}.", inst) == "R is the midpoint of segment PQ."


def test_fill_template_units(catalog):
    inst = parse_instance("angle_annot A B C 60", catalog)
    assert fill_template("{deg:t}", inst) == "60°"
    inst = parse_instance("segment_length A B 5", catalog)
    assert fill_template("{A}{B} = {len:v}", inst) == "AB = 5"
    assert fill_template("{len:v}", ClauseInstance("x", {"v": 2.5})) == "2.5"


def test_fill_template_errors():
    inst = ClauseInstance("midpoint", {"M": "R", "A": "P", "B": "Q"})
    with pytest.raises(TemplateError):
        fill_template("{X} is here", inst)
    with pytest.raises(TemplateError):
        fill_template("{deg:M}", inst)


def test_compose_single(catalog, rng):
    g = group_from_texts(["segment A B"], catalog)
    text = compose_offline(g, catalog, rng).text()
    filled = {fill_template(t, g.instances[0]) for t in catalog.get("segment").templates}
    assert text in {s if s.endswith(".") else s + "." for s in filled}


def test_compose_connectors(catalog, rng):
    g = group_from_texts(["triangle A B C", "midpoint D A B", "circle E F"], catalog)
    draft = compose_offline(g, catalog, rng)
    assert len(draft.sentences) == 3
    assert not draft.sentences[0].startswith(("Additionally", "Furthermore", "Moreover"))
    assert draft.sentences[1].startswith("Additionally, ")
    assert draft.sentences[2].startswith("Furthermore, ")
    assert all(s.endswith(".") for s in draft.sentences)


def test_connector_rotation(catalog, rng):
    texts = ["segment A B"] + [f"midpoint {m} A B" for m in "CDEFG"]
    draft = compose_offline(group_from_texts(texts, catalog), catalog, rng)
    heads = [s.split(",")[0] for s in draft.sentences[1:]]
    assert heads == ["Additionally", "Furthermore", "Moreover", "Additionally", "Furthermore"]


def test_compose_deterministic(catalog):
    g = group_from_texts(["square A B C D", "on_circle E A B"], catalog)
    a = compose_offline(g, catalog, np.random.default_rng(9))
    b = compose_offline(g, catalog, np.random.default_rng(9))
    assert a == b


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), complexity=st.sampled_from(list(Complexity)))
def test_offline_mentions_everything(catalog, seed, complexity):
    rng = np.random.default_rng(seed)
    g = select_group(complexity, catalog, SelectionRules(), rng)
    caption = compose_offline(g, catalog, rng).text()
    numbers = []
    for inst in g.instances:
        defn = catalog.get(inst.clause_id)
        for d in defn.sketch:
            if d.kind == "angle":
                numbers.append(fill_template(f"{{deg:{d.args[-1]}}}", inst))
            elif d.kind == "length":
                numbers.append(fill_template(f"{{len:{d.args[-1]}}}", inst))
    assert missing_mentions(caption, g.final_pool, numbers) == []
    assert caption[0].isupper()


def test_missing_mentions():
    assert missing_mentions("Segment AB is drawn.", ["A", "B"]) == []
    assert missing_mentions("Segment AB is drawn.", ["A", "C"]) == ["C"]
    assert missing_mentions("Points A1 and B1.", ["A1", "B1", "A"]) == ["A"]
    assert missing_mentions("It is 15 units.", [], ["5"]) == ["5"]
    assert missing_mentions("Angle of 60°.", [], ["60°"]) == []


# Refiner ----------------------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    behaviour = "echo"
    requests: list = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests.append((dict(self.headers), body))
        mode = type(self).behaviour
        if mode == "error":
            self.send_response(500)
            self.end_headers()
            return
        if mode == "garbage":
            payload = b"not json"
        else:
            text = body["messages"][1]["content"]
            if mode == "drop":
                text = "A nice picture of shapes."
            payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture
def server():
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    _Handler.requests = []
    _Handler.behaviour = "echo"
    yield srv
    srv.shutdown()
    srv.server_close()


def _cfg(srv, **kw):
    host, port = srv.server_address
    return RefinerConfig(mode="refined", endpoint=f"http://{host}:{port}/v1/chat/completions",
                         timeout=5, max_retries=1, backoff=0.0, **kw)


DRAFT = CaptionDraft(("Segment AB has length 5.", "Additionally, M is the midpoint of AB."))


def test_offline_mode_passthrough():
    res = refine(DRAFT, RefinerConfig())
    assert res.caption == DRAFT.text() and res.mode == "offline"


def test_refined_echo(server, monkeypatch):
    monkeypatch.setenv("AUTOGEO_API_KEY", "secret-token")
    res = refine(DRAFT, _cfg(server), ["A", "B", "M"], ["5"])
    assert res.mode == "refined"
    assert res.caption == DRAFT.text()
    headers, body = _Handler.requests[0]
    assert body["messages"][0] == {"role": "system", "content": DEFAULT_INSTRUCTION}
    assert body["messages"][1] == {"role": "user", "content": DRAFT.text()}
    assert "model" in body
    assert headers.get("Authorization") == "Bearer secret-token"


def test_refined_validation_fallback(server):
    _Handler.behaviour = "drop"
    res = refine(DRAFT, _cfg(server), ["A", "B", "M"], ["5"])
    assert res == type(res)(DRAFT.text(), "fallback:validation")


def test_refined_format_fallback(server):
    _Handler.behaviour = "garbage"
    res = refine(DRAFT, _cfg(server), ["A"])
    assert res.mode == "fallback:format"
    assert len(_Handler.requests) == 2  # one retry


def test_refined_http_error_fallback(server):
    _Handler.behaviour = "error"
    res = refine(DRAFT, _cfg(server), ["A"])
    assert res.mode == "fallback:transport" and res.caption == DRAFT.text()


def test_unreachable_endpoint():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    cfg = RefinerConfig(mode="refined", endpoint=f"http://127.0.0.1:{port}/x", timeout=1, max_retries=1, backoff=0)
    res = refine(DRAFT, cfg, ["A"])
    assert res.mode == "fallback:transport"
    assert res.caption == DRAFT.text()


def test_refiner_config_validation():
    with pytest.raises(ValueError):
        RefinerConfig(mode="refined")
    with pytest.raises(ValueError):
        RefinerConfig(mode="sometimes")
