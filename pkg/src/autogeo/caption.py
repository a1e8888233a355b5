"""Caption generation: template filling, offline composition and optional refinement."""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .catalog import PLACEHOLDER, Catalog, ClauseInstance, format_number
from .selector import ClauseGroup

__all__ = [
    "CONNECTORS",
    "DEFAULT_INSTRUCTION",
    "TemplateError",
    "CaptionDraft",
    "RefinerConfig",
    "RefineResult",
    "fill_template",
    "compose_offline",
    "refine",
    "missing_mentions",
]

logger = logging.getLogger(__name__)

CONNECTORS = ("", "Additionally, ", "Furthermore, ", "Moreover, ")
DEFAULT_INSTRUCTION = "Render a clear and concise description of an image about geometric shapes."


class TemplateError(ValueError):
    """A template placeholder does not resolve against the instance."""


def fill_template(template: str, instance: ClauseInstance) -> str:
    """Substitute ``{P}``, ``{len:v}`` and ``{deg:t}`` placeholders."""

    def sub(m: re.Match) -> str:
        unit, name = m.group(1), m.group(2)
        if name not in instance.args:
            raise TemplateError(f"{instance.clause_id}: unresolved placeholder {m.group(0)!r}")
        value = instance.args[name]
        if unit is None:
            if not isinstance(value, str):
                raise TemplateError(f"{instance.clause_id}: {m.group(0)!r} names a numeric param")
            return value
        if isinstance(value, str):
            raise TemplateError(f"{instance.clause_id}: {m.group(0)!r} names a point param")
        text = format_number(value)
        return f"{text}°" if unit == "deg" else text

    out = PLACEHOLDER.sub(sub, template)
    if "{" in out or "}" in out:
        raise TemplateError(f"{instance.clause_id}: malformed placeholder in {template!r}")
    return out


def _finish(sentence: str) -> str:
    s = sentence.strip()
    if s and s[-1] not in ".!?":
        s += "."
    return s[:1].upper() + s[1:]


def _join(connector: str, sentence: str, starts_with_name: bool) -> str:
    if not connector:
        return sentence
    if not starts_with_name:
        sentence = sentence[:1].lower() + sentence[1:]
    return connector + sentence


@dataclass(frozen=True)
class CaptionDraft:
    """One finished sentence per clause instance, connectors included."""

    sentences: tuple[str, ...]
    mode: str = "offline"

    def text(self) -> str:
        return " ".join(self.sentences)


def compose_offline(group: ClauseGroup, catalog: Catalog, rng: np.random.Generator) -> CaptionDraft:
    """Fill one uniformly drawn template per instance and join with connectors."""
    sentences = []
    for i, inst in enumerate(group.instances):
        templates = catalog.get(inst.clause_id).templates
        tpl = templates[int(rng.integers(len(templates)))]
        sentence = _finish(fill_template(tpl, inst))
        connector = CONNECTORS[0] if i == 0 else CONNECTORS[1 + (i - 1) % (len(CONNECTORS) - 1)]
        starts_with_name = bool(re.match(r"\{(?!len:|deg:)", tpl.lstrip()))
        sentences.append(_join(connector, sentence, starts_with_name))
    return CaptionDraft(tuple(sentences))


# Mentions --------------------------------------------------------------------------

_POINT_RUN = re.compile(r"(?<![A-Za-z0-9])(?:[A-Z][0-9]*)+(?![A-Za-z0-9])")
_NAME = re.compile(r"[A-Z][0-9]*")


def _mentioned_names(text: str) -> set[str]:
    names: set[str] = set()
    for run in _POINT_RUN.finditer(text):
        names.update(_NAME.findall(run.group(0)))
    return names


def _mentions_number(text: str, token: str) -> bool:
    return re.search(rf"(?<![0-9.]){re.escape(token)}(?![0-9])", text) is not None


def missing_mentions(caption: str, points: Iterable[str], numbers: Iterable[str] = ()) -> list[str]:
    """Point names and numeric tokens (``"5"``, ``"60°"``) absent from ``caption``.

    Point names are looked up in runs of capital-letter names, so ``B`` is found
    in ``segment AB`` but not inside an ordinary word.
    """
    found = _mentioned_names(caption)
    missing = [p for p in points if p not in found]
    missing += [n for n in numbers if not _mentions_number(caption, n)]
    return missing


# Refinement ------------------------------------------------------------------------

@dataclass(frozen=True)
class RefinerConfig:
    mode: str = "offline"  # "offline" | "refined"
    endpoint: Optional[str] = None
    model: str = "gpt-3.5-turbo"
    timeout: float = 30.0
    max_retries: int = 2
    instruction: str = DEFAULT_INSTRUCTION
    api_key_env: str = "AUTOGEO_API_KEY"
    max_in_flight: int = 4
    backoff: float = 0.5

    def __post_init__(self):
        if self.mode not in ("offline", "refined"):
            raise ValueError(f"unknown refiner mode {self.mode!r}")
        if self.mode == "refined" and not self.endpoint:
            raise ValueError("refined mode needs an endpoint")
        if self.max_retries < 0 or self.max_in_flight < 1 or self.timeout <= 0:
            raise ValueError("invalid refiner limits")


@dataclass(frozen=True)
class RefineResult:
    caption: str
    mode: str  # offline | refined | fallback:transport | fallback:format | fallback:validation


class _FormatError(ValueError):
    pass


def _extract(payload) -> str:
    try:
        text = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise _FormatError(f"unexpected response shape: {exc!r}") from None
    if not isinstance(text, str) or not text.strip():
        raise _FormatError("empty assistant message")
    return text.strip()


def refine(
    draft: CaptionDraft,
    cfg: RefinerConfig,
    points: Iterable[str] = (),
    numbers: Iterable[str] = (),
    client=None,
) -> RefineResult:
    """Ask a chat-completion endpoint to rewrite ``draft``; fall back to the draft on failure.

    The refined text must still mention every point name and numeric value,
    otherwise the offline draft is kept and the fallback reason recorded.
    """
    fallback = draft.text()
    if cfg.mode == "offline":
        return RefineResult(fallback, "offline")
    import httpx

    headers = {"Content-Type": "application/json"}
    key = os.environ.get(cfg.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": cfg.instruction},
            {"role": "user", "content": fallback},
        ],
    }
    own_client = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    reason = "transport"
    try:
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout)
                resp.raise_for_status()
                text = _extract(resp.json())
            except httpx.HTTPError as exc:
                reason = "transport"
                logger.warning("refiner request failed (attempt %d): %s", attempt + 1, exc)
                continue
            except (ValueError, _FormatError) as exc:
                reason = "format"
                logger.warning("refiner returned a malformed response (attempt %d): %s", attempt + 1, exc)
                continue
            missing = missing_mentions(text, points, numbers)
            if missing:
                logger.warning("refined caption drops %s; keeping offline draft", ", ".join(missing))
                return RefineResult(fallback, "fallback:validation")
            return RefineResult(text, "refined")
    finally:
        if own_client:
            client.close()
    return RefineResult(fallback, f"fallback:{reason}")
