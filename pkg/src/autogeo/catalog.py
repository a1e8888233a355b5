"""Geometry clause catalog: types, document parser/formatter and validation.

A catalog document is a UTF-8 text file made of clause records::

    # comment lines start with '#'
    version: 1

    clause midpoint
      name: midpoint of a segment
      category: property
      difficulty: easy
      params: M:new A:ref B:ref
      constraint: midpoint(M, A, B)
      sketch: segment(A, B)
      sketch: point(M)
      template: {M} is the midpoint of segment {A}{B}.
    end

Field reference (one ``key: value`` per line, indentation is free):

``name``, ``category``, ``difficulty``
    single-valued; category is one of ``object property transform numeric``,
    difficulty one of ``easy medium hard``.
``params``
    whitespace separated ``name:kind[:lo:hi[:step]]``; kind is ``new``
    (point created by the clause), ``ref`` (prerequisite point), ``len``
    (length, scene units, default ``1:12:1``) or ``deg`` (angle in degrees,
    default ``20:160:5``).
``constraint`` (repeatable)
    ``collinear(A,B,C)``, ``midpoint(M,A,B)``, ``dist_eq(A,B,C,D)``,
    ``dist_const(A,B,v)``, ``angle_const(A,B,C,t)``, ``parallel(A,B,C,D)``,
    ``perpendicular(A,B,C,D)``, ``on_circle(P,O,A)``, ``convex(P1,...,Pn)``.
``sketch`` (repeatable)
    ``segment(A,B[,dashed])``, ``circle(O,A[,dashed])``,
    ``arc(O,A,B[,dashed])``, ``point(P)``, ``angle(A,B,C,t)``,
    ``length(A,B,v)``.
``template`` (repeatable)
    caption text; ``{P}`` inserts a point name, ``{len:v}`` a length value
    and ``{deg:t}`` an angle value with a degree sign.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union

logger = logging.getLogger(__name__)

CATEGORIES = ("object", "property", "transform", "numeric")
POINT_KINDS = ("new", "ref")
NUMERIC_KINDS = ("len", "deg")
DEFAULT_RANGES = {"len": (1.0, 12.0, 1.0), "deg": (20.0, 160.0, 5.0)}
RECOMMENDED_TEMPLATES = 20

# argument kinds per primitive; "pt" point, "len"/"deg" numeric params
PRIMITIVES: dict[str, Optional[tuple[str, ...]]] = {
    "collinear": ("pt", "pt", "pt"),
    "midpoint": ("pt", "pt", "pt"),
    "dist_eq": ("pt", "pt", "pt", "pt"),
    "dist_const": ("pt", "pt", "len"),
    "angle_const": ("pt", "pt", "pt", "deg"),
    "parallel": ("pt", "pt", "pt", "pt"),
    "perpendicular": ("pt", "pt", "pt", "pt"),
    "on_circle": ("pt", "pt", "pt"),
    "convex": None,  # three or more points
}
DIRECTIVES: dict[str, tuple[str, ...]] = {
    "segment": ("pt", "pt"),
    "circle": ("pt", "pt"),
    "arc": ("pt", "pt", "pt"),
    "point": ("pt",),
    "angle": ("pt", "pt", "pt", "deg"),
    "length": ("pt", "pt", "len"),
}
STROKE_DIRECTIVES = ("segment", "circle", "arc")
LINE_STYLES = ("solid", "dashed")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")
_TERM = re.compile(r"\s*([a-z_]+)\s*\((.*)\)\s*\Z")
PLACEHOLDER = re.compile(r"\{(?:(len|deg):)?([^{}:]*)\}")


class Difficulty(enum.IntEnum):
    EASY = 0
    MEDIUM = 1
    HARD = 2

    @classmethod
    def parse(cls, text: str) -> "Difficulty":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown difficulty {text!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


class CatalogError(ValueError):
    """Base class for catalog and clause-text errors."""


class CatalogSyntaxError(CatalogError):
    def __init__(self, message: str, line: int, column: int = 1, source: str = "<catalog>"):
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"{source}:{line}:{column}: {message}")


class CatalogSemanticError(CatalogError):
    def __init__(self, message: str, clause_id: Optional[str] = None):
        self.clause_id = clause_id
        prefix = f"clause {clause_id!r}: " if clause_id else ""
        super().__init__(prefix + message)


class ClauseTextError(CatalogError):
    """Raised by :func:`parse_instance` for unknown ids, arity and range problems."""


def format_number(value: float) -> str:
    """Render a number without trailing zeros (``60.0 -> '60'``, ``2.50 -> '2.5'``)."""
    value = float(value)
    if value == int(value):
        return str(int(value))
    return f"{value:.10g}"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    lo: Optional[float] = None
    hi: Optional[float] = None
    step: Optional[float] = None

    @property
    def is_point(self) -> bool:
        return self.kind in POINT_KINDS

    @property
    def is_numeric(self) -> bool:
        return self.kind in NUMERIC_KINDS

    def grid(self) -> list[float]:
        """Admissible numeric values, ``lo, lo+step, ..., <= hi``."""
        if not self.is_numeric:
            raise TypeError(f"param {self.name} is not numeric")
        n = int((self.hi - self.lo) / self.step + 1e-9)
        return [self.lo + k * self.step for k in range(n + 1)]

    def contains(self, value: float) -> bool:
        return self.lo - 1e-12 <= value <= self.hi + 1e-12

    def to_text(self) -> str:
        if self.is_point:
            return f"{self.name}:{self.kind}"
        return ":".join([self.name, self.kind] + [format_number(v) for v in (self.lo, self.hi, self.step)])


@dataclass(frozen=True)
class ConstraintForm:
    primitive: str
    args: tuple[str, ...]

    def to_text(self) -> str:
        return f"{self.primitive}({', '.join(self.args)})"


@dataclass(frozen=True)
class SketchDirective:
    kind: str
    args: tuple[str, ...]
    dashed: bool = False

    @property
    def shape(self) -> Optional[str]:
        if self.kind == "segment":
            return "line"
        if self.kind in ("circle", "arc"):
            return "curve"
        return None

    def to_text(self) -> str:
        args = list(self.args)
        if self.dashed:
            args.append("dashed")
        return f"{self.kind}({', '.join(args)})"


@dataclass(frozen=True)
class ClauseDef:
    id: str
    name: str
    category: str
    difficulty: Difficulty
    params: tuple[ParamSpec, ...]
    constraints: tuple[ConstraintForm, ...] = ()
    sketch: tuple[SketchDirective, ...] = ()
    templates: tuple[str, ...] = ()

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def ref_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.kind == "ref")

    @property
    def new_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.kind == "new")

    @property
    def numeric_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.is_numeric)

    @property
    def n_refs(self) -> int:
        return len(self.ref_params)

    @property
    def is_independent(self) -> bool:
        return self.n_refs == 0

    @property
    def annotated_params(self) -> tuple[str, ...]:
        """Numeric params that end up as visible annotations."""
        return tuple(d.args[-1] for d in self.sketch if d.kind in ("angle", "length"))


@dataclass(frozen=True)
class Catalog:
    clauses: tuple[ClauseDef, ...]
    version: str = "1"
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c.id: c for c in self.clauses})

    def __len__(self) -> int:
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)

    def __contains__(self, clause_id: str) -> bool:
        return clause_id in self._index

    def get(self, clause_id: str) -> ClauseDef:
        try:
            return self._index[clause_id]
        except KeyError:
            raise KeyError(f"unknown clause id {clause_id!r}") from None

    def by_difficulty(self, difficulty: Difficulty) -> tuple[ClauseDef, ...]:
        return tuple(c for c in self.clauses if c.difficulty == difficulty)

    def counts(self) -> dict[str, int]:
        return {d.label: len(self.by_difficulty(d)) for d in Difficulty}


# Bound clauses ---------------------------------------------------------------

@dataclass(frozen=True)
class ClauseInstance:
    """A clause with positionally bound arguments.

    ``args`` maps param name to a point name (str) or a numeric value (float),
    in the clause's param order.
    """

    clause_id: str
    args: dict

    @property
    def points(self) -> dict[str, str]:
        return {k: v for k, v in self.args.items() if isinstance(v, str)}

    @property
    def numbers(self) -> dict[str, float]:
        return {k: v for k, v in self.args.items() if not isinstance(v, str)}

    def text(self) -> str:
        parts = [self.clause_id]
        parts += [v if isinstance(v, str) else format_number(v) for v in self.args.values()]
        return " ".join(parts)

    def __hash__(self):
        return hash((self.clause_id, tuple(self.args.items())))


def parse_instance(text: str, catalog: Catalog) -> ClauseInstance:
    """Parse ``<clause-id> <arg> ...`` into a :class:`ClauseInstance`."""
    tokens = text.split()
    if not tokens:
        raise ClauseTextError("empty clause text")
    clause_id, values = tokens[0], tokens[1:]
    if clause_id not in catalog:
        raise ClauseTextError(f"unknown clause id {clause_id!r}")
    defn = catalog.get(clause_id)
    if len(values) != len(defn.params):
        raise ClauseTextError(
            f"{clause_id}: expected {len(defn.params)} arguments "
            f"({' '.join(p.name for p in defn.params)}), got {len(values)}"
        )
    args: dict = {}
    for spec, raw in zip(defn.params, values):
        if spec.is_point:
            if not _IDENT.match(raw):
                raise ClauseTextError(f"{clause_id}: {raw!r} is not a point name")
            args[spec.name] = raw
        else:
            try:
                value = float(raw)
            except ValueError:
                raise ClauseTextError(f"{clause_id}: {spec.name}={raw!r} is not a number") from None
            if not spec.contains(value):
                raise ClauseTextError(
                    f"{clause_id}: {spec.name}={raw} outside "
                    f"[{format_number(spec.lo)}, {format_number(spec.hi)}]"
                )
            args[spec.name] = value
    points = list(args[p.name] for p in defn.params if p.is_point)
    if len(set(points)) != len(points):
        raise ClauseTextError(f"{clause_id}: repeated point name in {text!r}")
    return ClauseInstance(clause_id, args)


# Validation -------------------------------------------------------------------

def validate_clause(defn: ClauseDef) -> list[str]:
    """Return every violated clause invariant; an empty list means valid."""
    problems: list[str] = []
    if not _IDENT.match(defn.id or ""):
        problems.append(f"invalid id {defn.id!r}")
    if defn.category not in CATEGORIES:
        problems.append(f"unknown category {defn.category!r}")
    if not isinstance(defn.difficulty, Difficulty):
        problems.append(f"invalid difficulty {defn.difficulty!r}")

    kinds: dict[str, str] = {}
    for p in defn.params:
        if not _IDENT.match(p.name):
            problems.append(f"invalid param name {p.name!r}")
        if p.name in kinds:
            problems.append(f"duplicate param {p.name!r}")
        kinds[p.name] = p.kind
        if p.kind not in POINT_KINDS + NUMERIC_KINDS:
            problems.append(f"param {p.name}: unknown kind {p.kind!r}")
        elif p.is_numeric:
            if p.lo is None or p.hi is None or p.step is None:
                problems.append(f"param {p.name}: missing range")
            elif p.lo > p.hi or p.step <= 0:
                problems.append(f"param {p.name}: empty range [{p.lo}, {p.hi}]")
            elif p.kind == "deg" and not (0 < p.lo and p.hi < 180):
                problems.append(f"param {p.name}: angle range must lie inside (0, 180)")

    if not defn.new_params and not defn.sketch:
        problems.append("clause produces nothing (no new point and no sketch)")

    def check_args(where: str, args: Iterable[str], sig: tuple[str, ...]):
        for arg, want in zip(args, sig):
            if arg not in kinds:
                problems.append(f"{where}: undeclared param {arg!r}")
                continue
            have = kinds[arg]
            if want == "pt" and have not in POINT_KINDS:
                problems.append(f"{where}: {arg!r} must be a point param")
            elif want in NUMERIC_KINDS and have != want:
                problems.append(f"{where}: {arg!r} must be a {want} param")

    for c in defn.constraints:
        where = f"constraint {c.to_text()}"
        if c.primitive not in PRIMITIVES:
            problems.append(f"{where}: unknown primitive {c.primitive!r}")
            continue
        sig = PRIMITIVES[c.primitive]
        if sig is None:
            sig = ("pt",) * len(c.args)
            if len(c.args) < 3:
                problems.append(f"{where}: needs at least 3 points")
        elif len(c.args) != len(sig):
            problems.append(f"{where}: expected {len(sig)} arguments")
        check_args(where, c.args, sig)

    for d in defn.sketch:
        where = f"sketch {d.to_text()}"
        if d.kind not in DIRECTIVES:
            problems.append(f"{where}: unknown directive {d.kind!r}")
            continue
        sig = DIRECTIVES[d.kind]
        if len(d.args) != len(sig):
            problems.append(f"{where}: expected {len(sig)} arguments")
        if d.dashed and d.kind not in STROKE_DIRECTIVES:
            problems.append(f"{where}: only strokes take a line style")
        check_args(where, d.args, sig)

    if not defn.templates:
        problems.append("templates empty")
    point_names = {p.name for p in defn.params if p.is_point}
    annotated = set(defn.annotated_params)
    for i, tpl in enumerate(defn.templates):
        used = set()
        for m in PLACEHOLDER.finditer(tpl):
            unit, name = m.group(1), m.group(2)
            if name not in kinds:
                problems.append(f"template {i}: undeclared placeholder {m.group(0)!r}")
            elif unit is None and kinds[name] not in POINT_KINDS:
                problems.append(f"template {i}: {{{name}}} needs a len:/deg: prefix")
            elif unit is not None and kinds[name] != unit:
                problems.append(f"template {i}: {m.group(0)!r} does not match param kind {kinds[name]}")
            used.add(name)
        missing = (point_names | annotated) - used
        if missing:
            problems.append(f"template {i}: does not mention {', '.join(sorted(missing))}")
    return problems


def validate_catalog(catalog: Catalog) -> None:
    """Raise :class:`CatalogSemanticError` on the first invalid clause or catalog invariant."""
    seen: set[str] = set()
    for defn in catalog.clauses:
        if defn.id in seen:
            raise CatalogSemanticError("duplicate clause id", defn.id)
        seen.add(defn.id)
        problems = validate_clause(defn)
        if problems:
            raise CatalogSemanticError("; ".join(problems), defn.id)
    if not any(c.is_independent for c in catalog.by_difficulty(Difficulty.EASY)):
        raise CatalogSemanticError("no independent Easy clause")


def lint_catalog(catalog: Catalog) -> list[str]:
    """Non-fatal conformance warnings (currently: fewer than 20 templates)."""
    warnings = []
    for defn in catalog.clauses:
        if len(defn.templates) < RECOMMENDED_TEMPLATES:
            warnings.append(
                f"{defn.id}: {len(defn.templates)} templates (recommended {RECOMMENDED_TEMPLATES})"
            )
    return warnings


# Document parsing -------------------------------------------------------------

_SINGLE_FIELDS = ("name", "category", "difficulty", "params")
_LIST_FIELDS = ("constraint", "sketch", "template")


def _parse_term(text: str, line: int, col: int, source: str) -> tuple[str, list[str]]:
    m = _TERM.match(text)
    if not m:
        raise CatalogSyntaxError(f"expected name(arg, ...), got {text!r}", line, col, source)
    args = [a.strip() for a in m.group(2).split(",")] if m.group(2).strip() else []
    for a in args:
        if not _IDENT.match(a):
            raise CatalogSyntaxError(f"bad argument {a!r} in {text!r}", line, col, source)
    return m.group(1), args


def _parse_param(token: str, line: int, col: int, source: str) -> ParamSpec:
    parts = token.split(":")
    if len(parts) < 2:
        raise CatalogSyntaxError(f"param {token!r} needs name:kind", line, col, source)
    name, kind = parts[0], parts[1]
    if kind in POINT_KINDS:
        if len(parts) != 2:
            raise CatalogSyntaxError(f"point param {token!r} takes no range", line, col, source)
        return ParamSpec(name, kind)
    if kind not in NUMERIC_KINDS:
        raise CatalogSyntaxError(f"unknown param kind {kind!r}", line, col, source)
    lo, hi, step = DEFAULT_RANGES[kind]
    nums = parts[2:]
    if len(nums) not in (0, 2, 3):
        raise CatalogSyntaxError(f"param {token!r} expects name:kind[:lo:hi[:step]]", line, col, source)
    try:
        vals = [float(v) for v in nums]
    except ValueError:
        raise CatalogSyntaxError(f"non-numeric range in {token!r}", line, col, source) from None
    if len(vals) >= 2:
        lo, hi = vals[0], vals[1]
    if len(vals) == 3:
        step = vals[2]
    return ParamSpec(name, kind, lo, hi, step)


def parse_catalog(source: str, name: str = "<catalog>") -> Catalog:
    """Parse a catalog document, returning a validated :class:`Catalog`."""
    version: Optional[str] = None
    clauses: list[ClauseDef] = []
    current: Optional[dict] = None
    start_line = 0

    for lineno, raw in enumerate(source.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        if current is None:
            if stripped.startswith("version:"):
                if version is not None or clauses:
                    raise CatalogSyntaxError("version must appear once, before clauses", lineno, col, name)
                version = stripped.split(":", 1)[1].strip()
                continue
            head = stripped.split()
            if head[0] != "clause" or len(head) != 2:
                raise CatalogSyntaxError(f"expected 'clause <id>', got {stripped!r}", lineno, col, name)
            current = {"id": head[1], "constraint": [], "sketch": [], "template": []}
            start_line = lineno
            continue
        if stripped == "end":
            clauses.append(_build_clause(current, start_line, name))
            current = None
            continue
        key, sep, value = stripped.partition(":")
        key = key.strip()
        value = value.strip()
        if not sep:
            raise CatalogSyntaxError(f"expected 'key: value', got {stripped!r}", lineno, col, name)
        vcol = col + len(stripped) - len(stripped.partition(":")[2].lstrip())
        if key in _SINGLE_FIELDS:
            if key in current:
                raise CatalogSyntaxError(f"duplicate field {key!r}", lineno, col, name)
            if key == "params":
                current[key] = [(_parse_param(tok, lineno, vcol, name)) for tok in value.split()]
            else:
                current[key] = value
        elif key == "constraint":
            prim, args = _parse_term(value, lineno, vcol, name)
            current[key].append(ConstraintForm(prim, tuple(args)))
        elif key == "sketch":
            kind, args = _parse_term(value, lineno, vcol, name)
            dashed = False
            if args and args[-1] in LINE_STYLES:
                dashed = args.pop() == "dashed"
            current[key].append(SketchDirective(kind, tuple(args), dashed))
        elif key == "template":
            current[key].append(value)
        else:
            raise CatalogSyntaxError(f"unknown field {key!r}", lineno, col, name)
    if current is not None:
        raise CatalogSyntaxError(f"clause {current['id']!r} is missing 'end'", start_line, 1, name)

    catalog = Catalog(tuple(clauses), version or "1")
    validate_catalog(catalog)
    return catalog


def _build_clause(rec: dict, line: int, source: str) -> ClauseDef:
    for key in _SINGLE_FIELDS:
        if key not in rec:
            raise CatalogSyntaxError(f"clause {rec['id']!r} lacks field {key!r}", line, 1, source)
    try:
        difficulty = Difficulty.parse(rec["difficulty"])
    except ValueError as exc:
        raise CatalogSemanticError(str(exc), rec["id"]) from None
    return ClauseDef(
        id=rec["id"],
        name=rec["name"],
        category=rec["category"],
        difficulty=difficulty,
        params=tuple(rec["params"]),
        constraints=tuple(rec["constraint"]),
        sketch=tuple(rec["sketch"]),
        templates=tuple(rec["template"]),
    )


def format_catalog(catalog: Catalog) -> str:
    """Serialize a catalog; ``parse_catalog(format_catalog(c)) == c``."""
    out = [f"version: {catalog.version}", ""]
    for c in catalog.clauses:
        out.append(f"clause {c.id}")
        out.append(f"  name: {c.name}")
        out.append(f"  category: {c.category}")
        out.append(f"  difficulty: {c.difficulty.label}")
        out.append(f"  params: {' '.join(p.to_text() for p in c.params)}")
        out += [f"  constraint: {k.to_text()}" for k in c.constraints]
        out += [f"  sketch: {d.to_text()}" for d in c.sketch]
        out += [f"  template: {t}" for t in c.templates]
        out.append("end")
        out.append("")
    return "\n".join(out)


REFERENCE_CATALOG = "reference.catalog"


def load_catalog(path: Union[str, Path, None] = None) -> Catalog:
    """Load a catalog file, or the bundled reference catalog when ``path`` is None."""
    if path is None:
        text = resources.files("autogeo.data").joinpath(REFERENCE_CATALOG).read_text(encoding="utf-8")
        return parse_catalog(text, name=REFERENCE_CATALOG)
    path = Path(path)
    return parse_catalog(path.read_text(encoding="utf-8"), name=str(path))


_reference: Optional[Catalog] = None


def reference_catalog() -> Catalog:
    global _reference
    if _reference is None:
        _reference = load_catalog()
    return _reference
