"""Rule-based clause selector.

Complexity rules (clauses per image and which clause difficulties may appear):

=========  ==============  ===========================================
Easy       exactly 1       Easy only
Medium     exactly 2       Easy / Medium, one Hard with small probability
Hard       3..5 (uniform)  any difficulty
=========  ==============  ===========================================
"""

from __future__ import annotations

import enum
import itertools
import string
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .catalog import Catalog, ClauseDef, ClauseInstance, Difficulty, parse_instance

__all__ = [
    "Complexity",
    "SelectionRules",
    "PointPool",
    "ClauseGroup",
    "SelectionExhausted",
    "draw_count",
    "draw_difficulty_sequence",
    "is_compatible",
    "bind_arguments",
    "select_group",
    "group_from_texts",
    "check_group",
]


class Complexity(str, enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    @classmethod
    def parse(cls, text: str) -> "Complexity":
        return cls(text.strip().lower())


class SelectionExhausted(RuntimeError):
    """No compatible clause could be found within the redraw budget."""


@dataclass(frozen=True)
class SelectionRules:
    hard_in_medium_prob: float = 0.1
    hard_count_min: int = 3
    hard_count_max: int = 5
    max_redraws: int = 32

    def __post_init__(self):
        if not 0.0 <= self.hard_in_medium_prob <= 1.0:
            raise ValueError("hard_in_medium_prob must lie in [0, 1]")
        if not 3 <= self.hard_count_min <= self.hard_count_max:
            raise ValueError("hard counts need 3 <= hard_count_min <= hard_count_max")
        if self.max_redraws < 1:
            raise ValueError("max_redraws must be positive")

    def count_choices(self, complexity: Complexity) -> tuple[int, ...]:
        if complexity is Complexity.EASY:
            return (1,)
        if complexity is Complexity.MEDIUM:
            return (2,)
        return tuple(range(self.hard_count_min, self.hard_count_max + 1))

    @staticmethod
    def allowed_difficulties(complexity: Complexity) -> frozenset[Difficulty]:
        if complexity is Complexity.EASY:
            return frozenset({Difficulty.EASY})
        return frozenset(Difficulty)


def _name_sequence() -> Iterator[str]:
    letters = string.ascii_uppercase
    yield from letters
    for k in itertools.count(1):
        for ch in letters:
            yield f"{ch}{k}"


@dataclass
class PointPool:
    """Ordered set of point names defined so far."""

    names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def fresh(self, k: int) -> list[str]:
        taken = set(self.names)
        out = []
        for name in _name_sequence():
            if name not in taken:
                out.append(name)
                if len(out) == k:
                    return out
        return out  # k == 0

    def extend(self, names: Iterable[str]) -> None:
        for n in names:
            if n in self.names:
                raise ValueError(f"point {n} already defined")
            self.names.append(n)


@dataclass(frozen=True)
class ClauseGroup:
    complexity: Complexity
    instances: tuple[ClauseInstance, ...]
    final_pool: tuple[str, ...]

    def texts(self) -> list[str]:
        return [inst.text() for inst in self.instances]


def draw_count(complexity: Complexity, rng: np.random.Generator, rules: SelectionRules = SelectionRules()) -> int:
    choices = rules.count_choices(complexity)
    if len(choices) == 1:
        return choices[0]
    return int(choices[rng.integers(len(choices))])


_EM = (Difficulty.EASY, Difficulty.MEDIUM)
_ALL = tuple(Difficulty)


def draw_difficulty_sequence(
    complexity: Complexity,
    count: int,
    rng: np.random.Generator,
    rules: SelectionRules = SelectionRules(),
) -> list[Difficulty]:
    if complexity is Complexity.EASY:
        return [Difficulty.EASY] * count
    if complexity is Complexity.MEDIUM:
        seq = [_EM[i] for i in rng.integers(2, size=count)]
        if rng.random() < rules.hard_in_medium_prob:
            seq[int(rng.integers(count))] = Difficulty.HARD
        return seq
    return [_ALL[i] for i in rng.integers(3, size=count)]


def _redraw(complexity: Complexity, current: Difficulty, rng: np.random.Generator) -> Difficulty:
    if complexity is Complexity.EASY:
        return Difficulty.EASY
    if complexity is Complexity.MEDIUM:
        # the Hard slot keeps its tier so the Hard rate stays at hard_in_medium_prob
        if current is Difficulty.HARD:
            return current
        return _EM[int(rng.integers(2))]
    return _ALL[int(rng.integers(3))]


def is_compatible(defn: ClauseDef, pool: Sequence[str] | PointPool) -> bool:
    return len(pool) >= defn.n_refs


def bind_arguments(defn: ClauseDef, pool: PointPool, rng: np.random.Generator) -> ClauseInstance:
    """Bind a clause against ``pool`` and extend the pool with its new points."""
    if not is_compatible(defn, pool):
        raise ValueError(f"{defn.id} needs {defn.n_refs} points, pool has {len(pool)}")
    refs = iter([pool.names[i] for i in rng.permutation(len(pool))[: defn.n_refs]]) if defn.n_refs else iter(())
    fresh = iter(pool.fresh(len(defn.new_params)))
    args: dict = {}
    for p in defn.params:
        if p.kind == "ref":
            args[p.name] = next(refs)
        elif p.kind == "new":
            args[p.name] = next(fresh)
        else:
            grid = p.grid()
            args[p.name] = float(grid[int(rng.integers(len(grid)))])
    pool.extend(args[p.name] for p in defn.new_params)
    return ClauseInstance(defn.id, args)


def select_group(
    complexity: Complexity,
    catalog: Catalog,
    rules: SelectionRules,
    rng: np.random.Generator,
) -> ClauseGroup:
    """Draw a difficulty-conforming, prerequisite-compatible clause group."""
    count = draw_count(complexity, rng, rules)
    tiers = draw_difficulty_sequence(complexity, count, rng, rules)
    by_tier = {d: catalog.by_difficulty(d) for d in Difficulty}
    pool = PointPool()
    instances = []
    for slot, tier in enumerate(tiers):
        for _ in range(rules.max_redraws):
            candidates = [c for c in by_tier[tier] if c.n_refs <= len(pool)]
            if candidates:
                break
            tier = _redraw(complexity, tier, rng)
        else:
            raise SelectionExhausted(
                f"no compatible {tier.label} clause for slot {slot} of a {complexity.value} group "
                f"after {rules.max_redraws} redraws"
            )
        defn = candidates[int(rng.integers(len(candidates)))]
        instances.append(bind_arguments(defn, pool, rng))
    return ClauseGroup(complexity, tuple(instances), tuple(pool.names))


def infer_complexity(n_instances: int) -> Complexity:
    if n_instances <= 1:
        return Complexity.EASY
    if n_instances == 2:
        return Complexity.MEDIUM
    return Complexity.HARD


def check_group(group: ClauseGroup, catalog: Catalog, rules: SelectionRules | None = None) -> list[str]:
    """List violations of the group invariants (prefix closure, count and tier rules).

    With ``rules=None`` only structural checks are made; this is how explicit
    (hand written) groups are validated.
    """
    problems = []
    defined: list[str] = []
    for i, inst in enumerate(group.instances):
        defn = catalog.get(inst.clause_id)
        for p in defn.params:
            value = inst.args.get(p.name)
            if p.kind == "ref" and value not in defined:
                problems.append(f"instance {i} ({inst.text()}): {value} is not defined earlier")
            elif p.kind == "new" and value in defined:
                problems.append(f"instance {i} ({inst.text()}): {value} is already defined")
            elif p.is_numeric and not p.contains(value):
                problems.append(f"instance {i} ({inst.text()}): {p.name} out of range")
        defined += [inst.args[p.name] for p in defn.new_params]
    if group.instances and not catalog.get(group.instances[0].clause_id).is_independent:
        problems.append("first instance is not independent")
    if rules is not None:
        n = len(group.instances)
        if n not in rules.count_choices(group.complexity):
            problems.append(f"{group.complexity.value} group has {n} clauses")
        tiers = [catalog.get(i.clause_id).difficulty for i in group.instances]
        allowed = rules.allowed_difficulties(group.complexity)
        if any(t not in allowed for t in tiers):
            problems.append("clause difficulty not allowed for this complexity")
        if group.complexity is Complexity.MEDIUM and tiers.count(Difficulty.HARD) > 1:
            problems.append("more than one Hard clause in a Medium group")
    return problems


def group_from_texts(texts: Iterable[str], catalog: Catalog, complexity: Complexity | None = None) -> ClauseGroup:
    """Build a group from explicit clause texts (``"segment A B"``, ``"midpoint M A B"``...)."""
    instances = tuple(parse_instance(t, catalog) for t in texts if t.strip())
    if not instances:
        raise ValueError("no clauses given")
    pool: list[str] = []
    for inst in instances:
        defn = catalog.get(inst.clause_id)
        pool += [inst.args[p.name] for p in defn.new_params]
    group = ClauseGroup(complexity or infer_complexity(len(instances)), instances, tuple(pool))
    problems = check_group(group, catalog)
    if problems:
        raise ValueError("; ".join(problems))
    return group
