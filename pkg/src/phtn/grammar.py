"""pHTN data model: tasks, primitives and CNF reduction schemas.

A grammar is an immutable value.  Symbols are plain strings; whether a
symbol is a primitive action or a task is decided by membership in
``Grammar.primitives`` / ``Grammar.tasks``.  The first task is the top
level task.
"""
from __future__ import annotations

import bisect
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

SUM_TOLERANCE = 1e-9
DEFAULT_MAX_DEPTH = 64
DEFAULT_MAX_LENGTH = 4096

Plan = Tuple[str, ...]


class GrammarError(ValueError):
    """Raised when a grammar cannot be used for the requested operation."""


class WeightedPlan(NamedTuple):
    plan: Plan
    weight: float = 1.0


def valid_token(token: str) -> bool:
    return (
        bool(token)
        and token.isprintable()
        and not any(ch.isspace() for ch in token)
        and "," not in token
        and "->" not in token
    )


@dataclass(frozen=True)
class Schema:
    """One reduction ``head -> body`` with probability ``theta``.

    ``body`` is either a single primitive or a pair of tasks.
    """

    head: str
    body: Tuple[str, ...]
    theta: float = 0.0

    @property
    def is_primitive(self) -> bool:
        return len(self.body) == 1

    @property
    def is_recursive(self) -> bool:
        return self.head in self.body


@dataclass(frozen=True)
class Grammar:
    primitives: Tuple[str, ...]
    tasks: Tuple[str, ...]
    schemas: Tuple[Schema, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "schemas", tuple(self.schemas))

    @property
    def top(self) -> str:
        if not self.tasks:
            raise GrammarError("grammar has no tasks")
        return self.tasks[0]

    @cached_property
    def task_set(self) -> frozenset:
        return frozenset(self.tasks)

    @cached_property
    def primitive_set(self) -> frozenset:
        return frozenset(self.primitives)

    @cached_property
    def by_head(self) -> Dict[str, List[int]]:
        """Schema indices grouped by head, in schema order."""
        groups: Dict[str, List[int]] = defaultdict(list)
        for i, schema in enumerate(self.schemas):
            groups[schema.head].append(i)
        return dict(groups)

    def schemas_for(self, head: str) -> List[Schema]:
        return [self.schemas[i] for i in self.by_head.get(head, ())]

    def with_thetas(self, thetas: Sequence[float]) -> "Grammar":
        if len(thetas) != len(self.schemas):
            raise GrammarError("theta vector length does not match schema count")
        return replace(
            self,
            schemas=tuple(replace(s, theta=float(t)) for s, t in zip(self.schemas, thetas)),
        )

    def same_as(self, other: "Grammar", tol: float = 0.0) -> bool:
        """Equality up to task order (except the top) and schema order."""
        if self.top != other.top:
            return False
        if set(self.primitives) != set(other.primitives) or self.task_set != other.task_set:
            return False
        mine = {(s.head, s.body): s.theta for s in self.schemas}
        theirs = {(s.head, s.body): s.theta for s in other.schemas}
        if mine.keys() != theirs.keys():
            return False
        return all(abs(mine[k] - theirs[k]) <= tol for k in mine)

    def __repr__(self) -> str:
        return (
            f"Grammar(top={self.top!r}, primitives={len(self.primitives)}, "
            f"tasks={len(self.tasks)}, schemas={len(self.schemas)})"
        )


def validate(grammar: Grammar) -> List[str]:
    """Return every invariant violation found in ``grammar`` (empty if valid)."""
    problems: List[str] = []
    names = list(grammar.primitives) + list(grammar.tasks)
    seen = set()
    for name in names:
        if not valid_token(name):
            problems.append(f"invalid symbol name {name!r}")
        if name in seen:
            problems.append(f"symbol {name!r} declared more than once")
        seen.add(name)
    if not grammar.tasks:
        problems.append("grammar declares no tasks (no top level task)")

    pairs = set()
    for i, s in enumerate(grammar.schemas):
        where = f"schema {i} ({s.head} -> {' '.join(s.body)})"
        if s.head not in grammar.task_set:
            problems.append(f"{where}: head {s.head!r} is not a declared task")
        if len(s.body) == 1:
            if s.body[0] not in grammar.primitive_set:
                problems.append(f"{where}: undeclared primitive {s.body[0]!r}")
        elif len(s.body) == 2:
            for sym in s.body:
                if sym not in grammar.task_set:
                    problems.append(f"{where}: undeclared task {sym!r}")
        else:
            problems.append(f"{where}: body must be one primitive or two tasks")
        if not (0.0 <= s.theta <= 1.0) or math.isnan(s.theta):
            problems.append(f"{where}: theta {s.theta!r} outside [0, 1]")
        key = (s.head, s.body)
        if key in pairs:
            problems.append(f"{where}: duplicate schema")
        pairs.add(key)

    for head, idx in grammar.by_head.items():
        total = sum(grammar.schemas[i].theta for i in idx)
        if abs(total - 1.0) > SUM_TOLERANCE:
            problems.append(f"task {head!r}: schema probabilities sum to {total!r}, not 1")
    return problems


def check_valid(grammar: Grammar) -> Grammar:
    problems = validate(grammar)
    if problems:
        raise GrammarError("invalid grammar: " + "; ".join(problems))
    return grammar


def normalize(grammar: Grammar) -> Grammar:
    """Divide every schema probability by the total of its head."""
    totals: Dict[str, float] = defaultdict(float)
    for s in grammar.schemas:
        totals[s.head] += s.theta
    for head, total in totals.items():
        if not total > 0.0:
            raise GrammarError(f"task {head!r} has no positive probability mass to normalize")
    return grammar.with_thetas([s.theta / totals[s.head] for s in grammar.schemas])


def reachable_tasks(grammar: Grammar, positive_only: bool = False) -> List[str]:
    """Tasks reachable from the top, in breadth-first order."""
    order = [grammar.top]
    seen = {grammar.top}
    i = 0
    while i < len(order):
        for s in grammar.schemas_for(order[i]):
            if positive_only and s.theta <= 0.0:
                continue
            if len(s.body) == 2:
                for sym in s.body:
                    if sym not in seen:
                        seen.add(sym)
                        order.append(sym)
        i += 1
    return order


def productive_tasks(grammar: Grammar) -> set:
    """Tasks that derive at least one finite primitive string."""
    productive = set()
    changed = True
    while changed:
        changed = False
        for s in grammar.schemas:
            if s.head in productive:
                continue
            if len(s.body) == 1 or all(sym in productive for sym in s.body):
                productive.add(s.head)
                changed = True
    return productive


def prune(grammar: Grammar) -> Grammar:
    """Drop unproductive and unreachable tasks together with their schemas.

    Probabilities of surviving heads are renormalized.  The top task is kept
    even if it becomes empty so callers can detect the failure.
    """
    g = grammar
    while True:
        good = productive_tasks(g)
        schemas = [
            s for s in g.schemas
            if s.head in good and all(sym in good or sym in g.primitive_set for sym in s.body)
        ]
        g2 = Grammar(g.primitives, [t for t in g.tasks if t in good or t == g.top], schemas)
        live = set(reachable_tasks(g2))
        g3 = Grammar(
            g2.primitives,
            [t for t in g2.tasks if t in live],
            [s for s in g2.schemas if s.head in live],
        )
        if g3.schemas and all(s.theta >= 0 for s in g3.schemas):
            totals: Dict[str, float] = defaultdict(float)
            for s in g3.schemas:
                totals[s.head] += s.theta
            if all(v > 0 for v in totals.values()):
                g3 = normalize(g3)
        if len(g3.schemas) == len(g.schemas) and len(g3.tasks) == len(g.tasks):
            return g3
        g = g3


class _Sampler:
    """Precomputed cumulative distributions for top-down generation."""

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self.choices: Dict[str, Tuple[List[float], List[Tuple[str, ...]]]] = {}
        for head, idx in grammar.by_head.items():
            cum, bodies, acc = [], [], 0.0
            for i in idx:
                s = grammar.schemas[i]
                if s.theta <= 0.0:
                    continue
                acc += s.theta
                cum.append(acc)
                bodies.append(s.body)
            if bodies:
                self.choices[head] = ([c / acc for c in cum], bodies)

    def draw(self, rng: random.Random, max_depth: int, max_length: int) -> Optional[Plan]:
        out: List[str] = []
        stack = [(self.grammar.top, 0)]
        task_set = self.grammar.task_set
        while stack:
            sym, depth = stack.pop()
            if sym not in task_set:
                out.append(sym)
                if len(out) > max_length:
                    return None
                continue
            if depth > max_depth:
                return None
            entry = self.choices.get(sym)
            if entry is None:
                raise GrammarError(f"task {sym!r} has no schema with positive probability")
            cum, bodies = entry
            body = bodies[min(bisect.bisect_right(cum, rng.random()), len(bodies) - 1)]
            for child in reversed(body):
                stack.append((child, depth + 1))
            if len(stack) + len(out) > max_length:
                return None
        return tuple(out)


def sample_plan(
    grammar: Grammar,
    seed: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_length: int = DEFAULT_MAX_LENGTH,
) -> Optional[Plan]:
    """Generate one plan top-down from ``grammar``.

    Returns ``None`` when the derivation exceeds ``max_depth`` (or grows past
    ``max_length`` actions); callers resample with a fresh seed.
    """
    check_valid(grammar)
    return _Sampler(grammar).draw(random.Random(seed), max_depth, max_length)


def sample_plans(
    grammar: Grammar,
    count: int,
    seed: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_length: int = DEFAULT_MAX_LENGTH,
    max_attempts: Optional[int] = None,
) -> List[Plan]:
    """Draw ``count`` plans from one seeded stream, resampling truncated derivations."""
    check_valid(grammar)
    sampler = _Sampler(grammar)
    rng = random.Random(seed)
    limit = max_attempts if max_attempts is not None else 100 * count + 1000
    plans: List[Plan] = []
    attempts = 0
    while len(plans) < count:
        attempts += 1
        if attempts > limit:
            raise GrammarError(
                f"could not draw {count} plans within depth {max_depth} "
                f"after {limit} attempts"
            )
        plan = sampler.draw(rng, max_depth, max_length)
        if plan is not None:
            plans.append(plan)
    return plans


def plan_distribution(grammar: Grammar, max_plans: int = 100_000) -> Dict[Plan, float]:
    """Exact distribution over derivable plans of a non-recursive grammar.

    Probabilities sum over all derivations of a plan.  Recursive grammars
    (infinite plan sets) raise ``GrammarError``.
    """
    memo: Dict[str, Dict[Plan, float]] = {}
    active = set()

    def dist(task: str) -> Dict[Plan, float]:
        if task in memo:
            return memo[task]
        if task in active:
            raise GrammarError(f"task {task!r} is recursive; plan set is infinite")
        active.add(task)
        out: Dict[Plan, float] = defaultdict(float)
        for s in grammar.schemas_for(task):
            if s.theta <= 0.0:
                continue
            if len(s.body) == 1:
                out[s.body] += s.theta
                continue
            left, right = dist(s.body[0]), dist(s.body[1])
            if len(left) * len(right) + len(out) > max_plans:
                raise GrammarError("too many derivable plans to enumerate")
            for lp, lw in left.items():
                for rp, rw in right.items():
                    out[lp + rp] += s.theta * lw * rw
        active.discard(task)
        memo[task] = dict(out)
        return memo[task]

    return dist(grammar.top)


def as_plan(tokens: Iterable[str]) -> Plan:
    plan = tuple(tokens)
    if not plan:
        raise ValueError("a plan must contain at least one action")
    return plan


def describe(grammar: Grammar) -> str:
    lines = [
        "primitives: " + " ".join(grammar.primitives),
        "tasks: " + " ".join(grammar.tasks),
    ]
    for s in grammar.schemas:
        lines.append(f"{s.head} -> {' '.join(s.body)} , {s.theta!r}")
    return "\n".join(lines)
