"""Greedy structure hypothesizer.

Invents tasks bottom-up until every training plan rewrites to the top task:
primitives are wrapped first, then each round either closes a short
sequence under the top task, adds a simple recursive schema, or factors out
the most frequent adjacent pair.
"""
from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .grammar import Grammar, Schema, WeightedPlan, normalize, prune

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class SHConfig:
    """Acceptance thresholds for recursive schemas.

    A repetition is accepted when its mean run length reaches
    ``max(min_rec_len, min_rec_len_factor * mean sequence length)`` and its
    occurrences make up at least ``min_rec_freq`` of the remaining sequences
    (both weighted).
    """

    min_rec_len: float = 3.0
    min_rec_len_factor: float = 0.25
    min_rec_freq: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class RecursionCandidate:
    anchor: str
    repeated: str
    direction: str
    count: float
    mean_length: float

    @property
    def score(self) -> float:
        return self.count * self.mean_length


class RewriteState:
    """Working sequences plus the schemas hypothesized so far.

    Sequences are kept with their multiplicity weights and original corpus
    order.  A sequence that reduces to the top task is dropped.
    """

    def __init__(self, sequences: Sequence[Tuple[Sequence[str], float]] = ()):
        self.sequences: List[List[str]] = [list(s) for s, _ in sequences]
        self.weights: List[float] = [float(w) for _, w in sequences]

    def live(self):
        return zip(self.sequences, self.weights)

    def __len__(self) -> int:
        return len(self.sequences)

    def drop(self, index: int) -> None:
        del self.sequences[index]
        del self.weights[index]


def most_frequent_pair(state: RewriteState) -> Tuple[Tuple[str, str], float]:
    """Adjacent ordered pair with the highest weighted count.

    Occurrences of the same pair are counted without overlap, scanning left
    to right, so ``a a a a`` holds two ``(a, a)``.  Ties go to the
    lexicographically smallest pair.
    """
    counts: Dict[Tuple[str, str], float] = defaultdict(float)
    for seq, w in state.live():
        last_start: Dict[Tuple[str, str], int] = {}
        for i in range(len(seq) - 1):
            pair = (seq[i], seq[i + 1])
            if last_start.get(pair, -2) == i - 1:
                continue
            last_start[pair] = i
            counts[pair] += w
    if not counts:
        raise ValueError("no sequence of length >= 2 to count pairs in")
    best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return best


def _runs(seq: List[str]):
    """Maximal runs as (symbol, start, length)."""
    i = 0
    while i < len(seq):
        j = i
        while j + 1 < len(seq) and seq[j + 1] == seq[i]:
            j += 1
        yield seq[i], i, j - i + 1
        i = j + 1


def recursion_candidates(state: RewriteState) -> Dict[Tuple[str, str, str], Tuple[float, float]]:
    """Weighted (occurrences, total run length) per (anchor, repeated, direction)."""
    stats: Dict[Tuple[str, str, str], List[float]] = defaultdict(lambda: [0.0, 0.0])
    for seq, w in state.live():
        runs = list(_runs(seq))
        for r, (sym, _, length) in enumerate(runs):
            if r > 0:
                anchor = runs[r - 1][0]
                entry = stats[(anchor, sym, LEFT)]
                entry[0] += w
                entry[1] += w * length
            if r + 1 < len(runs):
                anchor = runs[r + 1][0]
                entry = stats[(anchor, sym, RIGHT)]
                entry[0] += w
                entry[1] += w * length
    return {k: (v[0], v[1]) for k, v in stats.items()}


def best_simple_recursion(state: RewriteState, config: SHConfig = SHConfig()) -> Optional[RecursionCandidate]:
    """Strongest ``z s s s`` / ``s s s z`` repetition, if it passes both thresholds.

    Left repetitions (anchor before the run) yield ``Z -> Z X``; right
    repetitions yield ``Z -> X Z``.
    """
    total_weight = sum(state.weights)
    if total_weight <= 0:
        return None
    mean_seq_len = sum(len(s) * w for s, w in state.live()) / total_weight
    min_len = max(config.min_rec_len, config.min_rec_len_factor * mean_seq_len)

    best: Optional[RecursionCandidate] = None
    best_key = None
    for (anchor, sym, direction), (count, total_len) in recursion_candidates(state).items():
        if count <= 0:
            continue
        cand = RecursionCandidate(anchor, sym, direction, count, total_len / count)
        key = (-cand.score, direction, anchor, sym)
        if best_key is None or key < best_key:
            best, best_key = cand, key
    if best is None:
        return None
    if best.mean_length < min_len or best.count / total_weight < config.min_rec_freq:
        return None
    return best


def initialize_probabilities(grammar: Grammar, seed: int) -> Grammar:
    """Uniform(0, 1) draw per schema from a seeded stream, normalized per task."""
    rng = random.Random(seed)
    draws = []
    for _ in grammar.schemas:
        u = rng.random()
        while u == 0.0:
            u = rng.random()
        draws.append(u)
    return normalize(grammar.with_thetas(draws))


class _Builder:
    def __init__(self, plans: Sequence[WeightedPlan]):
        self.used_names = set()
        self.counters: Dict[str, int] = defaultdict(int)
        self.primitives: List[str] = []
        self.wrapper: Dict[str, str] = {}
        self.tasks: List[str] = []
        self.schemas: List[Schema] = []
        self.bodies = set()
        # tasks whose derivations were copied onto the top task
        self.aliases: set = set()
        for plan, _ in plans:
            for a in plan:
                if a not in self.wrapper:
                    self.wrapper[a] = ""
                    self.primitives.append(a)
                    self.used_names.add(a)
        self.top = "T" if "T" not in self.used_names else self.fresh("T")
        self.used_names.add(self.top)
        self.tasks.append(self.top)
        for a in self.primitives:
            z = self.fresh("A")
            self.wrapper[a] = z
            self.add(z, (a,))

    def fresh(self, prefix: str) -> str:
        while True:
            self.counters[prefix] += 1
            name = f"{prefix}{self.counters[prefix]}"
            if name not in self.used_names:
                self.used_names.add(name)
                return name

    def add(self, head: str, body: Tuple[str, ...]) -> bool:
        if (head, body) in self.bodies:
            return False
        if head not in self.tasks:
            self.tasks.append(head)
        self.bodies.add((head, body))
        self.schemas.append(Schema(head, body, 1.0))
        if head in self.aliases:
            self.add(self.top, body)
        return True

    def alias_to_top(self, task: str) -> None:
        self.aliases.add(task)
        for s in list(self.schemas):
            if s.head == task:
                self.add(self.top, s.body)

    def rewrite_rules(self):
        return [s for s in self.schemas if len(s.body) == 2 and s.head != self.top]

    def top_pairs(self):
        return {s.body for s in self.schemas if s.head == self.top and len(s.body) == 2}


def _apply(seq: List[str], schema: Schema) -> Tuple[List[str], bool]:
    x, y = schema.body
    head = schema.head
    if head == x:  # Z -> Z X: absorb runs to the right of Z
        out: List[str] = []
        changed = False
        for sym in seq:
            if sym == y and out and out[-1] == head:
                changed = True
                continue
            out.append(sym)
        return out, changed
    if head == y:  # Z -> X Z: absorb runs to the left of Z
        out = []
        changed = False
        for sym in reversed(seq):
            if sym == x and out and out[-1] == head:
                changed = True
                continue
            out.append(sym)
        out.reverse()
        return out, changed
    out = []
    changed = False
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == x and seq[i + 1] == y:
            out.append(head)
            i += 2
            changed = True
        else:
            out.append(seq[i])
            i += 1
    return out, changed


def _rewrite(builder: _Builder, state: RewriteState) -> None:
    rules = builder.rewrite_rules()
    top_pairs = builder.top_pairs()
    for idx in range(len(state.sequences)):
        seq = state.sequences[idx]
        changed = True
        while changed:
            changed = False
            for rule in rules:
                seq, c = _apply(seq, rule)
                changed = changed or c
        state.sequences[idx] = seq
    keep = []
    for idx, seq in enumerate(state.sequences):
        done = (
            (len(seq) == 1 and (seq[0] == builder.top or seq[0] in builder.aliases))
            or (len(seq) == 2 and tuple(seq) in top_pairs)
        )
        if not done:
            keep.append(idx)
    state.sequences = [state.sequences[i] for i in keep]
    state.weights = [state.weights[i] for i in keep]


def collapse_duplicates(plans: Sequence[WeightedPlan]) -> List[WeightedPlan]:
    """Merge identical plans, summing weights, in first-occurrence order."""
    merged: Dict[Tuple[str, ...], float] = {}
    for plan, weight in plans:
        plan = tuple(plan)
        merged[plan] = merged.get(plan, 0.0) + float(weight)
    return [WeightedPlan(p, w) for p, w in merged.items()]


def hypothesize_structure(plans: Sequence[WeightedPlan], config: SHConfig = SHConfig()) -> Grammar:
    """Schema set covering every plan, with placeholder probabilities of 1."""
    if not plans:
        raise ValueError("cannot hypothesize structure from an empty plan list")
    for plan, weight in plans:
        if not plan:
            raise ValueError("plans must be non-empty")
        if not weight > 0:
            raise ValueError(f"plan weights must be positive, got {weight!r}")
    plans = collapse_duplicates(plans)
    builder = _Builder(plans)
    state = RewriteState([([builder.wrapper[a] for a in p], w) for p, w in plans])
    _rewrite(builder, state)

    while len(state):
        shortest = min(range(len(state)), key=lambda i: (len(state.sequences[i]), i))
        seq = state.sequences[shortest]
        if len(seq) <= 2:
            if len(seq) == 2:
                builder.add(builder.top, tuple(seq))
            else:
                builder.alias_to_top(seq[0])
        else:
            cand = best_simple_recursion(state, config)
            if cand is not None:
                if cand.direction == LEFT:
                    builder.add(cand.anchor, (cand.anchor, cand.repeated))
                else:
                    builder.add(cand.anchor, (cand.repeated, cand.anchor))
            else:
                (x, y), _ = most_frequent_pair(state)
                if not any(s.body == (x, y) for s in builder.rewrite_rules()):
                    builder.add(builder.fresh("S"), (x, y))
        before = [list(s) for s in state.sequences]
        _rewrite(builder, state)
        if [list(s) for s in state.sequences] == before:
            raise RuntimeError("structure hypothesizer made no progress")  # pragma: no cover

    grammar = Grammar(builder.primitives, builder.tasks, builder.schemas)
    return prune(normalize(grammar))


def hypothesize(plans: Sequence[WeightedPlan], config: SHConfig = SHConfig()) -> Grammar:
    """Hypothesize a covering structure and randomly initialize its probabilities."""
    return initialize_probabilities(hypothesize_structure(plans, config), config.seed)


def invented_task_count(grammar: Grammar) -> int:
    return len(grammar.tasks)
