"""Most-probable-parse (Viterbi CYK) for CNF pHTNs, plus a brute-force oracle."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .grammar import Grammar, Plan

NEG_INF = float("-inf")
ENUMERATION_MAX_LENGTH = 12


class ParseLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParseNode:
    """Internal parse vertex covering ``plan[start:end]``."""

    task: str
    schema: int
    start: int
    end: int
    children: Tuple["ParseNode", ...] = ()
    action: Optional[str] = None

    def leaves(self) -> List[str]:
        out: List[str] = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.action is not None:
                out.append(node.action)
            else:
                stack.extend(reversed(node.children))
        return out

    def nodes(self) -> Iterator["ParseNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True)
class ParseTree:
    root: ParseNode
    log_prob: float

    @property
    def root_task(self) -> str:
        return self.root.task

    @property
    def probability(self) -> float:
        return math.exp(self.log_prob)

    def leaves(self) -> Plan:
        return tuple(self.root.leaves())

    def schema_indices(self) -> List[int]:
        return [node.schema for node in self.root.nodes()]

    def signature(self) -> tuple:
        """Hashable structural identity (schema and span of every node)."""
        return tuple((n.schema, n.start, n.end) for n in self.root.nodes())

    def to_text(self) -> str:
        """One node per line, indented by depth: ``task schema-index start-end``.

        Spans are 1-based and inclusive.  Primitive reductions append the action.
        """
        lines = []
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            line = f"{'  ' * depth}{node.task} {node.schema} {node.start + 1}-{node.end}"
            if node.action is not None:
                line += f" {node.action}"
            lines.append(line)
            for child in reversed(node.children):
                stack.append((child, depth + 1))
        return "\n".join(lines)


class CompiledGrammar:
    """Index structures used by the chart parser; built once per grammar."""

    def __init__(self, grammar: Grammar):
        self.grammar = grammar
        self.by_action: Dict[str, List[Tuple[int, str, float]]] = defaultdict(list)
        self.by_pair: Dict[Tuple[str, str], List[Tuple[int, str, float]]] = defaultdict(list)
        self.by_left: Dict[str, List[Tuple[str, int, str, float]]] = defaultdict(list)
        for i, s in enumerate(grammar.schemas):
            if s.theta <= 0.0:
                continue
            lp = math.log(s.theta)
            if len(s.body) == 1:
                self.by_action[s.body[0]].append((i, s.head, lp))
            else:
                self.by_pair[s.body].append((i, s.head, lp))
        for (left, right), rules in self.by_pair.items():
            for i, head, lp in rules:
                self.by_left[left].append((right, i, head, lp))


_compiled_cache: Dict[int, Tuple[Grammar, CompiledGrammar]] = {}


def compile_grammar(grammar: Grammar) -> CompiledGrammar:
    hit = _compiled_cache.get(id(grammar))
    if hit is not None and hit[0] is grammar:
        return hit[1]
    compiled = CompiledGrammar(grammar)
    if len(_compiled_cache) > 256:
        _compiled_cache.clear()
    _compiled_cache[id(grammar)] = (grammar, compiled)
    return compiled


def _fill_chart(compiled: CompiledGrammar, plan: Sequence[str]):
    """Bottom-up chart; ``chart[(i, j)][task] = (log_prob, schema, split)``.

    Ties keep the smaller split point, then the earlier schema.
    """
    n = len(plan)
    chart: Dict[Tuple[int, int], Dict[str, Tuple[float, int, int]]] = {}
    for i, action in enumerate(plan):
        cell: Dict[str, Tuple[float, int, int]] = {}
        for idx, head, lp in compiled.by_action.get(action, ()):
            best = cell.get(head)
            if best is None or lp > best[0] or (lp == best[0] and idx < best[1]):
                cell[head] = (lp, idx, -1)
        if not cell:
            return None
        chart[(i, i + 1)] = cell

    by_left = compiled.by_left
    for length in range(2, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            cell = {}
            for k in range(i + 1, j):
                left_cell = chart.get((i, k))
                right_cell = chart.get((k, j))
                if not left_cell or not right_cell:
                    continue
                for x, (lx, _, _) in left_cell.items():
                    for y, idx, head, lp in by_left.get(x, ()):
                        ry = right_cell.get(y)
                        if ry is None:
                            continue
                        score = lp + lx + ry[0]
                        best = cell.get(head)
                        if (
                            best is None
                            or score > best[0]
                            or (score == best[0] and (k, idx) < (best[2], best[1]))
                        ):
                            cell[head] = (score, idx, k)
            if cell:
                chart[(i, j)] = cell
    return chart


def _build(chart, grammar: Grammar, plan: Sequence[str], task: str, i: int, j: int) -> ParseNode:
    _, idx, k = chart[(i, j)][task]
    schema = grammar.schemas[idx]
    if k < 0:
        return ParseNode(task, idx, i, j, (), plan[i])
    left = _build(chart, grammar, plan, schema.body[0], i, k)
    right = _build(chart, grammar, plan, schema.body[1], k, j)
    return ParseNode(task, idx, i, j, (left, right))


def viterbi_parse(grammar: Grammar, plan: Sequence[str], root: Optional[str] = None) -> Optional[ParseTree]:
    """Most probable parse of ``plan`` rooted at ``root`` (default: the top task).

    Returns ``None`` when no parse with positive probability exists, including
    plans that use actions unknown to the grammar.
    """
    if not plan:
        return None
    root = grammar.top if root is None else root
    chart = _fill_chart(compile_grammar(grammar), plan)
    if chart is None:
        return None
    entry = chart.get((0, len(plan)), {}).get(root)
    if entry is None:
        return None
    return ParseTree(_build(chart, grammar, plan, root, 0, len(plan)), entry[0])


def plan_log_likelihood(grammar: Grammar, plan: Sequence[str]) -> Optional[float]:
    """Log-probability of the most probable parse, or ``None`` if unparsable."""
    if not plan:
        return None
    chart = _fill_chart(compile_grammar(grammar), plan)
    if chart is None:
        return None
    entry = chart.get((0, len(plan)), {}).get(grammar.top)
    return None if entry is None else entry[0]


def _count_parses(grammar: Grammar, plan: Sequence[str]) -> Dict[Tuple[str, int, int], int]:
    counts: Dict[Tuple[str, int, int], int] = defaultdict(int)
    n = len(plan)
    for i, action in enumerate(plan):
        for s in grammar.schemas:
            if s.theta > 0 and s.body == (action,):
                counts[(s.head, i, i + 1)] += 1
    for length in range(2, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            for s in grammar.schemas:
                if s.theta <= 0 or len(s.body) != 2:
                    continue
                total = 0
                for k in range(i + 1, j):
                    total += counts.get((s.body[0], i, k), 0) * counts.get((s.body[1], k, j), 0)
                if total:
                    counts[(s.head, i, j)] += total
    return counts


def enumerate_parses(
    grammar: Grammar, plan: Sequence[str], cap: int = 10_000
) -> List[Tuple[ParseTree, float]]:
    """Every parse of ``plan`` from the top task with its exact probability.

    Exponential; a testing oracle for :func:`viterbi_parse`.  Schemas with
    zero probability are skipped.  Raises ``ParseLimitError`` when the plan
    is longer than 12 actions or more than ``cap`` parses exist.
    """
    plan = tuple(plan)
    if len(plan) > ENUMERATION_MAX_LENGTH:
        raise ParseLimitError(f"plan length {len(plan)} exceeds {ENUMERATION_MAX_LENGTH}")
    if not plan:
        return []
    counts = _count_parses(grammar, plan)
    total = counts.get((grammar.top, 0, len(plan)), 0)
    if total > cap:
        raise ParseLimitError(f"{total} parses exceed cap {cap}")

    def expand(task: str, i: int, j: int) -> List[Tuple[ParseNode, float, float]]:
        out = []
        for idx, s in enumerate(grammar.schemas):
            if s.head != task or s.theta <= 0:
                continue
            if len(s.body) == 1:
                if j == i + 1 and s.body[0] == plan[i]:
                    out.append((ParseNode(task, idx, i, j, (), plan[i]), s.theta, math.log(s.theta)))
                continue
            if j - i < 2:
                continue
            for k in range(i + 1, j):
                if not counts.get((s.body[0], i, k)) or not counts.get((s.body[1], k, j)):
                    continue
                for ln, lprob, llog in expand(s.body[0], i, k):
                    for rn, rprob, rlog in expand(s.body[1], k, j):
                        out.append((
                            ParseNode(task, idx, i, j, (ln, rn)),
                            s.theta * lprob * rprob,
                            math.log(s.theta) + llog + rlog,
                        ))
        return out

    if not total:
        return []
    return [(ParseTree(node, logp), prob) for node, prob, logp in expand(grammar.top, 0, len(plan))]


def check_tree(grammar: Grammar, plan: Sequence[str], tree: ParseTree, tol: float = 1e-9) -> List[str]:
    """Structural problems with ``tree`` as a parse of ``plan`` (empty if sound)."""
    problems = []
    if tree.leaves() != tuple(plan):
        problems.append("leaves do not spell the plan")
    if tree.root.task != grammar.top:
        problems.append("root is not the top task")
    total = 0.0
    for node in tree.root.nodes():
        s = grammar.schemas[node.schema]
        if s.head != node.task:
            problems.append(f"node {node.task} uses schema headed by {s.head}")
        if node.action is not None:
            if s.body != (node.action,):
                problems.append(f"leaf {node.action} does not match schema body {s.body}")
        elif tuple(c.task for c in node.children) != s.body:
            problems.append(f"children of {node.task} do not match schema body {s.body}")
        total += math.log(s.theta) if s.theta > 0 else NEG_INF
    if not abs(total - tree.log_prob) <= tol:
        problems.append(f"log_prob {tree.log_prob} differs from schema sum {total}")
    return problems
