"""Hard-assignment EM over Viterbi parses."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .grammar import Grammar, GrammarError, WeightedPlan, check_valid, prune
from .parser import viterbi_parse
from .structure import collapse_duplicates, initialize_probabilities

logger = logging.getLogger(__name__)

MONOTONICITY_SLACK = 1e-7


class UnparsablePlanError(ValueError):
    def __init__(self, plan):
        super().__init__(f"plan is not parsable by the grammar: {' '.join(plan)}")
        self.plan = tuple(plan)


class MonotonicityError(ArithmeticError):
    """Weighted log-likelihood decreased between EM iterations."""


@dataclass(frozen=True)
class EMConfig:
    tol: float = 1e-6
    max_iters: int = 200
    prune_eps: float = 1e-6
    restarts: int = 1
    seed: int = 0


@dataclass
class CountTable:
    """Weighted usage counts of schemas (by index) and tasks in chosen parses."""

    schema_counts: Dict[int, float] = field(default_factory=lambda: defaultdict(float))
    task_counts: Dict[str, float] = field(default_factory=lambda: defaultdict(float))

    def schema(self, grammar: Grammar, head: str, body: Tuple[str, ...]) -> float:
        for i in grammar.by_head.get(head, ()):
            if grammar.schemas[i].body == tuple(body):
                return self.schema_counts.get(i, 0.0)
        raise KeyError((head, body))


@dataclass
class EMReport:
    iterations: int = 0
    log_likelihoods: List[float] = field(default_factory=list)
    converged: bool = False
    pruned_schemas: int = 0
    restart: int = 0

    def to_csv(self) -> str:
        rows = ["iteration,log_likelihood"]
        rows += [f"{i},{ll!r}" for i, ll in enumerate(self.log_likelihoods)]
        return "\n".join(rows) + "\n"


def em_estep_counts(grammar: Grammar, plans: Sequence[WeightedPlan]) -> Tuple[CountTable, float]:
    """Counts from each plan's most probable parse, scaled by plan weight."""
    table = CountTable()
    total = 0.0
    for plan, weight in plans:
        tree = viterbi_parse(grammar, plan)
        if tree is None:
            raise UnparsablePlanError(plan)
        total += weight * tree.log_prob
        for node in tree.root.nodes():
            table.schema_counts[node.schema] += weight
            table.task_counts[node.task] += weight
    return table, total


def mstep(grammar: Grammar, counts: CountTable) -> Grammar:
    """Relative-frequency update; tasks unused this round keep their probabilities."""
    thetas = []
    for i, s in enumerate(grammar.schemas):
        denom = counts.task_counts.get(s.head, 0.0)
        if denom > 0.0:
            thetas.append(counts.schema_counts.get(i, 0.0) / denom)
        else:
            thetas.append(s.theta)
    return grammar.with_thetas(thetas)


def _run(grammar: Grammar, plans: Sequence[WeightedPlan], config: EMConfig) -> Tuple[Grammar, EMReport]:
    report = EMReport()
    counts, ll = em_estep_counts(grammar, plans)
    report.log_likelihoods.append(ll)
    for _ in range(config.max_iters):
        grammar = mstep(grammar, counts)
        counts, new_ll = em_estep_counts(grammar, plans)
        report.iterations += 1
        report.log_likelihoods.append(new_ll)
        if new_ll < ll - MONOTONICITY_SLACK:
            raise MonotonicityError(
                f"log-likelihood fell from {ll!r} to {new_ll!r} at iteration {report.iterations}"
            )
        improvement = (new_ll - ll) / abs(ll) if ll != 0.0 else 0.0
        ll = new_ll
        if improvement < config.tol:
            report.converged = True
            break
    return grammar, report


def em_fit(
    grammar: Grammar, plans: Sequence[WeightedPlan], config: EMConfig = EMConfig()
) -> Tuple[Grammar, EMReport]:
    """Fit schema probabilities to weighted plans by hard-assignment EM.

    After convergence, schemas below ``config.prune_eps`` are removed, the
    affected tasks renormalized, and unreachable tasks dropped.  With
    ``restarts > 1`` further runs start from fresh random initializations
    and the run with the highest final log-likelihood is kept.
    """
    check_valid(grammar)
    plans = collapse_duplicates(plans)
    if not plans:
        raise ValueError("em_fit needs at least one plan")
    for plan, weight in plans:
        if not weight > 0:
            raise ValueError(f"plan weights must be positive, got {weight!r}")
        if viterbi_parse(grammar, plan) is None:
            raise UnparsablePlanError(plan)

    best: Optional[Tuple[Grammar, EMReport]] = None
    for r in range(max(1, config.restarts)):
        start = grammar if r == 0 else initialize_probabilities(grammar, config.seed * 1_000_003 + r)
        fitted, report = _run(start, plans, config)
        report.restart = r
        logger.debug("restart %d: %d iterations, ll=%r", r, report.iterations, report.log_likelihoods[-1])
        if best is None or report.log_likelihoods[-1] > best[1].log_likelihoods[-1]:
            best = (fitted, report)
    fitted, report = best

    kept = [s for s in fitted.schemas if s.theta >= config.prune_eps]
    report.pruned_schemas = len(fitted.schemas) - len(kept)
    pruned = prune(Grammar(fitted.primitives, fitted.tasks, kept))
    if not pruned.by_head.get(pruned.top):
        raise GrammarError("pruning removed every schema of the top task")
    return pruned, report


def weighted_log_likelihood(grammar: Grammar, plans: Sequence[WeightedPlan]) -> float:
    return em_estep_counts(grammar, plans)[1]


def log_likelihood_is_monotone(values: Sequence[float], slack: float = MONOTONICITY_SLACK) -> bool:
    return all(b >= a - slack for a, b in zip(values, values[1:]))
