"""Oracle-based evaluation: random pHTNs, sampled KL divergence, simulated
feasibility constraints and the pairwise preference game."""
from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .em import EMConfig
from .grammar import Grammar, GrammarError, Plan, Schema, normalize, sample_plans
from .parser import plan_log_likelihood
from .rescale import (
    Cluster,
    ObservationRecord,
    Preference,
    PreferenceEnsemble,
    learn_cluster,
    votes,
)
from .structure import SHConfig
from .util import derive_seed, rng as make_rng


@dataclass(frozen=True)
class OracleSpec:
    """Shape of a random oracle.

    Tasks form a random tree grown from the top.  Inner tasks draw 1 to
    ``max_alternatives`` pair schemas covering their children, weighted by
    ``alternative_weights``.  Leaves get ``leaf_alternatives`` primitive
    schemas, or a drawn count when it is ``None``.  ``primitives=None``
    gives every leaf schema its own primitive.
    """

    n: int
    recursive: bool = False
    recursive_fraction: float = 0.1
    primitives: Optional[int] = None
    seed: int = 0
    max_alternatives: int = 3
    alternative_weights: Tuple[float, ...] = (0.5, 0.3, 0.2)
    leaf_alternatives: Optional[int] = 1
    recursive_theta_scale: float = 0.5

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an oracle needs at least 2 tasks")
        if not 0.0 <= self.recursive_fraction < 1.0:
            raise ValueError("recursive_fraction must lie in [0, 1)")
        if self.max_alternatives < 1 or (self.leaf_alternatives is not None and self.leaf_alternatives < 1):
            raise ValueError("alternative counts must be positive")


def gen_oracle(spec: OracleSpec) -> Grammar:
    """Random pHTN arranged as a binary and-or tree rooted at the top task."""
    r = random.Random(derive_seed(spec.seed, 0x0AC1E))
    n = spec.n
    tasks = [f"N{i}" for i in range(n)]
    children: Dict[int, List[int]] = {}
    frontier = [0]
    placed = 1
    leaves: List[int] = []
    weights = list(spec.alternative_weights[: spec.max_alternatives])
    weights += [weights[-1] if weights else 1.0] * (spec.max_alternatives - len(weights))
    alt_count: Dict[int, int] = {}
    while frontier:
        i = frontier.pop(r.randrange(len(frontier)))
        remaining = n - placed
        if remaining == 0:
            leaves.append(i)
            continue
        k = r.choices(range(1, spec.max_alternatives + 1), weights=weights)[0]
        m = r.randint(2, min(2 * k, remaining)) if remaining >= 2 else 1
        kids = list(range(placed, placed + m))
        placed += m
        children[i] = kids
        alt_count[i] = k
        frontier.extend(kids)
    leaves.sort()

    schemas: List[Schema] = []
    for i in sorted(children):
        kids = children[i]
        k = alt_count[i]
        slots = list(kids) + [r.choice(kids) for _ in range(max(0, 2 * k - len(kids)))]
        r.shuffle(slots)
        bodies = []
        for a in range(0, len(slots) - 1, 2):
            body = (tasks[slots[a]], tasks[slots[a + 1]])
            if body not in bodies:
                bodies.append(body)
        for body in bodies:
            schemas.append(Schema(tasks[i], body, r.random() or 0.5))

    leaf_counts = [
        spec.leaf_alternatives or r.choices(range(1, spec.max_alternatives + 1), weights=weights)[0]
        for _ in leaves
    ]
    n_prims = spec.primitives if spec.primitives is not None else sum(leaf_counts)
    pool = [f"a{j}" for j in range(max(1, n_prims))]
    used: List[str] = []
    offset = 0
    for i, k in zip(leaves, leaf_counts):
        if spec.primitives is None:
            picks = pool[offset:offset + k]
            offset += k
        else:
            picks = r.sample(pool, min(k, len(pool)))
        for a in picks:
            schemas.append(Schema(tasks[i], (a,), r.random() or 0.5))
            if a not in used:
                used.append(a)

    if spec.recursive and spec.recursive_fraction > 0:
        base = len(schemas)
        wanted = max(1, round(spec.recursive_fraction * base / (1.0 - spec.recursive_fraction)))
        existing = {(s.head, s.body) for s in schemas}
        added = 0
        attempts = 0
        while added < wanted and attempts < 100 * wanted:
            attempts += 1
            z = r.randrange(n - 1)
            x = r.randrange(z + 1, n)
            body = (tasks[z], tasks[x]) if r.random() < 0.5 else (tasks[x], tasks[z])
            if (tasks[z], body) in existing:
                continue
            existing.add((tasks[z], body))
            schemas.append(Schema(tasks[z], body, spec.recursive_theta_scale * (r.random() or 0.5)))
            added += 1

    primitives = sorted(used, key=lambda a: int(a[1:]))
    return normalize(Grammar(primitives, tasks, schemas))


class KLEstimate(NamedTuple):
    kl: float
    overlap: float


class DisjointSupportError(ValueError):
    def __init__(self, message: str = "sampled supports do not intersect"):
        super().__init__(message)
        self.overlap = 0.0


def kl_divergence(p: Dict[Plan, float], q: Dict[Plan, float]) -> float:
    """``sum p log(p/q)`` in nats over the support of ``p``; assumes ``q > 0`` there."""
    return max(0.0, math.fsum(pv * math.log(pv / q[k]) for k, pv in p.items() if pv > 0))


def restrict_and_renormalize(p: Dict[Plan, float], q: Dict[Plan, float]):
    shared = [k for k in p if k in q and p[k] > 0 and q[k] > 0]
    if not shared:
        raise DisjointSupportError()
    zp = math.fsum(p[k] for k in shared)
    zq = math.fsum(q[k] for k in shared)
    return {k: p[k] / zp for k in shared}, {k: q[k] / zq for k in shared}


def estimate_kl(oracle: Grammar, learned: Grammar, samples_per_model: int, seed: int) -> KLEstimate:
    """Sampled KL divergence of ``learned`` from ``oracle`` over shared plans.

    Both models are sampled, their empirical distributions restricted to the
    plans seen from both and renormalized.  Also returns the Jaccard overlap
    of the two sampled supports.
    """
    if samples_per_model < 1:
        raise ValueError("samples_per_model must be positive")
    a = Counter(sample_plans(oracle, samples_per_model, derive_seed(seed, 1)))
    b = Counter(sample_plans(learned, samples_per_model, derive_seed(seed, 2)))
    union = len(set(a) | set(b))
    shared = [k for k in a if k in b]
    if not shared:
        raise DisjointSupportError()
    p1, p2 = restrict_and_renormalize(
        {k: float(v) for k, v in a.items()}, {k: float(v) for k, v in b.items()}
    )
    return KLEstimate(kl_divergence(p1, p2), len(shared) / union)


def conciseness_ratio(oracle: Grammar, learned: Grammar) -> float:
    return len(learned.tasks) / len(oracle.tasks)


@dataclass(frozen=True)
class FeasibilityModel:
    """Plan universe ordered least-preferred first, with power-law mass."""

    universe: Tuple[Plan, ...]
    probabilities: Tuple[float, ...]
    exponent: float = 1.0

    def __post_init__(self):
        if not self.universe:
            raise ValueError("plan universe is empty")
        if len(self.universe) != len(self.probabilities):
            raise ValueError("universe and probabilities differ in length")
        if abs(math.fsum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError("feasibility probabilities must sum to 1")

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probabilities, dtype=float)


def power_law(size: int, exponent: float = 1.0) -> np.ndarray:
    w = np.arange(1, size + 1, dtype=float) ** (-exponent)
    return w / w.sum()


def build_feasibility(
    oracle: Grammar, universe_samples: Optional[int] = None, seed: int = 0, exponent: float = 1.0
) -> FeasibilityModel:
    """Universe from oracle samples: de-duplicated, reversed, power-law weighted."""
    count = universe_samples if universe_samples is not None else 100 * len(oracle.tasks)
    samples = sample_plans(oracle, count, derive_seed(seed, 3))
    universe = tuple(reversed(list(dict.fromkeys(samples))))
    probs = power_law(len(universe), exponent)
    probs = probs / math.fsum(probs)
    return FeasibilityModel(universe, tuple(float(x) for x in probs), exponent)


def _choice_probabilities(loglik: Sequence[float]) -> np.ndarray:
    top = max(loglik)
    w = np.exp(np.asarray(loglik, dtype=float) - top)
    return w / w.sum()


def simulate_records(
    oracle: Grammar,
    universe_samples: Optional[int] = None,
    record_count: int = 1,
    seed: int = 0,
    feasibility: Optional[FeasibilityModel] = None,
    exponent: float = 1.0,
) -> List[ObservationRecord]:
    """Training records drawn under random feasibility constraints.

    Each feasible set is a power-law sample (without replacement) of size
    ``clamp(round(|U| * |z| / 2), 2, |U|)`` with ``z`` standard normal; the
    chosen plan is picked in proportion to its oracle likelihood.
    """
    model = feasibility or build_feasibility(oracle, universe_samples, seed, exponent)
    size = len(model.universe)
    if size < 2:
        raise ValueError("plan universe holds fewer than 2 distinct plans")
    loglik = []
    for plan in model.universe:
        ll = plan_log_likelihood(oracle, plan)
        if ll is None:
            raise GrammarError("oracle cannot parse its own sample")
        loglik.append(ll)
    g = make_rng(seed, 4)
    p = model.p
    records = []
    for _ in range(record_count):
        k = int(min(size, max(2, round(size * abs(g.standard_normal()) / 2))))
        idx = g.choice(size, size=k, replace=False, p=p)
        probs = _choice_probabilities([loglik[i] for i in idx])
        pick = idx[int(g.choice(len(idx), p=probs))]
        records.append(ObservationRecord(model.universe[pick], tuple(model.universe[i] for i in idx)))
    return records


@dataclass(frozen=True)
class GameResult:
    pairs: int
    wins: int
    losses: int
    abstentions: int

    @property
    def score(self) -> float:
        return (self.wins - self.losses) / self.pairs if self.pairs else 0.0


def oracle_choice(oracle: Grammar, p: Plan, q: Plan) -> Preference:
    lp, lq = plan_log_likelihood(oracle, p), plan_log_likelihood(oracle, q)
    lp = -math.inf if lp is None else lp
    lq = -math.inf if lq is None else lq
    if lp > lq:
        return Preference.P
    if lq > lp:
        return Preference.Q
    return Preference.UNKNOWN


def play_game(
    oracle: Grammar,
    subject: PreferenceEnsemble,
    pairs: int,
    feasibility: FeasibilityModel,
    seed: int,
    max_redraws: Optional[int] = None,
) -> GameResult:
    """Score ``subject`` against the oracle on random plan pairs.

    Pairs of distinct plans are drawn from the feasibility distribution;
    pairs the oracle cannot separate are redrawn.  Agreement scores +1,
    disagreement -1, abstention 0.
    """
    if pairs < 1:
        raise ValueError("pairs must be at least 1")
    if len(feasibility.universe) < 2:
        raise ValueError("plan universe holds fewer than 2 distinct plans")
    g = make_rng(seed, 5)
    p = feasibility.p
    oracle_ll: Dict[Plan, float] = {}

    def ll(plan):
        if plan not in oracle_ll:
            v = plan_log_likelihood(oracle, plan)
            oracle_ll[plan] = -math.inf if v is None else v
        return oracle_ll[plan]

    limit = max_redraws if max_redraws is not None else 1000 * pairs
    wins = losses = abstain = 0
    tested = redraws = 0
    while tested < pairs:
        i, j = g.choice(len(p), size=2, replace=False, p=p)
        a, b = feasibility.universe[int(i)], feasibility.universe[int(j)]
        la, lb = ll(a), ll(b)
        if la == lb:
            redraws += 1
            if redraws > limit:
                raise RuntimeError("oracle ties on too many plan pairs")
            continue
        truth = Preference.P if la > lb else Preference.Q
        for_a, for_b = votes(subject, a, b)
        answer = Preference.P if for_a > for_b else Preference.Q if for_b > for_a else Preference.UNKNOWN
        tested += 1
        if answer is Preference.UNKNOWN:
            abstain += 1
        elif answer is truth:
            wins += 1
        else:
            losses += 1
    return GameResult(pairs, wins, losses, abstain)


def baseline_cluster(records: Sequence[ObservationRecord]) -> Cluster:
    """One cluster weighting every chosen plan by how often it was observed."""
    counts: Dict[Plan, float] = {}
    for rec in records:
        counts[rec.chosen] = counts.get(rec.chosen, 0.0) + 1.0
    return Cluster(counts)


def learn_baseline(
    records: Sequence[ObservationRecord],
    sh_config: SHConfig = SHConfig(),
    em_config: EMConfig = EMConfig(),
) -> PreferenceEnsemble:
    return PreferenceEnsemble((learn_cluster(baseline_cluster(records), sh_config, em_config),))
