"""Learning preferences from choices made under varying feasibility.

Observation records are clustered by set inclusion of their feasible sets,
clusters sharing plans are merged by an averaged scale factor so that
preference odds carry across situations, and one pHTN is learned per
remaining cluster.  The resulting ensemble answers pairwise queries by
majority vote.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .em import EMConfig, em_fit
from .grammar import Grammar, Plan, WeightedPlan
from .parser import plan_log_likelihood
from .structure import SHConfig, hypothesize
from .util import derive_seed

DEFAULT_EPSILON = 1e-3


class Preference(str, enum.Enum):
    P = "p"
    Q = "q"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ObservationRecord:
    """A chosen plan together with the feasible alternatives it was chosen from."""

    chosen: Plan
    feasible: Tuple[Plan, ...]

    def __post_init__(self):
        chosen = tuple(self.chosen)
        feasible = tuple(dict.fromkeys(tuple(p) for p in self.feasible))
        if not chosen:
            raise ValueError("chosen plan must be non-empty")
        if chosen not in feasible:
            feasible = (chosen,) + feasible
        if any(not p for p in feasible):
            raise ValueError("feasible plans must be non-empty")
        object.__setattr__(self, "chosen", chosen)
        object.__setattr__(self, "feasible", feasible)


@dataclass
class Cluster:
    weights: Dict[Plan, float] = field(default_factory=dict)

    def plans(self) -> List[Plan]:
        return list(self.weights)

    def weighted_plans(self) -> List[WeightedPlan]:
        return [WeightedPlan(p, w) for p, w in self.weights.items()]

    def __contains__(self, plan) -> bool:
        return tuple(plan) in self.weights

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class PreferenceEnsemble:
    models: Tuple[Grammar, ...]

    def __len__(self) -> int:
        return len(self.models)


def cluster_records(records: Iterable[ObservationRecord], epsilon: float = DEFAULT_EPSILON) -> List[Cluster]:
    """Collapse records from comparable situations into weighted clusters.

    A record joins the first cluster (in creation order) whose plan set
    contains, or is contained in, its feasible set.  Unseen feasible plans
    enter at weight ``epsilon``; the chosen plan gains one count.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    clusters: List[Cluster] = []
    keysets: List[set] = []
    for rec in records:
        feasible = set(rec.feasible)
        target = None
        for idx, keys in enumerate(keysets):
            if feasible <= keys or feasible >= keys:
                target = idx
                break
        if target is None:
            clusters.append(Cluster({p: epsilon for p in rec.feasible}))
            keysets.append(set(rec.feasible))
            target = len(clusters) - 1
        else:
            c = clusters[target]
            for p in rec.feasible:
                if p not in c.weights:
                    c.weights[p] = epsilon
                    keysets[target].add(p)
        c = clusters[target]
        if c.weights[rec.chosen] >= 1:
            c.weights[rec.chosen] += 1
        else:
            c.weights[rec.chosen] = 1.0
    return clusters


def scale_factor(c: Cluster, d: Cluster) -> float:
    """Mean of ``w_c(p) / w_d(p)`` over the plans both clusters share."""
    shared = [p for p in c.weights if p in d.weights]
    if not shared:
        raise ValueError("clusters do not intersect")
    return sum(c.weights[p] / d.weights[p] for p in shared) / len(shared)


def merge_into(c: Cluster, d: Cluster) -> Cluster:
    scale = scale_factor(c, d)
    merged = dict(c.weights)
    for p, w in d.weights.items():
        if p not in merged:
            merged[p] = w * scale
    return Cluster(merged)


def merge_clusters(clusters: Sequence[Cluster]) -> List[Cluster]:
    """Transitively close preferences until no two clusters share a plan.

    Each round merges the intersecting pair with the largest intersection
    (ties: earliest pair in creation order); the later cluster is rescaled
    into the earlier one, whose shared weights are kept.
    """
    alive: List[Optional[Cluster]] = [Cluster(dict(c.weights)) for c in clusters]
    keys = [set(c.weights) for c in alive]
    k = len(alive)
    if k < 2:
        return [c for c in alive if c is not None]
    sizes = np.full((k, k), -1, dtype=np.int64)
    for i in range(k):
        for j in range(i + 1, k):
            sizes[i, j] = len(keys[i] & keys[j])
    while True:
        flat = int(np.argmax(sizes))
        i, j = divmod(flat, k)
        if sizes[i, j] <= 0:
            break
        alive[i] = merge_into(alive[i], alive[j])
        keys[i] = set(alive[i].weights)
        alive[j] = None
        sizes[j, :] = -1
        sizes[:, j] = -1
        for m in range(k):
            if m == i or alive[m] is None:
                continue
            a, b = (m, i) if m < i else (i, m)
            sizes[a, b] = len(keys[m] & keys[i])
    return [c for c in alive if c is not None]


def rescale(records: Iterable[ObservationRecord], epsilon: float = DEFAULT_EPSILON) -> List[Cluster]:
    return merge_clusters(cluster_records(records, epsilon))


def learn_cluster(cluster: Cluster, sh_config: SHConfig, em_config: EMConfig) -> Grammar:
    plans = cluster.weighted_plans()
    grammar = hypothesize(plans, sh_config)
    fitted, _ = em_fit(grammar, plans, em_config)
    return fitted


def learn_ensemble(
    records: Sequence[ObservationRecord],
    sh_config: SHConfig = SHConfig(),
    em_config: EMConfig = EMConfig(),
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
) -> PreferenceEnsemble:
    """Cluster, merge, then learn one pHTN per final cluster."""
    if not records:
        raise ValueError("learn_ensemble needs at least one record")
    models = []
    for idx, cluster in enumerate(rescale(records, epsilon)):
        s = derive_seed(seed, idx)
        models.append(learn_cluster(cluster, replace(sh_config, seed=s), replace(em_config, seed=s)))
    return PreferenceEnsemble(tuple(models))


def votes(ensemble: PreferenceEnsemble, p: Sequence[str], q: Sequence[str]) -> Tuple[int, int]:
    """Number of models strictly favouring ``p`` and ``q`` respectively."""
    for_p = for_q = 0
    for model in ensemble.models:
        lp = plan_log_likelihood(model, p)
        if lp is None:
            continue
        lq = plan_log_likelihood(model, q)
        if lq is None or lp == lq:
            continue
        if lp > lq:
            for_p += 1
        else:
            for_q += 1
    return for_p, for_q


def prefer(ensemble: PreferenceEnsemble, p: Sequence[str], q: Sequence[str]) -> Preference:
    """Majority vote over the ensemble; abstentions and ties give ``UNKNOWN``."""
    for_p, for_q = votes(ensemble, p, q)
    if for_p > for_q:
        return Preference.P
    if for_q > for_p:
        return Preference.Q
    return Preference.UNKNOWN


def reconstruct_prior(odds: Mapping[Tuple[Plan, Plan], float], tol: float = 1e-6) -> Dict[Plan, float]:
    """Distribution whose pairwise odds ``P(a)/P(b)`` match ``odds[(a, b)]``.

    Missing directions are filled by reciprocals; every pair must be
    covered and the table transitively consistent within ``tol`` (relative).
    """
    table: Dict[Tuple[Plan, Plan], float] = {}
    plans: List[Plan] = []
    for (a, b), o in odds.items():
        if not o > 0 or math.isinf(o):
            raise ValueError(f"odds must be positive and finite, got {o!r}")
        for x in (a, b):
            if x not in plans:
                plans.append(x)
        table[(a, b)] = float(o)
        table.setdefault((b, a), 1.0 / float(o))
    for a in plans:
        table[(a, a)] = 1.0
        for b in plans:
            if (a, b) not in table:
                raise ValueError(f"odds table is missing the pair {a!r}, {b!r}")
    for a in plans:
        for b in plans:
            for c in plans:
                lhs, rhs = table[(a, c)], table[(a, b)] * table[(b, c)]
                if abs(lhs - rhs) > tol * max(abs(lhs), abs(rhs)):
                    raise ValueError(f"inconsistent odds around {a!r}, {b!r}, {c!r}")
    return {a: 1.0 / (1.0 + sum(table[(b, a)] for b in plans if b != a)) for a in plans}
