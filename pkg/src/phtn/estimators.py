"""scikit-learn style estimators over plans and observation records."""
from __future__ import annotations

from typing import List, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .em import EMConfig, em_fit
from .grammar import WeightedPlan, sample_plans, valid_token
from .parser import plan_log_likelihood, viterbi_parse
from .rescale import (
    DEFAULT_EPSILON,
    ObservationRecord,
    learn_ensemble,
    prefer,
)
from .structure import SHConfig, hypothesize


def check_plans(X, sample_weight=None) -> List[WeightedPlan]:
    """Validate plan sequences and optional positive weights."""
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a sequence of plans, got a string")
    plans = []
    for i, plan in enumerate(X):
        if isinstance(plan, str):
            plan = plan.split()
        plan = tuple(plan)
        if not plan:
            raise ValueError(f"plan {i} is empty")
        for a in plan:
            if not isinstance(a, str) or not valid_token(a):
                raise ValueError(f"plan {i} holds an invalid action {a!r}")
        plans.append(plan)
    if not plans:
        raise ValueError("no plans given")
    if sample_weight is None:
        weights = np.ones(len(plans))
    else:
        weights = np.asarray(sample_weight, dtype=float)
        if weights.shape != (len(plans),):
            raise ValueError(f"sample_weight has shape {weights.shape}, expected ({len(plans)},)")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("sample weights must be positive and finite")
    return [WeightedPlan(p, float(w)) for p, w in zip(plans, weights)]


def check_records(records) -> List[ObservationRecord]:
    out = []
    for rec in records:
        if isinstance(rec, ObservationRecord):
            out.append(rec)
        else:
            chosen, feasible = rec
            out.append(ObservationRecord(tuple(chosen), tuple(tuple(p) for p in feasible)))
    if not out:
        raise ValueError("no observation records given")
    return out


def _configs(est, seed):
    sh = SHConfig(est.min_rec_len, est.min_rec_len_factor, est.min_rec_freq, seed)
    em = EMConfig(est.tol, est.max_iters, est.prune_eps, est.restarts, seed)
    return sh, em


class PHTNLearner(BaseEstimator):
    """Learns a pHTN from plans: structure hypothesis followed by hard EM.

    After ``fit``, ``grammar_`` holds the learned grammar and ``report_``
    the EM trace.
    """

    def __init__(self, min_rec_len=3.0, min_rec_len_factor=0.25, min_rec_freq=0.1,
                 tol=1e-6, max_iters=200, prune_eps=1e-6, restarts=1, random_state=0):
        self.min_rec_len = min_rec_len
        self.min_rec_len_factor = min_rec_len_factor
        self.min_rec_freq = min_rec_freq
        self.tol = tol
        self.max_iters = max_iters
        self.prune_eps = prune_eps
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        plans = check_plans(X, sample_weight)
        sh, em = _configs(self, int(self.random_state))
        self.initial_grammar_ = hypothesize(plans, sh)
        self.grammar_, self.report_ = em_fit(self.initial_grammar_, plans, em)
        return self

    def score_samples(self, X) -> np.ndarray:
        """Viterbi log-likelihood per plan; ``-inf`` where the grammar cannot parse."""
        check_is_fitted(self, "grammar_")
        out = []
        for plan, _ in check_plans(X):
            ll = plan_log_likelihood(self.grammar_, plan)
            out.append(-np.inf if ll is None else ll)
        return np.asarray(out)

    def score(self, X, y=None, sample_weight=None) -> float:
        plans = check_plans(X, sample_weight)
        values = self.score_samples([p for p, _ in plans])
        weights = np.asarray([w for _, w in plans])
        return float(np.sum(weights * values) / np.sum(weights))

    def transform(self, X) -> List:
        """Viterbi parse tree per plan (``None`` when unparsable)."""
        check_is_fitted(self, "grammar_")
        return [viterbi_parse(self.grammar_, p) for p, _ in check_plans(X)]

    def sample(self, n_samples=1, random_state=None) -> List[Tuple[str, ...]]:
        check_is_fitted(self, "grammar_")
        seed = self.random_state if random_state is None else random_state
        return sample_plans(self.grammar_, n_samples, int(seed))


class RescaledPreferenceLearner(BaseEstimator):
    """Learns pairwise plan preferences from choices under feasibility constraints.

    ``fit`` takes observation records; ``predict`` takes plan pairs and
    returns ``"p"``, ``"q"`` or ``"unknown"`` per pair.
    """

    def __init__(self, epsilon=DEFAULT_EPSILON, min_rec_len=3.0, min_rec_len_factor=0.25,
                 min_rec_freq=0.1, tol=1e-6, max_iters=200, prune_eps=1e-6, restarts=1,
                 random_state=0):
        self.epsilon = epsilon
        self.min_rec_len = min_rec_len
        self.min_rec_len_factor = min_rec_len_factor
        self.min_rec_freq = min_rec_freq
        self.tol = tol
        self.max_iters = max_iters
        self.prune_eps = prune_eps
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        records = check_records(X)
        seed = int(self.random_state)
        sh, em = _configs(self, seed)
        self.ensemble_ = learn_ensemble(records, sh, em, self.epsilon, seed)
        return self

    def predict(self, pairs) -> np.ndarray:
        check_is_fitted(self, "ensemble_")
        out = []
        for p, q in pairs:
            p = tuple(p.split()) if isinstance(p, str) else tuple(p)
            q = tuple(q.split()) if isinstance(q, str) else tuple(q)
            out.append(prefer(self.ensemble_, p, q).value)
        return np.asarray(out, dtype=object)
