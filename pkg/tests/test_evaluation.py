import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phtn.evaluation import (
    DisjointSupportError,
    FeasibilityModel,
    OracleSpec,
    baseline_cluster,
    build_feasibility,
    conciseness_ratio,
    estimate_kl,
    gen_oracle,
    kl_divergence,
    oracle_choice,
    play_game,
    power_law,
    restrict_and_renormalize,
    simulate_records,
)
from phtn.grammar import Grammar, Schema, plan_distribution, productive_tasks, validate
from phtn.rescale import ObservationRecord, Preference, PreferenceEnsemble

GOOD = ("Buyticket", "Getin", "Getout")
BAD = ("Getin", "Buyticket", "Getout")


@given(st.integers(2, 30), st.integers(0, 2**32))
def test_oracles_are_valid(n, seed):
    g = gen_oracle(OracleSpec(n=n, seed=seed))
    assert validate(g) == []
    assert len(g.tasks) == n
    assert not any(s.head in s.body for s in g.schemas)


def test_small_oracle_derives_primitives():
    g = gen_oracle(OracleSpec(n=2, seed=1))
    assert validate(g) == []
    assert plan_distribution(g)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_non_recursive_oracles_are_finite(n):
    for seed in range(10):
        dist = plan_distribution(gen_oracle(OracleSpec(n=n, seed=seed)))
        assert math.fsum(dist.values()) == pytest.approx(1.0)


def test_recursive_oracle():
    g = gen_oracle(OracleSpec(n=20, recursive=True, recursive_fraction=0.1, seed=3))
    recursive = [s for s in g.schemas if s.head in s.body]
    assert recursive
    assert productive_tasks(g) == set(g.tasks)
    # every task keeps a non-recursive way out
    for t in g.tasks:
        assert any(t not in s.body for s in g.schemas_for(t))


def test_oracle_is_deterministic():
    spec = OracleSpec(n=12, seed=77)
    assert gen_oracle(spec) == gen_oracle(spec)
    assert gen_oracle(spec) != gen_oracle(OracleSpec(n=12, seed=78))


def test_oracle_spec_checks():
    with pytest.raises(ValueError):
        OracleSpec(n=1)
    with pytest.raises(ValueError):
        OracleSpec(n=5, recursive_fraction=1.0)


def test_kl_closed_form():
    p = {"x": 0.8, "y": 0.2}
    q = {"x": 0.5, "y": 0.5}
    assert kl_divergence(p, q) == pytest.approx(0.8 * math.log(1.6) + 0.2 * math.log(0.4))
    assert kl_divergence(p, p) == 0.0


def test_restriction():
    p, q = restrict_and_renormalize({"x": 2.0, "y": 2.0, "z": 1.0}, {"x": 1.0, "w": 3.0, "y": 3.0})
    assert p == {"x": 0.5, "y": 0.5}
    assert q == {"x": 0.25, "y": 0.75}
    with pytest.raises(DisjointSupportError):
        restrict_and_renormalize({"x": 1.0}, {"y": 1.0})


def test_self_kl_is_small(travel):
    est = estimate_kl(travel, travel, 10_000, 0)
    assert 0.0 <= est.kl <= 0.02
    assert est.overlap == 1.0


def test_kl_approaches_closed_form(travel):
    flat = travel.with_thetas([0.5, 0.5] + [s.theta for s in travel.schemas[2:]])
    exact = 0.8 * math.log(0.8 / 0.5) + 0.2 * math.log(0.2 / 0.5)
    assert estimate_kl(travel, flat, 40_000, 1).kl == pytest.approx(exact, abs=0.02)


def test_disjoint_support():
    a = Grammar(["a"], ["T"], [Schema("T", ("a",), 1.0)])
    b = Grammar(["b"], ["T"], [Schema("T", ("b",), 1.0)])
    with pytest.raises(DisjointSupportError) as err:
        estimate_kl(a, b, 100, 0)
    assert err.value.overlap == 0


@given(st.integers(2, 12), st.integers(0, 2**32))
def test_kl_is_non_negative(n, seed):
    a = gen_oracle(OracleSpec(n=n, seed=seed))
    b = gen_oracle(OracleSpec(n=n, seed=seed + 1))
    try:
        est = estimate_kl(a, b, 200, seed)
    except DisjointSupportError:
        return
    assert est.kl >= 0.0 and 0.0 < est.overlap <= 1.0


def test_conciseness():
    g = gen_oracle(OracleSpec(n=10, seed=0))
    assert conciseness_ratio(g, g) == 1.0
    bigger = Grammar(["a"], [f"T{i}" for i in range(12)], [Schema("T0", ("a",), 1.0)])
    assert conciseness_ratio(g, bigger) == pytest.approx(1.2)


def test_power_law():
    p = power_law(4)
    assert p == pytest.approx(np.array([1, 1 / 2, 1 / 3, 1 / 4]) / (25 / 12))
    with pytest.raises(ValueError):
        FeasibilityModel((), ())


def test_universe_is_reversed(travel):
    # the common plan is usually sampled first, so reversal puts the rare plan first
    firsts = Counter(build_feasibility(travel, 200, seed).universe[0] for seed in range(300))
    assert firsts[BAD] / 300 == pytest.approx(0.8, abs=0.08)
    model = build_feasibility(travel, 200, 0)
    assert sorted(model.universe) == sorted([GOOD, BAD])
    assert model.probabilities[0] > model.probabilities[1]


def test_two_plan_choices_follow_likelihood(travel):
    records = simulate_records(travel, 200, record_count=4000, seed=5)
    assert all(set(r.feasible) == {GOOD, BAD} for r in records)
    freq = sum(r.chosen == GOOD for r in records) / len(records)
    assert abs(freq - 0.8) <= 4 * math.sqrt(0.16 / 4000)


def test_records_are_reproducible(logistics):
    assert simulate_records(logistics, record_count=30, seed=2) == simulate_records(logistics, record_count=30, seed=2)


@given(st.integers(3, 12), st.integers(0, 2**32))
def test_record_invariants(n, seed):
    oracle = gen_oracle(OracleSpec(n=n, seed=seed))
    model = build_feasibility(oracle, 100 * n, seed)
    if len(model.universe) < 2:
        with pytest.raises(ValueError):
            simulate_records(oracle, record_count=1, seed=seed, feasibility=model)
        return
    for r in simulate_records(oracle, record_count=20, seed=seed, feasibility=model):
        assert r.chosen in r.feasible
        assert 2 <= len(r.feasible) <= len(model.universe)
        assert len(set(r.feasible)) == len(r.feasible)


def test_single_plan_universe_rejected():
    g = Grammar(["a"], ["T"], [Schema("T", ("a",), 1.0)])
    with pytest.raises(ValueError):
        simulate_records(g, 10, 1, 0)


def test_oracle_choice_is_antisymmetric(travel):
    assert oracle_choice(travel, GOOD, BAD) is Preference.P
    assert oracle_choice(travel, BAD, GOOD) is Preference.Q
    assert oracle_choice(travel, GOOD, GOOD) is Preference.UNKNOWN


def test_self_agreement(logistics):
    model = build_feasibility(logistics, seed=1)
    result = play_game(logistics, PreferenceEnsemble((logistics,)), 200, model, 3)
    assert result.score == 1.0
    assert result.wins + result.losses + result.abstentions == result.pairs


def test_abstaining_subject_scores_zero(logistics):
    other = Grammar(["zz"], ["T"], [Schema("T", ("zz",), 1.0)])
    model = build_feasibility(logistics, seed=1)
    result = play_game(logistics, PreferenceEnsemble((other,)), 100, model, 3)
    assert result.score == 0.0 and result.abstentions == 100


def test_reversed_subject_scores_minus_one(travel):
    flipped = travel.with_thetas([0.8, 0.2] + [s.theta for s in travel.schemas[2:]])
    model = build_feasibility(travel, 200, 0)
    assert play_game(travel, PreferenceEnsemble((flipped,)), 50, model, 0).score == -1.0


def test_game_is_reproducible(logistics):
    model = build_feasibility(logistics, seed=1)
    ens = PreferenceEnsemble((logistics,))
    assert play_game(logistics, ens, 50, model, 9) == play_game(logistics, ens, 50, model, 9)


def test_baseline_cluster_counts_choices():
    recs = [ObservationRecord(("a",), (("b",),))] * 2 + [ObservationRecord(("b",), (("a",),))]
    assert baseline_cluster(recs).weights == {("a",): 2.0, ("b",): 1.0}
