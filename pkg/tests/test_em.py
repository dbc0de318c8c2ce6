import math
import random

import pytest
from hypothesis import given, strategies as st

from phtn.em import (
    EMConfig,
    UnparsablePlanError,
    em_estep_counts,
    em_fit,
    log_likelihood_is_monotone,
    mstep,
)
from phtn.grammar import Grammar, GrammarError, Schema, WeightedPlan, sample_plans, validate
from phtn.structure import SHConfig, hypothesize

from conftest import ambiguous, random_grammar


def two_way():
    return Grammar(
        ["a", "b", "c", "d"],
        ["T", "A", "B", "C", "D"],
        [
            Schema("T", ("A", "B"), 0.5), Schema("T", ("C", "D"), 0.5),
            Schema("A", ("a",), 1.0), Schema("B", ("b",), 1.0),
            Schema("C", ("c",), 1.0), Schema("D", ("d",), 1.0),
        ],
    )


CORPUS = [WeightedPlan(("a", "b"))] * 3 + [WeightedPlan(("c", "d"))]


def test_counts_give_relative_frequencies():
    g = two_way()
    counts, ll = em_estep_counts(g, CORPUS)
    assert counts.schema(g, "T", ("A", "B")) == 3
    assert counts.task_counts["T"] == 4
    assert ll == pytest.approx(4 * math.log(0.5))
    one = mstep(g, counts)
    assert [s.theta for s in one.schemas[:2]] == pytest.approx([0.75, 0.25])


def test_fit_converges_on_counts():
    fitted, report = em_fit(two_way(), CORPUS)
    assert [s.theta for s in fitted.schemas[:2]] == pytest.approx([0.75, 0.25])
    assert report.converged
    assert report.log_likelihoods[-1] == pytest.approx(3 * math.log(0.75) + math.log(0.25))


def test_viterbi_counts_follow_best_branch():
    g = ambiguous(0.6)
    counts, _ = em_estep_counts(g, [WeightedPlan(("a", "b"))])
    assert counts.schema(g, "T", ("A", "B")) == 1
    assert counts.schema(g, "T", ("C", "D")) == 0


def test_weighted_counts(travel):
    counts, _ = em_estep_counts(travel, [WeightedPlan(("Buyticket", "Getin", "Getout"), 5.0)])
    for head, body in [("Travel", ("A1", "B2")), ("B2", ("A2", "A3")), ("A1", ("Buyticket",))]:
        assert counts.schema(travel, head, body) == 5.0
    assert counts.schema(travel, "Travel", ("A2", "B1")) == 0.0


def test_chain_counts_are_path_multiplicities():
    g = Grammar(["a"], ["T", "A"], [Schema("T", ("A", "A"), 1.0), Schema("A", ("a",), 1.0)])
    counts, ll = em_estep_counts(g, [WeightedPlan(("a", "a"))])
    assert counts.schema(g, "A", ("a",)) == 2
    assert ll == 0.0


def test_single_schema_heads_are_fixed():
    g = Grammar(["a", "b"], ["T", "A", "B"],
                [Schema("T", ("A", "B"), 1.0), Schema("A", ("a",), 1.0), Schema("B", ("b",), 1.0)])
    fitted, report = em_fit(g, [WeightedPlan(("a", "b"))])
    assert fitted == g
    assert set(report.log_likelihoods) == {0.0}


def test_fixed_point():
    g = two_way().with_thetas([0.75, 0.25, 1, 1, 1, 1])
    fitted, report = em_fit(g, CORPUS)
    assert fitted.same_as(g, tol=1e-12)
    assert report.iterations == 1


def test_unused_task_keeps_theta():
    g = ambiguous(0.6)
    counts, _ = em_estep_counts(g, [WeightedPlan(("a", "b"))])
    out = mstep(g, counts)
    # C and D are never used; their schemas keep their probabilities
    assert out.schemas[4].theta == 1.0 and out.schemas[5].theta == 1.0
    assert validate(out) == []


def test_pruning_drops_unused_branch():
    fitted, report = em_fit(ambiguous(0.6), [WeightedPlan(("a", "b"))])
    assert [(s.head, s.body) for s in fitted.schemas if s.head == "T"] == [("T", ("A", "B"))]
    assert "C" not in fitted.tasks and report.pruned_schemas == 1
    assert validate(fitted) == []


def test_unparsable_plan_named(travel):
    with pytest.raises(UnparsablePlanError, match="Hitchhike"):
        em_fit(travel, [WeightedPlan(("Hitchhike",))])


def test_report_csv():
    _, report = em_fit(two_way(), CORPUS)
    lines = report.to_csv().splitlines()
    assert lines[0] == "iteration,log_likelihood"
    assert len(lines) == len(report.log_likelihoods) + 1


def test_restarts_keep_best():
    plans = [WeightedPlan(p) for p in sample_plans(two_way().with_thetas([0.3, 0.7, 1, 1, 1, 1]), 40, 1)]
    g = hypothesize(plans, SHConfig(seed=1))
    _, one = em_fit(g, plans, EMConfig(restarts=1, seed=1))
    _, many = em_fit(g, plans, EMConfig(restarts=4, seed=1))
    assert many.log_likelihoods[-1] >= one.log_likelihoods[-1]


@given(st.integers(0, 100_000), st.integers(0, 2**32))
def test_monotone_and_valid(gseed, pseed):
    g = random_grammar(random.Random(gseed))
    if g is None:
        return
    try:
        drawn = sample_plans(g, 20, pseed, max_length=30)
    except GrammarError:
        return
    plans = [WeightedPlan(p, w) for p, w in zip(drawn, [1.0, 2.5, 0.5, 3.0] * 5)]
    initial = hypothesize(plans, SHConfig(seed=pseed))
    fitted, report = em_fit(initial, plans, EMConfig(seed=pseed))
    assert log_likelihood_is_monotone(report.log_likelihoods)
    assert validate(fitted) == []
