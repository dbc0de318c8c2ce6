import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from phtn.estimators import PHTNLearner, RescaledPreferenceLearner, check_plans
from phtn.grammar import sample_plans
from phtn.parser import plan_log_likelihood
from phtn.rescale import ObservationRecord

GOOD = ("Buyticket", "Getin", "Getout")
BAD = ("Getin", "Buyticket", "Getout")


def test_params_and_clone():
    est = PHTNLearner(max_iters=5, random_state=3)
    assert est.get_params()["max_iters"] == 5
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    assert RescaledPreferenceLearner(epsilon=0.01).set_params(epsilon=0.1).epsilon == 0.1


def test_fit_score_sample(travel):
    X = sample_plans(travel, 200, 1)
    est = PHTNLearner(random_state=0).fit(X)
    assert est.grammar_.top == est.initial_grammar_.top
    scores = est.score_samples([GOOD, BAD, ("Hitchhike",)])
    assert scores[0] > scores[1] and scores[2] == -np.inf
    assert scores[0] == pytest.approx(plan_log_likelihood(est.grammar_, GOOD))
    assert np.isfinite(est.score(X))
    assert est.report_.converged
    assert set(est.sample(20)) <= {GOOD, BAD}
    assert est.transform([GOOD])[0].leaves() == GOOD


def test_plans_may_be_strings():
    est = PHTNLearner().fit(["a b", "a b c"], sample_weight=[2.0, 1.0])
    assert est.score_samples(["a b"])[0] > est.score_samples(["a b c"])[0]


def test_not_fitted():
    with pytest.raises(NotFittedError):
        PHTNLearner().score_samples(["a"])
    with pytest.raises(NotFittedError):
        RescaledPreferenceLearner().predict([("a", "b")])


@pytest.mark.parametrize("X, weights", [
    ([], None),
    ("a b", None),
    ([()], None),
    ([("a", "b")], [0.0]),
    ([("a", "b")], [1.0, 2.0]),
    ([("a", "b,c")], None),
])
def test_validation(X, weights):
    with pytest.raises((ValueError, TypeError)):
        check_plans(X, weights)


def test_preference_learner():
    plane, train, bike = ("Gobyplane",), ("Gobytrain",), ("Gobybike",)
    records = ([(train, [train, bike])] * 5 + [(bike, [bike, train])]
               + [(plane, [plane, train])] * 3 + [ObservationRecord(train, (plane,))])
    est = RescaledPreferenceLearner().fit(records)
    assert len(est.ensemble_) == 1
    out = est.predict([(plane, train), ("Gobybike", "Gobyplane"), (plane, ("Walk",))])
    assert list(out) == ["p", "q", "unknown"]


def test_preference_learner_needs_records():
    with pytest.raises(ValueError):
        RescaledPreferenceLearner().fit([])
