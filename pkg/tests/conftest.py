import random
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from phtn.grammar import Grammar, GrammarError, Schema, normalize, prune, validate
from phtn.io import load_grammar

DATA = Path(__file__).resolve().parents[1] / "src" / "phtn" / "data"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_grammar(rng: random.Random, max_tasks: int = 8, max_primitives: int = 4,
                   max_alternatives: int = 3, zero_theta: float = 0.0):
    """Random valid CNF grammar (possibly recursive, possibly ambiguous) or None."""
    n_tasks = rng.randint(1, max_tasks)
    n_prims = rng.randint(1, max_primitives)
    tasks = [f"T{i}" for i in range(n_tasks)]
    prims = [f"p{i}" for i in range(n_prims)]
    schemas, seen = [], set()
    for t in tasks:
        for _ in range(rng.randint(1, max_alternatives)):
            if rng.random() < 0.4:
                body = (rng.choice(prims),)
            else:
                body = (rng.choice(tasks), rng.choice(tasks))
            if (t, body) in seen:
                continue
            seen.add((t, body))
            theta = 0.0 if rng.random() < zero_theta else rng.uniform(0.05, 1.0)
            schemas.append(Schema(t, body, theta))
    g = Grammar(prims, tasks, schemas)
    heads = {}
    for s in schemas:
        heads[s.head] = heads.get(s.head, 0.0) + s.theta
    if any(v <= 0 for v in heads.values()):
        return None
    try:
        g = prune(normalize(g))
    except GrammarError:
        return None
    if not g.schemas_for(g.top) or validate(g):
        return None
    return g


@pytest.fixture(scope="session")
def travel():
    return load_grammar(DATA / "travel.phtn")


@pytest.fixture(scope="session")
def fig2():
    return load_grammar(DATA / "fig2_variant.phtn")


@pytest.fixture(scope="session")
def logistics():
    return load_grammar(DATA / "logistics.phtn")


@pytest.fixture(scope="session")
def goldminer():
    return load_grammar(DATA / "goldminer.phtn")


def ambiguous(theta_ab: float = 0.5) -> Grammar:
    return Grammar(
        ["a", "b"],
        ["T", "A", "B", "C", "D"],
        [
            Schema("T", ("A", "B"), theta_ab),
            Schema("T", ("C", "D"), 1.0 - theta_ab),
            Schema("A", ("a",), 1.0),
            Schema("B", ("b",), 1.0),
            Schema("C", ("a",), 1.0),
            Schema("D", ("b",), 1.0),
        ],
    )
