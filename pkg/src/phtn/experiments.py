"""Seeded experiment trials, CSV result tables and summary reports."""
from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Sequence, TextIO, Tuple

from .em import EMConfig, em_fit
from .evaluation import (
    DisjointSupportError,
    FeasibilityModel,
    OracleSpec,
    build_feasibility,
    conciseness_ratio,
    estimate_kl,
    gen_oracle,
    learn_baseline,
    play_game,
    simulate_records,
)
from .grammar import Grammar, WeightedPlan, sample_plans
from .rescale import DEFAULT_EPSILON, learn_ensemble
from .structure import SHConfig, hypothesize
from .util import derive_seed

COLUMNS = ("n", "trial", "kl_before_em", "kl_after_em", "conciseness", "score_rescaled", "score_baseline")
MAX_ORACLE_REDRAWS = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol sizes are multiples of the oracle task count."""

    sizes: Tuple[int, ...] = (15,)
    trials: int = 100
    seed: int = 0
    recursive: bool = False
    recursive_fraction: float = 0.1
    train_factor: int = 10
    kl_factor: int = 100
    record_factor: int = 50
    pair_factor: int = 100
    learning: bool = True
    game: bool = True
    epsilon: float = DEFAULT_EPSILON
    exponent: float = 1.0
    sh: SHConfig = field(default_factory=SHConfig)
    em: EMConfig = field(default_factory=EMConfig)

    def oracle_spec(self, n: int, seed: int) -> OracleSpec:
        return OracleSpec(n=n, recursive=self.recursive, recursive_fraction=self.recursive_fraction, seed=seed)


@dataclass(frozen=True)
class LearningOutcome:
    kl_before_em: float
    kl_after_em: float
    conciseness: float
    learned: Grammar


def learn_plans(plans: Sequence[WeightedPlan], sh: SHConfig, em: EMConfig) -> Tuple[Grammar, Grammar]:
    """Initial (structure plus random parameters) and EM-fitted grammars."""
    initial = hypothesize(plans, sh)
    fitted, _ = em_fit(initial, plans, em)
    return initial, fitted


def _kl(oracle: Grammar, learned: Grammar, samples: int, seed: int) -> float:
    try:
        return estimate_kl(oracle, learned, samples, seed).kl
    except DisjointSupportError:
        return math.nan


def learning_trial(oracle: Grammar, train: int, kl_samples: int, seed: int,
                   sh: SHConfig = SHConfig(), em: EMConfig = EMConfig()) -> LearningOutcome:
    plans = [WeightedPlan(p) for p in sample_plans(oracle, train, derive_seed(seed, 10))]
    s = derive_seed(seed, 11)
    initial, fitted = learn_plans(plans, replace(sh, seed=s), replace(em, seed=s))
    kl_seed = derive_seed(seed, 12)
    return LearningOutcome(
        _kl(oracle, initial, kl_samples, kl_seed),
        _kl(oracle, fitted, kl_samples, kl_seed),
        conciseness_ratio(oracle, fitted),
        fitted,
    )


def game_oracle(config: ExperimentConfig, n: int, trial: int) -> Tuple[Grammar, FeasibilityModel]:
    """Oracle and feasibility model for a game trial.

    Oracles whose plan universe holds fewer than two plans cannot be played
    and are redrawn from the next derived seed.
    """
    for attempt in range(MAX_ORACLE_REDRAWS):
        seed = derive_seed(config.seed, n, trial, 2, attempt)
        oracle = gen_oracle(config.oracle_spec(n, seed))
        universe_samples = 100 * len(oracle.tasks)
        model = build_feasibility(oracle, universe_samples, derive_seed(seed, 20), config.exponent)
        if len(model.universe) >= 2:
            return oracle, model
    raise RuntimeError(f"no playable oracle found for n={n}, trial={trial}")


def game_trial(oracle: Grammar, feasibility: FeasibilityModel, records: int, pairs: int, seed: int,
               sh: SHConfig = SHConfig(), em: EMConfig = EMConfig(),
               epsilon: float = DEFAULT_EPSILON) -> Tuple[float, float]:
    """Scores of the rescaled ensemble and of the baseline single model."""
    recs = simulate_records(oracle, record_count=records, seed=derive_seed(seed, 21), feasibility=feasibility)
    s = derive_seed(seed, 22)
    rescaled = learn_ensemble(recs, replace(sh, seed=s), replace(em, seed=s), epsilon, s)
    baseline = learn_baseline(recs, replace(sh, seed=s), replace(em, seed=s))
    game_seed = derive_seed(seed, 23)
    return (
        play_game(oracle, rescaled, pairs, feasibility, game_seed).score,
        play_game(oracle, baseline, pairs, feasibility, game_seed).score,
    )


def run_trial(config: ExperimentConfig, n: int, trial: int) -> Dict[str, float]:
    row: Dict[str, float] = {c: math.nan for c in COLUMNS}
    row["n"], row["trial"] = n, trial
    if config.learning:
        seed = derive_seed(config.seed, n, trial, 1)
        oracle = gen_oracle(config.oracle_spec(n, seed))
        t = len(oracle.tasks)
        out = learning_trial(oracle, config.train_factor * t, config.kl_factor * t, seed, config.sh, config.em)
        row["kl_before_em"] = out.kl_before_em
        row["kl_after_em"] = out.kl_after_em
        row["conciseness"] = out.conciseness
    if config.game:
        oracle, model = game_oracle(config, n, trial)
        t = len(oracle.tasks)
        rescaled, baseline = game_trial(
            oracle, model, config.record_factor * t, config.pair_factor * t,
            derive_seed(config.seed, n, trial, 3), config.sh, config.em, config.epsilon,
        )
        row["score_rescaled"], row["score_baseline"] = rescaled, baseline
    return row


def _run_one(args):
    config, n, trial = args
    return run_trial(config, n, trial)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> List[Dict[str, float]]:
    """All trials, in (n, trial) order regardless of worker count."""
    jobs = [(config, n, t) for n in config.sizes for t in range(config.trials)]
    if threads <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_one, jobs))


def _cell(value) -> str:
    if isinstance(value, int):
        return str(value)
    return "nan" if math.isnan(value) else repr(float(value))


def write_results(rows: Iterable[Dict[str, float]], stream: TextIO, header: Sequence[str] = ()) -> None:
    for line in header:
        stream.write(f"# {line}\n")
    stream.write(",".join(COLUMNS) + "\n")
    for row in rows:
        stream.write(",".join(_cell(int(row[c]) if c in ("n", "trial") else row[c]) for c in COLUMNS) + "\n")


def read_results(stream: TextIO) -> List[Dict[str, float]]:
    lines = [line for line in stream if line.strip() and not line.startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"result table lacks columns: {', '.join(missing)}")
    rows = []
    for rec in reader:
        row = {c: float(rec[c]) for c in COLUMNS}
        row["n"], row["trial"] = int(row["n"]), int(row["trial"])
        rows.append(row)
    return rows


def summarize(rows: Iterable[Dict[str, float]]) -> List[Dict[str, float]]:
    """Per-size means of every metric column (NaN entries skipped) and trial counts."""
    groups: Dict[int, List[Dict[str, float]]] = {}
    for row in rows:
        groups.setdefault(int(row["n"]), []).append(row)
    out = []
    for n in sorted(groups):
        summary: Dict[str, float] = {"n": n, "trials": len(groups[n])}
        for c in COLUMNS[2:]:
            values = [r[c] for r in groups[n] if not math.isnan(r[c])]
            summary[c] = statistics.fmean(values) if values else math.nan
        out.append(summary)
    return out


def format_table(summary: Sequence[Dict[str, float]]) -> str:
    heads = ["n", "trials"] + list(COLUMNS[2:])
    body = [[str(int(s["n"])), str(int(s["trials"]))] + [f"{s[c]:.4f}" for c in COLUMNS[2:]] for s in summary]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(heads)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(heads, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"


def plot_summary(summary: Sequence[Dict[str, float]], path: str) -> None:
    """Divergence and game-score curves against oracle size, as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "phtn"
    xs = [s["n"] for s in summary]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    left.plot(xs, [s["kl_before_em"] for s in summary], marker="o", label="before EM")
    left.plot(xs, [s["kl_after_em"] for s in summary], marker="s", label="after EM")
    left.set_xlabel("oracle tasks")
    left.set_ylabel("KL divergence")
    left.legend()
    right.plot(xs, [s["score_rescaled"] for s in summary], marker="o", label="rescaled")
    right.plot(xs, [s["score_baseline"] for s in summary], marker="s", label="baseline")
    right.set_xlabel("oracle tasks")
    right.set_ylabel("game score")
    right.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
