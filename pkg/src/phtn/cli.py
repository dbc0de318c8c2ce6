"""Command line interface: ``phtn <subcommand> ...``.

Exit status is 0 on success, 1 for usage errors, 2 for data or format
errors and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .em import EMConfig, MonotonicityError, em_fit
from .evaluation import (
    OracleSpec,
    build_feasibility,
    estimate_kl,
    gen_oracle,
    play_game,
    simulate_records,
)
from .experiments import (
    ExperimentConfig,
    format_table,
    plot_summary,
    read_results,
    run_experiment,
    summarize,
    write_results,
)
from .grammar import WeightedPlan, as_plan, sample_plans
from .io import (
    FORMAT_VERSION,
    load_corpus,
    load_ensemble,
    load_grammar,
    load_records,
    save_ensemble,
    write_corpus,
    write_grammar,
    write_records,
)
from .parser import viterbi_parse
from .rescale import DEFAULT_EPSILON, learn_ensemble, prefer, rescale
from .structure import SHConfig, hypothesize

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("phtn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--seed", type=int, help="random seed (required by randomized subcommands)",
                   **({"default": None} if defaults else kw))
    p.add_argument("--threads", type=int, help="worker cap; 1 gives a serial, bit-exact run",
                   **({"default": 1} if defaults else kw))
    p.add_argument("--format-version", choices=[FORMAT_VERSION], help="output format version",
                   **({"default": FORMAT_VERSION} if defaults else kw))
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr",
                   **({"default": False} if defaults else kw))


def _learning_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("structure and EM")
    g.add_argument("--sh-min-rec-len", type=float, default=SHConfig.min_rec_len,
                   help="minimum mean repetition length for a recursive schema")
    g.add_argument("--sh-min-rec-len-factor", type=float, default=SHConfig.min_rec_len_factor,
                   help="repetition length threshold relative to mean plan length")
    g.add_argument("--sh-min-rec-freq", type=float, default=SHConfig.min_rec_freq,
                   help="minimum weighted fraction of plans showing the repetition")
    g.add_argument("--em-tol", type=float, default=EMConfig.tol, help="relative log-likelihood tolerance")
    g.add_argument("--em-max-iters", type=int, default=EMConfig.max_iters, help="EM iteration cap")
    g.add_argument("--em-prune-eps", type=float, default=EMConfig.prune_eps,
                   help="schemas below this probability are removed after EM")
    g.add_argument("--em-restarts", type=int, default=EMConfig.restarts, help="random EM restarts")


def _configs(args):
    sh = SHConfig(args.sh_min_rec_len, args.sh_min_rec_len_factor, args.sh_min_rec_freq, args.seed)
    em = EMConfig(args.em_tol, args.em_max_iters, args.em_prune_eps, args.em_restarts, args.seed)
    return sh, em


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"'{args.command}' is randomized and needs --seed")
    return args.seed


def _header(args, *keys: str) -> List[str]:
    lines = [f"phtn {__version__} {args.command}"]
    for key in ("seed",) + keys:
        value = getattr(args, key)
        if isinstance(value, (list, tuple)):
            value = " ".join(str(v) for v in value)
        lines.append(f"{key.replace('_', '-')}: {value}")
    return lines


LEARN_KEYS = (
    "sh_min_rec_len", "sh_min_rec_len_factor", "sh_min_rec_freq",
    "em_tol", "em_max_iters", "em_prune_eps", "em_restarts",
)


class _Output:
    """Text destination: a path, or stdout for ``-`` / ``None``."""

    def __init__(self, path: Optional[str]):
        self.path = None if path in (None, "-") else Path(path)

    def __enter__(self):
        if self.path is None:
            return sys.stdout
        self.handle = open(self.path, "w", encoding="utf-8", newline="\n")
        return self.handle

    def __exit__(self, *exc):
        if self.path is not None:
            self.handle.close()
        return False


def cmd_gen_oracle(args) -> int:
    spec = OracleSpec(
        n=args.n, recursive=args.recursive, recursive_fraction=args.recursive_fraction,
        primitives=args.primitives, seed=_require_seed(args), max_alternatives=args.max_alternatives,
    )
    grammar = gen_oracle(spec)
    with _Output(args.output) as out:
        write_grammar(grammar, out, _header(args, "n", "recursive", "recursive_fraction", "primitives",
                                            "max_alternatives"))
    return EXIT_OK


def cmd_sample(args) -> int:
    grammar = load_grammar(args.grammar)
    plans = sample_plans(grammar, args.count, _require_seed(args), max_depth=args.max_depth)
    with _Output(args.output) as out:
        write_corpus([WeightedPlan(p) for p in plans], out, _header(args, "grammar", "count", "max_depth"))
    return EXIT_OK


def cmd_learn(args) -> int:
    _require_seed(args)
    corpus = load_corpus(args.corpus)
    if not corpus.plans:
        raise ValueError(f"{args.corpus}: corpus holds no plans")
    sh, em = _configs(args)
    initial = hypothesize(corpus.plans, sh)
    grammar, report = em_fit(initial, corpus.plans, em)
    log.info("EM: %d iterations, final log-likelihood %r", report.iterations, report.log_likelihoods[-1])
    header = _header(args, "corpus", *LEARN_KEYS)
    with _Output(args.output) as out:
        write_grammar(grammar, out, header)
    report_path = args.report or (args.output + ".em.csv" if args.output not in (None, "-") else None)
    if report_path:
        with open(report_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(report.to_csv())
    return EXIT_OK


def cmd_rescale_learn(args) -> int:
    _require_seed(args)
    records = load_records(args.records)
    if not records:
        raise ValueError(f"{args.records}: no observation records")
    sh, em = _configs(args)
    clusters = rescale(records, args.epsilon)
    ensemble = learn_ensemble(records, sh, em, args.epsilon, args.seed)
    save_ensemble(ensemble, args.output, clusters, _header(args, "records", "epsilon", *LEARN_KEYS))
    print(f"clusters: {len(ensemble)}")
    return EXIT_OK


def _plan_arg(text: str):
    return as_plan(text.split())


def cmd_parse(args) -> int:
    grammar = load_grammar(args.grammar)
    plan = _plan_arg(" ".join(args.plan))
    tree = viterbi_parse(grammar, plan)
    if tree is None:
        print("unparsable")
        return EXIT_DATA
    print(tree.to_text())
    print(f"probability: {tree.probability!r}")
    print(f"log-probability: {tree.log_prob!r}")
    return EXIT_OK


def cmd_kl(args) -> int:
    oracle, learned = load_grammar(args.oracle), load_grammar(args.learned)
    est = estimate_kl(oracle, learned, args.samples, _require_seed(args))
    print(f"kl: {est.kl!r}")
    print(f"overlap: {est.overlap!r}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    oracle = load_grammar(args.oracle)
    seed = _require_seed(args)
    model = build_feasibility(oracle, args.universe_samples, seed, args.exponent)
    records = simulate_records(oracle, record_count=args.records, seed=seed, feasibility=model)
    with _Output(args.output) as out:
        write_records(records, out, _header(args, "oracle", "records", "universe_samples", "exponent"))
    return EXIT_OK


def cmd_game(args) -> int:
    oracle = load_grammar(args.oracle)
    ensemble = load_ensemble(args.ensemble)
    seed = _require_seed(args)
    model = build_feasibility(oracle, args.universe_samples, seed, args.exponent)
    pairs = args.pairs if args.pairs is not None else 100 * len(oracle.tasks)
    result = play_game(oracle, ensemble, pairs, model, seed)
    print(f"pairs: {result.pairs}")
    print(f"wins: {result.wins}")
    print(f"losses: {result.losses}")
    print(f"abstentions: {result.abstentions}")
    print(f"score: {result.score!r}")
    return EXIT_OK


def cmd_query(args) -> int:
    ensemble = load_ensemble(args.ensemble)
    print(prefer(ensemble, _plan_arg(args.p), _plan_arg(args.q)).value)
    return EXIT_OK


def cmd_experiment(args) -> int:
    sh, em = _configs(args)
    config = ExperimentConfig(
        sizes=tuple(args.sizes), trials=args.trials, seed=_require_seed(args), recursive=args.recursive,
        recursive_fraction=args.recursive_fraction, learning=not args.no_learning, game=not args.no_game,
        epsilon=args.epsilon, exponent=args.exponent, sh=sh, em=em,
    )
    rows = run_experiment(config, max(1, args.threads))
    header = _header(args, "sizes", "trials", "recursive", "recursive_fraction", "epsilon", "exponent",
                     *LEARN_KEYS)
    with _Output(args.output) as out:
        write_results(rows, out, header)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.results:
        with open(path, encoding="utf-8") as f:
            rows.extend(read_results(f))
    summary = summarize(rows)
    sys.stdout.write(format_table(summary))
    if args.svg:
        plot_summary(summary, args.svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phtn", description="Learn probabilistic HTNs from plan traces.")
    parser.add_argument("--version", action="version", version=f"phtn {__version__}")
    _global_flags(parser, defaults=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, defaults=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("gen-oracle", cmd_gen_oracle, "Generate a random oracle grammar.")
    p.add_argument("--n", type=int, required=True, help="number of tasks")
    p.add_argument("--recursive", action="store_true", help="add recursive schemas")
    p.add_argument("--recursive-fraction", type=float, default=0.1, help="share of recursive schemas")
    p.add_argument("--primitives", type=int, default=None, help="primitive alphabet size (default: one per leaf)")
    p.add_argument("--max-alternatives", type=int, default=3, help="most schemas per inner task")
    p.add_argument("-o", "--output", help="grammar file (default: stdout)")

    p = add("sample", cmd_sample, "Sample plans from a grammar.")
    p.add_argument("grammar", help="grammar file")
    p.add_argument("--count", type=int, required=True, help="number of plans")
    p.add_argument("--max-depth", type=int, default=64, help="derivation depth before resampling")
    p.add_argument("-o", "--output", help="corpus file (default: stdout)")

    p = add("learn", cmd_learn, "Learn a grammar from a plan corpus.")
    p.add_argument("corpus", help="plan corpus file")
    p.add_argument("-o", "--output", help="grammar file (default: stdout)")
    p.add_argument("--report", help="EM log-likelihood trace CSV (default: OUTPUT.em.csv)")
    _learning_flags(p)

    p = add("rescale-learn", cmd_rescale_learn, "Learn a preference ensemble from observation records.")
    p.add_argument("records", help="observation record file")
    p.add_argument("-o", "--output", required=True, help="ensemble directory")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="weight of feasible, unchosen plans")
    _learning_flags(p)

    p = add("parse", cmd_parse, "Print the most probable parse of a plan.")
    p.add_argument("grammar", help="grammar file")
    p.add_argument("plan", nargs="+", help="plan actions")

    p = add("kl", cmd_kl, "Estimate the KL divergence of a learned grammar from an oracle.")
    p.add_argument("oracle", help="oracle grammar file")
    p.add_argument("learned", help="learned grammar file")
    p.add_argument("--samples", type=int, default=10000, help="samples drawn from each grammar")

    p = add("simulate", cmd_simulate, "Simulate observation records under random feasibility.")
    p.add_argument("oracle", help="oracle grammar file")
    p.add_argument("--records", type=int, required=True, help="number of records")
    p.add_argument("--universe-samples", type=int, default=None, help="oracle samples forming the plan universe")
    p.add_argument("--exponent", type=float, default=1.0, help="power-law exponent")
    p.add_argument("-o", "--output", help="record file (default: stdout)")

    p = add("game", cmd_game, "Score an ensemble against an oracle in the preference game.")
    p.add_argument("oracle", help="oracle grammar file")
    p.add_argument("ensemble", help="ensemble directory")
    p.add_argument("--pairs", type=int, default=None, help="test pairs (default: 100 per oracle task)")
    p.add_argument("--universe-samples", type=int, default=None, help="oracle samples forming the plan universe")
    p.add_argument("--exponent", type=float, default=1.0, help="power-law exponent")

    p = add("query", cmd_query, "Ask an ensemble which of two plans is preferred.")
    p.add_argument("ensemble", help="ensemble directory")
    p.add_argument("--p", required=True, help="first plan, space separated")
    p.add_argument("--q", required=True, help="second plan, space separated")

    p = add("experiment", cmd_experiment, "Run seeded learning and game trials into a CSV table.")
    p.add_argument("--sizes", type=int, nargs="+", default=[15], help="oracle task counts")
    p.add_argument("--trials", type=int, default=100, help="trials per size")
    p.add_argument("--recursive", action="store_true", help="recursive oracles")
    p.add_argument("--recursive-fraction", type=float, default=0.1, help="share of recursive schemas")
    p.add_argument("--no-learning", action="store_true", help="skip the divergence trials")
    p.add_argument("--no-game", action="store_true", help="skip the preference game")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="weight of feasible, unchosen plans")
    p.add_argument("--exponent", type=float, default=1.0, help="power-law exponent")
    p.add_argument("-o", "--output", help="CSV file (default: stdout)")
    _learning_flags(p)

    p = add("report", cmd_report, "Summarize experiment CSVs as a table and optional SVG plot.")
    p.add_argument("results", nargs="+", help="CSV files from 'experiment'")
    p.add_argument("--svg", help="write curves to this SVG file")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (MonotonicityError, ArithmeticError) as exc:
        print(f"phtn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"phtn: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
