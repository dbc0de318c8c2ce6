import pytest

from phtn import cli
from phtn.em import MonotonicityError
from phtn.io import load_ensemble, load_grammar

from conftest import DATA

TRAVEL = str(DATA / "travel.phtn")
LOGISTICS = str(DATA / "logistics.phtn")


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_prints_tree_and_probability(capsys):
    code, out, _ = run(capsys, "parse", TRAVEL, "Buyticket", "Getin", "Getout")
    assert code == 0
    assert out.splitlines()[0] == "Travel 1 1-3"
    assert "probability: 0.8" in out


def test_parse_unparsable(capsys):
    code, out, _ = run(capsys, "parse", TRAVEL, "Getout")
    assert code == 2 and out.strip() == "unparsable"


def test_self_kl(capsys):
    code, out, _ = run(capsys, "--seed", "1", "kl", TRAVEL, TRAVEL, "--samples", "10000")
    assert code == 0
    kl = float(out.splitlines()[0].split(":")[1])
    assert 0.0 <= kl <= 0.02


def test_learn_fig2_corpus(tmp_path, capsys):
    corpus = tmp_path / "fig2.txt"
    corpus.write_text("Buyticket Getin Getout\nBuyticket Getin Getout Getin Getout Getin Getout\n")
    out_path = tmp_path / "learned.phtn"
    code, _, _ = run(capsys, "learn", str(corpus), "-o", str(out_path), "--seed", "4")
    assert code == 0
    assert (tmp_path / "learned.phtn.em.csv").read_text().startswith("iteration,log_likelihood")
    code, out, _ = run(capsys, "parse", str(out_path), "Buyticket", "Getin", "Getout", "Getin", "Getout")
    assert code == 0


def test_learn_empty_corpus(tmp_path, capsys):
    corpus = tmp_path / "empty.txt"
    corpus.write_text("# nothing\n")
    code, _, err = run(capsys, "--seed", "1", "learn", str(corpus))
    assert code == 2 and "no plans" in err


def test_learn_bad_corpus_is_located(tmp_path, capsys):
    corpus = tmp_path / "bad.txt"
    corpus.write_text("a b\nweight:0 a\n")
    code, _, err = run(capsys, "--seed", "1", "learn", str(corpus))
    assert code == 2 and "bad.txt:2:" in err


def test_numerical_failure_exit_code(tmp_path, capsys, monkeypatch):
    corpus = tmp_path / "c.txt"
    corpus.write_text("a b\n")

    def boom(*a, **k):
        raise MonotonicityError("log-likelihood fell")

    monkeypatch.setattr(cli, "em_fit", boom)
    code, _, err = run(capsys, "--seed", "1", "learn", str(corpus))
    assert code == 3 and "numerical" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["parse", TRAVEL, "a", "--bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["gen-oracle", "--n", "5"])
    assert exc.value.code == 1
    assert "--seed" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1


def test_missing_file(capsys):
    code, _, err = run(capsys, "parse", "/nonexistent/g.phtn", "a")
    assert code == 2 and err


@pytest.mark.parametrize("command", ["gen-oracle", "sample", "learn", "rescale-learn", "parse", "kl",
                                     "simulate", "game", "query", "experiment", "report"])
def test_help(command, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([command, "--help"])
    assert exc.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_seed_accepted_after_subcommand(capsys):
    a = run(capsys, "--seed", "5", "gen-oracle", "--n", "6")[1]
    b = run(capsys, "gen-oracle", "--n", "6", "--seed", "5")[1]
    assert a == b


def test_query_pipeline(tmp_path, capsys):
    records = tmp_path / "recs.txt"
    records.write_text(
        "\n".join(["chosen: Gobytrain\nalt: Gobybike\n"] * 5 + ["chosen: Gobybike\nalt: Gobytrain\n"]
                  + ["chosen: Gobyplane\nalt: Gobytrain\n"] * 3 + ["chosen: Gobytrain\nalt: Gobyplane\n"])
    )
    ens = tmp_path / "ens"
    code, out, _ = run(capsys, "--seed", "2", "rescale-learn", str(records), "-o", str(ens))
    assert code == 0 and out.strip() == "clusters: 1"
    assert len(load_ensemble(ens)) == 1
    assert run(capsys, "query", str(ens), "--p", "Gobyplane", "--q", "Gobybike")[1].strip() == "p"
    assert run(capsys, "query", str(ens), "--p", "Gobyplane", "--q", "Walk")[1].strip() == "unknown"


def _outputs(tmp_path, tag, capsys):
    """Run every randomized subcommand once and collect its primary outputs."""
    d = tmp_path / tag
    d.mkdir()
    seed = ["--seed", "11", "--threads", "1"]
    outputs = {}
    assert cli.main(seed + ["gen-oracle", "--n", "8", "-o", str(d / "oracle.phtn")]) == 0
    assert cli.main(seed + ["sample", LOGISTICS, "--count", "60", "-o", str(d / "plans.txt")]) == 0
    assert cli.main(seed + ["learn", str(d / "plans.txt"), "-o", str(d / "learned.phtn")]) == 0
    assert cli.main(seed + ["simulate", LOGISTICS, "--records", "40", "-o", str(d / "recs.txt")]) == 0
    assert cli.main(seed + ["rescale-learn", str(d / "recs.txt"), "-o", str(d / "ens")]) == 0
    capsys.readouterr()
    assert cli.main(seed + ["kl", LOGISTICS, str(d / "learned.phtn"), "--samples", "500"]) == 0
    outputs["kl"] = capsys.readouterr().out
    assert cli.main(seed + ["game", LOGISTICS, str(d / "ens"), "--pairs", "50"]) == 0
    outputs["game"] = capsys.readouterr().out
    assert cli.main(seed + ["experiment", "--sizes", "5", "--trials", "2", "-o", str(d / "res.csv")]) == 0
    assert cli.main(["report", str(d / "res.csv"), "--svg", str(d / "fig.svg")]) == 0
    outputs["report"] = capsys.readouterr().out
    for f in sorted(p for p in d.rglob("*") if p.is_file()):
        outputs[str(f.relative_to(d))] = f.read_bytes()
    return outputs


def test_randomized_subcommands_are_byte_reproducible(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    first = _outputs(tmp_path, "run", capsys)
    # move the first run aside so both runs see identical paths
    (tmp_path / "run").rename(tmp_path / "first")
    second = _outputs(tmp_path, "run", capsys)
    assert first.keys() == second.keys()
    for key in first:
        assert first[key] == second[key], key
    assert load_grammar(tmp_path / "run" / "oracle.phtn")
