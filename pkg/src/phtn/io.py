"""Text formats for plan corpora, observation records, grammars and ensembles.

Every writer emits a ``# format: phtn/1`` header; readers accept it
optionally.  Floats are written in their shortest round-tripping form.
"""
from __future__ import annotations

import io as _io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple, Union

from .grammar import Grammar, GrammarError, Schema, WeightedPlan, valid_token, validate
from .rescale import Cluster, ObservationRecord, PreferenceEnsemble

FORMAT_VERSION = "phtn/1"
HEADER = f"# format: {FORMAT_VERSION}"
MANIFEST = "manifest.txt"

PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    """Malformed input, located by file, line and column (both 1-based)."""

    def __init__(self, message: str, file: str = "<stream>", line: int = 0, column: int = 1):
        super().__init__(f"{file}:{line}:{column}: {message}")
        self.reason = message
        self.file = file
        self.line = line
        self.column = column


@dataclass
class Corpus:
    plans: List[WeightedPlan] = field(default_factory=list)
    source: str = "<stream>"
    lines: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.plans)

    def __iter__(self):
        return iter(self.plans)


def _name(stream) -> str:
    return getattr(stream, "name", None) or "<stream>"


def _fmt(x: float) -> str:
    return repr(float(x))


def _lines(stream: TextIO):
    for number, raw in enumerate(stream, start=1):
        yield number, raw.rstrip("\r\n")


def _check_header(text: str, src: str, number: int) -> None:
    body = text.lstrip("#").strip()
    if body.startswith("format:"):
        version = body[len("format:"):].strip()
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version!r}", src, number, 1)


def _tokens(text: str, src: str, number: int, offset: int = 0):
    """Whitespace-separated tokens with their 1-based columns."""
    out = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < len(text) and not text[j].isspace():
            j += 1
        out.append((text[i:j], offset + i + 1))
        i = j
    return out


def _plan(tokens, src: str, number: int) -> Tuple[str, ...]:
    for tok, col in tokens:
        if not valid_token(tok):
            raise FormatError(f"invalid action token {tok!r}", src, number, col)
    return tuple(tok for tok, _ in tokens)


def _positive_float(text: str, src: str, number: int, col: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"malformed {what} {text!r}", src, number, col) from None
    if math.isnan(value) or math.isinf(value) or value <= 0:
        raise FormatError(f"{what} must be positive and finite, got {text!r}", src, number, col)
    return value


# corpus

def read_corpus(stream: TextIO) -> Corpus:
    src = _name(stream)
    corpus = Corpus(source=src)
    for number, text in _lines(stream):
        stripped = text.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            _check_header(stripped, src, number)
            continue
        tokens = _tokens(text, src, number)
        weight = 1.0
        if tokens[0][0].startswith("weight:"):
            tok, col = tokens.pop(0)
            weight = _positive_float(tok[len("weight:"):], src, number, col + len("weight:"), "weight")
            if not tokens:
                raise FormatError("weight given for an empty plan", src, number, col)
        corpus.plans.append(WeightedPlan(_plan(tokens, src, number), weight))
        corpus.lines.append(number)
    return corpus


def write_corpus(plans: Iterable[WeightedPlan], stream: TextIO, header: Sequence[str] = ()) -> None:
    stream.write(HEADER + "\n")
    for line in header:
        stream.write(f"# {line}\n")
    for item in plans:
        plan, weight = (item.plan, item.weight) if isinstance(item, WeightedPlan) else (tuple(item), 1.0)
        prefix = "" if weight == 1.0 else f"weight:{_fmt(weight)} "
        stream.write(prefix + " ".join(plan) + "\n")


# observation records

def read_records(stream: TextIO) -> List[ObservationRecord]:
    src = _name(stream)
    records: List[ObservationRecord] = []
    block: Optional[dict] = None

    def close():
        nonlocal block
        if block is None:
            return
        if block["chosen"] is None:
            raise FormatError("record has no 'chosen:' line", src, block["start"], 1)
        records.append(ObservationRecord(block["chosen"], tuple(block["alts"])))
        block = None

    for number, text in _lines(stream):
        stripped = text.strip()
        if not stripped:
            close()
            continue
        if stripped.startswith("#"):
            _check_header(stripped, src, number)
            continue
        if block is None:
            block = {"chosen": None, "alts": [], "start": number}
        lead = len(text) - len(text.lstrip())
        key, sep, rest = text.lstrip().partition(":")
        if not sep or key not in ("chosen", "alt"):
            raise FormatError(f"unknown directive {key.split()[0]!r}", src, number, lead + 1)
        tokens = _tokens(rest, src, number, lead + len(key) + 1)
        if not tokens:
            raise FormatError(f"empty plan after '{key}:'", src, number, lead + 1)
        plan = _plan(tokens, src, number)
        if key == "chosen":
            if block["chosen"] is not None:
                raise FormatError("record has two 'chosen:' lines", src, number, lead + 1)
            block["chosen"] = plan
        else:
            block["alts"].append(plan)
    close()
    return records


def write_records(records: Iterable[ObservationRecord], stream: TextIO, header: Sequence[str] = ()) -> None:
    stream.write(HEADER + "\n")
    for line in header:
        stream.write(f"# {line}\n")
    for rec in records:
        stream.write("\nchosen: " + " ".join(rec.chosen) + "\n")
        for plan in rec.feasible:
            if plan != rec.chosen:
                stream.write("alt: " + " ".join(plan) + "\n")


# grammar

def read_grammar(stream: TextIO) -> Grammar:
    src = _name(stream)
    primitives: Optional[List[str]] = None
    tasks: Optional[List[str]] = None
    schemas: List[Schema] = []
    seen = {}
    for number, text in _lines(stream):
        stripped = text.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            _check_header(stripped, src, number)
            continue
        lead = len(text) - len(text.lstrip())
        if "->" not in text:
            key, sep, rest = text.lstrip().partition(":")
            if not sep or key not in ("primitives", "tasks"):
                raise FormatError(f"unknown directive {key.split()[0]!r}", src, number, lead + 1)
            names = [t for t, _ in _tokens(rest, src, number)]
            for tok, col in _tokens(rest, src, number, lead + len(key) + 1):
                if not valid_token(tok):
                    raise FormatError(f"invalid symbol {tok!r}", src, number, col)
            if key == "primitives":
                if primitives is not None:
                    raise FormatError("duplicate 'primitives:' line", src, number, lead + 1)
                primitives = names
            else:
                if tasks is not None:
                    raise FormatError("duplicate 'tasks:' line", src, number, lead + 1)
                if not names:
                    raise FormatError("'tasks:' lists no tasks", src, number, lead + 1)
                tasks = names
            continue
        left, _, right = text.partition("->")
        head_tokens = _tokens(left, src, number)
        if len(head_tokens) != 1:
            raise FormatError("schema needs exactly one head task", src, number, lead + 1)
        body_text, comma, theta_text = right.partition(",")
        arrow_col = len(left) + 2
        if not comma:
            raise FormatError("schema is missing its probability", src, number, len(text) + 1)
        body_tokens = _tokens(body_text, src, number, arrow_col)
        if len(body_tokens) not in (1, 2):
            raise FormatError("schema body must have one or two symbols", src, number, arrow_col + 1)
        for tok, col in head_tokens + body_tokens:
            if not valid_token(tok):
                raise FormatError(f"invalid symbol {tok!r}", src, number, col)
        theta_col = len(left) + 2 + len(body_text) + 2
        theta_str = theta_text.strip()
        if not theta_str:
            raise FormatError("schema is missing its probability", src, number, theta_col)
        try:
            theta = float(theta_str)
        except ValueError:
            raise FormatError(f"malformed probability {theta_str!r}", src, number, theta_col) from None
        if math.isnan(theta) or not 0.0 <= theta <= 1.0:
            raise FormatError(f"probability out of [0, 1]: {theta_str!r}", src, number, theta_col)
        head = head_tokens[0][0]
        body = tuple(t for t, _ in body_tokens)
        if (head, body) in seen:
            raise FormatError(
                f"duplicate schema (first on line {seen[(head, body)]})", src, number, lead + 1
            )
        seen[(head, body)] = number
        schemas.append(Schema(head, body, theta))
    if tasks is None:
        raise FormatError("missing 'tasks:' line", src, 0, 1)
    if primitives is None:
        raise FormatError("missing 'primitives:' line", src, 0, 1)
    grammar = Grammar(primitives, tasks, schemas)
    problems = validate(grammar)
    if problems:
        raise GrammarError(f"{src}: " + "; ".join(problems))
    return grammar


def write_grammar(grammar: Grammar, stream: TextIO, header: Sequence[str] = ()) -> None:
    stream.write(HEADER + "\n")
    for line in header:
        stream.write(f"# {line}\n")
    stream.write("primitives: " + " ".join(grammar.primitives) + "\n")
    stream.write("tasks: " + " ".join(grammar.tasks) + "\n")
    for s in grammar.schemas:
        stream.write(f"{s.head} -> {' '.join(s.body)} , {_fmt(s.theta)}\n")


def grammar_to_text(grammar: Grammar, header: Sequence[str] = ()) -> str:
    buf = _io.StringIO()
    write_grammar(grammar, buf, header)
    return buf.getvalue()


def grammar_from_text(text: str, name: str = "<string>") -> Grammar:
    buf = _io.StringIO(text)
    buf.name = name
    return read_grammar(buf)


# path helpers

def _open_read(path: PathLike):
    return open(path, "r", encoding="utf-8")


def _open_write(path: PathLike):
    return open(path, "w", encoding="utf-8", newline="\n")


def load_grammar(path: PathLike) -> Grammar:
    with _open_read(path) as f:
        return read_grammar(f)


def save_grammar(grammar: Grammar, path: PathLike, header: Sequence[str] = ()) -> None:
    with _open_write(path) as f:
        write_grammar(grammar, f, header)


def load_corpus(path: PathLike) -> Corpus:
    with _open_read(path) as f:
        return read_corpus(f)


def save_corpus(plans: Iterable[WeightedPlan], path: PathLike, header: Sequence[str] = ()) -> None:
    with _open_write(path) as f:
        write_corpus(plans, f, header)


def load_records(path: PathLike) -> List[ObservationRecord]:
    with _open_read(path) as f:
        return read_records(f)


def save_records(records: Iterable[ObservationRecord], path: PathLike, header: Sequence[str] = ()) -> None:
    with _open_write(path) as f:
        write_records(records, f, header)


def save_ensemble(
    ensemble: PreferenceEnsemble,
    directory: PathLike,
    clusters: Optional[Sequence[Cluster]] = None,
    header: Sequence[str] = (),
) -> List[Path]:
    """One grammar file per model, optional cluster corpora, and a manifest."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    lines = [HEADER] + [f"# {h}" for h in header]
    for idx, model in enumerate(ensemble.models):
        name = f"cluster-{idx:03d}.phtn"
        save_grammar(model, root / name, header)
        lines.append(f"model: {name}")
        written.append(root / name)
        if clusters is not None:
            cname = f"cluster-{idx:03d}.corpus"
            save_corpus(clusters[idx].weighted_plans(), root / cname, header)
            written.append(root / cname)
    with _open_write(root / MANIFEST) as f:
        f.write("\n".join(lines) + "\n")
    written.append(root / MANIFEST)
    return written


def load_ensemble(directory: PathLike) -> PreferenceEnsemble:
    root = Path(directory)
    manifest = root / MANIFEST
    models = []
    with _open_read(manifest) as f:
        src = str(manifest)
        for number, text in _lines(f):
            stripped = text.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                _check_header(stripped, src, number)
                continue
            key, sep, rest = stripped.partition(":")
            if not sep or key != "model" or not rest.strip():
                raise FormatError(f"unknown directive {stripped.split()[0]!r}", src, number, 1)
            models.append(load_grammar(root / rest.strip()))
    if not models:
        raise FormatError("manifest lists no models", str(manifest), 0, 1)
    return PreferenceEnsemble(tuple(models))
