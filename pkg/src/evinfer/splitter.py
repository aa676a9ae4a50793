"""Decompose complex sentences into simple SVO clauses aligned to target events.

Open information extraction is an injected backend. The built-in
:class:`ClauseSplitExtractor` is a dependency-free heuristic: it splits the
sentence at clause boundaries (commas and a fixed set of connectives),
treats the first verbal run of each clause as the predicate, and keeps
everything else verbatim, so no modifier is ever dropped unless the clause
boundary itself removes it. Recorded extractions replay through
:class:`FixtureExtractor` so tests never need a live OIE system.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, Sequence

from .core import ContextSentence, EventMention
from .corpus import POSTagger, RuleBasedTagger, verb_runs
from .text import lemma_set, tokenize_with_spans

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SVOTriple:
    subject: str
    predicate: str
    obj: str = ""
    source_event: EventMention | None = None


class ExtractionError(RuntimeError):
    def __init__(self, context_id: str, message: str):
        super().__init__(f"OIE extraction failed for {context_id!r}: {message}")
        self.context_id = context_id


class OIEBackend(Protocol):
    def extract(self, context: ContextSentence) -> list[tuple[str, str, str]]: ...


_CLAUSE_CONNECTIVES = {"so", "when", "because", "and", "while"}


class ClauseSplitExtractor:
    """Heuristic clause-boundary SVO extractor (the shipped OIE fallback)."""

    def __init__(self, tagger: POSTagger | None = None):
        self.tagger = tagger or RuleBasedTagger()

    def extract(self, context: ContextSentence) -> list[tuple[str, str, str]]:
        text = context.text
        tagged = self.tagger.tag(text)

        clauses: list[list] = [[]]
        for tok, tag, span in tagged:
            if tok == "," or (tag in {"SCONJ", "CCONJ"} and tok.lower() in _CLAUSE_CONNECTIVES):
                if clauses[-1]:
                    clauses.append([])
                continue
            clauses[-1].append((tok, tag, span))

        triples = []
        for clause in clauses:
            if not clause:
                continue
            runs = verb_runs(clause)
            if not runs:
                continue
            run = runs[0]
            run_start, run_end = run[0][2][0], run[-1][2][1]
            before = [t for t in clause if t[2][1] <= run_start]
            after = [t for t in clause if t[2][0] >= run_end]
            subject = self._slice(text, before).strip()
            predicate = text[run_start:run_end]
            obj = self._slice(text, [t for t in after if t[1] != "PUNCT"]).strip()
            if predicate:
                triples.append((subject, predicate, obj))
        return triples

    @staticmethod
    def _slice(text: str, tokens: Sequence) -> str:
        if not tokens:
            return ""
        return text[tokens[0][2][0] : tokens[-1][2][1]]


class FixtureExtractor:
    """Replays recorded OIE output keyed by context id.

    Fixture format (JSONL): ``{"context_id": ..., "triples": [[s, p, o], ...]}``.
    An id with no recorded entry is an error; a recorded empty list is a
    legitimate empty extraction.
    """

    def __init__(self, table: dict[str, list[tuple[str, str, str]]]):
        self.table = table

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "FixtureExtractor":
        table: dict[str, list[tuple[str, str, str]]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                table[obj["context_id"]] = [tuple(t) for t in obj["triples"]]
        return cls(table)

    def extract(self, context: ContextSentence) -> list[tuple[str, str, str]]:
        if context.id not in self.table:
            raise KeyError(f"no recorded extraction for context {context.id!r}")
        return list(self.table[context.id])


def write_oie_fixture(path: str | Path, table: dict[str, list[tuple[str, str, str]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for context_id, triples in table.items():
            fh.write(
                json.dumps(
                    {"context_id": context_id, "triples": [list(t) for t in triples]},
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def extract_svo(context: ContextSentence, oie: OIEBackend) -> list[SVOTriple]:
    """Extract SVO triples for one sentence via the given backend.

    Backend failures surface as :class:`ExtractionError` carrying the
    context id. Triples whose predicate does not occur in the sentence
    (modulo lemmatization) are dropped with a warning; an empty result is
    valid and callers may fall back.
    """
    if not context.text or not context.text.strip():
        raise ValueError("context text must be non-empty")
    try:
        raw = oie.extract(context)
    except Exception as exc:
        raise ExtractionError(context.id, str(exc)) from exc

    context_lemmas = lemma_set(context.text)
    triples = []
    for subject, predicate, obj in raw:
        if not predicate or not predicate.strip():
            continue
        predicate_lemmas = lemma_set(predicate)
        if predicate_lemmas and not predicate_lemmas <= context_lemmas:
            logger.warning(
                "dropping triple with out-of-context predicate %r (context %s)",
                predicate,
                context.id,
            )
            continue
        triples.append(SVOTriple(subject=subject, predicate=predicate, obj=obj))
    return triples


def align_predicate(
    triples: Sequence[SVOTriple],
    event: EventMention,
    context: ContextSentence | None = None,
) -> SVOTriple | None:
    """Pick the triple whose predicate best matches the event surface.

    Scoring is lemma-level token overlap; only strictly positive overlap
    counts, and absence of any match returns None. Ties break toward the
    predicate closest to the event span when the context is available
    (otherwise toward the earlier triple), which is a guess the source
    procedure leaves open.
    """
    event_lemmas = lemma_set(event.surface)
    best: SVOTriple | None = None
    best_key: tuple[int, float, int] | None = None
    for index, triple in enumerate(triples):
        overlap = len(lemma_set(triple.predicate) & event_lemmas)
        if overlap == 0:
            continue
        if context is not None:
            pos = _locate(context.text, triple.predicate)
            distance = abs(pos - event.start) if pos >= 0 else float("inf")
        else:
            distance = float(index)
        key = (-overlap, distance, index)
        if best_key is None or key < best_key:
            best_key = key
            best = triple
    if best is None:
        return None
    return replace(best, source_event=event)


def _locate(text: str, fragment: str) -> int:
    pos = text.lower().find(fragment.lower())
    if pos >= 0:
        return pos
    tokens = [t for t, _ in tokenize_with_spans(fragment)]
    if tokens:
        return text.lower().find(tokens[0].lower())
    return -1


def render_simple_sentence(triple: SVOTriple) -> str:
    """Space-join the non-empty fields; single spaces, no trailing whitespace."""
    parts = [" ".join(part.split()) for part in (triple.subject, triple.predicate, triple.obj)]
    return " ".join(p for p in parts if p)
