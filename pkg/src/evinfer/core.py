"""Relation schema, shared record types, and the JSONL record format.

Everything here is an immutable value object; the functions are pure and
safe to call from any number of threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .text import normalize_inference


class ConfigurationError(Exception):
    """Invalid configuration or unmet precondition, caught before any work runs."""


class Relation(str, Enum):
    """The six event-centric inference relations.

    Member names double as the serialized relation tokens, so they keep the
    exact casing used in generator checkpoints (``isBefore``, not ``IsBefore``).
    """

    HasPrerequisite = "HasPrerequisite"
    isBefore = "isBefore"
    isAfter = "isAfter"
    xReason = "xReason"
    Causes = "Causes"
    HinderedBy = "HinderedBy"

    @property
    def question(self) -> str:
        """The crowd-facing question template for this relation."""
        return _QUESTIONS[self]

    @property
    def surface_prefix(self) -> str:
        """Short connective used when rendering inferences in reports (presentation only)."""
        return _SURFACE_PREFIXES[self]

    @property
    def keeps_contradictions(self) -> bool:
        """True for the one relation whose entailment filter keeps contradicting inferences."""
        return self is Relation.HinderedBy


_QUESTIONS: dict[Relation, str] = {
    Relation.HasPrerequisite: "What are typically the prerequisites for the event?",
    Relation.isBefore: "What typically happens immediately before the event?",
    Relation.isAfter: "What typically happens immediately after the event?",
    Relation.xReason: "What can cause the event?",
    Relation.Causes: "What could be the effect of the event?",
    Relation.HinderedBy: "What can hinder the event?",
}

_SURFACE_PREFIXES: dict[Relation, str] = {
    Relation.HasPrerequisite: "Needed before,",
    Relation.isBefore: "Before this,",
    Relation.isAfter: "After this,",
    Relation.xReason: "Because,",
    Relation.Causes: "This causes,",
    Relation.HinderedBy: "Hindered by,",
}


def relation_question(relation: Relation) -> str:
    """Return the question template shown to annotators for ``relation``."""
    return _QUESTIONS[relation]


class Source(str, Enum):
    news = "news"
    dialogue = "dialogue"
    narrative = "narrative"
    blog = "blog"
    other = "other"


class Provenance(str, Enum):
    human = "human"
    silver_split = "silver_split"
    silver_overlap = "silver_overlap"
    silver_nli = "silver_nli"
    generated = "generated"


class SplitName(str, Enum):
    train = "train"
    dev = "dev"
    test = "test"


@dataclass(frozen=True)
class ContextSentence:
    """A (possibly complex) sentence that hosts one or more event mentions."""

    id: str
    text: str
    source: Source = Source.other
    topic: str = ""


@dataclass(frozen=True)
class EventMention:
    """A character-span-anchored target predicate inside a context sentence.

    Spans are character offsets into the context text: tokenizer-independent
    and stable across re-tokenization. Discontiguous predicates are not
    supported; a mention is always one contiguous span.
    """

    context_id: str
    start: int
    end: int
    surface: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @classmethod
    def from_context(cls, context: ContextSentence, start: int, end: int) -> "EventMention":
        if not (0 <= start < end <= len(context.text)):
            raise ValueError(f"span ({start}, {end}) out of bounds for context {context.id!r}")
        return cls(context.id, start, end, context.text[start:end])


@dataclass(frozen=True)
class InferenceRecord:
    """One (context, target event, relation, inference) tuple: the dataset atom."""

    context_id: str
    event: EventMention
    relation: Relation
    inference: str
    provenance: Provenance


@dataclass(frozen=True)
class DatasetSplit:
    name: SplitName
    records: tuple[InferenceRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


def validate_record(record: InferenceRecord, context: ContextSentence) -> list[str]:
    """Check every record invariant against its context sentence.

    Returns a list of violation descriptors; an empty list means the record
    passes. Malformed input is reported as a violation, never raised.
    """
    violations: list[str] = []
    if not isinstance(record.context_id, str) or not record.context_id:
        violations.append("malformed identifier: empty or non-string context_id")
    elif record.context_id != context.id:
        violations.append(
            f"context mismatch: record refers to {record.context_id!r}, context is {context.id!r}"
        )
    if not context.text:
        violations.append("empty context text")

    event = record.event
    span_ok = True
    if not isinstance(event.start, int) or not isinstance(event.end, int):
        violations.append("malformed span: offsets must be integers")
        span_ok = False
    elif event.start >= event.end:
        violations.append("span start >= end")
        span_ok = False
    elif event.start < 0 or event.end > len(context.text):
        violations.append("span out of bounds")
        span_ok = False
    if span_ok and context.text[event.start : event.end] != event.surface:
        violations.append("surface mismatch: surface does not equal the substring at span")

    if not record.inference or not record.inference.strip():
        violations.append("empty inference")
    elif normalize_inference(record.inference) == normalize_inference(event.surface):
        violations.append("verbatim repetition: inference merely restates the event surface")
    return violations


# --- JSONL record format -----------------------------------------------------
#
# One record per line:
#   {context_id, context_text, event_span: [s, e], event_surface,
#    relation, inference, provenance}
# UTF-8, LF line endings.


def record_to_json(record: InferenceRecord, context: ContextSentence) -> dict:
    return {
        "context_id": record.context_id,
        "context_text": context.text,
        "event_span": [record.event.start, record.event.end],
        "event_surface": record.event.surface,
        "relation": record.relation.value,
        "inference": record.inference,
        "provenance": record.provenance.value,
    }


def record_from_json(obj: Mapping) -> tuple[InferenceRecord, ContextSentence]:
    """Parse one JSONL object into a record plus a context fragment.

    The wire format does not carry source/topic, so the returned context
    uses their defaults.
    """
    span = obj["event_span"]
    event = EventMention(
        context_id=obj["context_id"],
        start=int(span[0]),
        end=int(span[1]),
        surface=obj["event_surface"],
    )
    record = InferenceRecord(
        context_id=obj["context_id"],
        event=event,
        relation=Relation(obj["relation"]),
        inference=obj["inference"],
        provenance=Provenance(obj.get("provenance", "human")),
    )
    context = ContextSentence(id=obj["context_id"], text=obj["context_text"])
    return record, context


def write_records(
    path: str | Path,
    records: Iterable[InferenceRecord],
    contexts: Mapping[str, ContextSentence],
) -> int:
    """Write records to a JSONL file; returns the number of lines written."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            context = contexts[record.context_id]
            fh.write(json.dumps(record_to_json(record, context), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def read_records(path: str | Path) -> tuple[list[InferenceRecord], dict[str, ContextSentence]]:
    """Read a JSONL record file back into records and their context fragments."""
    records: list[InferenceRecord] = []
    contexts: dict[str, ContextSentence] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record, context = record_from_json(json.loads(line))
            records.append(record)
            contexts.setdefault(context.id, context)
    return records, contexts
