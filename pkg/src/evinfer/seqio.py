"""Serialization of the target-marked training/prompt format.

An input line looks like::

    John <TGT> insulted <TGT> Mary, so she didn't reply xReason [GEN]

i.e. the context with the target event enclosed between two ``<TGT>``
tokens, followed by the relation token and the ``[GEN]`` delimiter; the
target side is the free-text inference. The same ``<TGT>`` token opens and
closes the span. Separators are single spaces on write; the parser is
whitespace-tolerant between the context, relation, and ``[GEN]`` fields,
but the marked context itself is recovered byte-for-byte.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    ContextSentence,
    EventMention,
    InferenceRecord,
    Provenance,
    Relation,
    Source,
)

TGT_TOKEN = "<TGT>"
GEN_TOKEN = "[GEN]"

FORMAT_VERSION = "tgt-gen-v1"


class FormatError(ValueError):
    """Raised when text does not follow the serialization grammar."""


def special_tokens() -> list[str]:
    """All tokens a backend tokenizer must register before training."""
    return [TGT_TOKEN, GEN_TOKEN] + [r.value for r in Relation]


@dataclass(frozen=True)
class TrainingExample:
    input: str
    target: str


def mark_target(context: ContextSentence, event: EventMention) -> str:
    """Insert ``<TGT>`` markers around the event span.

    ``"<TGT> "`` goes before the span start and ``" <TGT>"`` after the span
    end, so :func:`remove_target_markers` recovers the original text exactly.
    """
    text = context.text
    if not (0 <= event.start < event.end <= len(text)):
        raise FormatError(
            f"span ({event.start}, {event.end}) out of bounds for context {context.id!r}"
        )
    if TGT_TOKEN in text or GEN_TOKEN in text:
        raise FormatError("context text contains a reserved token")
    return (
        text[: event.start]
        + TGT_TOKEN
        + " "
        + text[event.start : event.end]
        + " "
        + TGT_TOKEN
        + text[event.end :]
    )


def remove_target_markers(marked: str) -> str:
    """Inverse of :func:`mark_target`; recovers the original context byte-for-byte."""
    text, _ = _split_marked(marked)
    return text


def _split_marked(marked: str) -> tuple[str, tuple[int, int]]:
    """Recover (original text, event span) from a marked context."""
    count = marked.count(TGT_TOKEN)
    if count != 2:
        raise FormatError(f"marker count: expected exactly 2 {TGT_TOKEN}, found {count}")
    i = marked.find(TGT_TOKEN)
    j = marked.rfind(TGT_TOKEN)
    open_end = i + len(TGT_TOKEN)
    if open_end >= len(marked) or marked[open_end] != " ":
        raise FormatError("marker spacing: no space after opening marker")
    if j == 0 or marked[j - 1] != " ":
        raise FormatError("marker spacing: no space before closing marker")
    surface = marked[open_end + 1 : j - 1]
    if not surface:
        raise FormatError("empty target span")
    original = marked[:i] + surface + marked[j + len(TGT_TOKEN) :]
    return original, (i, i + len(surface))


def serialize_prompt(
    context: ContextSentence, event: EventMention, relation: Relation
) -> str:
    """Build a generation prompt: marked context, relation token, ``[GEN]``."""
    return f"{mark_target(context, event)} {relation.value} {GEN_TOKEN}"


def serialize_training_example(
    record: InferenceRecord, context: ContextSentence
) -> TrainingExample:
    """Serialize one record; the prompt side is identical to :func:`serialize_prompt`."""
    return TrainingExample(
        input=serialize_prompt(context, record.event, record.relation),
        target=record.inference,
    )


_INPUT_RE = re.compile(r"^(?P<marked>.*\S)\s+(?P<relation>\S+)\s+\[GEN\]\s*$", re.DOTALL)


def validate_prompt(prompt: str) -> None:
    """Raise :class:`FormatError` unless ``prompt`` follows the grammar."""
    _parse_input(prompt)


def _parse_input(input_text: str) -> tuple[str, tuple[int, int], Relation]:
    gen_count = input_text.count(GEN_TOKEN)
    if gen_count == 0:
        raise FormatError(f"missing {GEN_TOKEN}")
    if gen_count > 1:
        raise FormatError(f"{GEN_TOKEN} count: expected exactly 1, found {gen_count}")
    m = _INPUT_RE.match(input_text)
    if m is None:
        raise FormatError(f"{GEN_TOKEN} is not the final token")
    relation_token = m.group("relation")
    try:
        relation = Relation(relation_token)
    except ValueError:
        raise FormatError(f"unknown relation token: {relation_token!r}") from None
    original, span = _split_marked(m.group("marked"))
    return original, span, relation


def parse_training_example(
    input_text: str,
    target: str,
    *,
    context_id: str = "parsed",
    source: Source = Source.other,
    topic: str = "",
    provenance: Provenance = Provenance.human,
) -> tuple[InferenceRecord, ContextSentence]:
    """Parse a serialized example back into a record plus context fragment.

    The wire format does not carry the context id or provenance; callers
    that need full round-trip identity pass them through the keyword
    arguments.
    """
    original, (start, end), relation = _parse_input(input_text)
    context = ContextSentence(id=context_id, text=original, source=source, topic=topic)
    event = EventMention(context_id, start, end, original[start:end])
    record = InferenceRecord(
        context_id=context_id,
        event=event,
        relation=relation,
        inference=target,
        provenance=provenance,
    )
    return record, context


def strip_special_tokens(text: str) -> str:
    """Remove format tokens a backend may echo into generated text."""
    for token in special_tokens():
        text = text.replace(token, " ")
    return " ".join(text.split())


# --- file formats -------------------------------------------------------------


def write_training_file(path: str | Path, examples: Iterable[TrainingExample]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps({"input": ex.input, "target": ex.target}, ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def read_training_file(path: str | Path) -> list[TrainingExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                examples.append(TrainingExample(input=obj["input"], target=obj["target"]))
    return examples


def write_prompts(path: str | Path, prompts: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for prompt in prompts:
            fh.write(prompt)
            fh.write("\n")


def read_prompts(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]
