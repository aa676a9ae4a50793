"""Deterministic toy data for desk-scale tests.

One sentence template with three events (an insult, a refused reply, a
phone call) instantiated over name pairs, plus reference inferences per
(event, relation) built from fixed templates. Name pairs are split into a
training set and a held-out set so generalization tests see unseen names.
"""

from __future__ import annotations

from evinfer.core import ContextSentence, EventMention, InferenceRecord, Provenance, Relation
from evinfer.splitter import ClauseSplitExtractor

NAME_PAIRS = [
    ("John", "Mary"),
    ("Tom", "Anna"),
    ("Sam", "Rita"),
    ("Paul", "Nora"),
    ("Ben", "Kate"),
    ("Carl", "Ruth"),
    ("Ivan", "Jane"),
    ("Noah", "Emma"),
    ("Liam", "Sara"),
    ("Owen", "Lucy"),
    ("Felix", "Dana"),
    ("Victor", "Iris"),
]
TRAIN_PAIRS = NAME_PAIRS[:8]
HELDOUT_PAIRS = NAME_PAIRS[8:10]
EXTRA_PAIRS = NAME_PAIRS[10:]

TEMPLATE = "{a} insulted {b} , so she did not reply when he called her"

# the sentence the diversity analysis targets, with natural punctuation
ANALYSIS_SENTENCE = "John insulted Mary, so she didn't reply when he called her"

EVENT_KINDS = ("insulted", "did not reply", "called")

# five inference templates per (event kind, relation); the first two act as
# the human-written references, the rest pad out stub generator beams
REFERENCE_TEMPLATES: dict[tuple[str, Relation], list[str]] = {
    ("insulted", Relation.xReason): [
        "{a} does not like {b}",
        "{a} is angry at {b}",
        "{a} is jealous of {b}",
        "{a} is rude to people",
        "{a} wants to hurt {b}",
    ],
    ("insulted", Relation.Causes): [
        "{b} is upset",
        "{b} feels hurt",
        "{b} starts to cry",
        "{b} is angry at {a}",
        "{b} avoids {a}",
    ],
    ("insulted", Relation.isBefore): [
        "{a} meets {b}",
        "{a} argues with {b}",
        "{a} sees {b} at work",
        "{a} talks to {b}",
        "{a} gets angry",
    ],
    ("insulted", Relation.isAfter): [
        "{b} walks away",
        "{b} leaves the room",
        "{b} stops talking",
        "{a} feels sorry",
        "{a} regrets the words",
    ],
    ("insulted", Relation.HasPrerequisite): [
        "{a} knows {b}",
        "{a} is near {b}",
        "{a} can speak",
        "{a} is with {b}",
        "{a} has a reason",
    ],
    ("insulted", Relation.HinderedBy): [
        "{a} is kind to {b}",
        "{a} respects {b}",
        "{a} is not around",
        "{a} stays polite",
        "{a} likes {b}",
    ],
    ("did not reply", Relation.xReason): [
        "{b} does not want to talk",
        "{b} is too upset",
        "{b} is still angry",
        "{b} wants to be alone",
        "{b} is hurt by the insult",
    ],
    ("did not reply", Relation.Causes): [
        "{a} feels ignored",
        "{a} gets worried",
        "{a} keeps waiting",
        "{a} calls again",
        "{a} gives up",
    ],
    ("did not reply", Relation.isBefore): [
        "{b} hears the phone",
        "{b} sees the call",
        "{b} looks at the phone",
        "{b} reads the name",
        "{b} turns away",
    ],
    ("did not reply", Relation.isAfter): [
        "{a} tries again later",
        "{a} sends a message",
        "{a} stops calling",
        "{b} turns off the phone",
        "{b} goes to sleep",
    ],
    ("did not reply", Relation.HasPrerequisite): [
        "{b} has a phone",
        "{b} hears the ring",
        "{b} is near the phone",
        "{b} knows who calls",
        "{b} holds the phone",
    ],
    ("did not reply", Relation.HinderedBy): [
        "{b} wants to answer",
        "{b} likes talking to {a}",
        "{b} misses {a}",
        "{b} forgives {a}",
        "{b} picks up at once",
    ],
    ("called", Relation.xReason): [
        "{a} wants to talk to {b}",
        "{a} misses {b}",
        "{a} wants to say sorry",
        "{a} needs an answer",
        "{a} feels lonely",
    ],
    ("called", Relation.Causes): [
        "the phone rings",
        "{b} hears the phone ring",
        "{b} sees the number",
        "{b} ignores the call",
        "the phone makes noise",
    ],
    ("called", Relation.isBefore): [
        "{a} picks up the phone",
        "{a} finds the number",
        "{a} thinks about {b}",
        "{a} waits a while",
        "{a} opens the phone",
    ],
    ("called", Relation.isAfter): [
        "{a} waits for an answer",
        "{a} hangs up the phone",
        "{a} leaves a message",
        "{a} puts the phone down",
        "{a} sighs deeply",
    ],
    ("called", Relation.HasPrerequisite): [
        "{a} has a phone",
        "{a} knows the number",
        "{a} has signal",
        "{a} finds the phone",
        "{a} can dial",
    ],
    ("called", Relation.HinderedBy): [
        "the phone is broken",
        "{a} loses the number",
        "{a} has no signal",
        "{a} drops the phone",
        "{a} forgets to call",
    ],
}


def context_for(pair: tuple[str, str], idx: int) -> ContextSentence:
    a, b = pair
    return ContextSentence(id=f"toy{idx:03d}", text=TEMPLATE.format(a=a, b=b))


def events_for(context: ContextSentence) -> list[EventMention]:
    events = []
    for kind in EVENT_KINDS:
        start = context.text.find(kind)
        assert start >= 0, f"{kind!r} missing from {context.text!r}"
        events.append(EventMention.from_context(context, start, start + len(kind)))
    return events


def references_for(pair: tuple[str, str], kind: str, relation: Relation, n: int = 2) -> list[str]:
    a, b = pair
    templates = REFERENCE_TEMPLATES[(kind, relation)][:n]
    return [t.format(a=a, b=b) for t in templates]


def gold_records(
    pairs: list[tuple[str, str]], refs_per_relation: int = 2, start_idx: int = 0
) -> tuple[list[InferenceRecord], dict[str, ContextSentence]]:
    records: list[InferenceRecord] = []
    contexts: dict[str, ContextSentence] = {}
    for offset, pair in enumerate(pairs):
        context = context_for(pair, start_idx + offset)
        contexts[context.id] = context
        for event in events_for(context):
            kind = event.surface
            for relation in Relation:
                for inference in references_for(pair, kind, relation, refs_per_relation):
                    records.append(
                        InferenceRecord(
                            context_id=context.id,
                            event=event,
                            relation=relation,
                            inference=inference,
                            provenance=Provenance.human,
                        )
                    )
    return records, contexts


def stub_fixture_table(
    pairs: list[tuple[str, str]], n: int = 5, start_idx: int = 0
) -> dict[str, list[str]]:
    """Stub-generator beams for every head the clause extractor produces.

    Keys are plain-head prompts ("<head> <relation> [GEN]"); full-sentence
    heads are included so the overlap strategy can generate its reference
    set with the same stub.
    """
    extractor = ClauseSplitExtractor()
    table: dict[str, list[str]] = {}
    for offset, pair in enumerate(pairs):
        context = context_for(pair, start_idx + offset)
        heads = [" ".join(part for part in triple if part) for triple in extractor.extract(context)]
        kind_by_head = {}
        for head, kind in zip(heads, EVENT_KINDS):
            kind_by_head[head] = kind
        for relation in Relation:
            for head, kind in kind_by_head.items():
                prompt = f"{head} {relation.value} [GEN]"
                table[prompt] = references_for(pair, kind, relation, n)
            # full-sentence generations: union of the per-event references
            full_prompt = f"{context.text} {relation.value} [GEN]"
            merged: list[str] = []
            for kind in EVENT_KINDS:
                merged.extend(references_for(pair, kind, relation, 2))
            table[full_prompt] = merged[:n]
    return table


def all_vocab_texts() -> list[str]:
    """Every string a desk-scale tokenizer must cover (vocabulary only)."""
    texts = [ANALYSIS_SENTENCE]
    for idx, pair in enumerate(NAME_PAIRS):
        context = context_for(pair, idx)
        texts.append(context.text)
        for kind in EVENT_KINDS:
            for relation in Relation:
                texts.extend(references_for(pair, kind, relation, 5))
    return texts
