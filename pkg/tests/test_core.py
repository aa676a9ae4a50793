from __future__ import annotations

import random

import pytest

from evinfer.core import (
    ContextSentence,
    EventMention,
    InferenceRecord,
    Provenance,
    Relation,
    read_records,
    record_from_json,
    record_to_json,
    relation_question,
    validate_record,
    write_records,
)


def make_record(
    text: str = "John insulted Mary, so she didn't reply when he called her",
    start: int = 5,
    end: int = 13,
    inference: str = "John does not like Mary",
    context_id: str = "c1",
) -> tuple[InferenceRecord, ContextSentence]:
    context = ContextSentence(id=context_id, text=text)
    event = EventMention(context_id, start, end, text[start:end])
    record = InferenceRecord(context_id, event, Relation.xReason, inference, Provenance.human)
    return record, context


class TestRelationSchema:
    def test_exactly_six_members(self) -> None:
        assert len(Relation) == 6

    def test_question_templates(self) -> None:
        assert (
            relation_question(Relation.HasPrerequisite)
            == "What are typically the prerequisites for the event?"
        )
        assert relation_question(Relation.HinderedBy) == "What can hinder the event?"
        assert (
            relation_question(Relation.isAfter)
            == "What typically happens immediately after the event?"
        )
        assert (
            relation_question(Relation.isBefore)
            == "What typically happens immediately before the event?"
        )
        assert relation_question(Relation.xReason) == "What can cause the event?"
        assert relation_question(Relation.Causes) == "What could be the effect of the event?"

    def test_question_mapping_is_injective(self) -> None:
        questions = {relation_question(r) for r in Relation}
        assert len(questions) == 6

    def test_serialized_names_match_tokens(self) -> None:
        assert [r.value for r in Relation] == [
            "HasPrerequisite",
            "isBefore",
            "isAfter",
            "xReason",
            "Causes",
            "HinderedBy",
        ]
        for r in Relation:
            assert r.name == r.value

    def test_hindered_by_is_the_unique_contradiction_relation(self) -> None:
        contradicting = [r for r in Relation if r.keeps_contradictions]
        assert contradicting == [Relation.HinderedBy]

    def test_surface_prefixes_cover_all_relations(self) -> None:
        assert Relation.xReason.surface_prefix == "Because,"
        assert Relation.Causes.surface_prefix == "This causes,"
        assert all(r.surface_prefix for r in Relation)


class TestValidateRecord:
    def test_well_formed_record_passes(self) -> None:
        record, context = make_record()
        assert validate_record(record, context) == []

    def test_inverted_span_is_flagged(self) -> None:
        context = ContextSentence(id="c1", text="Mary slept.")
        event = EventMention("c1", 5, 3, "??")
        record = InferenceRecord("c1", event, Relation.Causes, "she was tired", Provenance.human)
        violations = validate_record(record, context)
        assert any("start >= end" in v for v in violations)

    def test_verbatim_repetition_is_flagged(self) -> None:
        record, context = make_record(inference="Insulted.")
        violations = validate_record(record, context)
        assert any("verbatim repetition" in v for v in violations)

    def test_out_of_bounds_span(self) -> None:
        context = ContextSentence(id="c1", text="short")
        event = EventMention("c1", 2, 99, "ort")
        record = InferenceRecord("c1", event, Relation.Causes, "x happens", Provenance.human)
        assert any("out of bounds" in v for v in validate_record(record, context))

    def test_context_id_mismatch(self) -> None:
        record, _ = make_record(context_id="c1")
        other = ContextSentence(id="c2", text=record.event.surface + " more text here")
        assert any("context mismatch" in v for v in validate_record(record, other))

    def test_empty_identifier_is_violation_not_crash(self) -> None:
        record, context = make_record(context_id="")
        assert any("malformed identifier" in v for v in validate_record(record, context))

    def test_surface_mismatch(self) -> None:
        record, context = make_record()
        bad_event = EventMention("c1", record.event.start, record.event.end, "wrong")
        bad = InferenceRecord("c1", bad_event, record.relation, record.inference, record.provenance)
        assert any("surface mismatch" in v for v in validate_record(bad, context))

    def test_seeded_corruptions_are_all_caught(self) -> None:
        # fuzz: every corruption of a valid record must produce >= 1 violation
        rng = random.Random(202)
        record, context = make_record()
        corruptions = [
            lambda r, c: (r, ContextSentence(id="other", text=c.text)),
            lambda r, c: (
                InferenceRecord(r.context_id, EventMention(r.context_id, 3, 3, ""), r.relation, r.inference, r.provenance),
                c,
            ),
            lambda r, c: (
                InferenceRecord(r.context_id, EventMention(r.context_id, 0, len(c.text) + 5, c.text), r.relation, r.inference, r.provenance),
                c,
            ),
            lambda r, c: (
                InferenceRecord(r.context_id, r.event, r.relation, "", r.provenance),
                c,
            ),
            lambda r, c: (
                InferenceRecord(r.context_id, r.event, r.relation, r.event.surface, r.provenance),
                c,
            ),
            lambda r, c: (
                InferenceRecord(
                    r.context_id,
                    EventMention(r.context_id, r.event.start, r.event.end, r.event.surface + "x"),
                    r.relation,
                    r.inference,
                    r.provenance,
                ),
                c,
            ),
        ]
        for _ in range(100):
            corrupt = rng.choice(corruptions)
            bad_record, bad_context = corrupt(record, context)
            assert validate_record(bad_record, bad_context) != []


class TestRecordJsonl:
    def test_json_round_trip(self) -> None:
        record, context = make_record()
        obj = record_to_json(record, context)
        back_record, back_context = record_from_json(obj)
        assert back_record == record
        assert back_context.text == context.text
        assert back_context.id == context.id

    def test_file_round_trip(self, tmp_path) -> None:
        record, context = make_record()
        other_record, other_context = make_record(
            text="Mary slept all day.", start=5, end=10, inference="she was tired", context_id="c2"
        )
        path = tmp_path / "records.jsonl"
        n = write_records(path, [record, other_record], {"c1": context, "c2": other_context})
        assert n == 2
        raw = path.read_bytes()
        assert b"\r\n" not in raw  # LF endings
        records, contexts = read_records(path)
        assert records == [record, other_record]
        assert set(contexts) == {"c1", "c2"}
