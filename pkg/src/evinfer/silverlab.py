"""Silver-standard training data via the split / overlap / entailment strategies.

All three strategies start the same way: decompose the complex sentence into
simple SVO clauses, align one clause to the target event, and let a
generator backend produce candidate inferences for the simple clause. They
differ in what survives:

* ``split``   keeps everything (unfiltered);
* ``overlap`` keeps candidates whose embedding is close (cosine strictly
  above a threshold, default 0.7) to some inference generated for the full
  sentence;
* ``nli``     keeps candidates the context entails; for the one
  contradiction-polarity relation (HinderedBy) it keeps candidates that
  contradict the context instead, since those describe what makes the
  context less plausible.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ConfigurationError,
    ContextSentence,
    EventMention,
    InferenceRecord,
    Provenance,
    Relation,
    validate_record,
)
from .modelkit import (
    BackendError,
    EmbeddingBackend,
    GenerationConfig,
    NLIBackend,
    Seq2SeqBackend,
)
from .seqio import GEN_TOKEN, strip_special_tokens
from .splitter import OIEBackend, align_predicate, extract_svo, render_simple_sentence
from .text import normalize_inference

logger = logging.getLogger(__name__)


class SilverStrategy(str, Enum):
    split = "split"
    overlap = "overlap"
    nli = "nli"


class FilterReason(str, Enum):
    overlap_above_threshold = "overlap_above_threshold"
    entailed = "entailed"
    contradicts_for_hindered = "contradicts_for_hindered"
    below_threshold = "below_threshold"
    neutral = "neutral"
    wrong_label = "wrong_label"


_KEEP_REASONS = {
    FilterReason.overlap_above_threshold,
    FilterReason.entailed,
    FilterReason.contradicts_for_hindered,
}


@dataclass(frozen=True)
class FilterDecision:
    """One filtering verdict: the candidate, its score, and why it was (not) kept.

    ``fallback`` marks decisions flipped to kept by the keep-top-1 rescue;
    those are exempt from the kept-implies-keep-reason invariant.
    """

    inference: str
    score: float
    kept: bool
    reason: FilterReason
    fallback: bool = False

    def consistent(self) -> bool:
        if self.kept and not self.fallback:
            return self.reason in _KEEP_REASONS
        return True


@dataclass(frozen=True)
class SilverConfig:
    strategy: SilverStrategy = SilverStrategy.nli
    overlap_threshold: float = 0.7
    inferences_per_relation: int = 5
    fallback_keep_top1: bool = False

    def validate(self) -> None:
        if not (0.0 <= self.overlap_threshold <= 1.0):
            raise ConfigurationError("overlap_threshold must be in [0, 1]")
        if self.inferences_per_relation < 1:
            raise ConfigurationError("inferences_per_relation must be >= 1")


def generate_inferences(
    backend: Seq2SeqBackend,
    head: str,
    relation: Relation,
    n: int,
    gen_config: GenerationConfig | None = None,
) -> list[str]:
    """Generate up to ``n`` distinct inferences for a simple head sentence.

    The prompt is the plain head format ``"<head> <relation> [GEN]"`` (no
    target markers: heads are single-event sentences). Generations are
    deduplicated under normalization (lowercase, collapsed whitespace,
    stripped terminal period) preserving generation order.
    """
    if not head or not head.strip():
        raise ValueError("head must be non-empty")
    if n == 0:
        return []
    if n < 0:
        raise ConfigurationError("n must be >= 0")
    if gen_config is None:
        gen_config = GenerationConfig(beam_size=max(5, n), num_return=n)
    prompt = f"{head} {relation.value} {GEN_TOKEN}"
    beams = backend.generate(prompt, gen_config)

    seen: set[str] = set()
    out: list[str] = []
    for text, _score in beams:
        cleaned = strip_special_tokens(text)
        key = normalize_inference(cleaned)
        if not key or key in seen:
            continue
        seen.add(key)
        out.append(cleaned)
        if len(out) == n:
            break
    return out


def _unit_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a / na, b / nb))


def overlap_filter(
    candidate_inferences: Sequence[str],
    full_sentence_inferences: Sequence[str],
    embedder: EmbeddingBackend,
    threshold: float,
) -> list[FilterDecision]:
    """Keep candidates whose best cosine to any full-sentence inference exceeds the threshold.

    The comparison is strict (``score > threshold``), so a threshold of 1.0
    keeps nothing. An empty reference set scores every candidate 0.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ConfigurationError("threshold must be in [0, 1]")
    ref_vectors = [embedder.embed(ref) for ref in full_sentence_inferences]
    decisions = []
    for candidate in candidate_inferences:
        if ref_vectors:
            vec = embedder.embed(candidate)
            score = max(_unit_cosine(vec, ref) for ref in ref_vectors)
        else:
            score = 0.0
        kept = score > threshold
        decisions.append(
            FilterDecision(
                inference=candidate,
                score=score,
                kept=kept,
                reason=FilterReason.overlap_above_threshold if kept else FilterReason.below_threshold,
            )
        )
    return decisions


def nli_filter(
    context: str,
    candidate_inferences: Sequence[str],
    relation: Relation,
    nli: NLIBackend,
) -> list[FilterDecision]:
    """Keep candidates by entailment label against the full context.

    The premise is always the context, the hypothesis the candidate. Most
    relations keep entailed candidates; HinderedBy keeps contradicting
    ones. The score is the probability of the winning label. A backend
    failure marks just that candidate as not kept (reason ``wrong_label``).
    """
    decisions = []
    for candidate in candidate_inferences:
        try:
            dist = nli.classify(context, candidate)
        except Exception as exc:
            logger.warning("NLI backend failed on %r: %s", candidate, exc)
            decisions.append(
                FilterDecision(candidate, 0.0, kept=False, reason=FilterReason.wrong_label)
            )
            continue
        # deterministic argmax; ties resolve in fixed label order
        label = max(("entailment", "neutral", "contradiction"), key=lambda l: dist.get(l, 0.0))
        score = float(dist.get(label, 0.0))
        if relation.keeps_contradictions:
            if label == "contradiction":
                decision = FilterDecision(
                    candidate, score, kept=True, reason=FilterReason.contradicts_for_hindered
                )
            elif label == "neutral":
                decision = FilterDecision(candidate, score, kept=False, reason=FilterReason.neutral)
            else:
                decision = FilterDecision(candidate, score, kept=False, reason=FilterReason.wrong_label)
        else:
            if label == "entailment":
                decision = FilterDecision(candidate, score, kept=True, reason=FilterReason.entailed)
            elif label == "neutral":
                decision = FilterDecision(candidate, score, kept=False, reason=FilterReason.neutral)
            else:
                decision = FilterDecision(candidate, score, kept=False, reason=FilterReason.wrong_label)
        decisions.append(decision)
    return decisions


@dataclass
class SilverBackends:
    """Backends a silver build may need; which ones are required depends on the strategy."""

    seq2seq: Seq2SeqBackend
    oie: OIEBackend | None = None
    embedder: EmbeddingBackend | None = None
    nli: NLIBackend | None = None


@dataclass(frozen=True)
class FilterAuditEntry:
    """Audit-log row tying a filter decision back to its work unit."""

    context_id: str
    event_span: tuple[int, int]
    event_surface: str
    relation: Relation
    decision: FilterDecision

    def to_json(self) -> dict:
        return {
            "context_id": self.context_id,
            "event_span": list(self.event_span),
            "event_surface": self.event_surface,
            "relation": self.relation.value,
            "inference": self.decision.inference,
            "score": self.decision.score,
            "kept": self.decision.kept,
            "reason": self.decision.reason.value,
            "fallback": self.decision.fallback,
        }


def write_audit_log(path: str | Path, entries: Iterable[FilterAuditEntry]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_json(), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


_PROVENANCE = {
    SilverStrategy.split: Provenance.silver_split,
    SilverStrategy.overlap: Provenance.silver_overlap,
    SilverStrategy.nli: Provenance.silver_nli,
}


def _check_backends(config: SilverConfig, backends: SilverBackends) -> None:
    if backends.seq2seq is None or backends.oie is None:
        raise ConfigurationError("silver build needs seq2seq and OIE backends")
    if config.strategy is SilverStrategy.overlap and backends.embedder is None:
        raise ConfigurationError("overlap strategy needs an embedding backend")
    if config.strategy is SilverStrategy.nli and backends.nli is None:
        raise ConfigurationError("nli strategy needs an NLI backend")


def _apply_fallback(decisions: list[FilterDecision]) -> list[FilterDecision]:
    if not decisions:
        return decisions
    best_idx = max(range(len(decisions)), key=lambda i: decisions[i].score)
    out = list(decisions)
    out[best_idx] = replace(out[best_idx], kept=True, fallback=True)
    return out


def build_silver_dataset(
    contexts: Sequence[tuple[ContextSentence, Sequence[EventMention]]],
    config: SilverConfig,
    backends: SilverBackends,
    audit: list[FilterAuditEntry] | None = None,
) -> list[InferenceRecord]:
    """Run one silver strategy over (context, events) pairs.

    Work units are processed in deterministic (context_id, span, relation)
    order. Records that fail validation (e.g. a generation that merely
    repeats the event) are dropped. Pass ``audit`` to collect the
    per-candidate filter decisions for the audit log.
    """
    config.validate()
    _check_backends(config, backends)
    n = config.inferences_per_relation
    provenance = _PROVENANCE[config.strategy]
    records: list[InferenceRecord] = []

    ordered = sorted(contexts, key=lambda pair: pair[0].id)
    for context, events in ordered:
        try:
            triples = extract_svo(context, backends.oie)
        except Exception as exc:
            logger.warning("SVO extraction failed for %s: %s", context.id, exc)
            continue
        full_inferences: dict[Relation, list[str]] = {}
        for event in sorted(events, key=lambda e: (e.start, e.end)):
            aligned = align_predicate(triples, event, context)
            if aligned is None:
                logger.info("no SVO clause aligns with %r in %s", event.surface, context.id)
                continue
            head = render_simple_sentence(aligned)
            for relation in Relation:
                candidates = generate_inferences(backends.seq2seq, head, relation, n)
                if config.strategy is SilverStrategy.split:
                    kept_texts = candidates
                    decisions = [
                        FilterDecision(c, 1.0, kept=True, reason=FilterReason.overlap_above_threshold)
                        for c in candidates
                    ]
                elif config.strategy is SilverStrategy.overlap:
                    if relation not in full_inferences:
                        full_inferences[relation] = generate_inferences(
                            backends.seq2seq, context.text, relation, n
                        )
                    decisions = overlap_filter(
                        candidates,
                        full_inferences[relation],
                        backends.embedder,
                        config.overlap_threshold,
                    )
                else:
                    decisions = nli_filter(context.text, candidates, relation, backends.nli)

                if (
                    config.strategy is not SilverStrategy.split
                    and config.fallback_keep_top1
                    and not any(d.kept for d in decisions)
                ):
                    decisions = _apply_fallback(decisions)
                kept_texts = [d.inference for d in decisions if d.kept]

                if audit is not None and config.strategy is not SilverStrategy.split:
                    audit.extend(
                        FilterAuditEntry(context.id, event.span, event.surface, relation, d)
                        for d in decisions
                    )
                for inference in kept_texts:
                    record = InferenceRecord(
                        context_id=context.id,
                        event=event,
                        relation=relation,
                        inference=inference,
                        provenance=provenance,
                    )
                    problems = validate_record(record, context)
                    if problems:
                        logger.info("dropping invalid silver record (%s)", "; ".join(problems))
                        continue
                    records.append(record)
    return records
