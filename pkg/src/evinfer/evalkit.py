"""Automatic metrics, report assembly, diversity analysis, human-eval tooling.

Overlap metrics use a frozen tokenizer ("metric tokenizer v1": lowercase,
split on whitespace and punctuation boundaries, punctuation kept as
tokens). Every metric aggregates max-over-references: a generation is
scored by its best match against any reference, then scores are averaged
across generations. Absolute values are therefore comparable only within
this tokenizer/smoothing configuration, not with other toolkits.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import ContextSentence, InferenceRecord, Relation
from .modelkit import EmbeddingBackend, GenerationConfig, Seq2SeqBackend
from .modelkit import generate as model_generate
from .seqio import serialize_prompt

logger = logging.getLogger(__name__)

METRIC_TOKENIZER_VERSION = "metric-tokenizer-v1"
ROUGE_BETA = 1.2

_METRIC_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def metric_tokenize(text: str) -> list[str]:
    """Frozen tokenization for all overlap metrics."""
    return _METRIC_TOKEN_RE.findall(text.lower())


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def bleu_n(candidate: str, reference: str, n: int = 2) -> float:
    """Sentence BLEU with uniform weights over orders 1..n.

    Brevity penalty applies when the candidate is shorter than the
    reference. Zero counts at orders >= 2 get add-one smoothing; a zero
    unigram match (or an empty candidate) is a hard 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = metric_tokenize(candidate)
    ref = metric_tokenize(reference)
    if not cand or not ref:
        return 0.0

    log_precision_sum = 0.0
    for order in range(1, n + 1):
        cand_counts = _ngram_counts(cand, order)
        ref_counts = _ngram_counts(ref, order)
        total = max(len(cand) - order + 1, 0)
        matched = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        if order == 1:
            if matched == 0:
                return 0.0
            precision = matched / total
        elif matched == 0:
            precision = (matched + 1) / (total + 1)
        else:
            precision = matched / total
        log_precision_sum += math.log(precision) / n

    if len(cand) >= len(ref):
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_precision_sum)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        row = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = max(prev[j], row[j - 1])
        prev = row
    return prev[len(b)]


def rouge_l(candidate: str, reference: str, beta: float = ROUGE_BETA) -> float:
    """LCS-based F-measure (beta = 1.2 as in the metric's original definition)."""
    cand = metric_tokenize(candidate)
    ref = metric_tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return (1 + beta**2) * precision * recall / (recall + beta**2 * precision)


def aggregate_max_over_refs(
    generated: Sequence[str],
    references: Sequence[str],
    metric: Callable[[str, str], float],
) -> float:
    """Best-match aggregation: max over references per generation, then mean."""
    if not references:
        raise ValueError("references must be non-empty")
    if not generated:
        logger.warning("no generated inferences to score; reporting 0")
        return 0.0
    return sum(max(metric(g, ref) for ref in references) for g in generated) / len(generated)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


def embed_score(
    generated: Sequence[str],
    references: Sequence[str],
    embedder: EmbeddingBackend,
) -> float:
    """Mean over generations of the max cosine similarity to any reference.

    Sentence-level semantic score; absolute values depend on the embedding
    backend and are only meaningful as orderings between models evaluated
    with the same backend.
    """
    if not references:
        raise ValueError("references must be non-empty")
    if not generated:
        logger.warning("no generated inferences to score; reporting 0")
        return 0.0
    ref_vectors = [_unit(embedder.embed(ref)) for ref in references]
    total = 0.0
    for text in generated:
        vec = _unit(embedder.embed(text))
        total += max(float(np.dot(vec, ref)) for ref in ref_vectors)
    return total / len(generated)


# --- model evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    """One results row, all values on the x100 scale."""

    rouge_l: float
    bleu_2: float
    bleu_4: float
    embed_score: float

    def as_dict(self) -> dict[str, float]:
        return {
            "rouge_l": self.rouge_l,
            "bleu_2": self.bleu_2,
            "bleu_4": self.bleu_4,
            "embed_score": self.embed_score,
        }


@dataclass
class EvalReport:
    rows: dict[str, MetricRow] = field(default_factory=dict)
    per_relation: dict[str, dict[str, MetricRow]] = field(default_factory=dict)
    groups_evaluated: int = 0
    groups_skipped: int = 0

    def check_bounds(self) -> None:
        for row in self.rows.values():
            for name, value in row.as_dict().items():
                if not (0.0 <= value <= 100.0):
                    raise ValueError(f"{name} out of [0, 100]: {value}")

    def merge(self, other: "EvalReport") -> "EvalReport":
        merged = EvalReport(
            rows={**self.rows, **other.rows},
            per_relation={**self.per_relation, **other.per_relation},
            groups_evaluated=self.groups_evaluated + other.groups_evaluated,
            groups_skipped=self.groups_skipped + other.groups_skipped,
        )
        return merged

    def render_markdown(self) -> str:
        lines = [
            "| Model | ROUGE-L | BLEU-2 | BLEU-4 | Embed |",
            "|---|---:|---:|---:|---:|",
        ]
        for model, row in self.rows.items():
            lines.append(
                f"| {model} | {row.rouge_l:.3f} | {row.bleu_2:.3f} "
                f"| {row.bleu_4:.3f} | {row.embed_score:.3f} |"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "models": {m: row.as_dict() for m, row in self.rows.items()},
            "per_relation": {
                m: {rel: row.as_dict() for rel, row in rels.items()}
                for m, rels in self.per_relation.items()
            },
            "groups_evaluated": self.groups_evaluated,
            "groups_skipped": self.groups_skipped,
        }


def _group_records(
    records: Sequence[InferenceRecord],
) -> dict[tuple[str, int, int, str], list[InferenceRecord]]:
    groups: dict[tuple[str, int, int, str], list[InferenceRecord]] = {}
    for record in records:
        key = (record.context_id, record.event.start, record.event.end, record.relation.value)
        groups.setdefault(key, []).append(record)
    return groups


def evaluate_model(
    backend: Seq2SeqBackend | None,
    records: Sequence[InferenceRecord],
    contexts: Mapping[str, ContextSentence],
    embedder: EmbeddingBackend,
    gen_config: GenerationConfig = GenerationConfig(),
    model_id: str = "model",
    references_as_generations: bool = False,
    per_relation: bool = False,
) -> EvalReport:
    """Generate per (context, event, relation) group and score against references.

    Groups whose generation fails are skipped and counted. With
    ``references_as_generations`` the references themselves stand in for
    the generations, which pins the overlap-metric ceiling at exactly 100.
    """
    groups = _group_records(records)
    group_scores: list[tuple[str, tuple[float, float, float, float]]] = []
    skipped = 0
    for key in sorted(groups):
        group = groups[key]
        context_id, start, end, relation_token = key
        references = [r.inference for r in group]
        if references_as_generations:
            generations = list(references)
        else:
            if backend is None:
                raise ValueError("backend is required unless references_as_generations is set")
            prompt = serialize_prompt(
                contexts[context_id], group[0].event, Relation(relation_token)
            )
            try:
                generations = [text for text, _ in model_generate(backend, prompt, gen_config)]
            except Exception as exc:
                logger.warning("generation failed for group %s: %s", key, exc)
                skipped += 1
                continue
        scores = (
            aggregate_max_over_refs(generations, references, rouge_l),
            aggregate_max_over_refs(generations, references, lambda c, r: bleu_n(c, r, 2)),
            aggregate_max_over_refs(generations, references, lambda c, r: bleu_n(c, r, 4)),
            embed_score(generations, references, embedder),
        )
        group_scores.append((relation_token, scores))

    def mean_row(pairs: Sequence[tuple[float, float, float, float]]) -> MetricRow:
        n = len(pairs)
        sums = [sum(p[i] for p in pairs) for i in range(4)]
        return MetricRow(*(100.0 * s / n for s in sums))

    report = EvalReport(groups_evaluated=len(group_scores), groups_skipped=skipped)
    if group_scores:
        report.rows[model_id] = mean_row([scores for _, scores in group_scores])
    else:
        report.rows[model_id] = MetricRow(0.0, 0.0, 0.0, 0.0)
    if per_relation:
        by_relation: dict[str, list] = {}
        for relation_token, scores in group_scores:
            by_relation.setdefault(relation_token, []).append(scores)
        report.per_relation[model_id] = {
            rel: mean_row(scores) for rel, scores in sorted(by_relation.items())
        }
    report.check_bounds()
    return report


# --- diversity analysis --------------------------------------------------------


@dataclass(frozen=True)
class ProjectedPoint:
    x: float
    y: float
    event: str
    text: str


@dataclass
class DiversityResult:
    points: list[ProjectedPoint]
    silhouette: float


def diversity_projection(
    inferences_by_event: Mapping[str, Sequence[str]],
    embedder: EmbeddingBackend,
    seed: int = 42,
) -> DiversityResult:
    """Embed inferences, project to 2D, and measure event-cluster separation.

    The silhouette score is computed in the original embedding space
    (cosine metric) so the projection cannot distort it; higher silhouette
    means the per-event inference sets are more semantically distinct.
    Needs at least two events with at least two inferences each.
    """
    if len(inferences_by_event) < 2:
        raise ValueError("need >= 2 clusters (events) for a separation score")
    for event, inferences in inferences_by_event.items():
        if len(inferences) < 2:
            raise ValueError(f"event {event!r} needs >= 2 inferences")

    labels: list[str] = []
    texts: list[str] = []
    for event in sorted(inferences_by_event):
        for text in inferences_by_event[event]:
            labels.append(event)
            texts.append(text)
    matrix = np.stack([embedder.embed(text) for text in texts])

    from sklearn.manifold import TSNE
    from sklearn.metrics import silhouette_score

    try:
        silhouette = float(silhouette_score(matrix, labels, metric="cosine"))
        if math.isnan(silhouette):
            silhouette = 0.0
    except ValueError:
        # degenerate geometry (e.g. all points identical): no separation
        silhouette = 0.0

    n = len(texts)
    perplexity = min(30.0, max(2.0, (n - 1) / 3))
    projected = TSNE(
        n_components=2, random_state=seed, perplexity=perplexity, init="pca"
    ).fit_transform(matrix)
    points = [
        ProjectedPoint(float(x), float(y), event, text)
        for (x, y), event, text in zip(projected, labels, texts)
    ]
    return DiversityResult(points=points, silhouette=silhouette)


def write_projection_csv(path: str | Path, result: DiversityResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "event", "text"])
        for point in result.points:
            writer.writerow([f"{point.x:.6f}", f"{point.y:.6f}", point.event, point.text])


# --- human evaluation ------------------------------------------------------------

LIKERT_LEVELS = ("H", "M", "L")
HIT_COLUMNS = (
    "context",
    "target_event",
    "relation",
    "question",
    "inference",
    "model_key",
    "likelihood",
    "specificity",
    "relevance",
)


@dataclass(frozen=True)
class Rating:
    """One rater's judgment; relevance is binary (H/L), the others three-way."""

    likelihood: str | None = None
    specificity: str | None = None
    relevance: str | None = None


@dataclass(frozen=True)
class HumanEvalItem:
    context: str
    event: str
    relation: Relation
    inference: str
    model_id: str
    ratings: tuple[Rating, ...] = ()


def export_human_eval(
    items: Sequence[HumanEvalItem], seed: int = 0
) -> tuple[list[dict], dict[str, str]]:
    """Build blinded, seed-shuffled HIT rows plus the model-id blinding key.

    Row order and model blinding depend only on the seed and the input, so
    the same call produces byte-identical files.
    """
    rng = random.Random(seed)
    model_ids = sorted({item.model_id for item in items})
    shuffled_ids = list(model_ids)
    rng.shuffle(shuffled_ids)
    blinding = {model: f"model_{i + 1}" for i, model in enumerate(shuffled_ids)}

    rows = []
    for item in items:
        rows.append(
            {
                "context": item.context,
                "target_event": item.event,
                "relation": item.relation.value,
                "question": item.relation.question,
                "inference": item.inference,
                "model_key": blinding[item.model_id],
                "likelihood": "",
                "specificity": "",
                "relevance": "",
            }
        )
    rng.shuffle(rows)
    return rows, blinding


def write_hit_csv(path: str | Path, rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(HIT_COLUMNS), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _majority(votes: Sequence[str], levels: Sequence[str]) -> str | None:
    valid = [v for v in votes if v in levels]
    if not valid:
        return None
    counts = Counter(valid)
    top = max(counts.values())
    # ties resolve toward the lower level (levels are ordered best-first)
    for level in reversed(levels):
        if counts.get(level, 0) == top:
            return level
    return None


@dataclass
class HumanEvalScores:
    percentages: dict[str, dict[str, dict[str, float]]]  # model -> metric -> level -> %
    items_scored: dict[str, int]
    items_excluded: dict[str, int]


def score_human_eval(items: Sequence[HumanEvalItem]) -> HumanEvalScores:
    """Majority-vote ratings per item, then per-model level percentages.

    An item missing all ratings for a metric is excluded from that metric
    and counted. Rating ties go to the lower level.
    """
    metrics = {
        "likelihood": LIKERT_LEVELS,
        "specificity": LIKERT_LEVELS,
        "relevance": ("H", "L"),
    }
    votes: dict[str, dict[str, Counter]] = {}
    scored: Counter = Counter()
    excluded: Counter = Counter()
    for item in items:
        for metric, levels in metrics.items():
            raw = [getattr(rating, metric) for rating in item.ratings]
            verdict = _majority([v for v in raw if v is not None], levels)
            if verdict is None:
                excluded[f"{item.model_id}/{metric}"] += 1
                continue
            scored[f"{item.model_id}/{metric}"] += 1
            votes.setdefault(item.model_id, {}).setdefault(metric, Counter())[verdict] += 1

    percentages: dict[str, dict[str, dict[str, float]]] = {}
    for model, metric_votes in votes.items():
        percentages[model] = {}
        for metric, counts in metric_votes.items():
            total = sum(counts.values())
            percentages[model][metric] = {
                level: 100.0 * counts.get(level, 0) / total for level in metrics[metric]
            }
    return HumanEvalScores(
        percentages=percentages,
        items_scored=dict(scored),
        items_excluded=dict(excluded),
    )
