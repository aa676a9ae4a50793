"""Corpus ingestion: complex-sentence selection, event extraction, dataset splits.

Event mentions are found by matching maximal runs of contiguous verb tokens,
so the part-of-speech tagger is the load-bearing dependency. It is injected
behind :class:`POSTagger` (any Universal-POS-compatible backend works); the
built-in :class:`RuleBasedTagger` is a dependency-free heuristic that covers
desk-scale corpora and the test fixtures, not a general English tagger.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .core import (
    ConfigurationError,
    ContextSentence,
    DatasetSplit,
    EventMention,
    InferenceRecord,
    Source,
    SplitName,
)
from .text import tokenize_with_spans

logger = logging.getLogger(__name__)

TaggedToken = tuple[str, str, tuple[int, int]]  # (token, upos tag, char span)


class POSTagger(Protocol):
    def tag(self, text: str) -> list[TaggedToken]: ...


@dataclass(frozen=True)
class CorpusDoc:
    source: Source
    topic: str
    sentences: tuple[str, ...]


def read_corpus(path: str | Path) -> list[CorpusDoc]:
    """Read a corpus JSONL file: one {source, topic, sentences} object per line."""
    docs: list[CorpusDoc] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            sentences = tuple(obj["sentences"])
            if not sentences:
                raise ValueError(f"{path}:{lineno}: document has no sentences")
            docs.append(
                CorpusDoc(
                    source=Source(obj.get("source", "other")),
                    topic=obj.get("topic", ""),
                    sentences=sentences,
                )
            )
    return docs


# --- built-in heuristic tagger ------------------------------------------------

_AUX = {
    "be", "am", "is", "are", "was", "were", "been", "being",
    "have", "has", "had", "having",
    "do", "does", "did",
    "will", "would", "can", "could", "shall", "should", "may", "might", "must",
}
_DO_LIKE = {"do", "does", "did", "will", "would", "can", "could", "shall", "should", "may", "might", "must"}
_NEGATION = {"not", "n't", "never"}
_PRONOUNS = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them",
    "myself", "yourself", "himself", "herself", "itself", "ourselves", "themselves",
    "who", "whom", "this", "that", "these", "those", "someone", "something",
}
_DETERMINERS = {"a", "an", "the", "every", "each", "some", "any", "no", "his", "my", "your", "their", "our", "its"}
_COORD = {"and", "or", "but", "nor"}
_SUBORD = {
    "so", "when", "because", "while", "if", "although", "though", "since",
    "after", "before", "until", "unless", "whereas", "once",
}
_PREPOSITIONS = {
    "in", "on", "at", "to", "from", "with", "for", "of", "by", "near", "into",
    "over", "under", "about", "against", "between", "through", "during", "off",
    "up", "down", "out", "around", "across",
}

# Frequent irregular verb forms (past/participle/base) the suffix rules miss.
_IRREGULAR_VERBS = {
    "ran", "run", "slept", "sleep", "shot", "shoot", "spent", "spend",
    "went", "go", "came", "come", "saw", "see", "seen", "took", "take", "taken",
    "got", "get", "made", "make", "said", "say", "told", "tell", "knew", "know",
    "thought", "think", "found", "find", "gave", "give", "given", "felt", "feel",
    "kept", "keep", "began", "begin", "brought", "bring", "bought", "buy",
    "caught", "catch", "taught", "teach", "fought", "fight", "stood", "stand",
    "heard", "hear", "held", "hold", "met", "meet", "paid", "pay", "sat", "sit",
    "sold", "sell", "sent", "send", "built", "build", "lost", "lose", "won", "win",
    "wrote", "write", "written", "drove", "drive", "ate", "eat", "eaten",
    "fell", "fall", "fallen", "flew", "fly", "grew", "grow", "grown",
    "broke", "break", "broken", "chose", "choose", "spoke", "speak", "spoken",
    "threw", "throw", "thrown", "woke", "wake", "sang", "sing", "rang", "ring",
    "swam", "swim", "rode", "ride", "rose", "rise", "stole", "steal",
    "drew", "draw", "drawn", "left", "leave", "put", "cut", "hit", "hurt",
    "read", "let", "set", "quit", "hid", "hide", "spoilt", "dealt", "deal",
}

# Frequent base/present verbs whose form carries no useful suffix.
_COMMON_VERBS = {
    "reply", "replies", "jump", "jumps", "call", "calls", "insult", "insults",
    "like", "likes", "want", "wants", "talk", "talks", "respond", "responds",
    "need", "needs", "stay", "stays", "walk", "walks", "play", "plays",
    "work", "works", "look", "looks", "use", "uses", "ask", "asks",
    "move", "moves", "live", "lives", "believe", "believes", "happen", "happens",
    "stop", "stops", "watch", "watches", "follow", "follows", "open", "opens",
    "offer", "offers", "remember", "remembers", "agree", "agrees", "die", "dies",
    "reach", "reaches", "kill", "kills", "raise", "raises", "pass", "passes",
    "return", "returns", "explain", "explains", "hope", "hopes", "carry",
    "carries", "receive", "receives", "support", "supports", "produce",
    "produces", "cover", "covers", "cause", "causes", "help", "helps",
    "visit", "visits", "arrive", "arrives", "leave", "leaves", "wait", "waits",
    "decide", "decides", "learn", "learns", "forget", "forgets", "win", "wins",
    "cry", "cries", "laugh", "laughs", "smile", "smiles", "shout", "shouts",
}

# -ing words that are (almost) always nouns or function words in our corpora.
_ING_EXCEPTIONS = {
    "morning", "evening", "thing", "something", "anything", "everything",
    "nothing", "king", "ring", "spring", "string", "wing", "ceiling",
    "sibling", "clothing", "darling", "during", "wedding", "meeting",
}
_ED_EXCEPTIONS = {"hundred", "sacred", "red", "bed", "need", "indeed", "speed", "seed"}


class RuleBasedTagger:
    """Lexicon-plus-suffix POS tagger emitting Universal-POS-style tags.

    Two passes: a per-token lexicon/suffix pass, then a context pass that
    retags bare infinitives after do-support and modals ("didn't reply").
    """

    def tag(self, text: str) -> list[TaggedToken]:
        tokens = tokenize_with_spans(text)
        tags = [self._tag_one(tok) for tok, _ in tokens]
        # context pass: AUX (+ optional negation) followed by an untagged word
        # means that word is a bare verb form.
        for i, (tok, _) in enumerate(tokens):
            if tags[i] != "NOUN":
                continue
            j = i - 1
            while j >= 0 and tags[j] == "PART":
                j -= 1
            if j >= 0 and tags[j] == "AUX" and tokens[j][0].lower() in _DO_LIKE:
                if tok.isalpha():
                    tags[i] = "VERB"
        return [(tok, tag, span) for (tok, span), tag in zip(tokens, tags)]

    @staticmethod
    def _tag_one(token: str) -> str:
        low = token.lower()
        if not any(c.isalnum() for c in token):
            return "PUNCT"
        if token.isdigit():
            return "NUM"
        if low in _NEGATION:
            return "PART"
        if low in _AUX:
            return "AUX"
        if low in _PRONOUNS:
            return "PRON"
        if low in _DETERMINERS:
            return "DET"
        if low in _COORD:
            return "CCONJ"
        if low in _SUBORD:
            return "SCONJ"
        if low in _PREPOSITIONS:
            return "ADP"
        if low in _IRREGULAR_VERBS or low in _COMMON_VERBS:
            return "VERB"
        if low.endswith("ed") and len(low) > 3 and low not in _ED_EXCEPTIONS:
            return "VERB"
        if low.endswith("ing") and len(low) > 4 and low not in _ING_EXCEPTIONS:
            return "VERB"
        if token[:1].isupper():
            return "PROPN"
        return "NOUN"


# --- event extraction -----------------------------------------------------------

DEFAULT_MERGE_PARTICLES = frozenset({"not", "n't"})
_VERBAL_TAGS = {"VERB", "AUX"}


def verb_runs(
    pos_tags: Sequence[TaggedToken],
    merge_particles: frozenset[str] = DEFAULT_MERGE_PARTICLES,
) -> list[list[TaggedToken]]:
    """Group tagged tokens into maximal contiguous verbal runs.

    A run is opened by a VERB or AUX token and extended over further
    VERB/AUX tokens; negation particles from ``merge_particles`` join the
    run when tagged PART or ADV ("did n't reply" is one run). Anything
    else, including conjunctions, closes the run.
    """
    runs: list[list[TaggedToken]] = []
    current: list[TaggedToken] = []
    for tok, tag, span in pos_tags:
        in_run = bool(current)
        if tag in _VERBAL_TAGS:
            current.append((tok, tag, span))
        elif in_run and tag in {"PART", "ADV"} and tok.lower() in merge_particles:
            current.append((tok, tag, span))
        else:
            if current:
                runs.append(current)
                current = []
    if current:
        runs.append(current)
    return [run for run in runs if any(tag in _VERBAL_TAGS for _, tag, _ in run)]


def extract_event_mentions(
    context: ContextSentence,
    pos_tags: Sequence[TaggedToken],
    merge_particles: frozenset[str] = DEFAULT_MERGE_PARTICLES,
) -> list[EventMention]:
    """One EventMention per maximal verbal run, ordered by span start.

    Auxiliary + main verb sequences collapse into a single mention; a
    conjunction between verbs breaks the run ("was shot and spent" yields
    two mentions). Sentences without verbs yield an empty list.
    """
    mentions = []
    for run in verb_runs(pos_tags, merge_particles):
        start = run[0][2][0]
        end = run[-1][2][1]
        mentions.append(EventMention.from_context(context, start, end))
    return mentions


def select_complex_sentences(
    docs: Sequence[CorpusDoc],
    top_k_topics: int,
    min_events: int,
    tagger: POSTagger,
) -> list[ContextSentence]:
    """Pick multi-event sentences from the most frequent topics.

    Topics are ranked by sentence count (ties broken lexicographically);
    within a topic, sentences are ordered by descending character length,
    length being the complexity proxy. Only sentences with at least
    ``min_events`` extracted event mentions survive. Sentences the tagger
    fails on are skipped with a warning.
    """
    if top_k_topics < 1:
        raise ConfigurationError("top_k_topics must be >= 1")
    if min_events < 2:
        raise ConfigurationError("min_events must be >= 2")
    if not docs:
        return []

    topic_counts: dict[str, int] = {}
    for doc in docs:
        topic_counts[doc.topic] = topic_counts.get(doc.topic, 0) + len(doc.sentences)
    ranked_topics = sorted(topic_counts, key=lambda t: (-topic_counts[t], t))
    kept_topics = set(ranked_topics[:top_k_topics])
    topic_rank = {t: i for i, t in enumerate(ranked_topics)}

    selected: list[ContextSentence] = []
    for doc_idx, doc in enumerate(docs):
        if doc.topic not in kept_topics:
            continue
        for sent_idx, sentence in enumerate(doc.sentences):
            context = ContextSentence(
                id=f"d{doc_idx:04d}s{sent_idx:03d}",
                text=sentence,
                source=doc.source,
                topic=doc.topic,
            )
            try:
                tags = tagger.tag(sentence)
                mentions = extract_event_mentions(context, tags)
            except Exception as exc:  # tagger failures skip the sentence only
                logger.warning("tagger failed on %s (%s); sentence skipped", context.id, exc)
                continue
            if len(mentions) >= min_events:
                selected.append(context)

    selected.sort(key=lambda c: (topic_rank[c.topic], -len(c.text), c.id))
    return selected


# --- dataset splits ---------------------------------------------------------------


class SplitUnit(str, Enum):
    by_event = "by_event"
    by_context = "by_context"


@dataclass(frozen=True)
class SplitConfig:
    """How to partition records into train/dev/test.

    The grouping unit is assigned wholly to one split, so target predicates
    never leak across splits; ``by_context`` is the stricter default since
    contexts subsume events.
    """

    ratios: tuple[float, float, float] = (0.6, 0.1, 0.3)
    seed: int = 0
    unit: SplitUnit = SplitUnit.by_context

    def validate(self) -> None:
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ConfigurationError("ratios must be three positive fractions")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigurationError("ratios must sum to 1.0")


def _unit_key(record: InferenceRecord, unit: SplitUnit):
    if unit is SplitUnit.by_context:
        return record.context_id
    return (record.context_id, record.event.start, record.event.end)


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    # largest-remainder allocation; remainders tie-break in split order
    exact = [n * r for r in ratios]
    counts = [math.floor(x) for x in exact]
    remainders = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split_dataset(
    records: Sequence[InferenceRecord],
    config: SplitConfig,
) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Deterministically partition records into disjoint train/dev/test splits."""
    config.validate()
    unit_keys: list = []
    seen = set()
    for record in records:
        key = _unit_key(record, config.unit)
        if key not in seen:
            seen.add(key)
            unit_keys.append(key)
    if len(unit_keys) < 3:
        raise ValueError(f"insufficient units: need at least 3, got {len(unit_keys)}")

    shuffled = list(unit_keys)
    random.Random(config.seed).shuffle(shuffled)
    n_train, n_dev, _ = _allocate(len(shuffled), config.ratios)
    assignment: dict = {}
    for i, key in enumerate(shuffled):
        if i < n_train:
            assignment[key] = SplitName.train
        elif i < n_train + n_dev:
            assignment[key] = SplitName.dev
        else:
            assignment[key] = SplitName.test

    buckets: dict[SplitName, list[InferenceRecord]] = {name: [] for name in SplitName}
    for record in records:
        buckets[assignment[_unit_key(record, config.unit)]].append(record)
    return tuple(
        DatasetSplit(name=name, records=tuple(buckets[name])) for name in SplitName
    )  # type: ignore[return-value]


def dataset_stats(splits: Iterable[DatasetSplit]) -> dict[str, dict[str, int]]:
    """Per split: inference count, unique target predicates, unique contexts."""
    stats: dict[str, dict[str, int]] = {}
    for split in splits:
        predicates = {(r.context_id, r.event.start, r.event.end) for r in split.records}
        contexts = {r.context_id for r in split.records}
        stats[split.name.value] = {
            "inferences": len(split.records),
            "predicates": len(predicates),
            "contexts": len(contexts),
        }
    return stats
