"""Backend implementations behind the modelkit contracts.

Three tiers ship with the package:

* deterministic fixture/stub backends that replay recorded outputs, used by
  tests and by pipeline dry runs;
* dependency-light "real" backends (hashed bag-of-words embedder, lexical
  entailment heuristic) that work on arbitrary text without model weights;
* a ``transformers`` adapter for genuine pretrained encoder-decoder
  checkpoints, plus a factory that materializes a tiny word-level
  checkpoint locally for desk-scale runs where no hub is reachable.

Backend choices are wired through :func:`make_seq2seq`, :func:`make_embedder`
and :func:`make_nli` using ``kind:argument`` spec strings.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ConfigurationError
from .modelkit import NLI_LABELS, BackendError, GenerationConfig, TrainConfig
from .seqio import TrainingExample
from .text import lemma_set, tokenize

logger = logging.getLogger(__name__)

CACHE_DIR_ENV = "EVINFER_CACHE_DIR"


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_DIR_ENV, Path.home() / ".cache" / "evinfer"))


# --- stub seq2seq ---------------------------------------------------------------


class StubSeq2SeqBackend:
    """Deterministic replay backend.

    ``fixtures`` maps an exact input string to the beams to return, either
    plain strings (scores default to -index) or (text, score) pairs. Prompts
    listed in ``fail_on`` raise, prompts with no fixture return no beams.

    Training is simulated: the loss curve is a deterministic decaying
    sequence derived from the seed, and each step with a positive learning
    rate advances an update counter that rotates fixture beams, so real
    training visibly changes outputs while ``learning_rate=0`` is a no-op.
    """

    reentrant = True

    def __init__(
        self,
        fixtures: Mapping[str, Sequence] | None = None,
        fail_on: Iterable[str] = (),
        nan_at_step: int | None = None,
    ):
        self.fixtures = {k: self._norm_beams(v) for k, v in (fixtures or {}).items()}
        self.fail_on = set(fail_on)
        self.nan_at_step = nan_at_step
        self.special_tokens: list[str] = []
        self._config: TrainConfig | None = None
        self._step = 0
        self._updates = 0
        self._base = 1.0

    @staticmethod
    def _norm_beams(beams: Sequence) -> list[tuple[str, float]]:
        out = []
        for i, beam in enumerate(beams):
            if isinstance(beam, str):
                out.append((beam, float(-i)))
            else:
                text, score = beam
                out.append((str(text), float(score)))
        return out

    def register_special_tokens(self, tokens: Sequence[str]) -> None:
        for token in tokens:
            if token not in self.special_tokens:
                self.special_tokens.append(token)

    def configure_training(self, config: TrainConfig) -> None:
        self._config = config
        self._rng = random.Random(config.seed)
        self._step = 0
        self._base = 1.0 + self._rng.random()

    def train_step(self, batch: Sequence[TrainingExample]) -> float:
        if self._config is None:
            raise BackendError("configure_training was not called")
        if self.nan_at_step is not None and self._step == self.nan_at_step:
            self._step += 1
            return float("nan")
        loss = self._base * (0.9 ** self._step) + 0.01 * self._rng.random()
        self._step += 1
        if self._config.learning_rate > 0:
            self._updates += 1
        return loss

    def generate(self, input_text: str, config: GenerationConfig) -> list[tuple[str, float]]:
        if input_text in self.fail_on:
            raise BackendError(f"stub failure for input {input_text!r}")
        beams = self.fixtures.get(input_text, [])
        if self._updates and beams:
            shift = self._updates % len(beams)
            beams = beams[shift:] + beams[:shift]
        return list(beams[: config.num_return])

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        state = {
            "fixtures": {k: list(map(list, v)) for k, v in self.fixtures.items()},
            "updates": self._updates,
            "special_tokens": self.special_tokens,
        }
        (path / "stub_state.json").write_text(json.dumps(state, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "StubSeq2SeqBackend":
        state = json.loads((Path(path) / "stub_state.json").read_text(encoding="utf-8"))
        backend = cls(fixtures=state["fixtures"])
        backend._updates = state["updates"]
        backend.special_tokens = state["special_tokens"]
        return backend


# --- embedding backends ---------------------------------------------------------


class HashingBowEmbedder:
    """Hashed bag-of-words sentence embedder.

    Tokens are hashed (salt-free, so vectors are stable across processes)
    into a fixed number of buckets and the count vector is L2-normalized.
    No weights, no vocabulary, deterministic; coarse but real semantics:
    lexically similar sentences land close in cosine space.
    """

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise ConfigurationError("embedding dim must be >= 2")
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text.lower()):
            if any(c.isalnum() for c in token):
                vec[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec


class FixtureEmbedder:
    """Replays a text -> vector table; unknown text is an error."""

    def __init__(self, table: Mapping[str, Sequence[float]]):
        if not table:
            raise ConfigurationError("fixture embedder needs a non-empty table")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise ConfigurationError("fixture vectors must share one dimension")
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    @classmethod
    def from_json(cls, path: str | Path) -> "FixtureEmbedder":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def embed(self, text: str) -> np.ndarray:
        try:
            return self.table[text]
        except KeyError:
            raise BackendError(f"no fixture embedding for {text!r}") from None


class SentenceTransformerEmbedder:
    """Adapter over ``sentence-transformers`` models (optional dependency)."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ConfigurationError(
                "sentence-transformers is not installed; use the 'sbert' extra"
            ) from exc
        self._model = SentenceTransformer(model_name)

    def embed(self, text: str) -> np.ndarray:
        return np.asarray(self._model.encode([text])[0], dtype=np.float64)


# --- NLI backends ---------------------------------------------------------------


class FixtureNLI:
    """Replays (premise, hypothesis) -> label (or full distribution) fixtures."""

    def __init__(
        self,
        table: Mapping[tuple[str, str], str | Mapping[str, float]],
        default: str | None = "neutral",
        fail_on: Iterable[tuple[str, str]] = (),
    ):
        self.table = dict(table)
        self.default = default
        self.fail_on = set(fail_on)

    @classmethod
    def from_json(cls, path: str | Path, default: str | None = "neutral") -> "FixtureNLI":
        # JSONL rows: {premise, hypothesis, label} or {premise, hypothesis, probs}
        table: dict[tuple[str, str], str | Mapping[str, float]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                key = (obj["premise"], obj["hypothesis"])
                table[key] = obj.get("probs") or obj["label"]
        return cls(table, default=default)

    @staticmethod
    def _as_distribution(value: str | Mapping[str, float]) -> dict[str, float]:
        if isinstance(value, str):
            if value not in NLI_LABELS:
                raise BackendError(f"unknown NLI label {value!r}")
            return {label: (1.0 if label == value else 0.0) for label in NLI_LABELS}
        dist = {label: float(value.get(label, 0.0)) for label in NLI_LABELS}
        total = sum(dist.values())
        if abs(total - 1.0) > 1e-6:
            raise BackendError(f"NLI distribution sums to {total}, not 1")
        return dist

    def classify(self, premise: str, hypothesis: str) -> dict[str, float]:
        key = (premise, hypothesis)
        if key in self.fail_on:
            raise BackendError(f"NLI stub failure for {key!r}")
        if key in self.table:
            return self._as_distribution(self.table[key])
        if self.default is None:
            raise BackendError(f"no NLI fixture for {key!r}")
        return self._as_distribution(self.default)


_NEGATORS = {"not", "n't", "never", "no", "cannot", "none", "nobody", "nothing"}
_NLI_STOPWORDS = {
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "to", "of",
    "and", "or", "in", "on", "at", "it", "this", "that", "for", "with",
}


class LexicalNLI:
    """Deterministic entailment heuristic for runs without a trained classifier.

    A hypothesis whose content lemmas are covered by the premise counts as
    entailed; high overlap with mismatched negation counts as contradiction;
    everything else is neutral. Intentionally coarse; inject a trained model
    for real filtering.
    """

    def __init__(self, contradiction_overlap: float = 0.5):
        self.contradiction_overlap = contradiction_overlap

    def classify(self, premise: str, hypothesis: str) -> dict[str, float]:
        prem_tokens = [t.lower() for t in tokenize(premise)]
        hyp_tokens = [t.lower() for t in tokenize(hypothesis)]
        prem_neg = any(t in _NEGATORS for t in prem_tokens)
        hyp_neg = any(t in _NEGATORS for t in hyp_tokens)
        prem_content = lemma_set(premise) - _NLI_STOPWORDS - _NEGATORS
        hyp_content = lemma_set(hypothesis) - _NLI_STOPWORDS - _NEGATORS

        if not hyp_content:
            return {"entailment": 0.1, "neutral": 0.8, "contradiction": 0.1}
        coverage = len(hyp_content & prem_content) / len(hyp_content)
        if coverage >= 0.99 and prem_neg == hyp_neg:
            return {"entailment": 0.8, "neutral": 0.15, "contradiction": 0.05}
        if coverage >= self.contradiction_overlap and prem_neg != hyp_neg:
            return {"entailment": 0.05, "neutral": 0.15, "contradiction": 0.8}
        return {"entailment": 0.1, "neutral": 0.8, "contradiction": 0.1}


# --- transformers adapter -------------------------------------------------------


class HFSeq2SeqBackend:
    """Adapter for pretrained encoder-decoder checkpoints via ``transformers``.

    Works with any local path or hub identifier that resolves to a
    ``AutoModelForSeq2SeqLM`` + fast tokenizer pair. CPU-only beam search is
    deterministic, which is what the pipeline contracts rely on.
    """

    reentrant = False

    def __init__(self, model, tokenizer, max_input_tokens: int = 128):
        self.model = model
        self.tokenizer = tokenizer
        self.max_input_tokens = max_input_tokens
        self._optimizer = None
        self._config: TrainConfig | None = None

    @classmethod
    def from_pretrained(cls, path_or_id: str | Path) -> "HFSeq2SeqBackend":
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(str(path_or_id))
        model = AutoModelForSeq2SeqLM.from_pretrained(str(path_or_id))
        return cls(model, tokenizer)

    def register_special_tokens(self, tokens: Sequence[str]) -> None:
        existing = set(self.tokenizer.get_vocab())
        missing = [t for t in tokens if t not in existing]
        if not missing:
            return
        current = list(self.tokenizer.additional_special_tokens)
        self.tokenizer.add_special_tokens(
            {"additional_special_tokens": current + missing}
        )
        self.model.resize_token_embeddings(len(self.tokenizer))

    def configure_training(self, config: TrainConfig) -> None:
        import torch

        config.validate()
        torch.manual_seed(config.seed)
        self._config = config
        self._optimizer = torch.optim.AdamW(
            self.model.parameters(),
            lr=config.learning_rate,
            weight_decay=config.weight_decay,
        )

    def train_step(self, batch: Sequence[TrainingExample]) -> float:
        import torch

        if self._optimizer is None or self._config is None:
            raise BackendError("configure_training was not called")
        self.model.train()
        enc = self.tokenizer(
            [ex.input for ex in batch],
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_input_tokens,
        )
        labels = self.tokenizer(
            [ex.target for ex in batch],
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_input_tokens,
        )["input_ids"]
        labels[labels == self.tokenizer.pad_token_id] = -100
        out = self.model(
            input_ids=enc["input_ids"], attention_mask=enc["attention_mask"], labels=labels
        )
        loss = out.loss
        loss.backward()
        if self._config.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self._config.grad_clip)
        if self._config.learning_rate > 0:
            self._optimizer.step()
        self._optimizer.zero_grad()
        return float(loss.item())

    def generate(self, input_text: str, config: GenerationConfig) -> list[tuple[str, float]]:
        import torch

        self.model.eval()
        enc = self.tokenizer(
            input_text,
            return_tensors="pt",
            truncation=True,
            max_length=self.max_input_tokens,
        )
        with torch.no_grad():
            out = self.model.generate(
                enc["input_ids"],
                attention_mask=enc["attention_mask"],
                num_beams=config.beam_size,
                num_return_sequences=config.num_return,
                max_new_tokens=config.max_tokens,
                early_stopping=True,
                output_scores=True,
                return_dict_in_generate=True,
            )
        texts = [
            self.tokenizer.decode(seq, skip_special_tokens=True) for seq in out.sequences
        ]
        scores = [float(s) for s in out.sequences_scores]
        return list(zip(texts, scores))

    def count_tokens(self, text: str) -> int:
        return len(self.tokenizer.encode(text, add_special_tokens=False))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        self.model.save_pretrained(path)
        self.tokenizer.save_pretrained(path)


# A small pool of everyday sentences used to warm up locally built
# checkpoints so "unadapted" still means "has seen generic language".
GENERIC_SENTENCES = [
    "the weather was nice so they walked to the park",
    "she opened the window and looked outside",
    "he made a cup of coffee in the morning",
    "the children played in the garden after school",
    "they watched a movie together last night",
    "the train arrived late because of the storm",
    "she wrote a letter to her old friend",
    "the dog barked at the stranger near the gate",
    "he fixed the broken chair with some glue",
    "they cooked dinner and talked for hours",
    "the store closed early on sunday evening",
    "she planted flowers along the fence",
    "the team celebrated after winning the game",
    "he lost his keys somewhere in the house",
    "the baby slept through the entire trip",
    "they moved to a new city last summer",
    "she practiced the piano every afternoon",
    "the bridge was closed for repairs",
    "he borrowed a book from the library",
    "the crowd cheered when the band appeared",
]


def create_tiny_pretrained(
    path: str | Path,
    vocab_texts: Iterable[str] = (),
    seed: int = 0,
    warmup_epochs: int = 30,
    d_model: int = 64,
) -> Path:
    """Build and save a tiny pretrained encoder-decoder checkpoint.

    Trains a word-level tokenizer over ``vocab_texts`` plus the generic pool
    (a tokenizer fixes its vocabulary before any downstream training, so
    including task text here is vocabulary choice, not supervision), then
    warms a small randomly initialized encoder-decoder on a copy task over
    the generic pool only. The result loads through
    :meth:`HFSeq2SeqBackend.from_pretrained` like any other checkpoint.
    """
    import torch
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import WhitespaceSplit
    from tokenizers.trainers import WordLevelTrainer
    from transformers import BartConfig, BartForConditionalGeneration, PreTrainedTokenizerFast

    path = Path(path)
    if (path / "config.json").exists():
        return path

    texts = list(vocab_texts) + GENERIC_SENTENCES
    word_level = Tokenizer(WordLevel(unk_token="<unk>"))
    word_level.pre_tokenizer = WhitespaceSplit()
    trainer = WordLevelTrainer(
        special_tokens=["<pad>", "<s>", "</s>", "<unk>"], min_frequency=1
    )
    word_level.train_from_iterator(texts, trainer)
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=word_level,
        pad_token="<pad>",
        bos_token="<s>",
        eos_token="</s>",
        unk_token="<unk>",
    )

    torch.manual_seed(seed)
    config = BartConfig(
        vocab_size=len(tokenizer),
        d_model=d_model,
        encoder_layers=2,
        decoder_layers=2,
        encoder_attention_heads=4,
        decoder_attention_heads=4,
        encoder_ffn_dim=4 * d_model,
        decoder_ffn_dim=4 * d_model,
        max_position_embeddings=256,
        pad_token_id=tokenizer.pad_token_id,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
        decoder_start_token_id=tokenizer.eos_token_id,
        forced_eos_token_id=tokenizer.eos_token_id,
    )
    model = BartForConditionalGeneration(config)

    optimizer = torch.optim.AdamW(model.parameters(), lr=3e-4)
    model.train()
    for _ in range(warmup_epochs):
        enc = tokenizer(GENERIC_SENTENCES, return_tensors="pt", padding=True)
        labels = enc["input_ids"].clone()
        labels[labels == tokenizer.pad_token_id] = -100
        out = model(
            input_ids=enc["input_ids"], attention_mask=enc["attention_mask"], labels=labels
        )
        out.loss.backward()
        optimizer.step()
        optimizer.zero_grad()

    path.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    logger.info("tiny pretrained checkpoint written to %s", path)
    return path


# --- backend registry ------------------------------------------------------------


def _split_spec(spec: str) -> tuple[str, str]:
    kind, _, arg = spec.partition(":")
    return kind, arg


def make_seq2seq(spec: str):
    """Resolve a generator backend spec: ``stub[:fixtures.json]``, ``hf:<path>``, ``tiny[:<dir>]``."""
    kind, arg = _split_spec(spec)
    if kind == "stub":
        if arg:
            fixtures = json.loads(Path(arg).read_text(encoding="utf-8"))
            return StubSeq2SeqBackend(fixtures=fixtures)
        return StubSeq2SeqBackend()
    if kind == "hf":
        if not arg:
            raise ConfigurationError("hf backend needs a checkpoint path or id: hf:<path>")
        return HFSeq2SeqBackend.from_pretrained(arg)
    if kind == "tiny":
        target = Path(arg) if arg else cache_dir() / "tiny-seq2seq"
        create_tiny_pretrained(target)
        return HFSeq2SeqBackend.from_pretrained(target)
    raise ConfigurationError(f"unknown seq2seq backend spec: {spec!r}")


def make_embedder(spec: str):
    """Resolve an embedder spec: ``hash-bow[:dim]``, ``fixture:<table.json>``, ``sbert:<model>``."""
    kind, arg = _split_spec(spec)
    if kind == "hash-bow":
        return HashingBowEmbedder(dim=int(arg) if arg else 256)
    if kind == "fixture":
        if not arg:
            raise ConfigurationError("fixture embedder needs a table path: fixture:<path>")
        return FixtureEmbedder.from_json(arg)
    if kind == "sbert":
        if not arg:
            raise ConfigurationError("sbert embedder needs a model name: sbert:<model>")
        return SentenceTransformerEmbedder(arg)
    raise ConfigurationError(f"unknown embedder spec: {spec!r}")


def make_nli(spec: str):
    """Resolve an NLI spec: ``lexical``, ``fixture:<rows.jsonl>``."""
    kind, arg = _split_spec(spec)
    if kind == "lexical":
        return LexicalNLI()
    if kind == "fixture":
        if not arg:
            raise ConfigurationError("fixture NLI needs a fixture path: fixture:<path>")
        return FixtureNLI.from_json(arg)
    raise ConfigurationError(f"unknown NLI backend spec: {spec!r}")
