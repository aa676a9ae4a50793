"""Backend contracts plus the fine-tuning and generation drivers.

Backends (sequence-to-sequence generators, sentence embedders, entailment
classifiers) live behind small protocols so the pipeline never depends on a
particular model family. Training is single-controller: one run owns its
backend exclusively. ``batch_generate`` only parallelizes across prompts
when the backend declares itself reentrant.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import ConfigurationError
from .seqio import TrainingExample, special_tokens, strip_special_tokens, validate_prompt

logger = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """A backend call failed (model error, missing fixture, bad state)."""


@dataclass(frozen=True)
class TrainConfig:
    """Fine-tuning hyperparameters.

    Defaults follow the training recipe used for all generator variants:
    2 epochs, batch size 8, learning rate 1e-5, decoupled-weight-decay Adam.
    Clipping/warmup/schedule default to off.
    """

    epochs: int = 2
    batch_size: int = 8
    learning_rate: float = 1e-5
    optimizer: str = "adamw"
    seed: int = 0
    weight_decay: float = 0.01
    grad_clip: float | None = None
    warmup_steps: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.optimizer != "adamw":
            raise ConfigurationError(f"unsupported optimizer: {self.optimizer!r}")


@dataclass(frozen=True)
class GenerationConfig:
    """Beam-search decoding settings: beam size 5, at most 50 tokens."""

    beam_size: int = 5
    max_tokens: int = 50
    num_return: int = 5

    def validate(self) -> None:
        if self.max_tokens < 1:
            raise ConfigurationError("max_tokens must be >= 1")
        if not (1 <= self.num_return <= self.beam_size):
            raise ConfigurationError("num_return must satisfy 1 <= num_return <= beam_size")


@runtime_checkable
class Seq2SeqBackend(Protocol):
    """Contract for trainable generator backends.

    ``generate`` must be deterministic given a fixed seed and config; losses
    are finite and non-negative for well-formed batches. Scores are backend
    log-likelihoods and are not comparable across backends.
    """

    def register_special_tokens(self, tokens: Sequence[str]) -> None: ...

    def configure_training(self, config: TrainConfig) -> None: ...

    def train_step(self, batch: Sequence[TrainingExample]) -> float: ...

    def generate(self, input_text: str, config: GenerationConfig) -> list[tuple[str, float]]: ...

    def count_tokens(self, text: str) -> int: ...

    def save(self, path: str | Path) -> None: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    """Deterministic text -> fixed-dimension vector."""

    def embed(self, text: str) -> np.ndarray: ...


NLI_LABELS = ("entailment", "neutral", "contradiction")


@runtime_checkable
class NLIBackend(Protocol):
    """(premise, hypothesis) -> probability distribution over the NLI labels."""

    def classify(self, premise: str, hypothesis: str) -> dict[str, float]: ...


def fine_tune(
    backend: Seq2SeqBackend,
    examples: Sequence[TrainingExample],
    config: TrainConfig,
    run_dir: str | Path | None = None,
) -> tuple[Seq2SeqBackend, list[float]]:
    """Fine-tune ``backend`` on ``examples``; returns (backend, per-epoch mean loss).

    Runs ``epochs * ceil(N / batch_size)`` steps with a per-epoch reshuffle
    derived from the seed. Special tokens are registered with the backend
    tokenizer before any training step. When ``run_dir`` is given, the run
    persists a config snapshot, the per-step loss history (CSV), the special
    token manifest, and the final model artifact under that directory.
    """
    config.validate()
    if not examples:
        raise ValueError("no training examples")

    tokens = special_tokens()
    backend.register_special_tokens(tokens)
    backend.configure_training(config)

    run_path: Path | None = None
    loss_rows: list[tuple[int, int, float]] = []
    if run_dir is not None:
        run_path = Path(run_dir)
        run_path.mkdir(parents=True, exist_ok=True)
        (run_path / "config.json").write_text(
            json.dumps(dataclasses.asdict(config), indent=2) + "\n", encoding="utf-8"
        )
        (run_path / "special_tokens.json").write_text(
            json.dumps(tokens, indent=2) + "\n", encoding="utf-8"
        )

    rng = random.Random(config.seed)
    order = list(range(len(examples)))
    epoch_means: list[float] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        epoch_losses: list[float] = []
        for batch_start in range(0, len(order), config.batch_size):
            batch_ids = order[batch_start : batch_start + config.batch_size]
            batch = [examples[i] for i in batch_ids]
            loss = backend.train_step(batch)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss!r} at epoch {epoch} step {step} "
                    f"(example ids {batch_ids})"
                )
            epoch_losses.append(loss)
            loss_rows.append((epoch, step, loss))
            step += 1
        epoch_means.append(sum(epoch_losses) / len(epoch_losses))
        logger.info("epoch %d/%d mean loss %.6f", epoch, config.epochs, epoch_means[-1])

    if run_path is not None:
        with open(run_path / "loss_history.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "step", "loss"])
            writer.writerows(loss_rows)
        backend.save(run_path / "model")
    return backend, epoch_means


def generate(
    backend: Seq2SeqBackend,
    prompt: str,
    config: GenerationConfig = GenerationConfig(),
) -> list[tuple[str, float]]:
    """Generate up to ``num_return`` inferences for a well-formed prompt.

    The prompt grammar is validated before the backend is called; outputs
    come back sorted by descending score with format tokens stripped.
    """
    config.validate()
    validate_prompt(prompt)
    raw = backend.generate(prompt, config)
    cleaned = [(strip_special_tokens(text), float(score)) for text, score in raw]
    cleaned.sort(key=lambda pair: -pair[1])
    return cleaned[: config.num_return]


@dataclass
class BatchGeneration:
    """Keyed generation results; failed prompts land in ``errors``."""

    results: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


def batch_generate(
    backend: Seq2SeqBackend,
    prompts: Sequence[str],
    config: GenerationConfig = GenerationConfig(),
    progress: Callable[[int, int], None] | None = None,
    max_workers: int = 1,
) -> BatchGeneration:
    """Generate for many prompts; one failure never affects the others.

    The result is a mapping keyed by prompt, so it is independent of prompt
    order and batching. Parallel execution is only attempted when the
    backend sets ``reentrant = True``.
    """
    config.validate()
    out = BatchGeneration()
    unique_prompts = list(dict.fromkeys(prompts))
    total = len(unique_prompts)

    def run_one(prompt: str) -> None:
        try:
            out.results[prompt] = generate(backend, prompt, config)
        except Exception as exc:
            out.errors[prompt] = f"{type(exc).__name__}: {exc}"

    if max_workers > 1 and getattr(backend, "reentrant", False):
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            for done, _ in enumerate(pool.map(run_one, unique_prompts), start=1):
                if progress:
                    progress(done, total)
    else:
        for done, prompt in enumerate(unique_prompts, start=1):
            run_one(prompt)
            if progress:
                progress(done, total)
    return out
