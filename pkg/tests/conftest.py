from __future__ import annotations

import pytest

import toyworld
from evinfer.backends import HFSeq2SeqBackend, create_tiny_pretrained
from evinfer.modelkit import TrainConfig, fine_tune
from evinfer.seqio import serialize_training_example


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory) -> str:
    """A small locally built pretrained encoder-decoder checkpoint."""
    path = tmp_path_factory.mktemp("checkpoints") / "tiny"
    create_tiny_pretrained(path, vocab_texts=toyworld.all_vocab_texts(), seed=11)
    return str(path)


@pytest.fixture(scope="session")
def adapted_backend(tiny_checkpoint) -> HFSeq2SeqBackend:
    """The tiny checkpoint fine-tuned on the toy training pairs."""
    backend = HFSeq2SeqBackend.from_pretrained(tiny_checkpoint)
    records, contexts = toyworld.gold_records(toyworld.TRAIN_PAIRS)
    examples = [serialize_training_example(r, contexts[r.context_id]) for r in records]
    config = TrainConfig(epochs=10, batch_size=8, learning_rate=3e-4, seed=3)
    fine_tune(backend, examples, config)
    return backend


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {report.outcome.upper()}: {name}", flush=True)
