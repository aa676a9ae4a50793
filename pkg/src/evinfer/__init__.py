"""Toolkit for multi-event commonsense inference datasets and generators.

Pipeline stages: ingest raw corpora into complex multi-event sentences,
build silver-standard training data, serialize the target-marked training
format, fine-tune and query seq2seq backends, and evaluate generations
against references.
"""

from .core import (
    ConfigurationError,
    ContextSentence,
    DatasetSplit,
    EventMention,
    InferenceRecord,
    Provenance,
    Relation,
    Source,
    SplitName,
    read_records,
    relation_question,
    validate_record,
    write_records,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ContextSentence",
    "DatasetSplit",
    "EventMention",
    "InferenceRecord",
    "Provenance",
    "Relation",
    "Source",
    "SplitName",
    "read_records",
    "relation_question",
    "validate_record",
    "write_records",
    "__version__",
]
