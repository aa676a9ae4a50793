"""Command-line pipeline driver.

Commands: ingest, split-data, silver, format, train, generate, eval,
analyze, export-hit, score-hit. Every command writes a ``run_config.json``
snapshot of its fully resolved settings; reruns from the same snapshot and
backends reproduce outputs byte-for-byte. Timestamps live only in
``summary.json``. Exit codes: 0 success, 1 runtime failure, 2
configuration/validation failure.

Settings come from defaults, then an optional JSON config file with
per-stage sections, then explicit flags (flags win). The global seed is
never used directly: each stage derives its own seed from the stage name so
stages stay independently reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import backends as backend_registry
from .core import (
    ConfigurationError,
    ContextSentence,
    EventMention,
    Relation,
    Source,
    read_records,
    write_records,
)
from .corpus import (
    RuleBasedTagger,
    SplitConfig,
    SplitUnit,
    dataset_stats,
    extract_event_mentions,
    read_corpus,
    select_complex_sentences,
    split_dataset,
)
from .evalkit import (
    DiversityResult,
    HumanEvalItem,
    Rating,
    diversity_projection,
    evaluate_model,
    export_human_eval,
    score_human_eval,
    write_hit_csv,
    write_projection_csv,
)
from .modelkit import BatchGeneration, GenerationConfig, TrainConfig, batch_generate, fine_tune
from .seqio import (
    read_prompts,
    read_training_file,
    serialize_training_example,
    write_prompts,
    write_training_file,
)
from .silverlab import (
    FilterAuditEntry,
    SilverBackends,
    SilverConfig,
    SilverStrategy,
    build_silver_dataset,
    write_audit_log,
)
from .splitter import ClauseSplitExtractor, FixtureExtractor

logger = logging.getLogger(__name__)


def derive_seed(global_seed: int, stage: str) -> int:
    digest = hashlib.blake2b(stage.encode("utf-8"), digest_size=4).digest()
    return (global_seed ^ int.from_bytes(digest, "big")) % (2**31)


def _require_path(path: str | Path | None, what: str) -> Path:
    if not path:
        raise ConfigurationError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"{what} does not exist: {p}")
    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    config_path = _require_path(path, "config file")
    return json.loads(config_path.read_text(encoding="utf-8"))


class Settings:
    """Defaults < config-file section < explicit CLI flags."""

    def __init__(self, args: argparse.Namespace, section: str):
        self.args = args
        self.config = _load_config(getattr(args, "config", None))
        self.section = self.config.get(section, {})

    def get(self, key: str, default: Any = None) -> Any:
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.section:
            return self.section[key]
        return default

    def backend(self, key: str, default: str | None = None) -> str | None:
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        return self.config.get("backends", {}).get(key, default)

    @property
    def seed(self) -> int:
        flag = getattr(self.args, "seed", None)
        if flag is not None:
            return flag
        return int(self.config.get("seed", 0))


def _write_snapshot(out_dir: Path, command: str, resolved: Mapping[str, Any]) -> None:
    snapshot = {"command": command, **resolved}
    (out_dir / "run_config.json").write_text(
        json.dumps(snapshot, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )


def _write_summary(out_dir: Path, payload: Mapping[str, Any]) -> None:
    summary = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **payload}
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )


def _out_dir(settings: Settings) -> Path:
    out = Path(settings.get("out", "runs/out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_oie(spec: str):
    kind, _, arg = spec.partition(":")
    if kind == "clause":
        return ClauseSplitExtractor()
    if kind == "fixture":
        if not arg:
            raise ConfigurationError("fixture OIE needs a path: fixture:<path>")
        return FixtureExtractor.from_jsonl(_require_path(arg, "OIE fixture"))
    raise ConfigurationError(f"unknown OIE backend spec: {spec!r}")


# --- context/event files (ingest output) -----------------------------------------


def write_contexts(
    path: Path, pairs: Sequence[tuple[ContextSentence, Sequence[EventMention]]]
) -> int:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for context, events in pairs:
            fh.write(
                json.dumps(
                    {
                        "context_id": context.id,
                        "text": context.text,
                        "source": context.source.value,
                        "topic": context.topic,
                        "events": [[e.start, e.end] for e in events],
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
    return len(pairs)


def read_contexts(path: str | Path) -> list[tuple[ContextSentence, list[EventMention]]]:
    """Read a contexts+events JSONL file (also the gold pre-annotated entry point)."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            context = ContextSentence(
                id=obj["context_id"],
                text=obj["text"],
                source=Source(obj.get("source", "other")),
                topic=obj.get("topic", ""),
            )
            events = [
                EventMention.from_context(context, int(s), int(e)) for s, e in obj["events"]
            ]
            pairs.append((context, events))
    return pairs


# --- commands ---------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    settings = Settings(args, "ingest")
    corpus = settings.get("corpus")
    if not corpus:
        raise ConfigurationError("ingest needs --corpus")
    corpus_path = _require_path(corpus, "corpus file")
    out = _out_dir(settings)
    top_k = int(settings.get("top_k_topics", 50))
    min_events = int(settings.get("min_events", 2))

    docs = read_corpus(corpus_path)
    tagger = RuleBasedTagger()
    contexts = select_complex_sentences(docs, top_k, min_events, tagger)
    pairs = [(c, extract_event_mentions(c, tagger.tag(c.text))) for c in contexts]
    n = write_contexts(out / "contexts.jsonl", pairs)

    _write_snapshot(
        out,
        "ingest",
        {"corpus": str(corpus_path), "top_k_topics": top_k, "min_events": min_events},
    )
    _write_summary(out, {"contexts": n, "events": sum(len(ev) for _, ev in pairs)})
    return 0


def cmd_split_data(args: argparse.Namespace) -> int:
    settings = Settings(args, "split")
    records_path = _require_path(settings.get("records"), "records file")
    out = _out_dir(settings)
    ratios = settings.get("ratios", (0.6, 0.1, 0.3))
    if isinstance(ratios, str):
        ratios = tuple(float(x) for x in ratios.split(","))
    config = SplitConfig(
        ratios=tuple(ratios),
        seed=derive_seed(settings.seed, "split"),
        unit=SplitUnit(settings.get("unit", "by_context")),
    )
    records, contexts = read_records(records_path)
    splits = split_dataset(records, config)
    for split in splits:
        write_records(out / f"{split.name.value}.jsonl", split.records, contexts)
    stats = dataset_stats(splits)
    (out / "stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_snapshot(out, "split-data", {"records": str(records_path), **asdict(config)})
    _write_summary(out, {"stats": stats})
    return 0


def cmd_silver(args: argparse.Namespace) -> int:
    settings = Settings(args, "silver")
    contexts_path = _require_path(settings.get("contexts"), "contexts file")
    out = _out_dir(settings)
    try:
        strategy = SilverStrategy(settings.get("strategy", "nli"))
    except ValueError as exc:
        raise ConfigurationError(f"unknown silver strategy: {settings.get('strategy')!r}") from exc
    config = SilverConfig(
        strategy=strategy,
        overlap_threshold=float(settings.get("overlap_threshold", 0.7)),
        inferences_per_relation=int(settings.get("inferences_per_relation", 5)),
        fallback_keep_top1=bool(settings.get("fallback_keep_top1", False)),
    )
    seq2seq_spec = settings.backend("seq2seq", "stub")
    oie_spec = settings.backend("oie", "clause")
    embedder_spec = settings.backend("embedder", "hash-bow")
    nli_spec = settings.backend("nli", "lexical")
    silver_backends = SilverBackends(
        seq2seq=backend_registry.make_seq2seq(seq2seq_spec),
        oie=_make_oie(oie_spec),
        embedder=backend_registry.make_embedder(embedder_spec)
        if strategy is SilverStrategy.overlap
        else None,
        nli=backend_registry.make_nli(nli_spec) if strategy is SilverStrategy.nli else None,
    )

    pairs = read_contexts(contexts_path)
    audit: list[FilterAuditEntry] = []
    records = build_silver_dataset(pairs, config, silver_backends, audit=audit)
    contexts = {context.id: context for context, _ in pairs}
    write_records(out / "silver.jsonl", records, contexts)
    write_audit_log(out / "audit.jsonl", audit)

    _write_snapshot(
        out,
        "silver",
        {
            "contexts": str(contexts_path),
            "strategy": strategy.value,
            "overlap_threshold": config.overlap_threshold,
            "inferences_per_relation": config.inferences_per_relation,
            "fallback_keep_top1": config.fallback_keep_top1,
            "seq2seq": seq2seq_spec,
            "oie": oie_spec,
            "embedder": embedder_spec,
            "nli": nli_spec,
        },
    )
    _write_summary(
        out,
        {
            "records": len(records),
            "decisions": len(audit),
            "kept": sum(1 for a in audit if a.decision.kept),
        },
    )
    return 0


def cmd_format(args: argparse.Namespace) -> int:
    settings = Settings(args, "format")
    records_path = _require_path(settings.get("records"), "records file")
    out = _out_dir(settings)
    records, contexts = read_records(records_path)
    examples = [serialize_training_example(r, contexts[r.context_id]) for r in records]
    n = write_training_file(out / "training.jsonl", examples)
    prompts = list(dict.fromkeys(ex.input for ex in examples))
    write_prompts(out / "prompts.txt", prompts)
    _write_snapshot(out, "format", {"records": str(records_path)})
    _write_summary(out, {"examples": n, "prompts": len(prompts)})
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    settings = Settings(args, "train")
    train_path = _require_path(settings.get("train_file"), "training file")
    out = _out_dir(settings)
    config = TrainConfig(
        epochs=int(settings.get("epochs", 2)),
        batch_size=int(settings.get("batch_size", 8)),
        learning_rate=float(settings.get("learning_rate", 1e-5)),
        seed=derive_seed(settings.seed, "train"),
        weight_decay=float(settings.get("weight_decay", 0.01)),
    )
    config.validate()
    backend_spec = settings.backend("seq2seq", "stub")
    backend = backend_registry.make_seq2seq(backend_spec)
    examples = read_training_file(train_path)
    _, history = fine_tune(backend, examples, config, run_dir=out)
    _write_snapshot(
        out, "train", {"train_file": str(train_path), "seq2seq": backend_spec, **asdict(config)}
    )
    _write_summary(out, {"epoch_mean_loss": history, "examples": len(examples)})
    return 0


def _generation_config(settings: Settings) -> GenerationConfig:
    config = GenerationConfig(
        beam_size=int(settings.get("beam_size", 5)),
        max_tokens=int(settings.get("max_tokens", 50)),
        num_return=int(settings.get("num_return", 5)),
    )
    config.validate()
    return config


def cmd_generate(args: argparse.Namespace) -> int:
    settings = Settings(args, "generate")
    prompts_path = _require_path(settings.get("prompts"), "prompts file")
    out = _out_dir(settings)
    config = _generation_config(settings)
    backend_spec = settings.backend("seq2seq", "stub")
    backend = backend_registry.make_seq2seq(backend_spec)
    prompts = read_prompts(prompts_path)
    result: BatchGeneration = batch_generate(backend, prompts, config)

    with open(out / "generations.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for prompt in prompts:
            if prompt not in result.results:
                continue
            beams = [{"text": t, "score": s} for t, s in result.results[prompt]]
            fh.write(json.dumps({"prompt": prompt, "beams": beams}, ensure_ascii=False))
            fh.write("\n")
    _write_snapshot(
        out,
        "generate",
        {"prompts": str(prompts_path), "seq2seq": backend_spec, **asdict(config)},
    )
    _write_summary(
        out,
        {"prompts": len(prompts), "succeeded": len(result.results), "errors": result.errors},
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    settings = Settings(args, "eval")
    records_path = _require_path(settings.get("records"), "records file")
    out = _out_dir(settings)
    config = _generation_config(settings)
    references_as_generations = bool(settings.get("references_as_generations", False))
    embedder_spec = settings.backend("embedder", "hash-bow")
    embedder = backend_registry.make_embedder(embedder_spec)
    backend_spec = settings.backend("seq2seq", "stub")
    backend = None
    if not references_as_generations:
        backend = backend_registry.make_seq2seq(backend_spec)

    records, contexts = read_records(records_path)
    report = evaluate_model(
        backend,
        records,
        contexts,
        embedder,
        gen_config=config,
        model_id=str(settings.get("model_id", "model")),
        references_as_generations=references_as_generations,
        per_relation=bool(settings.get("per_relation", False)),
    )
    (out / "report.json").write_text(
        json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "report.md").write_text(report.render_markdown(), encoding="utf-8")
    _write_snapshot(
        out,
        "eval",
        {
            "records": str(records_path),
            "seq2seq": backend_spec,
            "embedder": embedder_spec,
            "references_as_generations": references_as_generations,
            **asdict(config),
        },
    )
    _write_summary(
        out,
        {"groups": report.groups_evaluated, "skipped": report.groups_skipped},
    )
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    settings = Settings(args, "analyze")
    generations_path = _require_path(settings.get("generations"), "generations file")
    out = _out_dir(settings)
    embedder_spec = settings.backend("embedder", "hash-bow")
    embedder = backend_registry.make_embedder(embedder_spec)
    seed = derive_seed(settings.seed, "analyze")

    by_event: dict[str, list[str]] = {}
    with open(generations_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            by_event.setdefault(obj["event"], []).append(obj["inference"])
    result: DiversityResult = diversity_projection(by_event, embedder, seed=seed)
    write_projection_csv(out / "projection.csv", result)
    (out / "analysis.json").write_text(
        json.dumps(
            {"silhouette": result.silhouette, "events": sorted(by_event)}, indent=2
        )
        + "\n",
        encoding="utf-8",
    )
    _write_snapshot(
        out,
        "analyze",
        {"generations": str(generations_path), "embedder": embedder_spec, "seed": seed},
    )
    _write_summary(out, {"silhouette": result.silhouette, "points": len(result.points)})
    return 0


def cmd_export_hit(args: argparse.Namespace) -> int:
    settings = Settings(args, "export_hit")
    samples_path = _require_path(settings.get("samples"), "samples file")
    out = _out_dir(settings)
    seed = derive_seed(settings.seed, "export-hit")
    items = []
    with open(samples_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            items.append(
                HumanEvalItem(
                    context=obj["context"],
                    event=obj["event"],
                    relation=Relation(obj["relation"]),
                    inference=obj["inference"],
                    model_id=obj["model_id"],
                )
            )
    rows, blinding = export_human_eval(items, seed=seed)
    write_hit_csv(out / "hit.csv", rows)
    (out / "blinding_key.json").write_text(
        json.dumps(blinding, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_snapshot(out, "export-hit", {"samples": str(samples_path), "seed": seed})
    _write_summary(out, {"rows": len(rows), "models": len(blinding)})
    return 0


def cmd_score_hit(args: argparse.Namespace) -> int:
    settings = Settings(args, "score_hit")
    ratings_path = _require_path(settings.get("ratings"), "ratings file")
    out = _out_dir(settings)
    items = []
    with open(ratings_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ratings = tuple(
                Rating(
                    likelihood=r.get("likelihood"),
                    specificity=r.get("specificity"),
                    relevance=r.get("relevance"),
                )
                for r in obj.get("ratings", [])
            )
            items.append(
                HumanEvalItem(
                    context=obj["context"],
                    event=obj["event"],
                    relation=Relation(obj["relation"]),
                    inference=obj["inference"],
                    model_id=obj["model_id"],
                    ratings=ratings,
                )
            )
    scores = score_human_eval(items)
    (out / "human_scores.json").write_text(
        json.dumps(
            {
                "percentages": scores.percentages,
                "items_scored": scores.items_scored,
                "items_excluded": scores.items_excluded,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_snapshot(out, "score-hit", {"ratings": str(ratings_path)})
    _write_summary(out, {"models": sorted(scores.percentages)})
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evinfer",
        description="Multi-event commonsense inference pipeline",
    )
    parser.add_argument("--config", help="JSON config file with per-stage sections")
    parser.add_argument("--seed", type=int, help="global seed (per-stage seeds derive from it)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="select complex sentences and extract events")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--top-k-topics", dest="top_k_topics", type=int)
    p.add_argument("--min-events", dest="min_events", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split-data", help="partition records into train/dev/test")
    p.add_argument("--records")
    p.add_argument("--out")
    p.add_argument("--ratios")
    p.add_argument("--unit", choices=[u.value for u in SplitUnit])
    p.set_defaults(func=cmd_split_data)

    p = sub.add_parser("silver", help="build silver-standard training records")
    p.add_argument("--contexts")
    p.add_argument("--out")
    p.add_argument("--strategy")
    p.add_argument("--overlap-threshold", dest="overlap_threshold", type=float)
    p.add_argument("--inferences-per-relation", dest="inferences_per_relation", type=int)
    p.add_argument(
        "--fallback-keep-top1", dest="fallback_keep_top1", action="store_const", const=True
    )
    p.add_argument("--seq2seq")
    p.add_argument("--oie")
    p.add_argument("--embedder")
    p.add_argument("--nli")
    p.set_defaults(func=cmd_silver)

    p = sub.add_parser("format", help="serialize records into training inputs/targets")
    p.add_argument("--records")
    p.add_argument("--out")
    p.set_defaults(func=cmd_format)

    p = sub.add_parser("train", help="fine-tune a generator backend")
    p.add_argument("--train-file", dest="train_file")
    p.add_argument("--out")
    p.add_argument("--seq2seq")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate inferences for a prompt file")
    p.add_argument("--prompts")
    p.add_argument("--out")
    p.add_argument("--seq2seq")
    p.add_argument("--beam-size", dest="beam_size", type=int)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--num-return", dest="num_return", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score generations against reference records")
    p.add_argument("--records")
    p.add_argument("--out")
    p.add_argument("--seq2seq")
    p.add_argument("--embedder")
    p.add_argument("--model-id", dest="model_id")
    p.add_argument(
        "--references-as-generations",
        dest="references_as_generations",
        action="store_const",
        const=True,
    )
    p.add_argument("--per-relation", dest="per_relation", action="store_const", const=True)
    p.add_argument("--beam-size", dest="beam_size", type=int)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--num-return", dest="num_return", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="embedding projection and cluster separation")
    p.add_argument("--generations")
    p.add_argument("--out")
    p.add_argument("--embedder")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export-hit", help="export a blinded human-evaluation CSV")
    p.add_argument("--samples")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_hit)

    p = sub.add_parser("score-hit", help="aggregate human ratings per model")
    p.add_argument("--ratings")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score_hit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        logger.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
