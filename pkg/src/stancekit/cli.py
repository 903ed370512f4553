"""Command-line surface tying the pipelines together.

Subcommands: gen-topics, stats, train, eval, adapt, classify-llm. Each
accepts ``--config`` (YAML, see :mod:`stancekit.config`) plus flag
overrides. Exit codes: 0 success, 1 usage/config, 2 data/parse, 3
backend or gateway exhausted; failures emit one machine-readable JSON
line (category + message) on stderr.

The global ``--seed`` feeds every random choice through the documented
per-module split rule, so a single integer reproduces a full run; with a
mock gateway every subcommand is deterministic byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from .adapt import (
    AdaptConfig,
    PredictionSet,
    episode_logs_json,
    run_baseline,
    run_dymoadapt,
)
from .classifier import LlmClassifierBackend, NativeLinearBackend, TrainHyper
from .config import ConfigError, RunConfig, load_config
from .core import Dataset, derive_seed, get_scheme
from .dataio import ParseError, read_dataset, read_source_posts, write_dataset
from .datagen import build_mgt_dataset
from .gateway import (
    BackendExhausted,
    DirectoryMockBackend,
    GatewayError,
    HttpChatBackend,
    LlmGateway,
    ScriptedMockBackend,
)
from .metrics import (
    dataset_stats,
    evaluate,
    format_eval_table,
    format_stats_table,
    format_top_topics_table,
    top_topics,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GATEWAY = 3


class _CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        self.category = category
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 with a machine-readable category
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(EXIT_USAGE)


def _emit_error(category: str, message: str) -> None:
    print(json.dumps({"category": category, "message": message}), file=sys.stderr)


def _write_text(path: "str | Path", text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "cache_dir", None):
        config.gateway.cache_dir = args.cache_dir
    return config


def build_gateway(config: RunConfig) -> LlmGateway:
    """Construct the gateway selected by the config (http or mock)."""
    gw = config.gateway
    if gw.backend == "mock":
        if gw.mock.fixtures_dir and gw.mock.rules:
            raise ConfigError("configure either mock.fixtures_dir or mock.rules, not both")
        if gw.mock.fixtures_dir:
            backend = DirectoryMockBackend(gw.mock.fixtures_dir, strict=gw.mock.strict)
        elif gw.mock.rules:
            backend = ScriptedMockBackend(
                [(rule["contains"], rule["response"]) for rule in gw.mock.rules],
                default=None if gw.mock.strict else "",
            )
        else:
            raise ConfigError("mock backend needs mock.fixtures_dir or mock.rules")
    else:
        backend = HttpChatBackend(gw.endpoint_url)
    return LlmGateway(
        backend,
        cache_dir=gw.cache_dir,
        retry=gw.retry,
        max_in_flight=gw.max_in_flight,
    )


def _read_dataset(args, config: RunConfig) -> Dataset:
    scheme_name = config.schemes.get(args.format)
    scheme = get_scheme(scheme_name) if scheme_name else None
    dataset = read_dataset(
        args.dataset, args.format, scheme_override=scheme, vast_columns=config.vast_columns
    )
    return _maybe_sample(dataset, args, config)


def _maybe_sample(dataset: Dataset, args, config: RunConfig) -> Dataset:
    n = getattr(args, "sample", None)
    if n is None:
        return dataset
    if n < 1:
        raise ConfigError("--sample must be >= 1")
    if n >= len(dataset):
        return dataset
    rng = random.Random(derive_seed(config.seed, "sample"))
    keep = sorted(rng.sample(range(len(dataset)), n))
    return Dataset(tuple(dataset.examples[i] for i in keep), dataset.format_tag)


def _classifier_hyper(config: RunConfig) -> TrainHyper:
    # The hyperparameter seed always derives from the global seed.
    return config.classifier.replaced({"seed": derive_seed(config.seed, "classifier")})


def _write_eval_outputs(args, report, preds: PredictionSet) -> None:
    print(format_eval_table(report))
    if getattr(args, "json", None):
        _write_text(args.json, report.to_json() + "\n")
    if getattr(args, "predictions", None):
        _write_text(args.predictions, preds.to_jsonl())
    if getattr(args, "figures_dir", None):
        from . import figures

        out = Path(args.figures_dir)
        figures.save_per_class_f1(report, out / "per_class_f1.png")
        if report.per_topic:
            figures.save_per_topic_f1(report.per_topic, out / "per_topic_f1.png")


def _cmd_gen_topics(args) -> int:
    config = _load_run_config(args)
    posts = read_source_posts(args.input, args.input_format)
    settings = config.gen_settings()
    if args.strict_length:
        settings.strict_length = True
    gateway = build_gateway(config)
    dataset, report = build_mgt_dataset(posts, gateway, settings)
    write_dataset(dataset, args.out, "mgt")
    if args.report:
        _write_text(args.report, report.to_json() + "\n")
    print(report.to_json())
    return EXIT_OK


def _cmd_stats(args) -> int:
    config = _load_run_config(args)
    dataset = _read_dataset(args, config)
    stats = dataset_stats(dataset)
    ranked = top_topics(dataset, args.top) if len(dataset) else []
    print(format_stats_table(stats, title=f"{args.dataset} ({args.format})"))
    print()
    print(format_top_topics_table(ranked))
    if args.json:
        payload = {
            "stats": stats.to_dict(),
            "top_topics": [{"topic": t, "frequency": c} for t, c in ranked],
        }
        _write_text(args.json, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    if args.figures_dir:
        from . import figures

        out = Path(args.figures_dir)
        figures.save_label_distribution(stats, out / "label_distribution.png")
        if ranked:
            figures.save_top_topics(ranked, out / "top_topics.png")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _load_run_config(args)
    dataset = _read_dataset(args, config)
    backend = NativeLinearBackend(_classifier_hyper(config))
    report = backend.train(dataset.examples)
    backend.save(args.model_out)
    print(
        json.dumps(
            {
                "model": str(args.model_out),
                "n_examples": report.n_examples,
                "initial_loss": report.initial_loss,
                "final_loss": report.final_loss,
                "epoch_losses": report.epoch_losses,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = _load_run_config(args)
    dataset = _read_dataset(args, config)
    backend = NativeLinearBackend.load(args.model)
    preds = run_baseline(backend, dataset)
    report = evaluate(dataset, preds, per_topic=args.per_topic)
    _write_eval_outputs(args, report, preds)
    return EXIT_OK


def _cmd_adapt(args) -> int:
    config = _load_run_config(args)
    dataset = _read_dataset(args, config)
    backend = NativeLinearBackend.load(args.model)
    gateway = build_gateway(config)
    adapt_config = AdaptConfig(
        k=args.k if args.k is not None else config.adapt.k,
        label_mode=args.label_mode or config.adapt.label_mode,
        grouping=args.grouping or config.adapt.grouping,
        finetune_hyper=dict(config.adapt.finetune),
        seed=derive_seed(config.seed, "adapt"),
        generation=config.gen_settings(),
    )
    preds, logs = run_dymoadapt(backend, dataset, gateway, adapt_config)
    if args.episodes:
        _write_text(args.episodes, episode_logs_json(logs) + "\n")
    report = evaluate(dataset, preds, per_topic=args.per_topic)
    _write_eval_outputs(args, report, preds)
    return EXIT_OK


def _cmd_classify_llm(args) -> int:
    config = _load_run_config(args)
    dataset = _read_dataset(args, config)
    gateway = build_gateway(config)
    backend = LlmClassifierBackend(gateway, model_name=config.gateway.model_name)
    preds = run_baseline(backend, dataset)
    report = evaluate(dataset, preds, per_topic=args.per_topic)
    if backend.unparseable_count:
        logger.warning(
            "%d answers were unparseable and fell back to neutral",
            backend.unparseable_count,
        )
    _write_eval_outputs(args, report, preds)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--cache-dir", help="override the gateway cache directory")


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="dataset file")
    parser.add_argument(
        "--format", required=True, choices=("vast", "semeval", "mgt")
    )
    parser.add_argument(
        "--sample",
        type=int,
        help="randomly subsample this many examples (seeded by --seed)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stancekit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-topics", help="propose topic/label pairs for posts")
    _add_common(p)
    p.add_argument("--input", required=True, help="posts file")
    p.add_argument(
        "--input-format",
        default="lines",
        choices=("lines", "jsonl", "vast", "semeval", "mgt"),
    )
    p.add_argument("--out", required=True, help="output dataset (mgt JSONL)")
    p.add_argument("--report", help="write the generation report JSON here")
    p.add_argument(
        "--strict-length",
        action="store_true",
        help="reject (instead of flag) topics outside 2-4 words",
    )
    p.set_defaults(func=_cmd_gen_topics)

    p = sub.add_parser("stats", help="dataset statistics and top topics")
    _add_common(p)
    _add_dataset_args(p)
    p.add_argument("--top", type=int, default=5, help="number of top topics")
    p.add_argument("--json", help="write stats JSON here")
    p.add_argument("--figures-dir", help="render figures into this directory")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="train the native classifier")
    _add_common(p)
    _add_dataset_args(p)
    p.add_argument("--model-out", required=True, help="model file to write")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="no-adaptation evaluation of a model")
    _add_common(p)
    _add_dataset_args(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--per-topic", action="store_true")
    p.add_argument("--json", help="write the report JSON here")
    p.add_argument("--predictions", help="write predictions JSONL here")
    p.add_argument("--figures-dir", help="render figures into this directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("adapt", help="adapt per topic, predict, restore")
    _add_common(p)
    _add_dataset_args(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--k", type=int, help="generated examples per label")
    p.add_argument("--label-mode", choices=("two", "three"))
    p.add_argument("--grouping", choices=("per_topic", "per_input"))
    p.add_argument("--per-topic", action="store_true")
    p.add_argument("--json", help="write the report JSON here")
    p.add_argument("--predictions", help="write predictions JSONL here")
    p.add_argument("--episodes", help="write episode logs JSON here")
    p.add_argument("--figures-dir", help="render figures into this directory")
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("classify-llm", help="zero-shot LLM classification")
    _add_common(p)
    _add_dataset_args(p)
    p.add_argument("--per-topic", action="store_true")
    p.add_argument("--json", help="write the report JSON here")
    p.add_argument("--predictions", help="write predictions JSONL here")
    p.add_argument("--figures-dir", help="render figures into this directory")
    p.set_defaults(func=_cmd_classify_llm)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", str(exc))
        return EXIT_USAGE
    except (ParseError, FileNotFoundError) as exc:
        _emit_error("data", str(exc))
        return EXIT_DATA
    except ValueError as exc:
        _emit_error("data", str(exc))
        return EXIT_DATA
    except (BackendExhausted, GatewayError) as exc:
        _emit_error("gateway", str(exc))
        return EXIT_GATEWAY


if __name__ == "__main__":
    sys.exit(main())
