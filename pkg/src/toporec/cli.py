"""Command-line entry point: prepare, train, evaluate, extract, benchmark.

Every option resolves with precedence flags > environment > ``--config`` file
> defaults, and the resolved values are logged as one JSON line before the
command runs.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

logger = logging.getLogger("toporec")

TRAIN_KEYS = (
    "learning_rate", "batch_size", "max_epochs", "warmup_fraction",
    "weight_decay", "patience", "min_delta", "seed", "max_len",
)

DEFAULTS = {
    "prepare": {
        "scheme": "conll2003", "mapping": None, "token_col": None, "label_col": None,
        "merge": False, "name": "combined", "strict": False,
    },
    "train": {
        "encoder": "miniature", "head": "linear", "vocab": None, "pretrained": None,
        "learning_rate": 2e-5, "batch_size": 32, "max_epochs": 50, "warmup_fraction": 0.1,
        "weight_decay": 0.01, "patience": 3, "min_delta": 1e-4, "seed": 0, "max_len": 128,
    },
    "evaluate": {"out": None, "max_len": 128, "batch_size": 32},
    "extract": {
        "out": None, "no_geocode": False, "mock_geocoder": None, "geocoder_url": None,
        "geocoder_key": None, "geocoder_qps": 1.0, "cache": None, "input_format": "auto",
        "seed": 0, "max_len": 128, "batch_size": 32,
    },
    "benchmark": {"names": None, "mapping": None, "out": None, "gold_label_col": 1, "pred_label_col": 1},
}

ENV = {
    "extract": {"GEOCODER_URL": "geocoder_url", "GEOCODER_KEY": "geocoder_key", "GEOCODER_QPS": "geocoder_qps"},
}


class ConfigError(ValueError):
    pass


def resolve_config(command: str, flags: dict, config_path: str | None = None, environ=os.environ) -> dict:
    defaults = DEFAULTS[command]
    resolved = dict(defaults)
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            file_values = json.load(f)
        unknown = sorted(set(file_values) - set(defaults))
        if unknown:
            raise ConfigError(f"{config_path}: unknown keys for {command!r}: {unknown}")
        resolved.update(file_values)
    for var, key in ENV.get(command, {}).items():
        if var in environ:
            resolved[key] = environ[var]
    resolved.update({k: v for k, v in flags.items() if k in defaults})
    for key, default in defaults.items():
        value = resolved[key]
        if value is None or default is None:
            continue
        try:
            resolved[key] = type(default)(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: cannot read {value!r} as {type(default).__name__}") from None
    return resolved


def _echo(command: str, positional: dict, resolved: dict) -> None:
    logger.info(json.dumps({"command": command, **positional, "config": resolved}, default=str))


def cmd_prepare(args, cfg) -> int:
    from .corpus import (
        DEFAULT_COLUMNS, SCHEMES, LabelScheme, corpus_stats, format_conll,
        merge_corpora, read_conll, unify_labels,
    )

    scheme = LabelScheme.from_json(cfg["mapping"]) if cfg["mapping"] else SCHEMES[cfg["scheme"]]
    tok_col, lab_col = DEFAULT_COLUMNS.get(cfg["scheme"], (0, 1))
    tok_col = cfg["token_col"] if cfg["token_col"] is not None else tok_col
    lab_col = cfg["label_col"] if cfg["label_col"] is not None else lab_col
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    unified = []
    for path in args.inputs:
        source_col = 2 if scheme.name == "unified" else None
        corpus = read_conll(path, tok_col, lab_col, source_column=source_col)
        unified.append(unify_labels(corpus, scheme, strict=cfg["strict"]))

    stats = {}
    if cfg["merge"]:
        combined = merge_corpora(unified, cfg["name"])
        (out_dir / f"{combined.name}.tsv").write_text(format_conll(combined, provenance=True), encoding="utf-8")
        stats[combined.name] = corpus_stats(combined).to_dict()
    for corpus in unified:
        if not cfg["merge"]:
            (out_dir / f"{corpus.name}.tsv").write_text(format_conll(corpus), encoding="utf-8")
        stats[corpus.name] = corpus_stats(corpus).to_dict()
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(stats, indent=2))
    return 0


def _read_unified(path):
    from .corpus import UNIFIED, read_conll, unify_labels

    return unify_labels(read_conll(path, 0, 1, source_column=2), UNIFIED)


def cmd_train(args, cfg) -> int:
    from .alignment import PieceVocab, build_toy_vocab
    from .model import EncoderConfig, HeadConfig, build_classifier, save_checkpoint
    from .trainer import TrainConfig, fine_tune

    train = _read_unified(args.train)
    val = _read_unified(args.val)
    tcfg = TrainConfig(**{k: cfg[k] for k in TRAIN_KEYS})
    if cfg["encoder"] == "miniature":
        vocab = PieceVocab.from_file(cfg["vocab"]) if cfg["vocab"] else build_toy_vocab(
            w for s in train.sentences for w in s.words
        )
        enc = EncoderConfig.for_variant("miniature", vocab_size=len(vocab))
    else:
        if not cfg["pretrained"]:
            raise ConfigError("--pretrained DIR is required for the base and large encoders")
        vocab_path = cfg["vocab"] or Path(cfg["pretrained"]) / "vocab.txt"
        vocab = PieceVocab.from_file(vocab_path)
        enc = EncoderConfig.for_variant(cfg["encoder"], vocab_size=len(vocab))
    model = build_classifier(enc, HeadConfig(cfg["head"]), tcfg.seed, checkpoint=cfg["pretrained"])
    out = Path(args.out)
    model, report = fine_tune(model, train, val, tcfg, vocab, out_dir=out)
    save_checkpoint(model, out / "best", vocab, {
        "train": str(args.train), "val": str(args.val), "best_epoch": report.best_epoch,
        "config": {k: cfg[k] for k in sorted(cfg)},
    })
    print(json.dumps({
        "best_epoch": report.best_epoch, "stopped_epoch": report.stopped_epoch,
        "best_val_f1": max(report.val_f1), "checkpoint": str(out / "best"),
    }))
    return 0


def _load(checkpoint):
    from .model import load_checkpoint

    model, vocab, manifest = load_checkpoint(checkpoint)
    if vocab is None:
        raise ConfigError(f"{checkpoint} has no vocab.txt")
    return model, vocab


def cmd_evaluate(args, cfg) -> int:
    from .trainer import evaluate_checkpoint

    model, vocab = _load(args.checkpoint)
    test = _read_unified(args.test)
    report = evaluate_checkpoint(model, test, vocab, cfg["max_len"], cfg["batch_size"])
    text = json.dumps(report.to_dict(), indent=2)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_extract(args, cfg) -> int:
    import torch

    from .geocoding import GeocodeCache, GeocoderAuthError, HttpGeocoder, MockGeocoder, TokenBucket
    from .pipeline import process_record, read_posts
    from .tagger import WordTagger

    torch.manual_seed(cfg["seed"])
    model, vocab = _load(args.checkpoint)
    tagger = WordTagger(model, vocab, cfg["max_len"], cfg["batch_size"])

    provider = limiter = None
    if not cfg["no_geocode"]:
        if cfg["mock_geocoder"]:
            provider = MockGeocoder.from_json(cfg["mock_geocoder"])
        elif cfg["geocoder_url"]:
            provider = HttpGeocoder(cfg["geocoder_url"], cfg["geocoder_key"])
            qps = cfg["geocoder_qps"]
            limiter = TokenBucket(max(1.0, qps), qps)
    cache = GeocodeCache(cfg["cache"])

    out = open(cfg["out"], "w", encoding="utf-8") if cfg["out"] else sys.stdout
    warnings = errors = 0
    try:
        for record in read_posts(args.input, cfg["input_format"]):
            try:
                doc, failures = process_record(record, tagger, provider, cache, limiter)
            except GeocoderAuthError as exc:
                logger.error("%s; continuing without geocoding", exc)
                errors += 1
                provider = None
                doc, failures = process_record(record, tagger)
            warnings += len(failures)
            out.write(json.dumps(doc, ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
        cache.save()
    if warnings:
        logger.warning("%d toponyms could not be geocoded", warnings)
    return 1 if errors else 0


def cmd_benchmark(args, cfg) -> int:
    from .benchmark import format_table, score_systems
    from .corpus import LabelScheme

    names = cfg["names"].split(",") if cfg["names"] else [Path(p).stem for p in args.predictions]
    if len(names) != len(args.predictions):
        raise ConfigError("--names must list one name per prediction file")
    mapping = LabelScheme.from_json(cfg["mapping"]) if cfg["mapping"] else None
    scores = score_systems(
        args.gold, list(zip(names, args.predictions)), mapping, cfg["gold_label_col"], cfg["pred_label_col"]
    )
    payload = [s.to_dict() for s in scores]
    if cfg["out"]:
        Path(cfg["out"]).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(format_table(scores))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toporec", description="Toponym recognition toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def add(name, help):
        p = sub.add_parser(name, help=help, argument_default=S)
        p.add_argument("--config", default=None, help="JSON file of option values")
        return p

    p = add("prepare", "unify label schemes, optionally merge, write TSV + stats")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out-dir", dest="out_dir", required=True, default=None)
    p.add_argument("--scheme", choices=["conll2003", "wnut2017", "unified"])
    p.add_argument("--mapping", help="JSON object mapping source labels to O/B-LOC/I-LOC")
    p.add_argument("--token-col", dest="token_col", type=int)
    p.add_argument("--label-col", dest="label_col", type=int)
    p.add_argument("--merge", action="store_true")
    p.add_argument("--name")
    p.add_argument("--strict", action="store_true", help="fail on I-LOC without a preceding location tag")

    p = add("train", "fine-tune a classifier")
    p.add_argument("train")
    p.add_argument("val")
    p.add_argument("--out", required=True, default=None)
    p.add_argument("--encoder", choices=["base", "large", "miniature"])
    p.add_argument("--head", choices=["linear", "mlp", "cnn1d"])
    p.add_argument("--vocab")
    p.add_argument("--pretrained", help="directory or file with published encoder weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--warmup-fraction", dest="warmup_fraction", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--min-delta", dest="min_delta", type=float)

    p = add("evaluate", "score a checkpoint on a unified corpus")
    p.add_argument("checkpoint")
    p.add_argument("test")
    p.add_argument("--out")
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = add("extract", "extract and geocode toponyms from posts")
    p.add_argument("input")
    p.add_argument("checkpoint")
    p.add_argument("--out")
    p.add_argument("--no-geocode", dest="no_geocode", action="store_true")
    p.add_argument("--mock-geocoder", dest="mock_geocoder", help="JSON table {place: [lat, lon]}")
    p.add_argument("--geocoder-url", dest="geocoder_url")
    p.add_argument("--geocoder-key", dest="geocoder_key")
    p.add_argument("--geocoder-qps", dest="geocoder_qps", type=float)
    p.add_argument("--cache", help="JSON file persisting geocoder answers between runs")
    p.add_argument("--input-format", dest="input_format", choices=["auto", "ndjson", "text"])
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = add("benchmark", "compare prediction files against gold")
    p.add_argument("gold")
    p.add_argument("predictions", nargs="+")
    p.add_argument("--names", help="comma-separated system names")
    p.add_argument("--mapping", help="JSON label mapping applied to predictions (e.g. broad location)")
    p.add_argument("--out")
    p.add_argument("--gold-label-col", dest="gold_label_col", type=int)
    p.add_argument("--pred-label-col", dest="pred_label_col", type=int)
    return parser


COMMANDS = {
    "prepare": (cmd_prepare, ("inputs", "out_dir")),
    "train": (cmd_train, ("train", "val", "out")),
    "evaluate": (cmd_evaluate, ("checkpoint", "test")),
    "extract": (cmd_extract, ("input", "checkpoint")),
    "benchmark": (cmd_benchmark, ("gold", "predictions")),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    func, positional = COMMANDS[args.command]
    try:
        cfg = resolve_config(args.command, vars(args), args.config)
        _echo(args.command, {k: getattr(args, k) for k in positional}, cfg)
        return func(args, cfg)
    except (ValueError, RuntimeError, OSError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
