"""``topiceval`` command line: train, classify, keywords, metrics, correlate, gradcheck, synth.

Exit codes: 0 success, 1 runtime or model failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .classifiers import (
    AdanModel,
    DataError,
    LabelMapError,
    ModelLoadError,
    TrainConfig,
    TransferError,
    atomic_write_text,
    load_model,
    predict,
    random_gradcheck,
    save_model,
    train,
    transfer_finetune,
)
from .dialog import (
    CorpusFormatError,
    classify_conversation,
    conversation_to_dict,
    dumps_jsonl,
    read_conversations,
    read_jsonl,
)
from .metrics import METRIC_COLUMNS, TSV_COLUMNS, correlate, corpus_report, flat_row, parse_tsv, to_tsv
from .synth import (
    SynthConfigError,
    generate_conversations,
    generate_corpus,
    profiles_from_config,
    specs_from_config,
    with_truth_annotations,
)
from .text import EmbeddingLoadError, build_vocab, load_embeddings, tokenize

log = logging.getLogger("topiceval")

GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    """Bad flags, paths or configuration (exit 2)."""


def _default_seed() -> int:
    try:
        return int(os.environ.get("TOPICEVAL_SEED", "0"))
    except ValueError:
        return 0


def _need_file(path, flag):
    if path is None:
        raise UsageError(f"{flag} is required")
    if not Path(path).is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return path


def _read_labeled(path) -> list[tuple[str, str]]:
    rows = []
    for i, doc in enumerate(read_jsonl(path), 1):
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str) or not isinstance(doc.get("topic"), str):
            raise UsageError(f"{path}: record {i} needs string fields 'text' and 'topic'")
        rows.append((doc["text"], doc["topic"]))
    return rows


def _parse_downsample(value):
    if value is None:
        return None
    label, sep, prob = value.rpartition(":")
    try:
        if not sep or not label:
            raise ValueError
        return label, float(prob)
    except ValueError:
        raise UsageError(f"--downsample expects LABEL:P, got {value!r}") from None


def _parse_hidden(value):
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    try:
        return tuple(int(v) for v in str(value).split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--hidden expects comma-separated integers, got {value!r}") from None


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    _need_file(args.data, "--data")
    _need_file(args.dev, "--dev")
    if args.out is None:
        raise UsageError("--out is required")
    if args.embeddings is not None:
        _need_file(args.embeddings, "--embeddings")
    if args.transfer_from is not None:
        _need_file(args.transfer_from, "--transfer-from")
    fine_tune = args.fine_tune if args.fine_tune is not None else args.embeddings is None
    try:
        config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                             word_dropout=args.word_dropout, fine_tune_embeddings=fine_tune,
                             downsample=_parse_downsample(args.downsample), patience=args.patience,
                             hidden=_parse_hidden(args.hidden), dim=args.dim, min_count=args.min_count,
                             length_norm=not args.no_length_norm)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train_data = _read_labeled(args.data)
    dev_data = _read_labeled(args.dev)

    if args.transfer_from is not None:
        source = load_model(args.transfer_from)
        if source.model_type != args.model:
            raise TransferError(f"--transfer-from holds a {source.model_type} model, --model is {args.model}")
        model, history = transfer_finetune(source, train_data, dev_data, config)
    else:
        embeddings = None
        if args.embeddings is not None:
            vocab = build_vocab((tokenize(t) for t, _ in train_data), config.min_count)
            embeddings = load_embeddings(args.embeddings, vocab, config.dim, config.seed, fine_tune)
            model, history = train(args.model, train_data, dev_data, config, embeddings, vocab)
        else:
            model, history = train(args.model, train_data, dev_data, config)

    save_model(model, args.out)
    hist_path = args.history or f"{args.out}.history.tsv"
    atomic_write_text(hist_path, to_tsv([asdict(h) for h in history], ["epoch", "train_loss", "dev_accuracy"]))
    best = max((h.dev_accuracy for h in history), default=float("nan"))
    print(f"best dev accuracy {best:.4f} ({len(history)} epochs)")
    return 0


def _load_label_map(path):
    if path is None:
        return None
    with open(_need_file(path, "--label-map"), encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not all(isinstance(v, dict) for v in doc.values()):
        raise UsageError("--label-map must be a JSON object {source: {label: canonical_topic}}")
    return doc


def cmd_classify(args) -> int:
    _need_file(args.conversations, "--conversations")
    _need_file(args.model_a, "--model-a")
    if args.out is None:
        raise UsageError("--out is required")
    label_map = _load_label_map(args.label_map)
    model_a = load_model(args.model_a)
    model_b = load_model(_need_file(args.model_b, "--model-b")) if args.model_b else None
    kw_model = None
    if args.keyword_model:
        kw_model = load_model(_need_file(args.keyword_model, "--keyword-model"), expect_type="adan")
    names = (args.name_a or Path(args.model_a).stem, args.name_b or (Path(args.model_b).stem if args.model_b else "b"))
    if names[0] == names[1]:
        raise UsageError("the two models need distinct source names (--name-a/--name-b)")
    convs = read_conversations(args.conversations)
    out = []
    for conv in convs:
        classify_conversation(conv, model_a, model_b, label_map, names, kw_model)
        out.append(conversation_to_dict(conv))
    atomic_write_text(args.out, dumps_jsonl(out))
    log.info("classified %d conversations", len(out))
    return 0


def cmd_keywords(args) -> int:
    model = load_model(_need_file(args.model, "--model"))
    if not isinstance(model, AdanModel):
        raise UsageError("keyword extraction needs an adan model")
    texts = list(args.text or [])
    if args.input:
        texts += [doc["text"] for doc in read_jsonl(_need_file(args.input, "--input"))]
    for text in texts:
        p = predict(model, text, n_keywords=args.n)
        print(json.dumps({"text": text, "topic": p.topic, "entropy": p.normalized_entropy,
                          "keywords": [w for w, _ in p.keywords or []]}))
    return 0


def _canonical_topics(value):
    if value is None:
        return None
    if Path(value).is_file():
        text = Path(value).read_text(encoding="utf-8")
        if text.lstrip().startswith("["):
            return [str(t) for t in json.loads(text)]
        return [l.strip() for l in text.splitlines() if l.strip()]
    return [t.strip() for t in value.split(",") if t.strip()]


def cmd_metrics(args) -> int:
    _need_file(args.classified, "--classified")
    if args.out_json is None and args.out_tsv is None:
        raise UsageError("give --out-json and/or --out-tsv")
    convs = read_conversations(args.classified)
    report = corpus_report(convs, _canonical_topics(args.canonical_topics))
    if args.out_json:
        atomic_write_text(args.out_json, json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.out_tsv:
        atomic_write_text(args.out_tsv, to_tsv([flat_row(b) for b in report["bots"]], TSV_COLUMNS))
    for b in report["bots"]:
        log.info("%s: D=%s Br=%s", b["bot_id"], b["depth"], b["breadth_avg"])
    return 0


def cmd_correlate(args) -> int:
    _need_file(args.metrics_tsv, "--metrics-tsv")
    header, rows = parse_tsv(Path(args.metrics_tsv).read_text(encoding="utf-8"))
    if args.rating_column not in header:
        raise UsageError(f"rating column {args.rating_column!r} not in {args.metrics_tsv}")
    metrics = [c for c in header if c in METRIC_COLUMNS
               or (c not in ("bot_id", "n_conversations", args.rating_column)
                   and any(isinstance(r.get(c), float) for r in rows))]
    result = correlate(rows, metrics, args.rating_column)
    text = to_tsv([asdict(r) for r in result], ["metric", "rho", "n_bots", "status"])
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gradcheck(args) -> int:
    err = random_gradcheck(args.model, args.seed, args.eps, corrupt=args.corrupt)
    ok = err <= GRADCHECK_TOL
    print(f"{args.model} seed={args.seed} max relative error {err:.3e} ({'ok' if ok else 'FAIL'})")
    return 0 if ok else 1


def _load_spec(path) -> dict:
    try:
        with open(_need_file(path, "--spec"), encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--spec: {exc}") from None


def cmd_synth(args) -> int:
    cfg = _load_spec(args.spec)
    try:
        specs = specs_from_config(cfg, args.seed)
        if args.kind == "corpus":
            n = args.n if args.n is not None else int(cfg.get("n", 1000))
            rows, truth = generate_corpus(specs, n, args.seed)
        else:
            per_bot = args.convs_per_bot if args.convs_per_bot is not None else int(cfg.get("convs_per_bot", 100))
            rows, truth = generate_conversations(profiles_from_config(cfg), per_bot, args.seed, specs)
    except (SynthConfigError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid synth spec: {exc}") from None
    if args.out is None:
        raise UsageError("--out is required")
    atomic_write_text(args.out, dumps_jsonl(rows))
    atomic_write_text(args.truth or f"{args.out}.truth.jsonl", dumps_jsonl(truth))
    if args.kind == "dialogs" and args.annotated_out:
        atomic_write_text(args.annotated_out, dumps_jsonl(with_truth_annotations(c, t) for c, t in zip(rows, truth)))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topiceval", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of default flag values (flags given on the command line win)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and echo the resolved config")
    sub = parser.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    p = sub.add_parser("train", help="train a DAN/ADAN topic classifier")
    p.add_argument("--model", choices=["dan", "adan"], required=True)
    p.add_argument("--data", help="training JSONL {text, topic}")
    p.add_argument("--dev", help="dev JSONL {text, topic}")
    p.add_argument("--out", help="model JSON path")
    p.add_argument("--history", help="history TSV path (default <out>.history.tsv)")
    p.add_argument("--embeddings", help="GloVe-format text embeddings")
    p.add_argument("--fine-tune", action=argparse.BooleanOptionalAction, default=None,
                   help="update embeddings (default: on unless --embeddings is given)")
    p.add_argument("--downsample", metavar="LABEL:P")
    p.add_argument("--transfer-from", metavar="PATH")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--hidden", default="500", help="comma-separated hidden sizes")
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--word-dropout", type=float, default=0.0)
    p.add_argument("--no-length-norm", action="store_true", help="ADAN: drop the extra 1/L factor")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="assign topics and keywords to a conversation corpus")
    p.add_argument("--conversations")
    p.add_argument("--model-a")
    p.add_argument("--model-b")
    p.add_argument("--name-a")
    p.add_argument("--name-b")
    p.add_argument("--label-map")
    p.add_argument("--keyword-model", help="ADAN model used for keywords when the winning model has none")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("keywords", help="top-n ADAN keywords for utterances")
    p.add_argument("--model")
    p.add_argument("--text", action="append")
    p.add_argument("--input", help="JSONL with a 'text' field")
    p.add_argument("-n", type=int, default=2)
    p.set_defaults(func=cmd_keywords)

    p = sub.add_parser("metrics", help="depth/breadth/keyword metrics per bot")
    p.add_argument("--classified")
    p.add_argument("--canonical-topics", help="file (one per line or JSON list) or comma-separated list")
    p.add_argument("--out-json")
    p.add_argument("--out-tsv")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("correlate", help="Spearman's rho of each metric column against mean rating")
    p.add_argument("--metrics-tsv")
    p.add_argument("--rating-column", default="mean_rating")
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("gradcheck", help="finite-difference check of hand-derived gradients")
    p.add_argument("--model", choices=["dan", "adan"], required=True)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate synthetic corpora")
    p.add_argument("kind", choices=["corpus", "dialogs"])
    p.add_argument("--spec", help="JSON generator spec")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--n", type=int)
    p.add_argument("--convs-per-bot", type=int)
    p.add_argument("--out")
    p.add_argument("--truth", help="ground-truth sidecar (default <out>.truth.jsonl)")
    p.add_argument("--annotated-out", help="dialogs: also write a classified corpus with ground-truth topics")
    p.set_defaults(func=cmd_synth)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults from --config; values given as flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        with open(known.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"--config: {exc}")
    if not isinstance(cfg, dict):
        parser.error("--config must hold a JSON object")
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    section = {**{k: v for k, v in cfg.items() if not isinstance(v, dict)}, **cfg.get(args.command, {})}
    valid = {a.dest for a in sub._actions}
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in section.items() if k.replace("-", "_") in valid})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _apply_config(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verbose:
        resolved = {k: v for k, v in vars(args).items() if k != "func"}
        print(json.dumps(resolved, sort_keys=True, default=str), file=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"topiceval {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except LabelMapError as exc:
        print(f"topiceval {args.command}: unmapped label: {exc}", file=sys.stderr)
        return 1
    except (DataError, TransferError, ModelLoadError, EmbeddingLoadError, CorpusFormatError, ValueError,
            OSError) as exc:
        print(f"topiceval {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
