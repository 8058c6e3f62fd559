"""Command-line entry point.

Subcommands: filter, train, evaluate, match, sweep, inspect. A flat
key=value config file supplies hyperparameters; command-line flags
override file values. Exit codes: 0 success, 1 internal error, 2
usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import evaluation, sentence_filter, training
from .checkpoint import load_checkpoint
from .corpus import Document, build_vocab, load_dataset, load_stopwords
from .errors import InputError, LongmatchError
from .pagerank import PageRankParams
from .transformer import ModelConfig, forward


@dataclass
class RunConfig:
    """Merged view of every tunable the pipeline exposes."""

    lam: int = 5
    alpha: float = 0.10
    damping: float = 0.85
    iterations: int = 20
    sentence_iterations: int = 100
    learning_rate: float = 1e-5
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    layers: int = 2
    heads: int = 2
    width: int = 64
    ff_width: int = 128
    max_len: int = 128
    min_freq: int = 1
    stopwords: str | None = None

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, layers=self.layers,
                           heads=self.heads, width=self.width,
                           ff_width=self.ff_width, max_len=self.max_len,
                           alpha=self.alpha, damping=self.damping,
                           pr_iterations=self.iterations, seed=self.seed)

    def train_config(self) -> training.TrainConfig:
        return training.TrainConfig(learning_rate=self.learning_rate,
                                    batch_size=self.batch_size,
                                    epochs=self.epochs, seed=self.seed)

    def filter_params(self) -> PageRankParams:
        return PageRankParams(damping=self.damping,
                              iterations=self.sentence_iterations)

    def pipeline_meta(self) -> dict:
        return {"lambda": self.lam, "sentence_damping": self.damping,
                "sentence_iterations": self.sentence_iterations}


# File key -> (RunConfig field, converter). "lambda" is the user-facing name.
_CONFIG_KEYS = {
    "lambda": ("lam", int),
    "alpha": ("alpha", float),
    "damping": ("damping", float),
    "iterations": ("iterations", int),
    "sentence_iterations": ("sentence_iterations", int),
    "learning_rate": ("learning_rate", float),
    "batch_size": ("batch_size", int),
    "epochs": ("epochs", int),
    "seed": ("seed", int),
    "layers": ("layers", int),
    "heads": ("heads", int),
    "width": ("width", int),
    "ff_width": ("ff_width", int),
    "max_len": ("max_len", int),
    "min_freq": ("min_freq", int),
    "stopwords": ("stopwords", str),
}


def load_config_file(path: str | Path) -> dict:
    """Parse key=value lines; '#' comments allowed; unknown keys rejected."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    values = {}
    for line_no, line in enumerate(path.read_text("utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise InputError(f"{path}:{line_no}: unknown config key {key!r}")
        field_name, conv = _CONFIG_KEYS[key]
        try:
            values[field_name] = conv(value)
        except ValueError as exc:
            raise InputError(f"{path}:{line_no}: bad value for {key}: {value}") from exc
    return values


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = replace(cfg, **load_config_file(args.config))
    overrides = {}
    for field in fields(RunConfig):
        flag = getattr(args, f"opt_{field.name}", None)
        if flag is not None:
            overrides[field.name] = flag
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides)


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {p}")
    return p


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stopwords(cfg: RunConfig):
    return load_stopwords(cfg.stopwords) if cfg.stopwords else None


def _prepare_from_checkpoint(data):
    pipeline = data.pipeline or {}
    lam = int(pipeline.get("lambda", 5))
    params = PageRankParams(
        damping=float(pipeline.get("sentence_damping", 0.85)),
        iterations=int(pipeline.get("sentence_iterations", 100)))
    return lam, params


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    path = _require_file(args.pairs)
    out = _out_dir(args)
    examples = load_dataset(path, stopwords=_stopwords(cfg))
    params = cfg.filter_params()

    def run_one(ex):
        if args.per_document:
            pair = sentence_filter.filter_pair_per_document(
                ex.text_a, ex.text_b, lam=cfg.lam, params=params)
            graph = None
        else:
            graph = sentence_filter.build_sentence_graph(ex.text_a, ex.text_b)
            pair = sentence_filter.select_top_sentences(graph, cfg.lam, params)
        record = {
            "label": ex.label,
            "selected_a": [s.text for s in pair.selected_a],
            "selected_b": [s.text for s in pair.selected_b],
        }
        graph_record = None
        if args.export_graph and graph is not None:
            graph_record = sentence_filter.export_sentence_graph(graph, pair.scores)
        return record, graph_record

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(run_one, examples))
    else:
        results = [run_one(ex) for ex in examples]

    with (out / "filtered.jsonl").open("w", encoding="utf-8") as fh:
        for record, _ in results:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    if args.export_graph:
        with (out / "graphs.jsonl").open("w", encoding="utf-8") as fh:
            for _, graph_record in results:
                if graph_record is not None:
                    fh.write(json.dumps(graph_record, sort_keys=True) + "\n")
    print(f"filtered {len(results)} pairs -> {out / 'filtered.jsonl'}")
    return 0


def _split_dev(examples, fraction: float = 0.1):
    n_dev = max(1, int(len(examples) * fraction))
    if n_dev >= len(examples):
        raise InputError("dataset too small to hold out a dev split")
    return examples[:-n_dev], examples[-n_dev:]


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    train_path = _require_file(args.dataset)
    stop = _stopwords(cfg)
    train_examples = load_dataset(train_path, stopwords=stop)
    if args.dev:
        dev_examples = load_dataset(_require_file(args.dev), stopwords=stop)
    else:
        train_examples, dev_examples = _split_dev(train_examples)
    if not train_examples or not dev_examples:
        raise InputError("train/dev split is empty")

    vocab = build_vocab(train_examples, min_freq=cfg.min_freq)
    model_cfg = cfg.model_config(vocab.size)
    prepared_train = training.prepare_examples(
        train_examples, vocab, lam=cfg.lam,
        filter_params=cfg.filter_params(), max_len=cfg.max_len)
    prepared_dev = training.prepare_examples(
        dev_examples, vocab, lam=cfg.lam,
        filter_params=cfg.filter_params(), max_len=cfg.max_len)

    out = _out_dir(args)
    result = training.train(
        prepared_train, prepared_dev, model_cfg, cfg.train_config(),
        out_dir=out, vocab=vocab, pipeline=cfg.pipeline_meta(),
        on_epoch=lambda r: print(
            f"epoch {r.epoch}: train_loss={r.train_loss:.4f} "
            f"dev_acc={r.dev_acc:.4f} dev_f1={r.dev_f1:.4f} "
            f"({r.seconds:.1f}s)"))
    print(f"best dev_acc={result.best_dev_acc:.4f}")
    print(f"checkpoint -> {result.checkpoint_path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    data = load_checkpoint(_require_file(args.checkpoint))
    if data.vocab is None:
        raise InputError("checkpoint carries no vocabulary")
    examples = load_dataset(_require_file(args.dataset))
    lam, params = _prepare_from_checkpoint(data)
    prepared = training.prepare_examples(examples, data.vocab, lam=lam,
                                         filter_params=params,
                                         max_len=data.config.max_len)
    predictions = training.predict(data.weights, data.config, prepared)
    m = evaluation.compute_metrics(predictions)
    print(f"accuracy={m.accuracy:.4f} f1={m.f1:.4f} n={m.n_examples}")
    out = _out_dir(args)
    with (out / "eval_metrics.json").open("w", encoding="utf-8") as fh:
        json.dump({"accuracy": m.accuracy, "f1": m.f1,
                   "n_examples": m.n_examples, "tp": m.tp, "fp": m.fp,
                   "tn": m.tn, "fn": m.fn}, fh, indent=2)
        fh.write("\n")
    return 0


def _load_pair_documents(args, stop):
    text_a = _require_file(args.text_a).read_text("utf-8")
    text_b = _require_file(args.text_b).read_text("utf-8")
    if not text_a.strip() or not text_b.strip():
        raise InputError("input texts must be non-empty")
    doc_a = Document.from_text("a", text_a, stopwords=stop)
    doc_b = Document.from_text("b", text_b, stopwords=stop)
    return doc_a, doc_b


def cmd_match(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    data = load_checkpoint(_require_file(args.checkpoint))
    if data.vocab is None:
        raise InputError("checkpoint carries no vocabulary")
    doc_a, doc_b = _load_pair_documents(args, _stopwords(cfg))
    lam, params = _prepare_from_checkpoint(data)
    pair = sentence_filter.filter_pair(doc_a, doc_b, lam=lam, params=params)
    seq = sentence_filter.assemble_sequence(pair, data.vocab,
                                            data.config.max_len)
    trace = forward(seq, data.weights, data.config, want_trace=args.trace)
    label = 1 if trace.p >= 0.5 else 0
    print(f"p={trace.p:.4f} label={label}")
    if args.trace:
        out = _out_dir(args)
        payload = trace.to_dict()
        payload["tokens"] = [data.vocab.token(int(i)) for i in seq.ids]
        with (out / "trace.json").open("w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    stop = _stopwords(cfg)
    examples = load_dataset(_require_file(args.dataset), stopwords=stop)
    if args.dev:
        dev_examples = load_dataset(_require_file(args.dev), stopwords=stop)
        train_examples = examples
    else:
        train_examples, dev_examples = _split_dev(examples)
    out = _out_dir(args)
    model_cfg = cfg.model_config(vocab_size=5)  # vocab size set inside sweeps

    if args.kind == "alpha":
        alphas = [float(a) for a in args.alphas.split(",")]
        rows = evaluation.alpha_sweep(
            train_examples, dev_examples, model_cfg, cfg.train_config(),
            alphas=alphas, lam=cfg.lam, filter_params=cfg.filter_params(),
            timing_batches=args.timing_batches, timing_only=args.timing_only,
            out_dir=out)
    else:
        rows = evaluation.strategy_sweep(
            train_examples, dev_examples, model_cfg, cfg.train_config(),
            lam=cfg.lam, filter_params=cfg.filter_params(), out_dir=out)
    for row in rows:
        print(json.dumps({k: v for k, v in row.items() if k != "schedule"}))
    print(f"tables -> {out}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    cfg = _build_run_config(args)
    stop = _stopwords(cfg)
    doc_a, doc_b = _load_pair_documents(args, stop)
    out = _out_dir(args)

    graph = sentence_filter.build_sentence_graph(doc_a, doc_b)
    pair = sentence_filter.select_top_sentences(graph, cfg.lam,
                                                cfg.filter_params())
    graph_json = sentence_filter.export_sentence_graph(graph, pair.scores)
    with (out / "sentence_graph.json").open("w", encoding="utf-8") as fh:
        json.dump(graph_json, fh, indent=2)
        fh.write("\n")
    print(f"sentence graph -> {out / 'sentence_graph.json'}")

    if args.checkpoint:
        data = load_checkpoint(_require_file(args.checkpoint))
        if data.vocab is None:
            raise InputError("checkpoint carries no vocabulary")
        lam, params = _prepare_from_checkpoint(data)
        pair = sentence_filter.filter_pair(doc_a, doc_b, lam=lam,
                                           params=params)
        seq = sentence_filter.assemble_sequence(pair, data.vocab,
                                                data.config.max_len)
        trace = forward(seq, data.weights, data.config, want_trace=True)
        payload = trace.to_dict()
        payload["tokens"] = [data.vocab.token(int(i)) for i in seq.ids]
        with (out / "word_importance.json").open("w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"word importance -> {out / 'word_importance.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longmatch",
        description="Long-form text matching with PageRank noise filtering")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker threads where the command supports them")
    parser.add_argument("--output-dir", default="out",
                        help="directory for generated files")
    sub = parser.add_subparsers(dest="command", required=True)

    p_filter = sub.add_parser("filter", help="sentence-level filtering only")
    p_filter.add_argument("pairs", help="JSONL file of document pairs")
    p_filter.add_argument("--export-graph", action="store_true")
    p_filter.add_argument("--per-document", action="store_true",
                          help="baseline: rank each document in isolation")
    p_filter.add_argument("--lambda", dest="opt_lam", type=int, default=None)
    p_filter.set_defaults(func=cmd_filter)

    p_train = sub.add_parser("train", help="fine-tune the matching model")
    p_train.add_argument("dataset", help="JSONL training data")
    p_train.add_argument("--dev", help="JSONL dev data (default: 10%% holdout)")
    p_train.add_argument("--epochs", dest="opt_epochs", type=int, default=None)
    p_train.add_argument("--learning-rate", dest="opt_learning_rate",
                         type=float, default=None)
    p_train.add_argument("--lambda", dest="opt_lam", type=int, default=None)
    p_train.add_argument("--alpha", dest="opt_alpha", type=float, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="score a dataset with a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("dataset")
    p_eval.set_defaults(func=cmd_evaluate)

    p_match = sub.add_parser("match", help="score one document pair")
    p_match.add_argument("checkpoint")
    p_match.add_argument("text_a")
    p_match.add_argument("text_b")
    p_match.add_argument("--trace", action="store_true",
                         help="write the forward trace JSON")
    p_match.set_defaults(func=cmd_match)

    p_sweep = sub.add_parser("sweep", help="ablation sweeps")
    p_sweep.add_argument("kind", choices=("alpha", "strategy"))
    p_sweep.add_argument("dataset")
    p_sweep.add_argument("--dev")
    p_sweep.add_argument("--alphas", default="0,0.05,0.1,0.2")
    p_sweep.add_argument("--timing-batches", type=int, default=50)
    p_sweep.add_argument("--timing-only", action="store_true")
    p_sweep.add_argument("--epochs", dest="opt_epochs", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_inspect = sub.add_parser("inspect",
                               help="export graph and importance artifacts")
    p_inspect.add_argument("text_a")
    p_inspect.add_argument("text_b")
    p_inspect.add_argument("--checkpoint")
    p_inspect.add_argument("--lambda", dest="opt_lam", type=int, default=None)
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LongmatchError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
