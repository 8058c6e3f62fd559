"""Evaluation harnesses: metrics, word-filter strategy ablations, synthetic
planted-signal tasks, the reduction-ratio sweep and wall-clock timing.

The synthetic task stands in for full-scale corpora: positive pairs share a
planted signal sentence (so their documents overlap in a known token set),
negative pairs share nothing, and every noise token is unique to one side.
Signal-token retention, the fraction of planted tokens alive in the last
encoder layer, is the desk-scale proxy for comparing filter strategies.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document, MatchExample, Vocab, build_vocab
from .metrics import compute_metrics
from .pagerank import PageRankParams
from .training import (PreparedExample, TrainConfig, TrainState, adam_step,
                       example_gradients, predict, prepare_examples, train)
from .transformer import (ImportanceFn, ModelConfig, ModelWeights,
                          TokenSequence, forward, pruning_schedule,
                          word_importance)

STRATEGY_RANDOM = "random"
STRATEGY_EMBEDDING_NORM = "embedding_norm"
STRATEGY_ATTENTION_WEIGHT = "attention_weight"
STRATEGY_PAGERANK = "pagerank"
STRATEGY_KINDS = (STRATEGY_RANDOM, STRATEGY_EMBEDDING_NORM,
                  STRATEGY_ATTENTION_WEIGHT, STRATEGY_PAGERANK)


@dataclass(frozen=True)
class FilterStrategy:
    """Which word-level importance signal drives pruning."""

    kind: str = STRATEGY_PAGERANK
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")


def importance_by_strategy(strategy: FilterStrategy, a_avg: np.ndarray,
                           hidden: np.ndarray | None = None,
                           params: PageRankParams | None = None,
                           rng: np.random.Generator | None = None) -> np.ndarray:
    """Importance scores (summing to 1) under the given strategy.

    random: seeded uniform draws. embedding_norm: L2 norm of each hidden
    row. attention_weight: column means of the averaged attention matrix,
    i.e. total attention received, which equals one undamped PageRank step
    from the uniform vector. pagerank: the full scorer.
    """
    n = a_avg.shape[0]
    if a_avg.shape != (n, n):
        raise ValueError(f"a_avg must be square, got {a_avg.shape}")
    if strategy.kind == STRATEGY_RANDOM:
        gen = rng if rng is not None else np.random.default_rng(strategy.seed)
        scores = gen.random(n)
    elif strategy.kind == STRATEGY_EMBEDDING_NORM:
        if hidden is None or hidden.shape[0] != n:
            raise ValueError("embedding_norm needs hidden rows aligned to a_avg")
        scores = np.linalg.norm(hidden, axis=1)
    elif strategy.kind == STRATEGY_ATTENTION_WEIGHT:
        scores = a_avg.mean(axis=0)
    else:
        pr = params if params is not None else PageRankParams(iterations=20)
        _, r = word_importance(a_avg, pr)
        return r
    total = scores.sum()
    return scores / total if total > 0 else np.full(n, 1.0 / n)


def make_importance_provider(strategy: FilterStrategy,
                             params: PageRankParams | None = None):
    """Phase-aware provider for the training loop.

    The pagerank strategy returns None so forward uses its built-in path.
    The random strategy keeps one generator per phase: training draws a
    fresh pattern every step, evaluation reseeds per pass so repeated runs
    agree.
    """
    if strategy.kind == STRATEGY_PAGERANK:
        return lambda phase: None

    def provider(phase: str):
        seed = strategy.seed if phase == "train" else strategy.seed + 1
        gen = np.random.default_rng(seed)

        def fn(a_avg, hidden):
            return None, importance_by_strategy(strategy, a_avg, hidden,
                                                params=params, rng=gen)
        return fn

    return provider


# ---------------------------------------------------------------------------
# Synthetic planted-signal task
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticTask:
    """Generator settings for the planted-signal matching task.

    Every document carries one planted signal sentence among its noise
    sentences. Positive pairs plant the same ``signal_tokens_per_pair``
    tokens on both sides; negative pairs draw each side's signal sentence
    from a side-reserved slice of the signal pool, so negatives never share
    a token. Noise tokens come from disjoint per-side pools and never
    repeat within a document. The classes are linearly separable by
    construction: shared-pool tokens occur exactly in positives.
    """

    seed: int = 0
    signal_tokens_per_pair: int = 5
    noise_sentence_count: int = 9
    signal_pool_size: int = 60
    noise_pool_size: int = 240
    sentence_length: tuple[int, int] = (4, 8)

    def __post_init__(self):
        if self.signal_tokens_per_pair < 2:
            raise ValueError("need at least 2 signal tokens per pair")
        if self.signal_pool_size // 4 < self.signal_tokens_per_pair:
            raise ValueError("signal pool too small for side-reserved slices")
        per_side = self.noise_pool_size // 2
        if per_side < self.noise_sentence_count * self.sentence_length[1]:
            raise ValueError("noise pool too small for unique-per-doc tokens")

    def signal_pool(self) -> list[str]:
        return [f"sig{i:03d}" for i in range(self.signal_pool_size)]

    def signal_subpools(self) -> tuple[list[str], list[str], list[str]]:
        """(shared, side-A-only, side-B-only) slices of the signal pool."""
        pool = self.signal_pool()
        half = self.signal_pool_size // 2
        quarter = self.signal_pool_size // 4
        return pool[:half], pool[half:half + quarter], pool[half + quarter:]

    def noise_pools(self) -> tuple[list[str], list[str]]:
        half = self.noise_pool_size // 2
        return ([f"za{i:03d}" for i in range(half)],
                [f"zb{i:03d}" for i in range(half)])


def _make_document(rng: np.random.Generator, doc_id: str,
                   noise_pool: list[str], signal_tokens: list[str],
                   task: SyntheticTask, terminator: str) -> Document:
    lo, hi = task.sentence_length
    shuffled = [noise_pool[i] for i in rng.permutation(len(noise_pool))]
    cursor = 0
    sentences: list[list[str]] = []
    for _ in range(task.noise_sentence_count):
        length = int(rng.integers(lo, hi + 1))
        sentences.append(shuffled[cursor:cursor + length])
        cursor += length
    signal_sentence = [signal_tokens[i]
                       for i in rng.permutation(len(signal_tokens))]
    insert_at = int(rng.integers(0, len(sentences) + 1))
    sentences.insert(insert_at, signal_sentence)
    text = " ".join(" ".join(s) + terminator for s in sentences)
    return Document.from_text(doc_id, text)


def _make_pair(rng: np.random.Generator, pair_id: str, label: int,
               task: SyntheticTask) -> MatchExample:
    shared_pool, only_a, only_b = task.signal_subpools()
    noise_a, noise_b = task.noise_pools()
    k = task.signal_tokens_per_pair
    if label == 1:
        shared = [shared_pool[i]
                  for i in rng.choice(len(shared_pool), size=k, replace=False)]
        sig_a = sig_b = shared
    else:
        sig_a = [only_a[i]
                 for i in rng.choice(len(only_a), size=k, replace=False)]
        sig_b = [only_b[i]
                 for i in rng.choice(len(only_b), size=k, replace=False)]
    # Per-side terminators keep punctuation from being the one token the
    # two sides always share; the planted tokens are then the only overlap.
    doc_a = _make_document(rng, f"{pair_id}a", noise_a, sig_a, task, ".")
    doc_b = _make_document(rng, f"{pair_id}b", noise_b, sig_b, task, "!")
    return MatchExample(doc_a, doc_b, label)


def generate_synthetic(task: SyntheticTask, n_train: int, n_dev: int
                       ) -> tuple[list[MatchExample], list[MatchExample]]:
    """Reproducible train/dev splits with balanced, alternating labels."""
    rng = np.random.default_rng(task.seed)
    train = [_make_pair(rng, f"tr{i}", i % 2, task) for i in range(n_train)]
    dev = [_make_pair(rng, f"dv{i}", i % 2, task) for i in range(n_dev)]
    return train, dev


def write_dataset(examples: Sequence[MatchExample], path: str | Path) -> Path:
    """Serialize examples as the JSON-lines dataset format, byte-stable."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"label": ex.label,
                                 "text_a": ex.text_a.raw_text,
                                 "text_b": ex.text_b.raw_text},
                                sort_keys=True) + "\n")
    return path


def signal_token_ids(vocab: Vocab, task: SyntheticTask) -> set[int]:
    """Vocabulary ids of the planted signal tokens (UNK excluded)."""
    return {vocab.encode(t) for t in task.signal_pool() if t in vocab}


def signal_retention(trace, seq: TokenSequence,
                     signal_ids: set[int]) -> float | None:
    """Fraction of signal-token positions that survive every layer.

    None when the sequence contains no signal token.
    """
    total_layers = int(trace.retention_depth.max(initial=0))
    positions = [i for i, tid in enumerate(seq.ids) if int(tid) in signal_ids]
    if not positions:
        return None
    survived = sum(1 for i in positions
                   if trace.retention_depth[i] == total_layers)
    return survived / len(positions)


def mean_signal_retention(weights: ModelWeights, cfg: ModelConfig,
                          prepared: Sequence[PreparedExample],
                          signal_ids: set[int],
                          importance: ImportanceFn | None = None) -> float:
    """Average retention over every example that carries signal tokens."""
    values = []
    for seq, _ in prepared:
        trace = forward(seq, weights, cfg, importance=importance,
                        want_trace=False)
        r = signal_retention(trace, seq, signal_ids)
        if r is not None:
            values.append(r)
    return float(np.mean(values)) if values else 0.0


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "|".join(str(v) for v in value)
    return str(value)


def write_rows(rows: list[dict], out_dir: str | Path, stem: str) -> None:
    """Emit a sweep table as CSV (6 significant digits) and JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if rows:
        fields = list(rows[0].keys())
        with (out_dir / f"{stem}.csv").open("w", encoding="utf-8",
                                            newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for row in rows:
                writer.writerow([_fmt(row[f]) for f in fields])
    rounded = [
        {k: (float(f"{v:.6g}") if isinstance(v, float) else v)
         for k, v in row.items()}
        for row in rows
    ]
    with (out_dir / f"{stem}.json").open("w", encoding="utf-8") as fh:
        json.dump(rounded, fh, indent=2)
        fh.write("\n")


def strategy_sweep(train_examples: Sequence[MatchExample],
                   dev_examples: Sequence[MatchExample],
                   model_cfg: ModelConfig, train_cfg: TrainConfig,
                   strategies: Sequence[FilterStrategy] | None = None,
                   lam: int = 5,
                   filter_params: PageRankParams | None = None,
                   task: SyntheticTask | None = None,
                   out_dir: str | Path | None = None) -> list[dict]:
    """Train and evaluate once per word-filter strategy, identical seeds.

    Emits one row per strategy in the order given (default Random,
    EmbeddingNorm, AttentionWeight, PageRank) with dev metrics and, when
    the synthetic ``task`` is known, the signal-token retention rate.
    """
    if strategies is None:
        strategies = [FilterStrategy(kind=k, seed=train_cfg.seed)
                      for k in STRATEGY_KINDS]
    vocab = build_vocab(train_examples)
    cfg = replace(model_cfg, vocab_size=vocab.size)
    prepared_train = prepare_examples(train_examples, vocab, lam=lam,
                                      filter_params=filter_params,
                                      max_len=cfg.max_len)
    prepared_dev = prepare_examples(dev_examples, vocab, lam=lam,
                                    filter_params=filter_params,
                                    max_len=cfg.max_len)
    sig_ids = signal_token_ids(vocab, task) if task is not None else None

    rows = []
    for strategy in strategies:
        provider = make_importance_provider(strategy, cfg.pagerank_params())
        result = train(prepared_train, prepared_dev, cfg, train_cfg,
                       importance_provider=provider)
        eval_importance = provider("eval")
        dev_metrics = compute_metrics(
            predict(result.best_weights, cfg, prepared_dev,
                    importance=eval_importance))
        row = {
            "strategy": strategy.kind,
            "accuracy": dev_metrics.accuracy,
            "f1": dev_metrics.f1,
        }
        if sig_ids is not None:
            row["signal_retention"] = mean_signal_retention(
                result.best_weights, cfg, prepared_dev, sig_ids,
                importance=eval_importance)
        rows.append(row)
    if out_dir is not None:
        write_rows(rows, out_dir, "strategy_sweep")
    return rows


def time_cost_model(alpha: float, layers: int) -> float:
    """Theoretical attention cost: sum over layers of (1-alpha)^(2l)."""
    return sum((1.0 - alpha) ** (2 * l) for l in range(layers))


def measure_eval_time(weights: ModelWeights, cfg: ModelConfig,
                      sequences: Sequence[TokenSequence],
                      batch_size: int = 8, warmup: int = 5,
                      batches: int = 50) -> float:
    """Median wall-clock seconds per inference batch.

    Runs ``warmup`` unmeasured batches, then at least ``batches`` measured
    ones, cycling through the sequences. Single-threaded by contract.
    """
    times = []
    idx = 0
    for b in range(warmup + batches):
        batch = [sequences[(idx + i) % len(sequences)] for i in range(batch_size)]
        idx += batch_size
        t0 = time.perf_counter()
        for seq in batch:
            forward(seq, weights, cfg, want_trace=False)
        elapsed = time.perf_counter() - t0
        if b >= warmup:
            times.append(elapsed)
    return statistics.median(times)


def measure_train_time(weights: ModelWeights, cfg: ModelConfig,
                       prepared: Sequence[PreparedExample],
                       train_cfg: TrainConfig,
                       batch_size: int = 8, warmup: int = 5,
                       batches: int = 50) -> float:
    """Median seconds per training batch (forward, backward, Adam step)."""
    state = TrainState(weights.copy())
    times = []
    idx = 0
    for b in range(warmup + batches):
        batch = [prepared[(idx + i) % len(prepared)] for i in range(batch_size)]
        idx += batch_size
        t0 = time.perf_counter()
        total = state.weights.zeros_like()
        scale = 1.0 / len(batch)
        for seq, y in batch:
            _, _, grads = example_gradients(seq, y, state.weights, cfg,
                                            scale=scale)
            for name, g in grads.items():
                total[name] += g
        adam_step(state, total, train_cfg)
        elapsed = time.perf_counter() - t0
        if b >= warmup:
            times.append(elapsed)
    return statistics.median(times)


def alpha_sweep(train_examples: Sequence[MatchExample],
                dev_examples: Sequence[MatchExample],
                model_cfg: ModelConfig, train_cfg: TrainConfig,
                alphas: Sequence[float],
                lam: int = 5,
                filter_params: PageRankParams | None = None,
                timing_batches: int = 50, warmup: int = 5,
                timing_only: bool = False,
                out_dir: str | Path | None = None) -> list[dict]:
    """Accuracy and wall-clock cost as the word reduction ratio varies.

    One row per alpha: dev metrics (unless ``timing_only``), the nominal
    pruning schedule at max_len, and median train/eval seconds per batch
    measured after warm-up. Timing uses the same prepared sequences for
    every alpha, so ratios across rows are comparable.
    """
    vocab = build_vocab(train_examples)
    cfg_base = replace(model_cfg, vocab_size=vocab.size)
    prepared_train = prepare_examples(train_examples, vocab, lam=lam,
                                      filter_params=filter_params,
                                      max_len=cfg_base.max_len)
    prepared_dev = prepare_examples(dev_examples, vocab, lam=lam,
                                    filter_params=filter_params,
                                    max_len=cfg_base.max_len)
    dev_sequences = [seq for seq, _ in prepared_dev]

    rows = []
    for alpha in alphas:
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha {alpha} outside [0, 1)")
        cfg = replace(cfg_base, alpha=alpha)
        if timing_only:
            weights = ModelWeights.initialize(cfg)
            accuracy = f1 = None
        else:
            result = train(prepared_train, prepared_dev, cfg, train_cfg)
            weights = result.best_weights
            dev_metrics = compute_metrics(predict(weights, cfg, prepared_dev))
            accuracy, f1 = dev_metrics.accuracy, dev_metrics.f1
        train_time = measure_train_time(weights, cfg, prepared_train,
                                        train_cfg,
                                        batch_size=train_cfg.batch_size,
                                        warmup=warmup, batches=timing_batches)
        eval_time = measure_eval_time(weights, cfg, dev_sequences,
                                      batch_size=train_cfg.batch_size,
                                      warmup=warmup, batches=timing_batches)
        rows.append({
            "alpha": float(alpha),
            "accuracy": accuracy,
            "f1": f1,
            "schedule": pruning_schedule(cfg.max_len, cfg.layers, alpha),
            "train_s_per_batch": train_time,
            "eval_s_per_batch": eval_time,
        })
    if out_dir is not None:
        write_rows(rows, out_dir, "alpha_sweep")
    return rows
