"""Supervised fine-tuning of the matching model.

The loop is deliberately plain: seeded shuffling, mini-batch Adam on exact
hand-derived gradients, dev evaluation after every epoch and a best-epoch
snapshot. Sentence filtering is deterministic, so every example is reduced
to its framed token sequence once, up front.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import checkpoint as ckpt
from .corpus import MatchExample, Vocab
from .errors import DivergedAt
from .metrics import compute_metrics
from .pagerank import PageRankParams
from .sentence_filter import assemble_sequence, filter_pair
from .transformer import (ImportanceFn, ModelConfig, ModelWeights,
                          TokenSequence, backward, forward)

P_CLAMP = 1e-7

# Maps a phase ("train" or "eval") to the importance plug-in used by
# forward passes in that phase; None selects the built-in PageRank scorer.
ImportanceProvider = Callable[[str], ImportanceFn | None]

PreparedExample = tuple[TokenSequence, int]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.eps <= 0:
            raise ValueError("learning_rate and eps must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def bce_loss(p, y) -> float:
    """Binary cross-entropy, mean-reduced when given arrays.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1.0 - P_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


class TrainState:
    """Weights plus Adam moment accumulators and the best-epoch snapshot."""

    def __init__(self, weights: ModelWeights):
        self.weights = weights
        self.m = weights.zeros_like()
        self.v = weights.zeros_like()
        self.step = 0
        self.best_dev_acc = -1.0
        self.best_weights = weights.copy()


def adam_step(state: TrainState, grads: dict[str, np.ndarray],
              cfg: TrainConfig) -> None:
    """One bias-corrected Adam update over every tensor."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        state.weights[name] -= (cfg.learning_rate * (m / bc1)
                                / (np.sqrt(v / bc2) + cfg.eps))


def prepare_examples(examples: Sequence[MatchExample], vocab: Vocab,
                     lam: int = 5,
                     filter_params: PageRankParams | None = None,
                     max_len: int = 128) -> list[PreparedExample]:
    """Sentence-filter and assemble every example once, up front."""
    params = filter_params if filter_params is not None else PageRankParams()
    prepared = []
    for ex in examples:
        pair = filter_pair(ex.text_a, ex.text_b, lam=lam, params=params)
        seq = assemble_sequence(pair, vocab, max_len)
        prepared.append((seq, ex.label))
    return prepared


def predict(weights: ModelWeights, cfg: ModelConfig,
            prepared: Sequence[PreparedExample],
            importance: ImportanceFn | None = None) -> list[tuple[float, int]]:
    """Match probability per prepared example, trace collection off."""
    return [(forward(seq, weights, cfg, importance=importance,
                     want_trace=False).p, y)
            for seq, y in prepared]


def example_gradients(seq: TokenSequence, y: int, weights: ModelWeights,
                      cfg: ModelConfig,
                      importance: ImportanceFn | None = None,
                      scale: float = 1.0):
    """Loss, probability and gradients for one example.

    ``scale`` multiplies the gradient (1/batch for mean reduction). The
    sigmoid and cross-entropy derivatives are folded into d_logit = p - y.
    """
    trace, tape = forward(seq, weights, cfg, importance=importance,
                          want_trace=False, keep_tape=True)
    loss = bce_loss(trace.p, y)
    grads = backward(tape, weights, cfg, d_logit=scale * (trace.p - y))
    return loss, trace.p, grads


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_acc: float
    dev_f1: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps({"epoch": self.epoch, "train_loss": self.train_loss,
                           "dev_acc": self.dev_acc, "dev_f1": self.dev_f1,
                           "seconds": self.seconds})


@dataclass
class TrainResult:
    checkpoint_path: Path | None
    epochs: list[EpochRecord]
    best_dev_acc: float
    best_weights: ModelWeights
    final_weights: ModelWeights


def train(train_data: Sequence[PreparedExample],
          dev_data: Sequence[PreparedExample],
          model_cfg: ModelConfig, train_cfg: TrainConfig,
          out_dir: str | Path | None = None,
          vocab: Vocab | None = None,
          importance_provider: ImportanceProvider | None = None,
          pipeline: dict | None = None,
          initial_weights: ModelWeights | None = None,
          on_epoch: Callable[["EpochRecord"], None] | None = None) -> TrainResult:
    """Run the full training loop and keep the best-dev-accuracy snapshot.

    Deterministic for a fixed seed in single-threaded mode. When ``out_dir``
    is given, writes ``metrics.jsonl`` (one record per epoch) and
    ``model.ckpt`` holding the best snapshot. Loss turning NaN aborts with
    DivergedAt.
    """
    if not train_data:
        raise ValueError("training dataset is empty")
    if not dev_data:
        raise ValueError("dev dataset is empty")

    rng = np.random.default_rng(train_cfg.seed)
    weights = (initial_weights.copy() if initial_weights is not None
               else ModelWeights.initialize(model_cfg))
    state = TrainState(weights)
    train_importance = (importance_provider("train")
                        if importance_provider is not None else None)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = (out_dir / "metrics.jsonl").open("w", encoding="utf-8")

    records: list[EpochRecord] = []
    try:
        for epoch in range(1, train_cfg.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(train_data))
            batch_losses = []
            for start in range(0, len(order), train_cfg.batch_size):
                batch = order[start:start + train_cfg.batch_size]
                scale = 1.0 / len(batch)
                total = state.weights.zeros_like()
                batch_loss = 0.0
                for idx in batch:
                    seq, y = train_data[idx]
                    loss, _, grads = example_gradients(
                        seq, y, state.weights, model_cfg,
                        importance=train_importance, scale=scale)
                    if math.isnan(loss):
                        raise DivergedAt(state.step + 1)
                    batch_loss += loss * scale
                    for name, g in grads.items():
                        total[name] += g
                adam_step(state, total, train_cfg)
                batch_losses.append(batch_loss)

            eval_importance = (importance_provider("eval")
                               if importance_provider is not None else None)
            dev_metrics = compute_metrics(
                predict(state.weights, model_cfg, dev_data,
                        importance=eval_importance))
            if dev_metrics.accuracy > state.best_dev_acc:
                state.best_dev_acc = dev_metrics.accuracy
                state.best_weights = state.weights.copy()

            record = EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(batch_losses)),
                dev_acc=dev_metrics.accuracy,
                dev_f1=dev_metrics.f1,
                seconds=time.perf_counter() - t0,
            )
            records.append(record)
            if log_fh is not None:
                log_fh.write(record.to_json() + "\n")
                log_fh.flush()
            if on_epoch is not None:
                on_epoch(record)
    finally:
        if log_fh is not None:
            log_fh.close()

    ckpt_path = None
    if out_dir is not None:
        ckpt_path = ckpt.save_checkpoint(out_dir / "model.ckpt",
                                         state.best_weights, model_cfg,
                                         vocab=vocab, pipeline=pipeline)
    return TrainResult(checkpoint_path=ckpt_path, epochs=records,
                       best_dev_acc=state.best_dev_acc,
                       best_weights=state.best_weights,
                       final_weights=state.weights)
