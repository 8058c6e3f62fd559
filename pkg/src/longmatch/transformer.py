"""Multi-head self-attention encoder with per-layer token pruning.

Each layer's head-averaged attention matrix doubles as a word graph: its
transpose is column-stochastic, PageRank over it scores the layer's input
tokens, and r = A_avg @ u redistributes those scores onto the layer's
output tokens. Tokens with low r are dropped before the next layer, except
framing tokens ([CLS], [SEP]) which a mask protects at every layer.

All math runs in float64. The forward pass can record a tape of
intermediate activations; ``backward`` consumes the tape and returns exact
gradients for every weight tensor, with the discrete pruning choices held
constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf

from .errors import NonFinite
from .pagerank import PageRankParams, PageRankScores, pagerank, validate_stochastic

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Importance plug-in: (a_avg, hidden) -> (pagerank scores or None, r scores).
ImportanceFn = Callable[[np.ndarray, np.ndarray], tuple[PageRankScores | None, np.ndarray]]


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; every weight shape is independent of sequence length."""

    vocab_size: int
    layers: int = 2
    heads: int = 2
    width: int = 64
    ff_width: int = 128
    max_len: int = 128
    alpha: float = 0.10
    damping: float = 0.85
    pr_iterations: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 5:
            raise ValueError("vocab_size must cover the special tokens")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.heads < 1 or self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.max_len < 3:
            raise ValueError("max_len must be >= 3")
        if self.ff_width < 1:
            raise ValueError("ff_width must be >= 1")

    @property
    def head_width(self) -> int:
        return self.width // self.heads

    def pagerank_params(self) -> PageRankParams:
        return PageRankParams(damping=self.damping, iterations=self.pr_iterations)


@dataclass(frozen=True)
class TokenSequence:
    """Framed model input: ids plus a protection mask for [CLS]/[SEP]."""

    ids: np.ndarray             # int64, shape (n,)
    protected_mask: np.ndarray  # bool, shape (n,)

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))
        object.__setattr__(self, "protected_mask",
                           np.asarray(self.protected_mask, dtype=bool))
        if self.ids.shape != self.protected_mask.shape or self.ids.ndim != 1:
            raise ValueError("ids and protected_mask must be 1-D and aligned")
        if len(self.ids) < 3:
            raise ValueError("sequence needs at least [CLS], one token, [SEP]")
        if not (self.protected_mask[0] and self.protected_mask[-1]):
            raise ValueError("first and last positions must be protected")

    def __len__(self) -> int:
        return len(self.ids)


class ModelWeights:
    """Named float64 tensors for every learnable parameter.

    Attention projections are stored per layer as (heads, width, head_width)
    stacks; the checkpoint format serializes them under the same names.
    """

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {name: np.asarray(t, dtype=np.float64)
                        for name, t in tensors.items()}

    @classmethod
    def initialize(cls, cfg: ModelConfig) -> "ModelWeights":
        """Seeded init: matrices uniform in +-1/sqrt(width), gains 1, biases 0."""
        rng = np.random.default_rng(cfg.seed)
        gain = 1.0 / math.sqrt(cfg.width)
        e, h, eh, f = cfg.width, cfg.heads, cfg.head_width, cfg.ff_width

        def mat(*shape):
            return rng.uniform(-gain, gain, size=shape)

        tensors: dict[str, np.ndarray] = {
            "token_embedding": mat(cfg.vocab_size, e),
            "position_embedding": mat(cfg.max_len, e),
        }
        for l in range(cfg.layers):
            p = f"layer{l}."
            tensors[p + "wq"] = mat(h, e, eh)
            tensors[p + "wk"] = mat(h, e, eh)
            tensors[p + "wv"] = mat(h, e, eh)
            tensors[p + "wo"] = mat(e, e)
            tensors[p + "ln1_gain"] = np.ones(e)
            tensors[p + "ln1_bias"] = np.zeros(e)
            tensors[p + "ff_w1"] = mat(e, f)
            tensors[p + "ff_b1"] = np.zeros(f)
            tensors[p + "ff_w2"] = mat(f, e)
            tensors[p + "ff_b2"] = np.zeros(e)
            tensors[p + "ln2_gain"] = np.ones(e)
            tensors[p + "ln2_bias"] = np.zeros(e)
        tensors["classifier_w"] = mat(e)
        tensors["classifier_b"] = np.zeros(1)
        return cls(tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray):
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def items(self):
        return self.tensors.items()

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "ModelWeights":
        return ModelWeights({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


@dataclass
class ActiveSet:
    """Per-layer surviving positions (original indices) and importances."""

    positions: list[np.ndarray] = field(default_factory=list)
    importance: list[np.ndarray | None] = field(default_factory=list)


@dataclass
class ForwardTrace:
    """Everything the forward pass exposes for inspection and tests."""

    p: float
    attention: list[np.ndarray]            # head-averaged A per layer, active rows
    pagerank_u: list[np.ndarray | None]    # PageRank over each layer's word graph
    redistribution_r: list[np.ndarray | None]
    active: ActiveSet
    retention_depth: np.ndarray            # layers survived, per original position

    def to_dict(self) -> dict:
        """JSON-ready view with per-layer active positions and r vectors."""
        layers = []
        for pos, r in zip(self.active.positions, self.active.importance):
            layers.append({
                "active_positions": [int(i) for i in pos],
                "importance": None if r is None else [float(x) for x in r],
            })
        return {
            "p": float(self.p),
            "layers": layers,
            "retention_depth": [int(d) for d in self.retention_depth],
        }


def pruning_schedule(n_in: int, layers: int, alpha: float,
                     protected_count: int = 0) -> list[int]:
    """Token count each layer processes: floor(n*(1-alpha)^(l-1)), clamped
    from below by the protected-token count. Non-increasing by construction.
    """
    if n_in < 1 or layers < 1:
        raise ValueError("n_in and layers must be positive")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if protected_count > n_in:
        raise ValueError("protected_count cannot exceed n_in")
    return [max(protected_count, math.floor(n_in * (1.0 - alpha) ** l))
            for l in range(layers)]


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    norm = xc * inv
    return norm * gain + bias, (norm, inv)


def _layer_norm_backward(d_out, cache, gain):
    norm, inv = cache
    d_gain = (d_out * norm).sum(axis=0)
    d_bias = d_out.sum(axis=0)
    d_norm = d_out * gain
    # Row-wise: dx = inv * (dn - mean(dn) - norm * mean(dn * norm))
    mean_dn = d_norm.mean(axis=-1, keepdims=True)
    mean_dn_norm = (d_norm * norm).mean(axis=-1, keepdims=True)
    d_x = inv * (d_norm - mean_dn - norm * mean_dn_norm)
    return d_x, d_gain, d_bias


def _gelu(x: np.ndarray):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, cdf


def _gelu_backward(d_out, x, cdf):
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return d_out * (cdf + x * pdf)


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attention_layer(hidden: np.ndarray, layer_weights: dict[str, np.ndarray],
                    keep_cache: bool = False):
    """One encoder block over the active rows.

    Returns (new_hidden, a_avg, cache). ``a_avg`` is the head-averaged
    attention matrix; every row sums to 1. Post-norm residual layout:
    sublayer, residual add, then layer normalization.
    """
    wq, wk, wv = layer_weights["wq"], layer_weights["wk"], layer_weights["wv"]
    heads, _, head_width = wq.shape
    n = hidden.shape[0]

    # Overflow surfaces as NaN/Inf and is caught by the finiteness check.
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.einsum("ne,hek->hnk", hidden, wq)
        k = np.einsum("ne,hek->hnk", hidden, wk)
        v = np.einsum("ne,hek->hnk", hidden, wv)
        scores = (q @ k.transpose(0, 2, 1)) / math.sqrt(head_width)
        attn = _softmax_rows(scores)                  # (heads, n, n)
        head_out = attn @ v                           # (heads, n, head_width)
        concat = head_out.transpose(1, 0, 2).reshape(n, heads * head_width)
        attn_proj = concat @ layer_weights["wo"]

        res1 = hidden + attn_proj
        h1, ln1_cache = _layer_norm(res1, layer_weights["ln1_gain"],
                                    layer_weights["ln1_bias"])

        z1 = h1 @ layer_weights["ff_w1"] + layer_weights["ff_b1"]
        g, gelu_cdf = _gelu(z1)
        z2 = g @ layer_weights["ff_w2"] + layer_weights["ff_b2"]
        res2 = h1 + z2
        h2, ln2_cache = _layer_norm(res2, layer_weights["ln2_gain"],
                                    layer_weights["ln2_bias"])

    if not np.all(np.isfinite(h2)):
        raise NonFinite("attention layer produced non-finite values")

    a_avg = attn.mean(axis=0)
    cache = None
    if keep_cache:
        cache = {
            "hidden": hidden, "q": q, "k": k, "v": v, "attn": attn,
            "concat": concat, "ln1_cache": ln1_cache, "h1": h1,
            "z1": z1, "gelu_cdf": gelu_cdf, "g": g, "ln2_cache": ln2_cache,
        }
    return h2, a_avg, cache


def _attention_layer_backward(d_h2, layer_weights, cache):
    """Gradients of one encoder block; returns (d_hidden, grads dict)."""
    wq, wk, wv = layer_weights["wq"], layer_weights["wk"], layer_weights["wv"]
    heads, _, head_width = wq.shape
    hidden = cache["hidden"]
    n = hidden.shape[0]
    grads: dict[str, np.ndarray] = {}

    d_res2, grads["ln2_gain"], grads["ln2_bias"] = _layer_norm_backward(
        d_h2, cache["ln2_cache"], layer_weights["ln2_gain"])
    d_h1 = d_res2.copy()
    d_z2 = d_res2
    grads["ff_w2"] = cache["g"].T @ d_z2
    grads["ff_b2"] = d_z2.sum(axis=0)
    d_g = d_z2 @ layer_weights["ff_w2"].T
    d_z1 = _gelu_backward(d_g, cache["z1"], cache["gelu_cdf"])
    grads["ff_w1"] = cache["h1"].T @ d_z1
    grads["ff_b1"] = d_z1.sum(axis=0)
    d_h1 += d_z1 @ layer_weights["ff_w1"].T

    d_res1, grads["ln1_gain"], grads["ln1_bias"] = _layer_norm_backward(
        d_h1, cache["ln1_cache"], layer_weights["ln1_gain"])
    d_hidden = d_res1.copy()
    d_attn_proj = d_res1
    grads["wo"] = cache["concat"].T @ d_attn_proj
    d_concat = d_attn_proj @ layer_weights["wo"].T
    d_head_out = d_concat.reshape(n, heads, head_width).transpose(1, 0, 2)

    attn, v = cache["attn"], cache["v"]
    d_attn = d_head_out @ v.transpose(0, 2, 1)
    d_v = attn.transpose(0, 2, 1) @ d_head_out
    # Softmax backward per row: dS = A * (dA - sum(dA * A))
    inner = (d_attn * attn).sum(axis=-1, keepdims=True)
    d_scores = attn * (d_attn - inner) / math.sqrt(head_width)
    d_q = d_scores @ cache["k"]
    d_k = d_scores.transpose(0, 2, 1) @ cache["q"]

    grads["wq"] = np.einsum("ne,hnk->hek", hidden, d_q)
    grads["wk"] = np.einsum("ne,hnk->hek", hidden, d_k)
    grads["wv"] = np.einsum("ne,hnk->hek", hidden, d_v)
    d_hidden += np.einsum("hnk,hek->ne", d_q, wq)
    d_hidden += np.einsum("hnk,hek->ne", d_k, wk)
    d_hidden += np.einsum("hnk,hek->ne", d_v, wv)
    return d_hidden, grads


def word_importance(a_avg: np.ndarray, params: PageRankParams
                    ) -> tuple[PageRankScores, np.ndarray]:
    """PageRank scores u over the word graph plus redistributed scores r.

    The transpose of the row-stochastic ``a_avg`` is the transition matrix.
    r = a_avg @ u is normalized to sum 1 so both vectors are probability
    distributions; normalization does not change the pruning order.
    """
    adj = validate_stochastic(a_avg.T, tol=1e-6)
    scores = pagerank(adj, params)
    r = a_avg @ scores.u
    total = r.sum()
    if total > 0:
        r = r / total
    return scores, r


def prune_tokens(positions: np.ndarray, r: np.ndarray, target_count: int,
                 protected: np.ndarray) -> np.ndarray:
    """Indices (into ``positions``) to keep: all protected entries plus the
    highest-r unprotected ones up to ``target_count``, ties broken by
    ascending original position. Output is sorted by original position.
    """
    n = len(positions)
    if target_count >= n:
        return np.arange(n)
    keep = set(np.flatnonzero(protected).tolist())
    if len(keep) > target_count:
        raise ValueError("target_count below protected count")
    order = sorted((i for i in range(n) if not protected[i]),
                   key=lambda i: (-r[i], positions[i]))
    for i in order:
        if len(keep) >= target_count:
            break
        keep.add(i)
    return np.array(sorted(keep), dtype=np.int64)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass
class Tape:
    """Activations recorded by a tape-enabled forward pass."""

    ids: np.ndarray
    layer_caches: list[dict]
    keep_indices: list[np.ndarray | None]   # per layer, None when no pruning
    positions_per_layer: list[np.ndarray]
    final_hidden: np.ndarray
    logit: float
    p: float


def forward(seq: TokenSequence, weights: ModelWeights, cfg: ModelConfig,
            importance: ImportanceFn | None = None,
            want_trace: bool = True, keep_tape: bool = False
            ) -> ForwardTrace | tuple[ForwardTrace, Tape]:
    """Run the encoder with per-layer pruning and return the match trace.

    Position embeddings always index original positions, so pruning never
    shifts positional identity. Importance defaults to the PageRank scorer;
    a custom ``importance`` callable replaces it (used by the filter-strategy
    ablations). With ``want_trace=False`` the importance computation is
    skipped whenever no pruning is due, which is the fast inference path.
    """
    n0 = len(seq)
    if n0 > cfg.max_len:
        raise ValueError(f"sequence length {n0} exceeds max_len {cfg.max_len}")
    protected = seq.protected_mask.astype(bool)
    schedule = pruning_schedule(n0, cfg.layers, cfg.alpha,
                                protected_count=int(protected.sum()))
    pr_params = cfg.pagerank_params()

    positions = np.arange(n0)
    hidden = (weights["token_embedding"][seq.ids]
              + weights["position_embedding"][positions])

    trace = ForwardTrace(p=0.0, attention=[], pagerank_u=[],
                         redistribution_r=[], active=ActiveSet(),
                         retention_depth=np.zeros(n0, dtype=np.int64))
    layer_caches: list[dict] = []
    keep_indices: list[np.ndarray | None] = []
    positions_per_layer: list[np.ndarray] = []
    layer_weights_list = [
        {k[len(f"layer{l}."):]: v for k, v in weights.items()
         if k.startswith(f"layer{l}.")}
        for l in range(cfg.layers)
    ]

    for l in range(cfg.layers):
        lw = layer_weights_list[l]
        hidden, a_avg, cache = attention_layer(hidden, lw, keep_cache=keep_tape)
        if keep_tape:
            layer_caches.append(cache)
        positions_per_layer.append(positions)

        next_count = schedule[l + 1] if l + 1 < cfg.layers else len(positions)
        needs_pruning = next_count < len(positions)
        u_scores: PageRankScores | None = None
        r = None
        if needs_pruning or want_trace:
            if importance is None:
                u_scores, r = word_importance(a_avg, pr_params)
            else:
                u_scores, r = importance(a_avg, hidden)

        if want_trace:
            trace.attention.append(a_avg)
            trace.pagerank_u.append(None if u_scores is None else u_scores.u)
            trace.redistribution_r.append(r)
            trace.active.positions.append(positions)
            trace.active.importance.append(r)
        trace.retention_depth[positions] += 1

        if needs_pruning:
            active_protected = protected[positions]
            keep = prune_tokens(positions, r, next_count, active_protected)
            positions = positions[keep]
            hidden = hidden[keep]
        else:
            keep = None
        if keep_tape:
            keep_indices.append(keep)

    cls_hidden = hidden[0]  # position 0 is protected, so row 0 is [CLS]
    logit = float(cls_hidden @ weights["classifier_w"]
                  + weights["classifier_b"][0])
    if not math.isfinite(logit):
        raise NonFinite("classifier produced a non-finite logit")
    trace.p = _sigmoid(logit)

    if keep_tape:
        tape = Tape(ids=seq.ids, layer_caches=layer_caches,
                    keep_indices=keep_indices,
                    positions_per_layer=positions_per_layer,
                    final_hidden=hidden, logit=logit, p=trace.p)
        return trace, tape
    return trace


def backward(tape: Tape, weights: ModelWeights, cfg: ModelConfig,
             d_logit: float) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with respect to every weight tensor.

    ``d_logit`` is dLoss/dlogit (for sigmoid + binary cross-entropy this is
    p - y, divided by the batch size when averaging). Pruning decisions are
    constants of the backward pass: gradients flow only through retained
    positions.
    """
    grads = weights.zeros_like()
    grads["classifier_w"] += d_logit * tape.final_hidden[0]
    grads["classifier_b"][0] += d_logit

    d_hidden = np.zeros_like(tape.final_hidden)
    d_hidden[0] = d_logit * weights["classifier_w"]

    for l in range(cfg.layers - 1, -1, -1):
        keep = tape.keep_indices[l]
        if keep is not None:
            d_full = np.zeros((len(tape.positions_per_layer[l]), cfg.width))
            d_full[keep] = d_hidden
            d_hidden = d_full
        lw = {k[len(f"layer{l}."):]: v for k, v in weights.items()
              if k.startswith(f"layer{l}.")}
        d_hidden, layer_grads = _attention_layer_backward(
            d_hidden, lw, tape.layer_caches[l])
        for name, g in layer_grads.items():
            grads[f"layer{l}.{name}"] += g

    np.add.at(grads["token_embedding"], tape.ids, d_hidden)
    np.add.at(grads["position_embedding"], tape.positions_per_layer[0], d_hidden)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFinite(f"gradient for {name} is non-finite")
    return grads
