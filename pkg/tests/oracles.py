"""Independent oracles used across the test suite.

These are deliberately written in a different style from the library
(scalar loops, no shared helpers) so they can serve as second opinions.
"""

import math

import numpy as np
from scipy.special import erf


def brute_force_pagerank(matrix, d, iterations):
    """Direct scalar-loop power iteration; dangling columns uniform."""
    n = len(matrix)
    a = [[float(matrix[i][j]) for j in range(n)] for i in range(n)]
    for j in range(n):
        col = sum(a[i][j] for i in range(n))
        if col == 0.0:
            for i in range(n):
                a[i][j] = 1.0 / n
    u = [1.0 / n] * n
    for _ in range(iterations):
        new_u = []
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += a[i][j] * u[j]
            new_u.append(d * acc + (1.0 - d) / n)
        u = new_u
    return u


def _ref_layer_norm(x, gain, bias, eps=1e-5):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        row = x[i]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        out[i] = (row - mu) / math.sqrt(var + eps) * gain + bias
    return out


def reference_encoder_probability(seq_ids, weights, cfg):
    """Plain post-norm multi-head encoder forward, no pruning anywhere."""
    e, h_count = cfg.width, cfg.heads
    e_head = e // h_count
    n = len(seq_ids)
    h = np.array([weights["token_embedding"][int(t)]
                  + weights["position_embedding"][pos]
                  for pos, t in enumerate(seq_ids)])
    for l in range(cfg.layers):
        pref = f"layer{l}."
        head_outputs = []
        for k in range(h_count):
            q = h @ weights[pref + "wq"][k]
            key = h @ weights[pref + "wk"][k]
            v = h @ weights[pref + "wv"][k]
            att = np.zeros((n, n))
            for i in range(n):
                row = np.array([float(q[i] @ key[j]) for j in range(n)])
                row /= math.sqrt(e_head)
                row = np.exp(row - row.max())
                att[i] = row / row.sum()
            head_outputs.append(att @ v)
        concat = np.concatenate(head_outputs, axis=1)
        x = h + concat @ weights[pref + "wo"]
        h1 = _ref_layer_norm(x, weights[pref + "ln1_gain"],
                             weights[pref + "ln1_bias"])
        z = h1 @ weights[pref + "ff_w1"] + weights[pref + "ff_b1"]
        g = 0.5 * z * (1.0 + erf(z / math.sqrt(2.0)))
        x2 = h1 + g @ weights[pref + "ff_w2"] + weights[pref + "ff_b2"]
        h = _ref_layer_norm(x2, weights[pref + "ln2_gain"],
                            weights[pref + "ln2_bias"])
    logit = float(h[0] @ weights["classifier_w"] + weights["classifier_b"][0])
    return 1.0 / (1.0 + math.exp(-logit))


def finite_difference_grads(loss_fn, weights, h=1e-4):
    """Central differences of a scalar loss over every tensor entry.

    ``loss_fn`` re-evaluates the loss from the (mutated) weights; 64-bit
    accumulation throughout.
    """
    numeric = {}
    for name, arr in weights.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            loss_plus = loss_fn()
            arr[idx] = orig - h
            loss_minus = loss_fn()
            arr[idx] = orig
            g[idx] = (loss_plus - loss_minus) / (2.0 * h)
        numeric[name] = g
    return numeric


def max_relative_error(analytic, numeric, floor=1e-8):
    """Worst rel. error over entries where either magnitude exceeds floor."""
    worst = 0.0
    for name, a in analytic.items():
        b = numeric[name]
        mask = (np.abs(a) > floor) | (np.abs(b) > floor)
        if mask.any():
            denom = np.maximum(np.abs(a), np.abs(b))[mask]
            rel = (np.abs(a - b)[mask] / denom).max()
            worst = max(worst, float(rel))
    return worst
