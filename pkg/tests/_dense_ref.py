"""Independent dense-matrix reference for the graph network math.

Deliberately written with plain numpy loops and dense matrices straight
from the layer definition H' = ReLU(A_hat H W), so it shares no code with
the package implementation it is used to check.
"""

import numpy as np


def dense_normalized(edges, n, mode):
    a = np.zeros((n, n))
    for s, d in edges:
        a[s, d] = 1.0
    if mode == "symmetric":
        a = np.maximum(a, a.T)
    a = np.minimum(a + np.eye(n), 1.0)
    deg = a.sum(axis=1)
    if mode == "symmetric":
        scale = np.where(deg > 0, deg ** -0.5, 0.0)
        return np.diag(scale) @ a @ np.diag(scale)
    inv = np.where(deg > 0, 1.0 / deg, 0.0)
    return np.diag(inv) @ a


def dense_forward(x, edges, membership, num_graphs, params, num_layers, mode):
    """Per-graph class probabilities via dense matrix products only."""
    n = x.shape[0]
    a_hat = dense_normalized(edges, n, mode)
    h = x
    for i in range(num_layers):
        h = a_hat @ h @ params[f"conv{i}"]
        h = np.where(h > 0, h, 0.0)
    pooled = np.zeros((num_graphs, h.shape[1]))
    for node in range(n):
        pooled[membership[node]] += h[node]
    hidden = pooled @ params["w1"] + params["b1"]
    hidden = np.where(hidden > 0, hidden, 0.0)
    logits = hidden @ params["w2"] + params["b2"]
    probs = np.zeros_like(logits)
    for g in range(num_graphs):
        row = logits[g] - logits[g].max()
        e = np.exp(row)
        probs[g] = e / e.sum()
    return probs


def dense_loss(x, edges, membership, num_graphs, params, num_layers, mode, labels):
    probs = dense_forward(x, edges, membership, num_graphs, params, num_layers, mode)
    total = 0.0
    for g, label in enumerate(labels):
        total += -np.log(probs[g, label])
    return total / len(labels)
