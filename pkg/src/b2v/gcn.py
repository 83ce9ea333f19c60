"""Graph convolution network with exact analytic gradients, from scratch.

The propagation rule per layer is H' = ReLU(A_hat @ H @ W) where A_hat is
the re-normalized adjacency with self-loops. Two normalizations are
provided: `symmetric` (default) symmetrizes the directed edges and applies
D^{-1/2} (A + I) D^{-1/2}; `row` keeps edge direction and divides each row
of A + I by its out-degree-plus-one. Node features enter as one-hot rows,
exploited as a row gather of the first weight matrix. Graph readout is a
plain sum over node features, followed by a two-layer perceptron and a
numerically stable softmax trained with mean cross-entropy.

Everything is numpy/scipy.sparse double precision by default; training is
deterministic for a fixed seed on a single thread.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp


@dataclass
class NormalizedAdjacency:
    mat: sp.csr_matrix
    mat_t: sp.csr_matrix
    mode: str
    n: int


def normalize_adjacency(edges, n: int, mode: str = "symmetric") -> NormalizedAdjacency:
    """Self-loop-augmented, degree-normalized adjacency in CSR form."""
    if mode not in ("symmetric", "row"):
        raise ValueError(f"unknown adjacency mode {mode!r}")
    rows = [s for s, _ in edges]
    cols = [d for _, d in edges]
    for v in rows + cols:
        if not 0 <= v < n:
            raise ValueError(f"edge endpoint {v} out of range for n={n}")
    if mode == "symmetric":
        pairs = set(zip(rows, cols)) | set(zip(cols, rows)) | {(i, i) for i in range(n)}
    else:
        pairs = set(zip(rows, cols)) | {(i, i) for i in range(n)}
    order = sorted(pairs)
    r = np.fromiter((p[0] for p in order), dtype=np.int64, count=len(order))
    c = np.fromiter((p[1] for p in order), dtype=np.int64, count=len(order))
    data = np.ones(len(order))
    a = sp.csr_matrix((data, (r, c)), shape=(n, n))
    deg = np.asarray(a.sum(axis=1)).ravel()
    if mode == "symmetric":
        scale = np.zeros(n)
        nz = deg > 0
        scale[nz] = deg[nz] ** -0.5
        a = sp.diags(scale) @ a @ sp.diags(scale)
    else:
        inv = np.zeros(n)
        nz = deg > 0
        inv[nz] = 1.0 / deg[nz]
        a = sp.diags(inv) @ a
    a = a.tocsr()
    a.sort_indices()
    at = a.T.tocsr()
    at.sort_indices()
    return NormalizedAdjacency(mat=a, mat_t=at, mode=mode, n=n)


# ---------------------------------------------------------------------------
# Elementary forward pieces


def gcn_layer_forward(h: np.ndarray, adj: NormalizedAdjacency, w: np.ndarray) -> np.ndarray:
    if h.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: H is {h.shape}, W is {w.shape}")
    return np.maximum(adj.mat @ (h @ w), 0.0)


def sum_pool(z: np.ndarray, membership: np.ndarray, num_graphs: int) -> np.ndarray:
    pooled = np.zeros((num_graphs, z.shape[1]), dtype=z.dtype)
    np.add.at(pooled, membership, z)
    return pooled


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_softmax_forward(pooled: np.ndarray, w1, b1, w2, b2) -> np.ndarray:
    hidden = np.maximum(pooled @ w1 + b1, 0.0)
    return softmax(hidden @ w2 + b2)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true classes."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.clip(picked, 1e-300, None)).mean())


# ---------------------------------------------------------------------------
# Model


@dataclass
class GcnConfig:
    input_dim: int
    num_classes: int
    layer_sizes: tuple[int, ...] = (128, 128, 64)
    mlp_hidden: int = 64
    adjacency: str = "symmetric"
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    dtype: str = "float64"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GcnConfig":
        d = dict(d)
        d["layer_sizes"] = tuple(d["layer_sizes"])
        return cls(**d)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class GcnModel:
    def __init__(self, config: GcnConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        dtype = np.dtype(config.dtype)
        sizes = (config.input_dim,) + tuple(config.layer_sizes)
        self.params: dict[str, np.ndarray] = {}
        for i in range(len(config.layer_sizes)):
            self.params[f"conv{i}"] = _glorot(rng, sizes[i], sizes[i + 1], dtype)
        k = sizes[-1]
        self.params["w1"] = _glorot(rng, k, config.mlp_hidden, dtype)
        self.params["b1"] = np.zeros(config.mlp_hidden, dtype=dtype)
        self.params["w2"] = _glorot(rng, config.mlp_hidden, config.num_classes, dtype)
        self.params["b2"] = np.zeros(config.num_classes, dtype=dtype)

    @property
    def num_layers(self) -> int:
        return len(self.config.layer_sizes)

    def clone_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]):
        for k in self.params:
            self.params[k] = params[k].copy()


# ---------------------------------------------------------------------------
# Batching


@dataclass
class GraphBatch:
    """Block-diagonal composition of featurized graphs."""

    cols: np.ndarray          # (sum n_i,) active one-hot column per node
    adj: NormalizedAdjacency  # block-diagonal normalized adjacency
    membership: np.ndarray    # (sum n_i,) graph index per node
    labels: np.ndarray        # (num_graphs,)
    num_graphs: int


def batch_graphs(features, adjacencies, labels) -> GraphBatch:
    """Stack per-graph features/adjacencies; no cross-graph edges appear."""
    mode = adjacencies[0].mode if adjacencies else "symmetric"
    for adj in adjacencies:
        if adj.mode != mode:
            raise ValueError("cannot batch adjacencies of different modes")
    cols = np.concatenate([f.cols for f in features]) if features else np.zeros(0, np.int64)
    membership = np.concatenate([
        np.full(f.n, i, dtype=np.int64) for i, f in enumerate(features)
    ]) if features else np.zeros(0, np.int64)
    mats = [adj.mat for adj in adjacencies]
    if mats:
        block = sp.block_diag(mats, format="csr")
    else:
        block = sp.csr_matrix((0, 0))
    block.sort_indices()
    block_t = block.T.tocsr()
    block_t.sort_indices()
    n = block.shape[0]
    return GraphBatch(
        cols=cols,
        adj=NormalizedAdjacency(mat=block, mat_t=block_t, mode=mode, n=n),
        membership=membership,
        labels=np.asarray(labels, dtype=np.int64),
        num_graphs=len(features),
    )


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass
class ForwardCache:
    pre: list[np.ndarray]          # pre-ReLU conv activations
    inputs: list[np.ndarray]       # A_hat @ H for each layer (gathered for l=0)
    pooled: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    probs: np.ndarray


def forward(model: GcnModel, batch: GraphBatch, want_cache: bool = False):
    """Mean loss and per-graph class probabilities for one batch."""
    p = model.params
    adj = batch.adj.mat
    pre_list = []
    input_list = []

    gathered = p["conv0"][batch.cols]          # X @ W0 without materializing X
    pre = adj @ gathered
    input_list.append(None)                    # layer 0 uses the one-hot gather
    pre_list.append(pre)
    h = np.maximum(pre, 0.0)
    for i in range(1, model.num_layers):
        m = adj @ h
        input_list.append(m)
        pre = m @ p[f"conv{i}"]
        pre_list.append(pre)
        h = np.maximum(pre, 0.0)

    pooled = sum_pool(h, batch.membership, batch.num_graphs)
    hidden_pre = pooled @ p["w1"] + p["b1"]
    hidden = np.maximum(hidden_pre, 0.0)
    probs = softmax(hidden @ p["w2"] + p["b2"])
    loss = cross_entropy(probs, batch.labels)
    if not want_cache:
        return loss, probs
    cache = ForwardCache(pre=pre_list, inputs=input_list, pooled=pooled,
                         hidden_pre=hidden_pre, hidden=hidden, probs=probs)
    return loss, probs, cache


def backward(model: GcnModel, batch: GraphBatch, cache: ForwardCache) -> dict[str, np.ndarray]:
    """Exact gradients of the mean cross-entropy for every parameter."""
    p = model.params
    b = batch.num_graphs
    grads: dict[str, np.ndarray] = {}

    dlogits = cache.probs.copy()
    dlogits[np.arange(b), batch.labels] -= 1.0
    dlogits /= b

    grads["w2"] = cache.hidden.T @ dlogits
    grads["b2"] = dlogits.sum(axis=0)
    dhidden = (dlogits @ p["w2"].T) * (cache.hidden_pre > 0)
    grads["w1"] = cache.pooled.T @ dhidden
    grads["b1"] = dhidden.sum(axis=0)
    dpooled = dhidden @ p["w1"].T

    dh = dpooled[batch.membership]
    adj_t = batch.adj.mat_t
    for i in range(model.num_layers - 1, -1, -1):
        dpre = dh * (cache.pre[i] > 0)
        if i > 0:
            grads[f"conv{i}"] = cache.inputs[i].T @ dpre
            dh = (adj_t @ dpre) @ p[f"conv{i}"].T
        else:
            t = adj_t @ dpre
            dw = np.zeros_like(p["conv0"])
            np.add.at(dw, batch.cols, t)
            grads["conv0"] = dw
    return grads


# ---------------------------------------------------------------------------
# Optimizers


@dataclass
class OptimizerState:
    kind: str
    lr: float
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def make_optimizer(model: GcnModel) -> OptimizerState:
    return OptimizerState(kind=model.config.optimizer, lr=model.config.learning_rate)


def step(model: GcnModel, grads: dict[str, np.ndarray], state: OptimizerState):
    """Apply one optimizer update in place."""
    if state.kind == "sgd":
        for name, g in grads.items():
            model.params[name] -= state.lr * g
        return
    if state.kind != "adam":
        raise ValueError(f"unknown optimizer {state.kind!r}")
    state.t += 1
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * (g * g)
        m_hat = state.m[name] / (1 - state.beta1 ** state.t)
        v_hat = state.v[name] / (1 - state.beta2 ** state.t)
        model.params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Checkpoints

_CKPT_VERSION = 1


def vocab_fingerprint(labels) -> str:
    digest = hashlib.sha256("\n".join(labels).encode("utf-8")).hexdigest()
    return digest[:16]


def save_checkpoint(model: GcnModel, path, vocab_hash: str = ""):
    """Single binary file: version byte, JSON header, raw little-endian tensors."""
    names = sorted(model.params)
    header = {
        "config": model.config.to_dict(),
        "vocab_hash": vocab_hash,
        "tensors": [
            {"name": n, "shape": list(model.params[n].shape)} for n in names
        ],
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(bytes([_CKPT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[GcnModel, dict]:
    with open(path, "rb") as fh:
        version = fh.read(1)
        if not version or version[0] != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version!r}")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
        config = GcnConfig.from_dict(header["config"])
        model = GcnModel(config)
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape)
            model.params[entry["name"]] = arr.astype(np.dtype(config.dtype)).copy()
    return model, header
