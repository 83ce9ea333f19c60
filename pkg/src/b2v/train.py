"""Experiment harness: manifests, splits, training loop, metrics, sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import gcn
from .features import DEFAULT_MIN_COUNT, FeatureMatrix, Vocabulary, build_vocab, featurize
from .gcn import GcnConfig, GcnModel, GraphBatch, NormalizedAdjacency, batch_graphs
from .graph import ProgramGraph, build_graph, load_program


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ManifestEntry:
    path: str
    label: str
    group: str = ""
    flag: str = ""


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    task_mode: str = "multiclass"  # or per_group_binary


def read_manifest(path) -> Manifest:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["path", "label", "group", "flag"]
        if reader.fieldnames != expected:
            raise ValueError(f"manifest header must be {expected}, got {reader.fieldnames}")
        for row in reader:
            entries.append(ManifestEntry(
                path=row["path"], label=row["label"],
                group=row["group"] or "", flag=row["flag"] or "",
            ))
    mode = "per_group_binary" if any(e.group for e in entries) else "multiclass"
    return Manifest(entries=entries, task_mode=mode)


def write_manifest(entries: list[ManifestEntry], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "group", "flag"])
        for e in entries:
            writer.writerow([e.path, e.label, e.group, e.flag])


def split(entries: list, seed: int) -> tuple[list, list, list]:
    """Deterministic 70:15:15 split; rounding spills into the train side."""
    n = len(entries)
    if n < 10:
        raise ValueError(f"need at least 10 entries to split, got {n}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    n_val = int(0.15 * n)
    n_test = int(0.15 * n)
    n_train = n - n_val - n_test
    train = [entries[i] for i in order[:n_train]]
    val = [entries[i] for i in order[n_train : n_train + n_val]]
    test = [entries[i] for i in order[n_train + n_val :]]
    return train, val, test


# ---------------------------------------------------------------------------
# Graph loading (with optional on-disk cache)

_CACHE_TAG = "b2v-graph-v1"


def _load_one(path: str) -> ProgramGraph:
    cache_dir = os.environ.get("B2V_CACHE_DIR")
    if cache_dir:
        with open(path, "rb") as fh:
            digest = hashlib.sha256(_CACHE_TAG.encode() + fh.read()).hexdigest()
        cpath = Path(cache_dir) / f"{digest}.json"
        if cpath.exists():
            obj = json.loads(cpath.read_text())
            return ProgramGraph(
                nodes=[tuple(x) for x in obj["nodes"]],
                edges=[tuple(x) for x in obj["edges"]],
                block_spans={int(k): tuple(v) for k, v in obj["spans"].items()},
                kinds=obj["kinds"],
            )
    graph = build_graph(load_program(path))
    if cache_dir:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        cpath.write_text(json.dumps({
            "nodes": [list(x) for x in graph.nodes],
            "edges": [list(x) for x in graph.edges],
            "spans": {str(k): list(v) for k, v in graph.block_spans.items()},
            "kinds": graph.kinds,
        }))
    return graph


def load_graphs(paths: list[str], jobs: int = 1) -> list[ProgramGraph]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_load_one, paths))
    return [_load_one(p) for p in paths]


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    layer_sizes: tuple[int, ...] = (128, 128, 64)
    mlp_hidden: int = 64
    # validation-tuned defaults: directed normalization and a 3e-3 step
    learning_rate: float = 3e-3
    optimizer: str = "adam"
    adjacency: str = "row"
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    min_count: int = DEFAULT_MIN_COUNT
    runs: int = 5
    seed: int = 0
    jobs: int = 1
    dtype: str = "float64"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class GraphSample:
    features: FeatureMatrix
    adjacency: NormalizedAdjacency
    label: int


def _prepare(graphs, adjacencies, labels, vocab) -> list[GraphSample]:
    return [
        GraphSample(featurize(g, vocab), adj, y)
        for g, adj, y in zip(graphs, adjacencies, labels)
    ]


def _batches(samples: list[GraphSample], size: int, order=None):
    idx = order if order is not None else range(len(samples))
    chunk: list[GraphSample] = []
    for i in idx:
        chunk.append(samples[i])
        if len(chunk) == size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def _to_batch(chunk: list[GraphSample]) -> GraphBatch:
    return batch_graphs(
        [s.features for s in chunk],
        [s.adjacency for s in chunk],
        [s.label for s in chunk],
    )


def predict(model: GcnModel, samples: list[GraphSample], batch_size: int = 32) -> np.ndarray:
    preds = []
    for chunk in _batches(samples, batch_size):
        _, probs = gcn.forward(model, _to_batch(chunk))
        preds.append(np.argmax(probs, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(model: GcnModel, samples: list[GraphSample],
             num_classes: int, batch_size: int = 32) -> tuple[float, np.ndarray]:
    """Accuracy and a C x C confusion matrix (rows: true, cols: predicted)."""
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    preds = predict(model, samples, batch_size)
    for sample, pred in zip(samples, preds):
        confusion[sample.label, pred] += 1
    correct = int(np.trace(confusion))
    total = len(samples)
    return (correct / total if total else 0.0), confusion


def train_model(train_samples: list[GraphSample], val_samples: list[GraphSample],
                config: TrainConfig, num_classes: int, input_dim: int,
                seed: int | None = None,
                max_epochs: int | None = None) -> tuple[GcnModel, int, list[dict]]:
    """Early-stopped training; returns the best-on-validation model."""
    seed = config.seed if seed is None else seed
    max_epochs = config.max_epochs if max_epochs is None else max_epochs
    model = GcnModel(GcnConfig(
        input_dim=input_dim, num_classes=num_classes,
        layer_sizes=config.layer_sizes, mlp_hidden=config.mlp_hidden,
        adjacency=config.adjacency, learning_rate=config.learning_rate,
        optimizer=config.optimizer, seed=seed, dtype=config.dtype,
    ))
    opt = gcn.make_optimizer(model)
    rng = random.Random(seed)
    best_acc = -1.0
    best_epoch = 0
    best_params = model.clone_params()
    history = []
    since_best = 0

    for epoch in range(1, max_epochs + 1):
        order = list(range(len(train_samples)))
        rng.shuffle(order)
        epoch_loss = 0.0
        batches = 0
        for chunk in _batches(train_samples, config.batch_size, order):
            batch = _to_batch(chunk)
            loss, _, cache = gcn.forward(model, batch, want_cache=True)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}")
            grads = gcn.backward(model, batch, cache)
            gcn.step(model, grads, opt)
            epoch_loss += loss
            batches += 1
        val_acc, _ = evaluate(model, val_samples, num_classes, config.batch_size)
        history.append({"epoch": epoch, "train_loss": epoch_loss / max(batches, 1),
                        "val_accuracy": val_acc})
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = model.clone_params()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    model.set_params(best_params)
    return model, best_epoch, history


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class ExperimentResult:
    accuracies: list[float]
    mean_accuracy: float
    std_accuracy: float
    epochs: list[int]
    confusion: list[list[int]]
    classes: list[str]
    recalls: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _index_labels(labels: list[str]) -> list[str]:
    return sorted(set(labels))


def _aggregate(per_run_acc, per_run_epochs, confusion, classes) -> ExperimentResult:
    acc = [float(a) for a in per_run_acc]
    recalls = {}
    conf = np.asarray(confusion)
    for i, cls in enumerate(classes):
        total = conf[i].sum()
        recalls[cls] = float(conf[i, i] / total) if total else 0.0
    return ExperimentResult(
        accuracies=acc,
        mean_accuracy=float(np.mean(acc)),
        std_accuracy=float(np.std(acc)),
        epochs=list(per_run_epochs),
        confusion=conf.tolist(),
        classes=classes,
        recalls=recalls,
    )


def _experiment_once(graphs, adjacencies, labels, classes, config: TrainConfig,
                     run_seed: int):
    indexed = list(range(len(graphs)))
    train_idx, val_idx, test_idx = split(indexed, run_seed)
    vocab = build_vocab((graphs[i] for i in train_idx), config.min_count)

    def subset(idx):
        return _prepare([graphs[i] for i in idx], [adjacencies[i] for i in idx],
                        [labels[i] for i in idx], vocab)

    train_s, val_s, test_s = subset(train_idx), subset(val_idx), subset(test_idx)
    model, epochs, _ = train_model(train_s, val_s, config, len(classes),
                                   vocab.size, seed=run_seed)
    acc, confusion = evaluate(model, test_s, len(classes), config.batch_size)
    return model, vocab, acc, confusion, epochs


def run_experiment(manifest: Manifest, config: TrainConfig,
                   out_dir=None) -> dict:
    """Multi-seed experiment; per-group mode trains one model per group."""
    if manifest.task_mode == "per_group_binary":
        return _run_per_group(manifest, config, out_dir)

    entries = manifest.entries
    classes = _index_labels([e.label for e in entries])
    class_index = {c: i for i, c in enumerate(classes)}
    graphs = load_graphs([e.path for e in entries], config.jobs)
    adjacencies = [gcn.normalize_adjacency(g.edges, g.n, config.adjacency) for g in graphs]
    labels = [class_index[e.label] for e in entries]

    run_acc, run_epochs = [], []
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for run in range(config.runs):
        run_seed = config.seed + run
        model, vocab, acc, conf, epochs = _experiment_once(
            graphs, adjacencies, labels, classes, config, run_seed)
        run_acc.append(acc)
        run_epochs.append(epochs)
        confusion += conf
        if out_dir is not None:
            _write_run_artifacts(out_dir, config, run_seed, model, vocab,
                                 acc, epochs, classes)
    result = _aggregate(run_acc, run_epochs, confusion, classes)
    return {"task": "multiclass", "result": result.to_dict()}


def _run_per_group(manifest: Manifest, config: TrainConfig, out_dir=None) -> dict:
    groups = sorted({e.group for e in manifest.entries if e.group})
    out = {}
    for group in groups:
        members = [e for e in manifest.entries if e.group == group]
        flags = {e.flag for e in members}
        if not flags <= {"good", "bad"}:
            raise ValueError(f"group {group}: flags must be good/bad, got {flags}")
        classes = ["good", "bad"]
        graphs = load_graphs([e.path for e in members], config.jobs)
        adjacencies = [gcn.normalize_adjacency(g.edges, g.n, config.adjacency)
                       for g in graphs]
        labels = [classes.index(e.flag) for e in members]
        run_acc, run_epochs = [], []
        confusion = np.zeros((2, 2), dtype=np.int64)
        for run in range(config.runs):
            run_seed = config.seed + run
            _, _, acc, conf, epochs = _experiment_once(
                graphs, adjacencies, labels, classes, config, run_seed)
            run_acc.append(acc)
            run_epochs.append(epochs)
            confusion += conf
        out[group] = _aggregate(run_acc, run_epochs, confusion, classes).to_dict()
    return {"task": "per_group_binary", "groups": out}


def _write_run_artifacts(out_dir, config: TrainConfig, run_seed: int,
                         model: GcnModel, vocab: Vocabulary, acc: float,
                         epochs: int, classes: list[str]):
    from .features import save_vocab

    run_dir = Path(out_dir) / f"{config.config_hash()}-seed{run_seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2))
    save_vocab(vocab, run_dir / "vocab.txt")
    gcn.save_checkpoint(model, run_dir / "model.ckpt",
                        vocab_hash=gcn.vocab_fingerprint(vocab.labels))
    (run_dir / "results.json").write_text(json.dumps({
        "seed": run_seed, "test_accuracy": acc, "epochs": epochs,
        "classes": classes,
    }, indent=2))


# ---------------------------------------------------------------------------
# Depth / width sweep


def _timed_pass(samples: list[GraphSample], config: TrainConfig,
                num_classes: int, input_dim: int) -> float:
    """Wall time for one optimization pass over (up to) 100 samples."""
    subset = samples[:100]
    if not subset:
        return 0.0
    scale = 100.0 / len(subset)
    model = GcnModel(GcnConfig(
        input_dim=input_dim, num_classes=num_classes,
        layer_sizes=config.layer_sizes, mlp_hidden=config.mlp_hidden,
        adjacency=config.adjacency, learning_rate=config.learning_rate,
        optimizer=config.optimizer, seed=config.seed, dtype=config.dtype,
    ))
    opt = gcn.make_optimizer(model)
    start = time.perf_counter()
    for chunk in _batches(subset, config.batch_size):
        batch = _to_batch(chunk)
        _, _, cache = gcn.forward(model, batch, want_cache=True)
        gcn.step(model, gcn.backward(model, batch, cache), opt)
    return (time.perf_counter() - start) * scale


def sweep(manifest: Manifest, config: TrainConfig,
          depths=range(1, 9), widths=(32, 64, 128, 256),
          sweep_epochs: int = 5, timing_rounds: int = 5) -> list[dict]:
    """Depth sweep at width 64 and width sweep at depth 3.

    Each configuration reports validation accuracy after a short training
    run plus the wall-clock time of one pass over 100 training samples.
    Timing runs in interleaved rounds (every configuration once per round,
    minimum kept) so ambient load cannot skew one configuration alone.
    """
    entries = manifest.entries
    classes = _index_labels([e.label for e in entries])
    class_index = {c: i for i, c in enumerate(classes)}
    graphs = load_graphs([e.path for e in entries], config.jobs)
    adjacencies = [gcn.normalize_adjacency(g.edges, g.n, config.adjacency) for g in graphs]
    labels = [class_index[e.label] for e in entries]
    indexed = list(range(len(graphs)))
    train_idx, val_idx, _ = split(indexed, config.seed)
    vocab = build_vocab((graphs[i] for i in train_idx), config.min_count)

    def subset(idx):
        return _prepare([graphs[i] for i in idx], [adjacencies[i] for i in idx],
                        [labels[i] for i in idx], vocab)

    train_s, val_s = subset(train_idx), subset(val_idx)

    rows = []
    configs = [("depth", d, (64,) * d) for d in depths]
    configs += [("width", w, (w, w, w)) for w in widths]
    variants = []
    for kind, value, sizes in configs:
        variant = TrainConfig(**{**config.to_dict(),
                                 "layer_sizes": tuple(sizes)})
        variants.append(variant)
        model, _, _ = train_model(train_s, val_s, variant, len(classes),
                                  vocab.size, seed=config.seed,
                                  max_epochs=sweep_epochs)
        val_acc, _ = evaluate(model, val_s, len(classes), config.batch_size)
        rows.append({"kind": kind, "value": value,
                     "layer_sizes": list(sizes),
                     "val_accuracy": val_acc,
                     "seconds_per_100": float("inf")})
    for _ in range(timing_rounds):
        for row, variant in zip(rows, variants):
            seconds = _timed_pass(train_s, variant, len(classes), vocab.size)
            row["seconds_per_100"] = min(row["seconds_per_100"], seconds)
    return rows
