"""Bag-of-words over rendered IR lines with a linear softmax classifier.

Each statement renders to one line; a program is the multiset of its lines.
The vocabulary comes from the training split with frequency thresholding;
out-of-vocabulary lines are dropped. The classifier is an L2-regularized
multinomial logistic regression trained by full-batch gradient descent
(convex, deterministic), standing in for a kernel SVM at this scale; the
regularization strength is grid-searched on the validation split.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .ir import render
from .lifter import Program
from .train import Manifest, TrainConfig, _aggregate, split

DEFAULT_L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1)


def program_lines(program: Program) -> list[str]:
    lines = []
    for addr in sorted(program.cfg.blocks):
        lines.extend(render(s) for s in program.cfg.blocks[addr].stmts)
    return lines


@dataclass
class BowVocab:
    tokens: list[str]
    index: dict[str, int]
    min_count: int

    @property
    def size(self) -> int:
        return len(self.tokens)


def bow_vocab(programs, min_count: int = 5) -> BowVocab:
    counts: Counter[str] = Counter()
    for program in programs:
        counts.update(program_lines(program))
    kept = sorted(tok for tok, c in counts.items() if c >= min_count)
    return BowVocab(tokens=kept, index={t: i for i, t in enumerate(kept)},
                    min_count=min_count)


def bow_featurize(program: Program, vocab: BowVocab) -> np.ndarray:
    vec = np.zeros(vocab.size)
    for line in program_lines(program):
        col = vocab.index.get(line)
        if col is not None:
            vec[col] += 1.0
    return vec


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return x / norms


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class SoftmaxClassifier:
    w: np.ndarray
    b: np.ndarray
    l2: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(_normalize_rows(x) @ self.w + self.b, axis=1)


def _fit_softmax(x: np.ndarray, y: np.ndarray, num_classes: int, l2: float,
                 lr: float = 1.0, iters: int = 400) -> SoftmaxClassifier:
    xn = _normalize_rows(x)
    n, v = xn.shape
    w = np.zeros((v, num_classes))
    b = np.zeros(num_classes)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(iters):
        probs = _softmax(xn @ w + b)
        diff = (probs - onehot) / n
        gw = xn.T @ diff + l2 * w
        gb = diff.sum(axis=0)
        w -= lr * gw
        b -= lr * gb
    return SoftmaxClassifier(w=w, b=b, l2=l2)


def bow_train(train_x, train_y, val_x, val_y, num_classes: int,
              l2_grid=DEFAULT_L2_GRID) -> SoftmaxClassifier:
    """Fit at each grid point; keep the best validation accuracy."""
    best = None
    best_acc = -1.0
    for l2 in l2_grid:
        clf = _fit_softmax(train_x, train_y, num_classes, l2)
        acc = bow_eval(clf, val_x, val_y)
        if acc > best_acc:
            best_acc = acc
            best = clf
    return best


def bow_eval(clf: SoftmaxClassifier, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    return float((clf.predict(x) == np.asarray(y)).mean())


def run_bow_experiment(manifest: Manifest, config: TrainConfig,
                       load_program_fn=None) -> dict:
    """Same manifest, same seeds, same splits as the graph model."""
    from .graph import load_program

    load_program_fn = load_program_fn or load_program
    entries = manifest.entries
    classes = sorted({e.label for e in entries})
    class_index = {c: i for i, c in enumerate(classes)}
    programs = [load_program_fn(e.path) for e in entries]
    labels = [class_index[e.label] for e in entries]

    run_acc = []
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for run in range(config.runs):
        run_seed = config.seed + run
        indexed = list(range(len(programs)))
        train_idx, val_idx, test_idx = split(indexed, run_seed)
        vocab = bow_vocab((programs[i] for i in train_idx), config.min_count)

        def matrix(idx):
            if not idx:
                return np.zeros((0, vocab.size)), np.zeros(0, dtype=np.int64)
            x = np.stack([bow_featurize(programs[i], vocab) for i in idx])
            y = np.asarray([labels[i] for i in idx])
            return x, y

        tx, ty = matrix(train_idx)
        vx, vy = matrix(val_idx)
        sx, sy = matrix(test_idx)
        clf = bow_train(tx, ty, vx, vy, len(classes))
        preds = clf.predict(sx)
        run_acc.append(float((preds == sy).mean()))
        for true, pred in zip(sy, preds):
            confusion[true, pred] += 1
    result = _aggregate(run_acc, [0] * config.runs, confusion, classes)
    return {"task": "multiclass", "result": result.to_dict(),
            "note": "linear softmax classifier in place of a kernel SVM"}
