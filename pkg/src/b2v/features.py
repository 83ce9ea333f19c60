"""Node-label vocabulary with frequency thresholding and one-hot features."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graph import ProgramGraph

UNK = "UNK"
CONST = "CONST"
_HEX = re.compile(r"0x[0-9a-f]+")

DEFAULT_MIN_COUNT = 5


@dataclass
class Vocabulary:
    labels: list[str]
    min_count: int
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {label: i for i, label in enumerate(self.labels)}

    @property
    def size(self) -> int:
        return len(self.labels)

    def column(self, label: str) -> int:
        col = self.index.get(label)
        if col is not None:
            return col
        if _HEX.fullmatch(label):
            return self.index[CONST]
        return self.index[UNK]


@dataclass
class FeatureMatrix:
    """One-hot rows stored as one active column index per node."""

    n: int
    d: int
    cols: np.ndarray  # shape (n,), int64

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.d))
        out[np.arange(self.n), self.cols] = 1.0
        return out


def build_vocab(graphs: Iterable[ProgramGraph], min_count: int = DEFAULT_MIN_COUNT) -> Vocabulary:
    """Vocabulary over training-split graphs; infrequent labels fall away.

    Labels seen fewer than min_count times map to CONST when they look like
    hex literals and to UNK otherwise. Ordering is lexicographic, which is
    as good as any fixed ordering: the first layer of the model is
    invariant to column permutations.
    """
    counts: Counter[str] = Counter()
    total = 0
    for graph in graphs:
        total += 1
        counts.update(graph.labels())
    if total == 0:
        raise ValueError("cannot build a vocabulary from an empty training set")
    kept = {label for label, c in counts.items() if c >= min_count}
    kept.update((UNK, CONST))
    return Vocabulary(labels=sorted(kept), min_count=min_count)


def featurize(graph: ProgramGraph, vocab: Vocabulary) -> FeatureMatrix:
    cols = np.fromiter(
        (vocab.column(label) for label in graph.labels()),
        dtype=np.int64,
        count=graph.n,
    )
    return FeatureMatrix(n=graph.n, d=vocab.size, cols=cols)


def save_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label in vocab.labels:
            fh.write(label + "\n")


def load_vocab(path, min_count: int = DEFAULT_MIN_COUNT) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        labels = [line.rstrip("\n") for line in fh if line.strip()]
    return Vocabulary(labels=labels, min_count=min_count)
