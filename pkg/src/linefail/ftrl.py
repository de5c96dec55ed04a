"""FTRL-Proximal online logistic regression over a hashed feature space.

Binary indicator features only: each present categorical cell becomes the
token "column=value", hashed into a fixed table of 2**hash_bits cells.
Per-coordinate accumulators (z, n) give the closed-form lazy weight

    w_i = 0                                   if |z_i| <= l1
    w_i = -(z_i - sign(z_i) * l1)
          / ((beta + sqrt(n_i)) / alpha + l2)  otherwise

and each observed example updates, with g = p - y on every active index,

    sigma = (sqrt(n_i + g^2) - sqrt(n_i)) / alpha
    z_i  += g - sigma * w_i
    n_i  += g^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import LinefailError, MissingLabel
from .ingest import SparseRow, fnv1a64

MODEL_MAGIC = "linefail-ftrl-v1"
BIAS_INDEX = 0


@dataclass(frozen=True)
class FtrlConfig:
    """Learner hyperparameters; defaults favour heavy regularization."""

    alpha: float = 0.05
    beta: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    hash_bits: int = 28
    epochs: int = 1

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.beta < 0 or self.l1 < 0 or self.l2 < 0:
            raise ValueError("beta, l1, l2 must be >= 0")
        if not 8 <= self.hash_bits <= 30:
            raise ValueError("hash_bits must lie in [8, 30]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @property
    def n_buckets(self) -> int:
        return 1 << self.hash_bits


def hash_feature(column: str, value: str, n_buckets: int) -> int:
    """FNV-1a-64 of "column=value" masked into [0, n_buckets)."""
    if n_buckets <= 0 or n_buckets & (n_buckets - 1):
        raise ValueError("n_buckets must be a power of two")
    return fnv1a64(f"{column}={value}".encode()) & (n_buckets - 1)


def token_index(column: str, value: str, n_buckets: int) -> int:
    """Hashed index in [1, n_buckets); index 0 is reserved for the bias."""
    return 1 + fnv1a64(f"{column}={value}".encode()) % (n_buckets - 1)


def featurize_pairs(pairs: Iterable[tuple[str, str]], n_buckets: int) -> list[int]:
    """Bias index plus one hashed index per (column, value) pair, sorted
    and deduplicated (colliding pairs share a weight)."""
    indices = {BIAS_INDEX}
    for column, value in pairs:
        indices.add(token_index(column, value, n_buckets))
    return sorted(indices)


def featurize(row: SparseRow, n_buckets: int) -> list[int]:
    """Feature vector of a row: its categorical cells, hashed."""
    return featurize_pairs(((fid.raw_name, value) for fid, value in row.categorical), n_buckets)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


class FtrlModel:
    """Mutable learner state: sparse (z, n) maps over the hashed space."""

    def __init__(self, config: FtrlConfig):
        self.config = config
        self.z: dict[int, float] = {}
        self.n: dict[int, float] = {}

    def weight(self, index: int) -> float:
        z = self.z.get(index, 0.0)
        if abs(z) <= self.config.l1:
            return 0.0
        n = self.n.get(index, 0.0)
        numerator = z - math.copysign(self.config.l1, z)
        return -numerator / ((self.config.beta + math.sqrt(n)) / self.config.alpha + self.config.l2)

    def predict(self, indices: Sequence[int]) -> float:
        """Probability from the current lazy weights; in (0, 1)."""
        return _sigmoid(sum(self.weight(i) for i in indices))

    def step(self, indices: Sequence[int], y: int) -> float:
        """Predict, then fold the example into (z, n); returns the
        pre-update probability (progressive validation)."""
        cfg = self.config
        weights = [self.weight(i) for i in indices]
        p = _sigmoid(sum(weights))
        g = p - y
        gg = g * g
        for i, w in zip(indices, weights):
            n_old = self.n.get(i, 0.0)
            sigma = (math.sqrt(n_old + gg) - math.sqrt(n_old)) / cfg.alpha
            self.z[i] = self.z.get(i, 0.0) + g - sigma * w
            self.n[i] = n_old + gg
        return p

    def update(self, indices: Sequence[int], y: int) -> None:
        self.step(indices, y)


def _clipped_log_loss(p: float, y: int) -> float:
    p = min(max(p, 1e-15), 1.0 - 1e-15)
    return -math.log(p) if y == 1 else -math.log1p(-p)


def train_indexed(
    examples: Iterable[tuple[Sequence[int], int]],
    config: FtrlConfig,
) -> tuple[FtrlModel, Optional[float]]:
    """Train on pre-hashed (indices, label) pairs in stream order.

    Returns the final state and the running mean log-loss of the
    pre-update predictions (None for an empty stream). Multi-epoch
    training materializes the stream once.
    """
    model = FtrlModel(config)
    loss_sum = 0.0
    count = 0
    if config.epochs == 1:
        for indices, y in examples:
            loss_sum += _clipped_log_loss(model.step(indices, y), y)
            count += 1
    else:
        cached = list(examples)
        for _ in range(config.epochs):
            for indices, y in cached:
                loss_sum += _clipped_log_loss(model.step(indices, y), y)
                count += 1
    return model, (loss_sum / count if count else None)


def train_stream(
    rows: Iterable[SparseRow],
    config: FtrlConfig,
    fold_filter: Optional[Callable[[int], bool]] = None,
) -> tuple[FtrlModel, Optional[float]]:
    """Online training over a labeled row stream, one predict+update per
    row per epoch; rows failing ``fold_filter`` are skipped."""

    def examples() -> Iterator[tuple[list[int], int]]:
        for row in rows:
            if fold_filter is not None and not fold_filter(row.id):
                continue
            if row.label is None:
                raise MissingLabel(f"row {row.id} has no label")
            yield featurize(row, config.n_buckets), row.label

    return train_indexed(examples(), config)


def save_model(model: FtrlModel, path: str | Path) -> None:
    """Versioned text format: header, then one (index, z, n) line per
    touched coordinate."""
    cfg = model.config
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MODEL_MAGIC}\n")
        fh.write(f"hash_bits={cfg.hash_bits}\n")
        fh.write(f"alpha={cfg.alpha!r}\n")
        fh.write(f"beta={cfg.beta!r}\n")
        fh.write(f"lambda1={cfg.l1!r}\n")
        fh.write(f"lambda2={cfg.l2!r}\n")
        fh.write(f"coordinates={len(model.z)}\n")
        for index in sorted(model.z):
            fh.write(f"{index} {model.z[index]!r} {model.n.get(index, 0.0)!r}\n")


def load_model(path: str | Path) -> FtrlModel:
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != MODEL_MAGIC:
            raise LinefailError(f"{path}: not a {MODEL_MAGIC} file (got {magic!r})")
        header: dict[str, str] = {}
        for _ in range(6):
            key, _, value = fh.readline().strip().partition("=")
            header[key] = value
        config = FtrlConfig(
            alpha=float(header["alpha"]),
            beta=float(header["beta"]),
            l1=float(header["lambda1"]),
            l2=float(header["lambda2"]),
            hash_bits=int(header["hash_bits"]),
        )
        model = FtrlModel(config)
        for _ in range(int(header["coordinates"])):
            index_s, z_s, n_s = fh.readline().split()
            model.z[int(index_s)] = float(z_s)
            model.n[int(index_s)] = float(n_s)
    return model


class FtrlClassifier(BaseEstimator, ClassifierMixin):
    """Scikit-learn style wrapper over the online learner.

    X is a sequence of mappings {column name: category string}; every
    present pair becomes one hashed binary indicator.
    """

    def __init__(
        self,
        alpha: float = 0.05,
        beta: float = 1.0,
        l1: float = 1.0,
        l2: float = 1.0,
        hash_bits: int = 28,
        epochs: int = 1,
    ):
        self.alpha = alpha
        self.beta = beta
        self.l1 = l1
        self.l2 = l2
        self.hash_bits = hash_bits
        self.epochs = epochs

    def _config(self) -> FtrlConfig:
        return FtrlConfig(
            alpha=self.alpha,
            beta=self.beta,
            l1=self.l1,
            l2=self.l2,
            hash_bits=self.hash_bits,
            epochs=self.epochs,
        )

    def fit(self, X, y):
        config = self._config()
        examples = [
            (featurize_pairs(mapping.items(), config.n_buckets), int(label))
            for mapping, label in zip(X, y)
        ]
        self.model_, self.train_log_loss_ = train_indexed(examples, config)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> np.ndarray:
        model = self.model_
        n_buckets = model.config.n_buckets
        p = np.array(
            [model.predict(featurize_pairs(mapping.items(), n_buckets)) for mapping in X]
        )
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
