"""Trainable hypothesis families: CART trees, bagged forests, softmax regression
and RBF kernel machines.

All four are used both as copies and as stand-in "original" classifiers.
Every model exposes ``predict(X) -> int array`` and ``to_dict()``; trained
models are never mutated afterwards.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CopyforgeError, DimensionError, as_points, make_rng

FORMAT_NAME = "copyforge-model"
FORMAT_VERSION = 1


class TrainingDivergence(CopyforgeError):
    """Raised when a loss or parameter becomes non-finite during training."""

    def __init__(self, msg, epoch=None):
        super().__init__(msg)
        self.epoch = epoch


def _check_training_data(X, y):
    X = as_points(X)
    y = np.asarray(y, dtype=np.int64).ravel()
    if X.shape[0] == 0:
        raise ValueError("training data is empty")
    if X.shape[0] != y.shape[0]:
        raise DimensionError(f"{X.shape[0]} points but {y.shape[0]} labels")
    if y.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    return X, y


# ---------------------------------------------------------------------------
# decision tree


@dataclass(frozen=True)
class TreeModel:
    """Binary axis-aligned tree stored as flat node arrays.

    ``feature[i] == -1`` marks a leaf whose class is ``value[i]``. Internal
    nodes send ``x[feature] <= threshold`` left.
    """

    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int | None = None

    kind = "tree"

    @property
    def node_count(self) -> int:
        return int(self.feature.size)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        X = as_points(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node].copy()
            r, n, f = rows[inner], node[inner], feat[inner]
            go_left = X[r, f] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def to_dict(self):
        return {
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            n_features=d["n_features"],
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.int64),
            max_depth=d.get("max_depth"),
        )


def _best_split(X, y, k, features):
    """Best Gini split of (X, y) over ``features``.

    Minimising weighted child Gini is the same as maximising
    sum(left_counts**2)/n_left + sum(right_counts**2)/n_right. Ties keep the
    earliest feature in ``features`` and then the smallest threshold.
    """
    n = y.size
    onehot = np.zeros((n, k))
    totals = np.bincount(y, minlength=k).astype(float)
    best_score, best_f, best_thr = -np.inf, -1, 0.0
    for f in features:
        xs = X[:, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cut = np.flatnonzero(xs[1:] > xs[:-1])
        if cut.size == 0:
            continue
        onehot[:] = 0.0
        onehot[np.arange(n), y[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[cut]
        right = totals - left
        n_left = (cut + 1).astype(float)
        score = (left**2).sum(axis=1) / n_left + (right**2).sum(axis=1) / (n - n_left)
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score, best_f = score[i], f
            best_thr = 0.5 * (xs[cut[i]] + xs[cut[i] + 1])
            # midpoint can round up onto the right-hand value for adjacent floats
            if best_thr >= xs[cut[i] + 1]:
                best_thr = xs[cut[i]]
    return best_f, best_thr


def _grow_tree(X, y, k, max_depth=None, max_features=None, rng=None) -> TreeModel:
    d = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yy = y[idx]
        counts = np.bincount(yy, minlength=k)
        value[node] = int(np.argmax(counts))  # majority, ties -> lowest class
        if counts[value[node]] == idx.size:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        XX = X[idx]
        if max_features is not None and max_features < d:
            feats = np.sort(rng.choice(d, size=max_features, replace=False))
            f, thr = _best_split(XX, yy, k, feats)
            if f < 0:
                f, thr = _best_split(XX, yy, k, range(d))
        else:
            f, thr = _best_split(XX, yy, k, range(d))
        if f < 0:
            # identical points with conflicting labels: leaf keeps the majority
            continue
        mask = XX[:, f] <= thr
        feature[node], threshold[node] = int(f), float(thr)
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], idx[~mask], depth + 1))
        stack.append((left[node], idx[mask], depth + 1))

    return TreeModel(
        n_features=d,
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.int64),
        max_depth=max_depth,
    )


def train_tree(X, y, max_depth: int | None = None, k: int | None = None) -> TreeModel:
    """Grow a CART tree with Gini splits; unlimited depth grows to purity."""
    X, y = _check_training_data(X, y)
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    k = int(k if k is not None else y.max() + 1)
    return _grow_tree(X, y, k, max_depth=max_depth)


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeModel, ...]
    k: int
    feature_fraction: float
    bootstrap: bool
    seed: int

    kind = "forest"

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def trees_count(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        X = as_points(X, self.n_features)
        votes = np.zeros((X.shape[0], self.k), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict(X)), 1)
        return votes

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum: plurality ties go to the lowest class
        return np.argmax(self.votes(X), axis=1).astype(np.int64)

    def to_dict(self):
        return {
            "k": self.k,
            "feature_fraction": self.feature_fraction,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            trees=tuple(TreeModel.from_dict(t) for t in d["trees"]),
            k=d["k"],
            feature_fraction=d["feature_fraction"],
            bootstrap=d["bootstrap"],
            seed=d["seed"],
        )


def train_forest(
    X,
    y,
    trees_count: int = 25,
    feature_fraction: float | None = None,
    seed: int = 0,
    bootstrap: bool = True,
    max_depth: int | None = None,
    k: int | None = None,
) -> ForestModel:
    """Bagged CART trees with per-split feature subsampling.

    ``feature_fraction`` defaults to sqrt(d)/d. Each tree gets its own child
    seed, so the forest is a deterministic function of ``seed``.
    """
    X, y = _check_training_data(X, y)
    if trees_count < 1:
        raise ValueError("trees_count must be >= 1")
    n, d = X.shape
    k = int(k if k is not None else y.max() + 1)
    if feature_fraction is None:
        feature_fraction = math.sqrt(d) / d
    if not 0.0 < feature_fraction <= 1.0:
        raise ValueError("feature_fraction must lie in (0, 1]")
    max_features = max(1, int(round(feature_fraction * d)))
    children = np.random.SeedSequence(int(seed)).spawn(trees_count)
    trees = []
    for child in children:
        rng = np.random.Generator(np.random.PCG64(child))
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            _grow_tree(X[idx], y[idx], k, max_depth=max_depth, max_features=max_features, rng=rng)
        )
    return ForestModel(tuple(trees), k, float(feature_fraction), bool(bootstrap), int(seed))


# ---------------------------------------------------------------------------
# multinomial logistic regression


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # (k, d)
    bias: np.ndarray  # (k,)
    learning_rate: float
    epochs: int
    loss_history: tuple[float, ...] = field(default=(), compare=False)

    kind = "logistic"

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def scores(self, X) -> np.ndarray:
        X = as_points(X, self.n_features)
        return X @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1).astype(np.int64)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            bias=np.asarray(d["bias"], dtype=float),
            learning_rate=d["learning_rate"],
            epochs=d["epochs"],
        )


def _softmax_loss_grad(W, b, X, Y):
    Z = X @ W.T + b
    Z -= Z.max(axis=1, keepdims=True)
    P = np.exp(Z)
    P /= P.sum(axis=1, keepdims=True)
    loss = -np.mean(np.log(np.clip(P[Y > 0], 1e-300, None)))
    G = (P - Y) / X.shape[0]
    return loss, G.T @ X, G.sum(axis=0)


def train_logistic(
    X, y, learning_rate: float = 0.5, epochs: int = 500, seed: int = 0, k: int | None = None
) -> LogisticModel:
    """Full-batch gradient descent on softmax cross-entropy, zero init.

    ``seed`` is accepted for interface uniformity; the procedure is
    deterministic without it.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if learning_rate <= 0:
        raise ValueError("learning_rate must be > 0")
    X, y = _check_training_data(X, y)
    k = int(k if k is not None else max(2, y.max() + 1))
    Y = np.zeros((X.shape[0], k))
    Y[np.arange(X.shape[0]), y] = 1.0
    W = np.zeros((k, X.shape[1]))
    b = np.zeros(k)
    history = []
    for epoch in range(epochs):
        loss, gW, gb = _softmax_loss_grad(W, b, X, Y)
        if not np.isfinite(loss):
            raise TrainingDivergence(f"non-finite loss at epoch {epoch}", epoch)
        history.append(float(loss))
        W -= learning_rate * gW
        b -= learning_rate * gb
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
        raise TrainingDivergence(f"non-finite weights after epoch {epochs - 1}", epochs - 1)
    return LogisticModel(W, b, float(learning_rate), int(epochs), tuple(history))


# ---------------------------------------------------------------------------
# RBF kernel machine


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass(frozen=True)
class KernelModel:
    """f(x) = sum_i coef[i] * exp(-gamma * |x - support[i]|^2) + bias.

    Binary models carry one score column (class 1 iff score > 0); k > 2
    uses one column per class and predicts the argmax.
    """

    support: np.ndarray  # (n_sv, d)
    coef: np.ndarray  # (n_sv, m)
    gamma: float
    bias: np.ndarray  # (m,)
    k: int
    regularization: float = 0.0
    epochs: int = 0

    kind = "rbf"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")

    @property
    def n_features(self) -> int:
        return self.support.shape[1]

    def decision_function(self, X, chunk: int = 4096) -> np.ndarray:
        X = as_points(X, self.n_features)
        out = np.empty((X.shape[0], self.coef.shape[1]))
        for s in range(0, X.shape[0], chunk):
            out[s : s + chunk] = rbf_kernel(X[s : s + chunk], self.support, self.gamma) @ self.coef
        return out + self.bias

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        if self.k == 2:
            return (scores[:, 0] > 0).astype(np.int64)
        return np.argmax(scores, axis=1).astype(np.int64)

    def margins(self, X, y) -> np.ndarray:
        """Functional margin y * f(x) of the true class (one-vs-rest minimum for k > 2)."""
        S = self.decision_function(X)
        Y = _pm_targets(np.asarray(y, dtype=np.int64), self.k)
        return (Y * S).min(axis=1)

    def to_dict(self):
        return {
            "k": self.k,
            "gamma": self.gamma,
            "regularization": self.regularization,
            "epochs": self.epochs,
            "bias": self.bias.tolist(),
            "support": self.support.tolist(),
            "coef": self.coef.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            support=np.asarray(d["support"], dtype=float),
            coef=np.asarray(d["coef"], dtype=float).reshape(len(d["support"]), -1),
            gamma=d["gamma"],
            bias=np.asarray(d["bias"], dtype=float),
            k=d["k"],
            regularization=d["regularization"],
            epochs=d["epochs"],
        )


def _pm_targets(y, k):
    if k == 2:
        return np.where(y == 1, 1.0, -1.0)[:, None]
    Y = -np.ones((y.size, k))
    Y[np.arange(y.size), y] = 1.0
    return Y


def train_rbf(
    X,
    y,
    gamma: float = 1.0,
    regularization: float = 1e-5,
    epochs: int | None = None,
    seed: int = 0,
    batch_size: int = 256,
    max_train: int | None = 6000,
    fit_bias: bool = False,
    k: int | None = None,
) -> KernelModel:
    """Kernelised mini-batch Pegasos on the hinge loss (one-vs-rest for k > 2).

    The iterate is kept as a kernel expansion over the training points with
    step size 1/(regularization * t). Points whose final coefficient is zero
    are dropped from the support set. Training sets larger than ``max_train``
    are subsampled (seeded) so the float32 kernel matrix fits in memory.
    ``epochs=None`` runs max(50 epochs, 2000 mini-batch steps).
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if not regularization > 0:
        raise ValueError("regularization must be > 0")
    if epochs is not None and epochs < 1:
        raise ValueError("epochs must be >= 1")
    X, y = _check_training_data(X, y)
    k = int(k if k is not None else max(2, y.max() + 1))
    rng = make_rng(seed)
    if max_train is not None and X.shape[0] > max_train:
        keep = np.sort(rng.choice(X.shape[0], size=max_train, replace=False))
        X, y = X[keep], y[keep]
    # one shuffle up front; batches are then contiguous row blocks of K
    perm = rng.permutation(X.shape[0])
    X, y = X[perm], y[perm]
    n = X.shape[0]
    Y = _pm_targets(y, k).astype(np.float32)
    K = np.empty((n, n), dtype=np.float32)
    for s in range(0, n, 2048):
        K[s : s + 2048] = rbf_kernel(X[s : s + 2048], X, gamma)
    C = np.zeros_like(Y)
    b = np.zeros(Y.shape[1], dtype=np.float32)
    batch_size = max(1, min(batch_size, n))
    n_blocks = -(-n // batch_size)
    if epochs is None:
        epochs = max(50, -(-2000 // n_blocks))
    t = 0
    for epoch in range(epochs):
        for blk in rng.permutation(n_blocks):
            s = blk * batch_size
            Yb = Y[s : s + batch_size]
            t += 1
            hinge = Yb * ((K[s : s + batch_size] @ C) + b) < 1.0
            C *= 1.0 - 1.0 / t
            C[s : s + batch_size] += Yb * hinge / (regularization * t * Yb.shape[0])
            if fit_bias:
                b += (Yb * hinge).mean(axis=0) / t
        if not np.all(np.isfinite(C)):
            raise TrainingDivergence(f"non-finite coefficients at epoch {epoch}", epoch)
    sv = np.flatnonzero(np.any(C != 0.0, axis=1))
    if sv.size == 0:
        sv = np.array([0])
    return KernelModel(
        support=X[sv].copy(),
        coef=C[sv].astype(float),
        gamma=float(gamma),
        bias=b.astype(float),
        k=k,
        regularization=float(regularization),
        epochs=int(epochs),
    )


# ---------------------------------------------------------------------------
# copies and persistence

MODEL_KINDS = {cls.kind: cls for cls in (TreeModel, ForestModel, LogisticModel, KernelModel)}


@dataclass(frozen=True)
class CopyModel:
    """A trained hypothesis plus the bookkeeping of how it was obtained.

    ``kept_features`` lists the input columns the inner model sees; it lets a
    copy trained on masked synthetic points be queried with full-width points.
    """

    model: TreeModel | ForestModel | LogisticModel | KernelModel
    n_features: int
    kept_features: tuple[int, ...] | None = None
    provenance: dict = field(default_factory=dict, compare=False)
    train_error: float | None = None

    @property
    def kind(self) -> str:
        return self.model.kind

    def predict(self, X) -> np.ndarray:
        X = as_points(X, self.n_features)
        if self.kept_features is not None:
            X = X[:, list(self.kept_features)]
        return self.model.predict(X)

    def to_dict(self):
        return {
            "n_features": self.n_features,
            "kept_features": None if self.kept_features is None else list(self.kept_features),
            "provenance": self.provenance,
            "train_error": self.train_error,
        }


def predict(model, points) -> np.ndarray:
    return model.predict(points)


def save_model(model, path) -> Path:
    """Write any model (or CopyModel) as a versioned JSON document.

    Floats are written with ``repr`` precision, so loading reproduces every
    parameter bit for bit.
    """
    inner = model.model if isinstance(model, CopyModel) else model
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": inner.kind,
        "params": inner.to_dict(),
    }
    if isinstance(model, CopyModel):
        doc["copy"] = model.to_dict()
    path = Path(path)
    path.write_text(json.dumps(doc))
    return path


def load_model(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT_NAME:
        raise CopyforgeError(f"{path}: not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise CopyforgeError(f"{path}: unsupported model format version {doc.get('version')}")
    try:
        inner = MODEL_KINDS[doc["kind"]].from_dict(doc["params"])
    except KeyError as exc:
        raise CopyforgeError(f"{path}: unknown model kind {doc.get('kind')!r}") from exc
    if "copy" not in doc:
        return inner
    meta = doc["copy"]
    kept = meta.get("kept_features")
    return CopyModel(
        model=inner,
        n_features=meta["n_features"],
        kept_features=None if kept is None else tuple(kept),
        provenance=meta.get("provenance") or {},
        train_error=meta.get("train_error"),
    )


def train_model(family: str, X, y, k: int | None = None, seed: int = 0, **params):
    """Dispatch by family name: ``tree``, ``forest``, ``logistic`` or ``rbf``."""
    if family == "tree":
        return train_tree(X, y, k=k, **params)
    if family == "forest":
        return train_forest(X, y, seed=seed, k=k, **params)
    if family == "logistic":
        return train_logistic(X, y, seed=seed, k=k, **params)
    if family == "rbf":
        return train_rbf(X, y, seed=seed, k=k, **params)
    raise ValueError(f"unknown model family {family!r}; expected one of {sorted(MODEL_KINDS)}")
