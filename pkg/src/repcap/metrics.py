"""Classification accuracy, k-means clustering and silhouette scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _backend


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def stratified_split(labels, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; each class keeps at least one member on each side."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        order = rng.permutation(labels.shape[0])
        cut = int(round(spec.train_fraction * labels.shape[0]))
        cut = min(max(cut, 1), labels.shape[0] - 1)
        return np.sort(order[:cut]), np.sort(order[cut:])
    train, test = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.shape[0] < 2:
            raise MetricError(f"class {cls!r} has fewer than 2 members")
        members = rng.permutation(members)
        cut = int(round(spec.train_fraction * members.shape[0]))
        cut = min(max(cut, 1), members.shape[0] - 1)
        train.append(members[:cut])
        test.append(members[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


# -- logistic regression ----------------------------------------------------


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def softmax_probabilities(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    logits = _augment(np.asarray(X, dtype=np.float64)) @ W
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def logreg_loss_and_grad(W, X, y, n_classes, l2):
    """Mean cross-entropy plus ``l2/2 * |W|^2`` over non-bias rows, and its gradient."""
    Xa = _augment(X)
    logits = Xa @ W
    lse = logsumexp(logits, axis=1)
    m = X.shape[0]
    penalty = W[:-1]
    loss = float(np.mean(lse - logits[np.arange(m), y]) + 0.5 * l2 * np.sum(penalty**2))
    probs = np.exp(logits - lse[:, None])
    probs[np.arange(m), y] -= 1.0
    grad = Xa.T @ probs / m
    grad[:-1] += l2 * penalty
    return loss, grad


def train_logreg(
    X_train: np.ndarray,
    y_train: np.ndarray,
    l2: float = 1e-4,
    epochs: int = 500,
    lr: float = 0.1,
    n_classes: int | None = None,
) -> np.ndarray:
    """Multinomial logistic regression by full-batch gradient descent.

    Returns a ``(d + 1) x C`` weight matrix whose last row is the bias. A step
    that raises the loss is undone and the learning rate halved.
    """
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if np.unique(y).shape[0] < 2:
        raise MetricError("training labels contain fewer than 2 classes")
    W = np.zeros((X.shape[1] + 1, n_classes))
    loss, grad = logreg_loss_and_grad(W, X, y, n_classes, l2)
    for _ in range(epochs):
        while True:
            W_new = W - lr * grad
            new_loss, new_grad = logreg_loss_and_grad(W_new, X, y, n_classes, l2)
            if not np.isfinite(new_loss):
                raise MetricError("logistic regression loss became non-finite")
            if new_loss <= loss + 1e-9 or lr < 1e-12:
                break
            lr *= 0.5
        W, loss, grad = W_new, new_loss, new_grad
    return W


@dataclass
class ClassificationResult:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    confusion: np.ndarray  # rows: true class, columns: predicted


def evaluate_classifier(W, X_test, y_test, n_classes: int | None = None) -> ClassificationResult:
    X_test = np.asarray(X_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.int64)
    if n_classes is None:
        n_classes = W.shape[1]
    pred = np.argmax(_augment(X_test) @ W, axis=1)  # ties -> lowest class index
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_test, pred), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.nan_to_num(np.diag(confusion) / confusion.sum(axis=0))
        recall = np.nan_to_num(np.diag(confusion) / confusion.sum(axis=1))
    accuracy = float(np.trace(confusion) / max(confusion.sum(), 1))
    return ClassificationResult(accuracy, precision, recall, confusion)


def classification_accuracy(
    X: np.ndarray,
    y: np.ndarray,
    split: SplitSpec = SplitSpec(),
    l2: float = 1e-4,
    epochs: int = 500,
    lr: float = 0.1,
) -> ClassificationResult:
    """Split, standardize on train statistics, fit, and score on the test part."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1
    train, test = stratified_split(y, split)
    mean = X[train].mean(axis=0)
    scale = X[train].std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - mean) / scale
    W = train_logreg(Xs[train], y[train], l2=l2, epochs=epochs, lr=lr, n_classes=n_classes)
    return evaluate_classifier(W, Xs[test], y[test], n_classes)


# -- k-means ----------------------------------------------------------------


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    wcss: float
    n_iter: int
    restart: int
    silhouette: float | None = None


def _sq_dist_to(X, C):
    d = (X * X).sum(axis=1)[:, None] - 2.0 * X @ C.T + (C * C).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a centre; fall back to unused rows
            unused = np.setdiff1d(np.arange(n), centers)
            centers.append(int(rng.choice(unused)))
        else:
            centers.append(int(rng.choice(n, p=closest / total)))
        closest = np.minimum(closest, ((X - X[centers[-1]]) ** 2).sum(axis=1))
    return X[centers].copy()


def _wcss(X, C, assign):
    return float(((X - C[assign]) ** 2).sum())


def _lloyd(X, C, max_iter, tol):
    k = C.shape[0]
    prev = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        assign = np.argmin(_sq_dist_to(X, C), axis=1)
        # re-seed empty clusters at the farthest point of a multi-member cluster
        for c in range(k):
            if not np.any(assign == c):
                sizes = np.bincount(assign, minlength=k)
                far_d = ((X - C[assign]) ** 2).sum(axis=1)
                far_d[sizes[assign] < 2] = -1.0
                far = int(np.argmax(far_d))
                assign[far] = c
                C[c] = X[far]
        new_C = np.vstack([X[assign == c].mean(axis=0) for c in range(k)])
        wcss = _wcss(X, new_C, assign)
        if wcss > prev * (1 + 1e-9) + 1e-12:
            raise MetricError(f"k-means WCSS increased at iteration {it}: {prev} -> {wcss}")
        prev = wcss
        shift = np.sqrt(((new_C - C) ** 2).sum(axis=1)).max()
        C = new_C
        if shift < tol:
            break
    return C, assign, prev, it


def kmeans(
    X: np.ndarray,
    k: int,
    restarts: int = 10,
    max_iter: int = 300,
    tol: float = 1e-6,
    seed: int = 0,
) -> ClusteringResult:
    """k-means++ seeded Lloyd iterations, best of ``restarts`` by WCSS."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise MetricError(f"k={k} must lie in [1, n={n}]")
    best = None
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(restarts)):
        rng = np.random.default_rng(child)
        C, assign, wcss, n_iter = _lloyd(X, _kmeans_pp(X, k, rng), max_iter, tol)
        if best is None or wcss < best.wcss:
            best = ClusteringResult(assign, C, wcss, n_iter, r)
    return best


# -- silhouette -------------------------------------------------------------


def euclidean_distances(X: np.ndarray) -> np.ndarray:
    return np.sqrt(_backend.pairwise_sq_distances(np.asarray(X, dtype=np.float64)))


def silhouette(X: np.ndarray, assignments, distances: np.ndarray | None = None):
    """Mean silhouette and per-point scores; singleton-cluster points score 0."""
    assignments = np.asarray(assignments)
    labels, inverse, sizes = np.unique(assignments, return_inverse=True, return_counts=True)
    if labels.shape[0] < 2:
        raise MetricError("silhouette needs at least 2 non-empty clusters")
    D = euclidean_distances(X) if distances is None else distances
    n = D.shape[0]
    onehot = np.zeros((n, labels.shape[0]))
    onehot[np.arange(n), inverse] = 1.0
    sums = D @ onehot  # total distance from each point to each cluster
    own = sizes[inverse]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = sums[np.arange(n), inverse] / (own - 1)
        means = sums / sizes[None, :]
    means[np.arange(n), inverse] = np.inf
    b = means.min(axis=1)
    scores = np.zeros(n)
    ok = own > 1
    scores[ok] = (b[ok] - a[ok]) / np.maximum(a[ok], b[ok])
    scores = np.nan_to_num(scores)  # a == b == 0 for coincident points
    return float(scores.mean()), scores
