"""Exact O(n^2) t-SNE with perplexity calibration and momentum gradient descent."""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend

P_FLOOR = 1e-12
Q_FLOOR = 1e-12


class TsneError(RuntimeError):
    pass


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    output_dim: int = 2
    seed: int = 0
    gradient: str = "standard"
    init_scale: float = 1e-4

    def validate(self, n: int | None = None) -> None:
        if self.perplexity <= 1:
            raise ValueError("perplexity must be > 1")
        if n is not None and self.perplexity >= n:
            raise ValueError(f"perplexity {self.perplexity} must be < number of points {n}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum_switch <= self.iterations:
            raise ValueError("momentum_switch must lie in [0, iterations]")
        if not 0 <= self.exaggeration_iters <= self.iterations:
            raise ValueError("exaggeration_iters must lie in [0, iterations]")
        if self.exaggeration <= 0:
            raise ValueError("exaggeration factor must be > 0")
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")
        if self.gradient not in ("standard", "literal"):
            raise ValueError("gradient must be 'standard' or 'literal'")


@dataclass
class LowDimEmbedding:
    points: np.ndarray
    config: TsneConfig
    final_kl: float
    kl_after_exaggeration: float
    kl_trace: list[tuple[int, float]] = field(default_factory=list)

    def to_csv(self, row_ids=None) -> str:
        n, dim = self.points.shape
        if row_ids is None:
            row_ids = [str(i) for i in range(n)]
        cols = ["x", "y"] if dim == 2 else [f"y{j}" for j in range(dim)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id"] + cols)
        for rid, row in zip(row_ids, self.points):
            writer.writerow([rid] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "config": asdict(self.config),
            "final_kl": self.final_kl,
            "kl_after_exaggeration": self.kl_after_exaggeration,
        }

    def save(self, csv_path, json_path, row_ids=None) -> None:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv(row_ids))
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def pairwise_sq_distances(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need an n x d matrix with n >= 2")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    return _backend.pairwise_sq_distances(X)


def _entropy_bits(d: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    shifted = d - d.min()
    w = np.exp(-beta * shifted)
    total = w.sum()
    p = w / total
    h_nats = np.log(total) + beta * np.dot(p, shifted)
    return h_nats / np.log(2.0), p


def calibrate_row(
    sq_distances: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 200
) -> tuple[np.ndarray, float]:
    """Conditional probabilities ``p_{j|i}`` over the row's other points.

    ``sq_distances`` excludes the point itself. The Gaussian precision ``beta``
    is bisected until ``2**H`` is within relative ``tol`` of ``perplexity``.
    """
    d = np.asarray(sq_distances, dtype=np.float64)
    if d.shape[0] < 2:
        raise ValueError("need at least two other points")
    if np.ptp(d) == 0.0:
        p = np.full(d.shape[0], 1.0 / d.shape[0])
        if abs(d.shape[0] - perplexity) / perplexity >= tol:
            warnings.warn(
                f"equidistant row cannot reach perplexity {perplexity}; using uniform row",
                RuntimeWarning,
                stacklevel=2,
            )
        return p, 0.0
    target = np.log2(perplexity)
    beta, lo, hi = 1.0 / np.mean(d - d.min()), 0.0, np.inf
    best = None
    for _ in range(max_iter):
        h, p = _entropy_bits(d, beta)
        err = abs(2.0**h - perplexity) / perplexity
        if best is None or err < best[0]:
            best = (err, p, beta)
        if err < tol:
            break
        if h > target:
            lo = beta
            beta = beta * 2.0 if np.isinf(hi) else 0.5 * (lo + hi)
        else:
            hi = beta
            beta = 0.5 * (lo + hi)
    else:
        warnings.warn(
            f"perplexity search stopped at relative error {best[0]:.2e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return best[1], best[2]


def conditional_probabilities(D: np.ndarray, perplexity: float) -> np.ndarray:
    n = D.shape[0]
    P = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        P[i, mask[i]] = calibrate_row(D[i, mask[i]], perplexity)[0]
    return P


def symmetrize(P_conditional: np.ndarray) -> np.ndarray:
    n = P_conditional.shape[0]
    return (P_conditional + P_conditional.T) / (2.0 * n)


def joint_probabilities(D: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetric P with off-diagonal entries floored at ``P_FLOOR`` and renormalized."""
    P = symmetrize(conditional_probabilities(D, perplexity))
    P = np.maximum(P, P_FLOOR)
    np.fill_diagonal(P, 0.0)
    return P / P.sum()


def q_matrix(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Student-t affinities ``Q`` and the kernel numerators ``1/(1+|y_i-y_j|^2)``."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] < 2:
        raise ValueError("need at least two points")
    num = 1.0 / (1.0 + _backend.pairwise_sq_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def gradient(P, Q, num, Y, form: str = "standard") -> np.ndarray:
    """dKL(P||Q)/dY; ``form='literal'`` drops the Student-t numerator factor."""
    if form not in ("standard", "literal"):
        raise ValueError("form must be 'standard' or 'literal'")
    return _backend.tsne_gradient(P, Q, num, np.asarray(Y, dtype=np.float64), form == "standard")


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], Q_FLOOR))))


def check_affinities(M: np.ndarray, name: str, tol: float = 1e-9) -> None:
    if np.any(M < 0):
        raise TsneError(f"{name} has negative entries")
    if np.any(np.diag(M) != 0):
        raise TsneError(f"{name} has a non-zero diagonal")
    if np.max(np.abs(M - M.T)) > tol:
        raise TsneError(f"{name} is not symmetric")
    if abs(M.sum() - 1.0) > tol:
        raise TsneError(f"{name} sums to {M.sum()!r}, not 1")


def run_tsne(
    X: np.ndarray | None = None,
    config: TsneConfig = TsneConfig(),
    distances: np.ndarray | None = None,
    trace_every: int = 50,
) -> LowDimEmbedding:
    """Embed rows of ``X`` (or a precomputed squared-distance matrix)."""
    if (X is None) == (distances is None):
        raise ValueError("pass exactly one of X or distances")
    D = pairwise_sq_distances(X) if distances is None else np.asarray(distances, dtype=np.float64)
    n = D.shape[0]
    if n < 4:
        raise ValueError("t-SNE needs at least 4 points")
    config.validate(n)

    P = joint_probabilities(D, config.perplexity)
    check_affinities(P, "P")

    rng = np.random.default_rng(config.seed)
    Y = rng.normal(0.0, config.init_scale, (n, config.output_dim))
    update = np.zeros_like(Y)
    trace = []
    kl_after_exaggeration = np.nan
    if config.exaggeration_iters == 0:
        kl_after_exaggeration = kl_divergence(P, q_matrix(Y)[0])
    for it in range(1, config.iterations + 1):
        P_eff = P * config.exaggeration if it <= config.exaggeration_iters else P
        Q, num = q_matrix(Y)
        grad = gradient(P_eff, Q, num, Y, config.gradient)
        momentum = config.momentum_initial if it <= config.momentum_switch else config.momentum_final
        update = momentum * update - config.learning_rate * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        if not np.all(np.isfinite(Y)):
            raise TsneError(f"non-finite coordinates at iteration {it}")
        if it == config.exaggeration_iters:
            kl_after_exaggeration = kl_divergence(P, q_matrix(Y)[0])
        if trace_every and it % trace_every == 0:
            trace.append((it, kl_divergence(P, q_matrix(Y)[0])))

    Q, _ = q_matrix(Y)
    check_affinities(Q, "Q")
    return LowDimEmbedding(Y, config, kl_divergence(P, Q), float(kl_after_exaggeration), trace)
