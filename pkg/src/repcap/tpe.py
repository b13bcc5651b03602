"""Tree-structured Parzen Estimator search over metric weights on the simplex."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from . import _backend

WEIGHT_NAMES = ("w_class", "w_clust", "w_neighb", "w_trust")
N_WEIGHTS = len(WEIGHT_NAMES)
MIN_RAW_SUM = 1e-9
BANDWIDTH_RULES = ("nearest", "widest-gap")
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class WeightVector:
    w_class: float
    w_clust: float
    w_neighb: float
    w_trust: float

    def __post_init__(self):
        arr = self.as_array()
        if np.any(arr < 0) or np.any(arr > 1) or abs(arr.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights {arr.tolist()} are not on the unit simplex")

    @classmethod
    def from_raw(cls, raw) -> WeightVector:
        raw = np.asarray(raw, dtype=np.float64)
        total = raw.sum()
        if total < MIN_RAW_SUM:
            raise ValueError("raw weights sum to (almost) zero")
        return cls(*(raw / total).tolist())

    @classmethod
    def uniform(cls) -> WeightVector:
        return cls(0.25, 0.25, 0.25, 0.25)

    def as_array(self) -> np.ndarray:
        return np.array([self.w_class, self.w_clust, self.w_neighb, self.w_trust])

    def as_dict(self) -> dict:
        return dict(zip(WEIGHT_NAMES, self.as_array().tolist()))


@dataclass(frozen=True)
class Trial:
    index: int
    raw_params: np.ndarray
    weights: WeightVector
    value: float


@dataclass(frozen=True)
class TpeConfig:
    n_trials: int = 1000
    n_startup: int = 20
    gamma: float = 0.25
    n_candidates: int = 24
    min_bandwidth: float = 0.05
    max_good: int | None = 10
    bandwidth: str = "widest-gap"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.n_startup < self.n_trials:
            raise ValueError("need 0 <= n_startup < n_trials")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie strictly between 0 and 1")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.min_bandwidth <= 0:
            raise ValueError("min_bandwidth must be > 0")
        if self.max_good is not None and self.max_good < 1:
            raise ValueError("max_good must be >= 1 or None")
        if self.bandwidth not in BANDWIDTH_RULES:
            raise ValueError(f"bandwidth must be one of {', '.join(BANDWIDTH_RULES)}")


def bandwidths(points: np.ndarray, min_bandwidth: float, rule: str) -> np.ndarray:
    """Per-point kernel widths for each column of an ``n x d`` point matrix."""
    n, d = points.shape
    if n == 0:
        return np.empty((0, d))
    if n == 1:
        return np.ones((1, d))
    order = np.argsort(points, axis=0, kind="stable")
    srt = np.take_along_axis(points, order, axis=0)
    gaps = np.diff(srt, axis=0)
    if rule == "nearest":
        inf = np.full((1, d), np.inf)
        width = np.minimum(np.concatenate([inf, gaps]), np.concatenate([gaps, inf]))
    elif rule == "widest-gap":
        width = np.maximum(
            np.concatenate([srt[:1], gaps]), np.concatenate([gaps, 1.0 - srt[-1:]])
        )
    else:
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    out = np.empty_like(points)
    np.put_along_axis(out, order, width, axis=0)
    return np.maximum(out, min_bandwidth)


class ParzenEstimator:
    """Mixture of Gaussians truncated to [0, 1] plus a uniform prior component.

    Every observed point and the prior carry weight ``1 / (n + 1)``. With the
    ``nearest`` rule a point's bandwidth is the distance to its nearest other
    point; ``widest-gap`` takes the larger of its two neighboring gaps, where
    the outermost points count the distance to the interval edge. Either is
    floored at ``min_bandwidth``; a lone point uses the full unit width.
    """

    def __init__(self, points, min_bandwidth: float = 0.05, rule: str = "nearest"):
        mus = np.asarray(points, dtype=np.float64).ravel()
        self._setup(mus, bandwidths(mus[:, None], min_bandwidth, rule)[:, 0])

    @classmethod
    def from_parts(cls, mus: np.ndarray, sigmas: np.ndarray) -> ParzenEstimator:
        self = cls.__new__(cls)
        self._setup(mus, sigmas)
        return self

    def _setup(self, mus: np.ndarray, sigmas: np.ndarray) -> None:
        n = mus.shape[0]
        self.mus = mus
        self.sigmas = sigmas
        self.weight = 1.0 / (n + 1)
        self._lo = ndtr(-mus / sigmas)
        self._hi = ndtr((1.0 - mus) / sigmas)
        self._norm = self.weight / (sigmas * _SQRT_2PI * (self._hi - self._lo))
        self._inv_sigma = 1.0 / sigmas

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        inside = (x >= 0) & (x <= 1)
        out = np.full(x.shape, self.weight)
        if self.mus.size:
            z = (x[:, None] - self.mus) * self._inv_sigma
            out = out + np.exp(-0.5 * z * z) @ self._norm
        return np.where(inside, out, 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        n = self.mus.shape[0]
        comp = rng.integers(0, n + 1, size)  # index n is the prior
        u = rng.random(size)
        out = u.copy()
        gauss = comp < n
        if np.any(gauss):
            c = comp[gauss]
            q = self._lo[c] + u[gauss] * (self._hi[c] - self._lo[c])
            out[gauss] = self.mus[c] + self.sigmas[c] * ndtri(q)
        return np.clip(out, 0.0, 1.0)


def sample_startup(rng: np.random.Generator) -> np.ndarray:
    return rng.random(N_WEIGHTS)


def split_trials(
    history: list[Trial], gamma: float, max_good: int | None = None
) -> tuple[list[Trial], list[Trial]]:
    """Top ``ceil(gamma * n)`` finite trials by value (earlier index on ties) and the rest.

    ``max_good`` optionally caps the size of the good set.
    """
    values = np.array([t.value for t in history], dtype=np.float64)
    good_idx = _good_indices(values, gamma, max_good)
    chosen = set(good_idx.tolist())
    good = [history[i] for i in good_idx]
    bad = [t for i, t in enumerate(history) if i not in chosen]
    return good, bad


def _good_indices(values: np.ndarray, gamma: float, max_good: int | None = None) -> np.ndarray:
    n_good = math.ceil(gamma * values.shape[0])
    if max_good is not None:
        n_good = min(n_good, max_good)
    order = np.lexsort((np.arange(values.shape[0]), -values))
    order = order[np.isfinite(values[order])]
    return order[:n_good]


def canonical(raw: np.ndarray) -> np.ndarray:
    """Rescale raw vectors so their largest coordinate is 1.

    Raw vectors on the same ray give the same weights; modelling one
    representative per ray keeps the good-set density sharp.
    """
    raw = np.asarray(raw, dtype=np.float64)
    return raw / raw.max(axis=-1, keepdims=True)


def _propose(raw: np.ndarray, values: np.ndarray, config: TpeConfig, rng) -> np.ndarray:
    good_idx = _good_indices(values, config.gamma, config.max_good)
    if good_idx.size == 0:
        return sample_startup(rng)
    is_good = np.zeros(values.shape[0], dtype=bool)
    is_good[good_idx] = True
    points = canonical(raw)
    good, bad = points[is_good], points[~is_good]
    good_sig = bandwidths(good, config.min_bandwidth, config.bandwidth)
    bad_sig = bandwidths(bad, config.min_bandwidth, config.bandwidth)
    cands = np.empty((config.n_candidates, N_WEIGHTS))
    for dim in range(N_WEIGHTS):
        l = ParzenEstimator.from_parts(good[:, dim], good_sig[:, dim])
        cands[:, dim] = l.sample(rng, config.n_candidates)
    score = np.log(_column_pdf(cands, good, good_sig)) - np.log(_column_pdf(cands, bad, bad_sig))
    return cands[np.argmax(score, axis=0), np.arange(N_WEIGHTS)]


def _column_pdf(x: np.ndarray, mus: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Column-wise Parzen densities at points ``x`` already inside [0, 1]."""
    weight = 1.0 / (mus.shape[0] + 1)
    if mus.shape[0] == 0:
        return np.full(x.shape, weight)
    mass = ndtr((1.0 - mus) / sigmas) - ndtr(-mus / sigmas)
    norm = weight / (sigmas * _SQRT_2PI * mass)
    return _backend.parzen_pdf(x, mus, 1.0 / sigmas, norm, weight)


def propose(history: list[Trial], config: TpeConfig, rng: np.random.Generator) -> np.ndarray:
    """Next raw parameter vector, one independent l(x)/g(x) argmax per dimension."""
    raw = np.array([t.raw_params for t in history], dtype=np.float64).reshape(-1, N_WEIGHTS)
    values = np.array([t.value for t in history], dtype=np.float64)
    return _propose(raw, values, config, rng)


@dataclass
class OptimizationResult:
    best_weights: WeightVector
    best_value: float
    best_index: int
    history: list[Trial] = field(default_factory=list)

    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate([t.value for t in self.history])

    def history_csv(self) -> str:
        buf = io.StringIO()
        buf.write("trial," + ",".join(WEIGHT_NAMES) + ",objective\n")
        for t in self.history:
            w = ",".join(repr(float(v)) for v in t.weights.as_array())
            buf.write(f"{t.index},{w},{float(t.value)!r}\n")
        return buf.getvalue()


def optimize(
    objective: Callable[[WeightVector], float], config: TpeConfig = TpeConfig()
) -> OptimizationResult:
    """Maximize ``objective`` over the weight simplex with exactly ``n_trials`` evaluations."""
    rng = np.random.default_rng(config.seed)
    raw_seen = np.empty((config.n_trials, N_WEIGHTS))
    values = np.empty(config.n_trials)
    history: list[Trial] = []
    best = None
    for index in range(config.n_trials):
        if index < config.n_startup:
            raw = sample_startup(rng)
        else:
            raw = _propose(raw_seen[:index], values[:index], config, rng)
        while raw.sum() < MIN_RAW_SUM:
            raw = sample_startup(rng)
        weights = WeightVector.from_raw(raw)
        value = float(objective(weights))
        if not np.isfinite(value):
            value = -np.inf
        raw_seen[index] = raw
        values[index] = value
        trial = Trial(index, raw, weights, value)
        history.append(trial)
        if best is None or value > best.value:
            best = trial
    return OptimizationResult(best.weights, best.value, best.index, history)
