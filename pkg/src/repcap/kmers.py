"""Alignment-free sequence vectors: k-mer spectra, spaced k-mers, PWM scores, one-hot."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .dataset import Alphabet


class KmerError(ValueError):
    pass


def enumerate_kmers(s: str, k: int) -> list[str]:
    if k < 1:
        raise KmerError("k must be >= 1")
    if len(s) < k:
        raise KmerError(f"sequence shorter than k (length {len(s)}, k={k})")
    return [s[i : i + k] for i in range(len(s) - k + 1)]


def kmer_index(kmer: str, alphabet: Alphabet) -> int:
    """Base-|alphabet| positional value of ``kmer`` in alphabet order."""
    idx = 0
    base = len(alphabet)
    for ch in kmer:
        idx = idx * base + alphabet.index(ch)
    return idx


def kmer_from_index(idx: int, k: int, alphabet: Alphabet) -> str:
    base = len(alphabet)
    chars = []
    for _ in range(k):
        idx, r = divmod(idx, base)
        chars.append(alphabet.symbols[r])
    return "".join(reversed(chars))


def _normalized(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total == 0:
        raise KmerError("sequence yielded no k-mers")
    return counts / total


def kmer_counts(s: str, k: int, alphabet: Alphabet) -> np.ndarray:
    if k < 1:
        raise KmerError("k must be >= 1")
    if len(s) < k:
        raise KmerError(f"sequence shorter than k (length {len(s)}, k={k})")
    return _backend.count_kmers(alphabet.encode(s), k, k, len(alphabet))


def spectrum(s: str, k: int, alphabet: Alphabet) -> np.ndarray:
    """Normalized k-mer frequency vector of length ``|alphabet|**k``."""
    return _normalized(kmer_counts(s, k, alphabet))


def spaced_counts(s: str, k: int, g: int, alphabet: Alphabet) -> np.ndarray:
    if not 1 <= k < g:
        raise KmerError(f"spaced k-mers need 1 <= k < g (k={k}, g={g})")
    if len(s) < g:
        raise KmerError(f"sequence shorter than g (length {len(s)}, g={g})")
    return _backend.count_kmers(alphabet.encode(s), k, g, len(alphabet))


def spaced_spectrum(s: str, k: int, g: int, alphabet: Alphabet) -> np.ndarray:
    """Spectrum of the first ``k`` symbols of every overlapping g-mer.

    The trailing ``g - k`` symbols of each window form the gap and are
    discarded.
    """
    return _normalized(spaced_counts(s, k, g, alphabet))


@dataclass(frozen=True)
class PositionWeightMatrix:
    entries: np.ndarray  # k x |alphabet| log-odds
    probabilities: np.ndarray  # k x |alphabet|, rows sum to 1
    pseudocount: float
    background: np.ndarray

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def score(self, codes: np.ndarray) -> float:
        return float(self.entries[np.arange(self.k), codes].sum())


def build_pwm(
    kmers: list[str],
    alphabet: Alphabet,
    pseudocount: float = 0.1,
    background: np.ndarray | None = None,
) -> PositionWeightMatrix:
    if not kmers:
        raise KmerError("cannot build a PWM from no k-mers")
    k = len(kmers[0])
    if any(len(km) != k for km in kmers):
        raise KmerError("k-mers have mixed lengths")
    if pseudocount <= 0:
        raise KmerError("pseudocount must be > 0")
    size = len(alphabet)
    if background is None:
        background = np.full(size, 1.0 / size)
    else:
        background = np.asarray(background, dtype=np.float64)
        if background.shape != (size,) or np.any(background <= 0):
            raise KmerError("background must hold one positive probability per symbol")
        background = background / background.sum()
    codes = np.stack([alphabet.encode(km) for km in kmers])
    return _pwm_from_codes(codes, size, pseudocount, background)


def _pwm_from_codes(codes, size, pseudocount, background):
    k = codes.shape[1]
    counts = np.zeros((k, size))
    for j in range(k):
        counts[j] = np.bincount(codes[:, j], minlength=size)
    counts += pseudocount
    probs = counts / counts.sum(axis=1, keepdims=True)
    entries = np.log(probs / background)
    return PositionWeightMatrix(entries, probs, pseudocount, background)


def pwm_scores(s: str, k: int, alphabet: Alphabet, pseudocount: float = 0.1) -> np.ndarray:
    """Score of every k-mer of ``s`` under the PWM built from those same k-mers."""
    if k < 1:
        raise KmerError("k must be >= 1")
    if len(s) < k:
        raise KmerError(f"sequence shorter than k (length {len(s)}, k={k})")
    if pseudocount <= 0:
        raise KmerError("pseudocount must be > 0")
    size = len(alphabet)
    codes = np.lib.stride_tricks.sliding_window_view(alphabet.encode(s), k)
    pwm = _pwm_from_codes(codes, size, pseudocount, np.full(size, 1.0 / size))
    return pwm.entries[np.arange(k), codes].sum(axis=1)


def fit_length(vec: np.ndarray, target_len: int) -> np.ndarray:
    """Right-pad with zeros or truncate to ``target_len``."""
    if target_len < 1:
        raise KmerError("target_len must be >= 1")
    out = np.zeros(target_len, dtype=np.float64)
    n = min(target_len, vec.shape[0])
    out[:n] = vec[:n]
    return out


def pwm2vec(
    s: str, k: int, alphabet: Alphabet, pseudocount: float = 0.1, target_len: int | None = None
) -> np.ndarray:
    scores = pwm_scores(s, k, alphabet, pseudocount)
    if target_len is None:
        return scores
    return fit_length(scores, target_len)


def one_hot(s: str, alphabet: Alphabet, target_len: int) -> np.ndarray:
    if not s:
        raise KmerError("empty sequence")
    if target_len < 1:
        raise KmerError("target_len must be >= 1")
    size = len(alphabet)
    codes = alphabet.encode(s[:target_len])
    out = np.zeros((target_len, size))
    out[np.arange(codes.shape[0]), codes] = 1.0
    return out.ravel()
