"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and contract. ``repcap._backend`` picks one at import time.
"""
import numpy as np
from scipy.spatial.distance import pdist, squareform


def count_kmers(codes, k, g, base):
    """Counts of the leading ``k`` symbols of every length-``g`` window.

    ``codes`` holds symbol indices in ``[0, base)``. With ``g == k`` this is
    the ordinary overlapping k-mer count.
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    n_windows = codes.shape[0] - g + 1
    counts = np.zeros(base**k, dtype=np.int64)
    if n_windows <= 0:
        return counts
    windows = np.lib.stride_tricks.sliding_window_view(codes, g)[:, :k]
    weights = base ** np.arange(k - 1, -1, -1, dtype=np.int64)
    idx = windows @ weights
    counts += np.bincount(idx, minlength=base**k)
    return counts


def pairwise_sq_distances(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return np.zeros((X.shape[0], X.shape[0]))
    return squareform(pdist(X, "sqeuclidean"))


def tsne_gradient(P, Q, num, Y, standard=True):
    W = P - Q
    if standard:
        W = W * num
    return 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)


def neighbor_sweep(rank_x, rank_y, kmax):
    """Per-K sums over all points for K = 1..kmax.

    ``rank_x[i, j]`` is the 0-based position of ``j`` in the neighbor ordering
    of ``i`` (diagonal ignored). Returns three int64 arrays indexed by K-1:

    overlap
        sum_i |kNN_X(i) & kNN_Y(i)|
    penalty
        sum_i sum_{j in kNN_Y(i) \\ kNN_X(i)} (rank_X(i, j) - K), ranks 1-based
    rank_sum
        sum_i sum_{j in kNN_Y(i)} rank_X(i, j), ranks 1-based
    """
    n = rank_x.shape[0]
    off = ~np.eye(n, dtype=bool)
    rx = np.asarray(rank_x, dtype=np.int64)[off]
    ry = np.asarray(rank_y, dtype=np.int64)[off]

    m = np.maximum(rx, ry)
    m = m[m < kmax]
    overlap = np.cumsum(np.bincount(m, minlength=kmax)[:kmax])

    # pair (i, j) is penalised for every K with ry < K <= rx
    sel = (ry < rx) & (ry < kmax)
    lo = ry[sel] + 1
    hi = np.minimum(rx[sel], kmax)
    val = rx[sel] + 1
    acc_val = np.zeros(kmax + 2, dtype=np.int64)
    acc_cnt = np.zeros(kmax + 2, dtype=np.int64)
    np.add.at(acc_val, lo, val)
    np.add.at(acc_val, hi + 1, -val)
    np.add.at(acc_cnt, lo, 1)
    np.add.at(acc_cnt, hi + 1, -1)
    ks = np.arange(1, kmax + 1, dtype=np.int64)
    penalty = np.cumsum(acc_val)[1 : kmax + 1] - ks * np.cumsum(acc_cnt)[1 : kmax + 1]

    sel = ry < kmax
    rank_sum = np.cumsum(
        np.bincount(ry[sel], weights=rx[sel] + 1, minlength=kmax)[:kmax]
    ).astype(np.int64)
    return overlap.astype(np.int64), penalty.astype(np.int64), rank_sum


def parzen_pdf(x, mus, inv_sigma, norm, weight):
    """Column-wise kernel sums ``weight + sum_n norm[n, d] * exp(-z^2 / 2)``.

    ``x`` is ``c x d``; ``mus``, ``inv_sigma`` and ``norm`` are ``n x d``.
    """
    z = (x[:, None, :] - mus[None, :, :]) * inv_sigma[None, :, :]
    return weight + np.einsum("cnd,nd->cd", np.exp(-0.5 * z * z), norm)
