"""Time each hot kernel under the compiled and the pure-numpy backend.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from repcap import _backend, _pykernels
from repcap.neighborhood import build_index


def cases():
    rng = np.random.default_rng(0)
    codes = rng.integers(0, 4, 5000)
    X = rng.normal(size=(300, 64))
    Y = rng.normal(size=(300, 2))
    P = rng.random((300, 300))
    np.fill_diagonal(P, 0)
    P /= P.sum()
    num = 1.0 / (1.0 + _pykernels.pairwise_sq_distances(Y))
    np.fill_diagonal(num, 0)
    Q = num / num.sum()
    ix, iy = build_index(X), build_index(Y)
    x, mus = rng.random((24, 4)), rng.random((250, 4))
    inv, norm = 1 / rng.uniform(0.05, 1, (250, 4)), rng.random((250, 4))
    return {
        "count_kmers (n=5000, k=4, g=9)": lambda k: k.count_kmers(codes, 4, 9, 4),
        "pairwise_sq_distances (300 x 64)": lambda k: k.pairwise_sq_distances(X),
        "tsne_gradient (n=300)": lambda k: k.tsne_gradient(P, Q, num, Y, True),
        "neighbor_sweep (n=300, K<=100)": lambda k: k.neighbor_sweep(ix.ranks, iy.ranks, 100),
        "parzen_pdf (24 x 250 x 4)": lambda k: k.parzen_pdf(x, mus, inv, norm, 0.004),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if _backend.compiled is None:
        print("compiled extension unavailable; timing the numpy backend only")
    print(f"{'kernel':36s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases().items():
        pure = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _backend.compiled is None:
            print(f"{name:36s} {pure:10.3f}")
            continue
        comp = min(timeit.repeat(lambda: fn(_backend.compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {pure:10.3f} {comp:10.3f} {pure / comp:7.1f}x")


if __name__ == "__main__":
    main()
