"""Kernel backend selection.

The compiled extension is used when it imports cleanly, unless the
``REPCAP_PURE_PYTHON`` environment variable is set to a non-empty value.
"""
import os

from . import _pykernels

pure = _pykernels

if os.environ.get("REPCAP_PURE_PYTHON"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "python"

count_kmers = kernels.count_kmers
pairwise_sq_distances = kernels.pairwise_sq_distances
tsne_gradient = kernels.tsne_gradient
neighbor_sweep = kernels.neighbor_sweep
parzen_pdf = kernels.parzen_pdf
