"""Kernel backend selection.

The compiled extension is used when importable; ``TREE_MVS_BACKEND=python``
forces the numpy fallback. ``TREE_MVS_THREADS`` caps intra-sweep and
intra-batch parallelism of the compiled kernels (default 1).
"""
import os

from treemvs import _pykernels

python = _pykernels
compiled = None

try:
    from treemvs import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None


def get(name=None):
    """Return the kernel module for ``name`` ('cython' or 'python'), or
    the default selection when ``name`` is None."""
    if name is None:
        name = os.environ.get("TREE_MVS_BACKEND", "").strip().lower() or None
    if name == "python":
        return python
    if name in ("cython", "compiled"):
        if compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return compiled
    return compiled if compiled is not None else python


def threads():
    try:
        return max(1, int(os.environ.get("TREE_MVS_THREADS", "1")))
    except ValueError:
        return 1
