"""Addressing and boundary geometry of the m-regular tree.

A vertex is a tuple of digits in ``{0, ..., m-1}``; the root is ``()``.
Values on a depth-truncated tree live in level-major flat arrays: the
vertices of level ``k`` occupy ``offsets[k]:offsets[k+1]`` and are ordered by
their base-m index, so vertex ``(a_1, ..., a_k)`` sits at
``offsets[k] + sum(a_i * m**(k-i))``.
"""
from fractions import Fraction

import numpy as np

from treemvs.errors import MalformedNodeError, RootPredecessorError

ROOT = ()


def _check(node, m):
    for d in node:
        if not (isinstance(d, (int, np.integer)) and 0 <= d < m):
            raise MalformedNodeError(f"digit {d!r} of {node!r} not in 0..{m - 1}")


def level(node):
    return len(node)


def successors(node, m):
    """The m successors of ``node`` in digit order."""
    node = tuple(node)
    _check(node, m)
    return [node + (d,) for d in range(m)]


def predecessor(node):
    node = tuple(node)
    if not node:
        raise RootPredecessorError("the root has no predecessor")
    return node[:-1]


def psi_exact(node, m):
    """Exact value of the boundary map at ``node`` (zero-padded branch)."""
    node = tuple(node)
    _check(node, m)
    return Fraction(flat_index(node, m), m ** len(node))


def psi(node, m):
    node = tuple(node)
    _check(node, m)
    return flat_index(node, m) / m ** len(node)


def psi_interval(node, m):
    """Closed interval ``[psi(node), psi(node) + m**-level]`` as Fractions."""
    lo = psi_exact(node, m)
    return lo, lo + Fraction(1, m ** len(node))


def flat_index(node, m):
    j = 0
    for d in node:
        j = j * m + int(d)
    return j


def from_flat(k, j, m):
    """Digits of the ``j``-th vertex (base-m order) at level ``k``."""
    if not 0 <= j < m ** k:
        raise MalformedNodeError(f"index {j} out of range for level {k}, m={m}")
    digits = []
    for _ in range(k):
        j, d = divmod(j, m)
        digits.append(d)
    return tuple(reversed(digits))


def level_offsets(m, depth):
    """Start offsets of each level in a level-major array; length depth+2."""
    sizes = [m ** k for k in range(depth + 1)]
    return np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)


def psi_level(m, k):
    """psi of every level-k vertex, in flat order."""
    return np.arange(m ** k, dtype=np.float64) / float(m ** k)


def format_node(node):
    """Dotted notation: ``(2, 1)`` -> ``"2.1"``, root -> ``"@"``."""
    node = tuple(node)
    if not node:
        return "@"
    return ".".join(str(int(d)) for d in node)


def parse_node(text, m=None):
    text = text.strip()
    if text in ("@", ""):
        return ROOT
    try:
        node = tuple(int(part) for part in text.split("."))
    except ValueError:
        raise MalformedNodeError(f"cannot parse node {text!r}") from None
    if m is not None:
        _check(node, m)
    elif any(d < 0 for d in node):
        raise MalformedNodeError(f"negative digit in {text!r}")
    return node


def iter_level(m, k):
    for j in range(m ** k):
        yield from_flat(k, j, m)
