"""Dirichlet solvers on depth-truncated trees, sub/supersolution brackets,
the constant-data two-component oracle, and convergence studies.

A field stores every component on every vertex of levels 0..L in one
``(N, total)`` array laid out level-major (see :mod:`treemvs.tree`).
Level L carries the boundary data sampled at psi.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from treemvs import _backend, tree
from treemvs.averaging import evaluate, evaluate_rows
from treemvs.coefficients import CONVERGES, coupling_sum_series, log_infinite_products
from treemvs.errors import (
    DomainError,
    MemoryBudgetError,
    NonConvergenceError,
    PreconditionError,
    ShapeMismatchError,
)

DIRECTED_EXACT = "DirectedExact"
FIXED_POINT = "FixedPoint"
CONSTANT_ORACLE = "ConstantOracle"
SUPERSOLUTION = "Supersolution"
SUBSOLUTION = "Subsolution"

DEFAULT_TOL = 1e-12
DEFAULT_MAX_SWEEPS = 100_000
DEFAULT_MAX_VALUES = 1 << 26


@dataclass
class SolutionField:
    m: int
    L: int
    values: np.ndarray
    method: str
    iterations: int = 0
    residual: float = float("nan")
    offsets: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.offsets is None:
            self.offsets = tree.level_offsets(self.m, self.L)
        if self.values.shape[1] != self.offsets[-1]:
            raise ShapeMismatchError(f"values hold {self.values.shape[1]} vertices, expected {self.offsets[-1]}")

    @property
    def N(self):
        return self.values.shape[0]

    def level(self, k):
        """Values at level k, shape (N, m**k)."""
        return self.values[:, self.offsets[k]:self.offsets[k + 1]]

    def interior(self):
        return self.values[:, : self.offsets[self.L]]

    def index(self, node):
        node = tuple(node)
        if len(node) > self.L:
            raise DomainError(f"node {tree.format_node(node)} below depth {self.L}")
        return int(self.offsets[len(node)] + tree.flat_index(node, self.m))

    def value(self, node, i=0):
        return float(self.values[i, self.index(node)])

    def root(self):
        return self.values[:, 0].copy()

    def rows(self):
        """(component, node, level, psi, value) for every stored value."""
        for i in range(self.N):
            for k in range(self.L + 1):
                size = self.m ** k
                base = self.offsets[k]
                for j in range(size):
                    yield i, tree.from_flat(k, j, self.m), k, j / size, float(self.values[i, base + j])


def _check_budget(config, L, max_values):
    total = config.N * (config.m ** (L + 1) - 1) // (config.m - 1)
    if total > max_values:
        raise MemoryBudgetError(f"depth {L} needs {total} values, budget is {max_values}")


def _kernel_args(config):
    codes = np.array([op.code for op in config.operators], dtype=np.int64)
    alpha = np.array([op.params()[0] for op in config.operators], dtype=np.float64)
    p = np.array([op.params()[1] for op in config.operators], dtype=np.float64)
    return codes, alpha, p


def _boundary_field(config, boundary, L):
    if len(boundary) != config.N:
        raise ShapeMismatchError(f"{len(boundary)} boundary functions for {config.N} components")
    offsets = tree.level_offsets(config.m, L)
    values = np.zeros((config.N, offsets[-1]))
    leaf = boundary.leaf_values(config.m, L)
    values[:, offsets[L]:] = leaf
    return values, offsets, leaf


# --- residuals -------------------------------------------------------------

def residual(config, fld, node, component):
    """u_i(x) minus the right-hand side of its equation at ``node``.

    Written directly from the equation with scalar arithmetic; it shares no
    code with the sweep kernels. The root equation has no predecessor term.
    """
    node = tuple(node)
    k = len(node)
    if k >= fld.L:
        raise DomainError(f"node {tree.format_node(node)} is on the boundary level {fld.L}: no equation")
    i = component
    m = config.m
    kids = [fld.value(y, i) for y in tree.successors(node, m)]
    F = evaluate(config.operators[i], kids)
    beta = config.beta[i].value_at(k) if k > 0 else 0.0
    pred = fld.value(tree.predecessor(node), i) if k > 0 else 0.0
    couple = [config.coupling[i][j].value_at(k) if j != i else 0.0 for j in range(config.N)]
    inner = (1.0 - beta) * F + beta * pred
    rhs = (1.0 - sum(couple)) * inner + sum(c * fld.value(node, j) for j, c in enumerate(couple))
    return fld.value(node, i) - rhs


def residuals(config, fld):
    """Residual of every interior equation, shape (N, number of interior vertices)."""
    m, L, N = config.m, fld.L, config.N
    off = fld.offsets
    out = np.empty((N, off[L]))
    for k in range(L):
        a, b = off[k], off[k + 1]
        n = b - a
        cur = fld.values[:, a:b]
        couple = np.array([[config.coupling[i][j].value_at(k) if j != i else 0.0 for j in range(N)] for i in range(N)])
        for i in range(N):
            F = evaluate_rows(config.operators[i], fld.values[i, off[k + 1]:off[k + 2]].reshape(n, m))
            if k > 0:
                beta = config.beta[i].value_at(k)
                pred = np.repeat(fld.values[i, off[k - 1]:a], m)
            else:
                beta, pred = 0.0, 0.0
            inner = (1.0 - beta) * F + beta * pred
            rhs = (1.0 - couple[i].sum()) * inner + couple[i] @ cur
            out[i, a:b] = cur[i] - rhs
    return out


def residual_norm(config, fld):
    r = residuals(config, fld)
    return float(np.max(np.abs(r))) if r.size else 0.0


# --- solvers ---------------------------------------------------------------

def solve_directed_exact(config, boundary, L, backend=None, max_values=DEFAULT_MAX_VALUES):
    """Backward induction for predecessor-free systems (all beta = 0).

    Levels are filled from L-1 up to the root; at each vertex the coupled
    N x N block is solved exactly (factorized once per level).
    """
    if L < 1:
        raise ValueError("depth must be >= 1")
    if not config.is_directed(L):
        raise PreconditionError("solve_directed_exact needs beta = 0 on every level below the boundary")
    _check_budget(config, L, max_values)
    tables = config.tables(L)
    values, offsets, _ = _boundary_field(config, boundary, L)
    kern = _backend.get(backend)
    codes, alpha, p = _kernel_args(config)
    kern.sweep(values, values, offsets, L, config.m, codes, alpha, p, tables.beta, tables.G, True, _backend.threads())
    fld = SolutionField(config.m, L, values, DIRECTED_EXACT, iterations=1, offsets=offsets)
    fld.residual = residual_norm(config, fld)
    return fld


def jacobi_sweep(config, fld, backend=None, tables=None):
    """One Jacobi sweep applied to ``fld``; returns a new field (boundary kept)."""
    tables = tables or config.tables(fld.L)
    out = fld.values.copy()
    codes, alpha, p = _kernel_args(config)
    _backend.get(backend).sweep(fld.values, out, fld.offsets, fld.L, config.m, codes, alpha, p,
                                tables.beta, tables.G, False, _backend.threads())
    return SolutionField(config.m, fld.L, out, fld.method, offsets=fld.offsets)


def solve_fixed_point(config, boundary, L, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS,
                      scheme="jacobi", backend=None, max_values=DEFAULT_MAX_VALUES):
    """Iterate full-tree sweeps until the sup-norm change is at most ``tol``.

    Interior values start at the midpoint of the boundary range. ``scheme``
    is ``"jacobi"`` (order independent, the default) or ``"gauss-seidel"``
    (levels bottom-up using fresh successor values; faster, but roundoff
    depends on the visiting order).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if scheme not in ("jacobi", "gauss-seidel"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if L < 1:
        raise ValueError("depth must be >= 1")
    _check_budget(config, L, max_values)
    tables = config.tables(L)
    values, offsets, leaf = _boundary_field(config, boundary, L)
    values[:, : offsets[L]] = 0.5 * (leaf.min() + leaf.max())
    kern = _backend.get(backend)
    codes, alpha, p = _kernel_args(config)
    nthreads = _backend.threads()
    gs = scheme == "gauss-seidel"
    cur = values
    nxt = values.copy()
    change = math.inf
    for sweep in range(1, max_sweeps + 1):
        change = kern.sweep(cur, nxt, offsets, L, config.m, codes, alpha, p, tables.beta, tables.G, gs, nthreads)
        cur, nxt = nxt, cur
        if change <= tol:
            fld = SolutionField(config.m, L, cur, FIXED_POINT, iterations=sweep, offsets=offsets)
            fld.residual = residual_norm(config, fld)
            return fld
    raise NonConvergenceError("fixed-point iteration did not reach tolerance", change, max_sweeps)


def solve(config, boundary, L, method="auto", tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS,
          backend=None, max_values=DEFAULT_MAX_VALUES):
    """Dispatch: ``exact``, ``fixed-point``, or ``auto`` (exact when every
    beta vanishes, fixed point otherwise)."""
    if method == "auto":
        method = "exact" if config.is_directed(L) else "fixed-point"
    if method == "exact":
        return solve_directed_exact(config, boundary, L, backend=backend, max_values=max_values)
    if method == "fixed-point":
        return solve_fixed_point(config, boundary, L, tol=tol, max_sweeps=max_sweeps, backend=backend,
                                 max_values=max_values)
    raise ValueError(f"unknown method {method!r}")


# --- constant data, two components, no predecessor term -------------------

@dataclass
class ConstantSolution:
    """Level values ``a[k]`` (first component) and ``b[k]`` (second)."""

    a: np.ndarray
    b: np.ndarray
    log_plus: float
    log_minus: float

    @property
    def K(self):
        return len(self.a) - 1


def solve_constant_symmetric(p, C1, C2, K):
    """Level-constant solution of the symmetric directed two-component system
    with constant data ``C1``, ``C2`` on the infinite tree.

    Every level obeys a_k = (1-p_k) a_{k+1} + p_k b_k and the mirrored
    equation. The sum a_k + b_k is therefore the same on every level and
    equals C1 + C2; the difference grows by (1+p_k)/(1-p_k) per level and
    tends to C2 - C1, which fixes b_0 - a_0 = (C2 - C1) * prod(1-p_j)/prod(1+p_j).
    Levels 1..K follow by forward iteration.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    verdict = coupling_sum_series(p, 1)
    if verdict.status != CONVERGES:
        raise PreconditionError(f"sum of p_k must converge, classifier says {verdict.status}")
    log_plus, log_minus = log_infinite_products(p)
    ratio = math.exp(log_minus - log_plus)
    s0 = C1 + C2
    d0 = (C2 - C1) * ratio
    a = np.empty(K + 1)
    b = np.empty(K + 1)
    a[0] = 0.5 * (s0 - d0)
    b[0] = 0.5 * (s0 + d0)
    for k in range(K):
        pk = p.value_at(k)
        if pk >= 1.0:
            raise DomainError(f"p_k = 1 at level {k}")
        a[k + 1] = (a[k] - pk * b[k]) / (1.0 - pk)
        b[k + 1] = (b[k] - pk * a[k]) / (1.0 - pk)
    return ConstantSolution(a, b, log_plus, log_minus)


def constant_solution_tail(p, C1, C2, k):
    """Closed-form level-k values (a_k, b_k) from the tail product
    prod_{j>=k} (1-p_j)/(1+p_j); an oracle independent of forward iteration."""
    head = p.values(k) if k else np.zeros(0)
    lp, lm = log_infinite_products(p)
    lp -= float(np.sum(np.log1p(head)))
    lm -= float(np.sum(np.log1p(-head)))
    d = (C2 - C1) * math.exp(lm - lp)
    s = C1 + C2
    return 0.5 * (s - d), 0.5 * (s + d)


# --- sub/supersolutions ----------------------------------------------------

def supersolution_increments(config, constants, r0=None, K=20):
    """Level increments r_0..r_K of the level-constant supersolution.

    With gap = max_{i,j} |C_i - C_j| and P_ik = sum_j p_ijk, each level takes
    the largest requirement over components,
        r_k = max_i [ beta_ik/(1-beta_ik) r_{k-1} + P_ik/(1-P_ik) gap/(1-beta_ik) ],
    and the root needs r_0 >= max_i P_i0/(1-P_i0) gap.
    """
    N = config.N
    C = np.asarray(constants, dtype=np.float64)
    if C.shape != (N,):
        raise ShapeMismatchError(f"need {N} constants, got {C.shape}")
    gap = float(C.max() - C.min())
    if r0 is None:
        r0 = gap
    if r0 < 0:
        raise ValueError("r0 must be >= 0")
    r = np.zeros(K + 1)
    for k in range(K + 1):
        need = 0.0 if k > 0 else r0
        for i in range(N):
            P = sum(config.coupling[i][j].value_at(k) for j in range(N) if j != i)
            if P >= 1.0:
                raise PreconditionError(f"component {i} has total coupling 1 at level {k}: no supersolution of this form")
            beta = config.beta[i].value_at(k) if k > 0 else 0.0
            prev = r[k - 1] if k > 0 else 0.0
            need = max(need, beta / (1.0 - beta) * prev + P / (1.0 - P) * gap / (1.0 - beta))
        r[k] = need
    return r


def build_supersolution(config, constants, r0=None, K=20, cap=1e12, max_values=DEFAULT_MAX_VALUES):
    """Level-constant supersolution u_i(x) = C_i + sum_{j=|x|}^{K} r_j on the
    depth-K tree; at level K it sits at C_i + r_K >= C_i."""
    _check_budget(config, K, max_values)
    r = supersolution_increments(config, constants, r0, K)
    tail = np.cumsum(r[::-1])[::-1]  # tail[k] = sum_{j>=k} r_j
    if not np.all(np.isfinite(tail)) or tail[0] > cap:
        raise PreconditionError(f"supersolution increments sum to {tail[0]:.3e} > cap {cap:.1e}; coefficient series diverge?")
    offsets = tree.level_offsets(config.m, K)
    values = np.empty((config.N, offsets[-1]))
    C = np.asarray(constants, dtype=np.float64)
    for k in range(K + 1):
        values[:, offsets[k]:offsets[k + 1]] = (C + tail[k])[:, None]
    return SolutionField(config.m, K, values, SUPERSOLUTION, offsets=offsets)


def build_subsolution(config, constants, r0=None, K=20, cap=1e12, max_values=DEFAULT_MAX_VALUES):
    """Negated supersolution for the negated constants."""
    sup = build_supersolution(config, -np.asarray(constants, dtype=np.float64), r0, K, cap, max_values)
    return SolutionField(config.m, K, -sup.values, SUBSOLUTION, offsets=sup.offsets)


@dataclass
class BracketReport:
    ok: bool
    worst: float  # largest violation (<= 0 when ordered)
    node: tuple = None
    component: int = None
    side: str = ""  # "sub>sol" or "sol>super"

    def __str__(self):
        if self.ok:
            return f"bracket holds (worst slack {self.worst:.3e})"
        return (f"bracket violated: {self.side} by {self.worst:.3e} at component {self.component}, "
                f"node {tree.format_node(self.node)}")


def verify_bracket(sub, sol, sup, tol=1e-9):
    """Check sub <= sol <= super at every vertex and component."""
    for f in (sub, sup):
        if f.values.shape != sol.values.shape or f.m != sol.m or f.L != sol.L:
            raise ShapeMismatchError("fields differ in shape, depth or branching")
    lower = sub.values - sol.values
    upper = sol.values - sup.values
    worst_lower = float(lower.max())
    worst_upper = float(upper.max())
    if worst_lower >= worst_upper:
        worst, arr, side = worst_lower, lower, "sub>sol"
    else:
        worst, arr, side = worst_upper, upper, "sol>super"
    ok = worst <= tol
    i, pos = np.unravel_index(int(np.argmax(arr)), arr.shape)
    k = int(np.searchsorted(sol.offsets, pos, side="right") - 1)
    node = tree.from_flat(k, int(pos - sol.offsets[k]), sol.m)
    return BracketReport(ok, worst, node, int(i), side)


# --- convergence study -----------------------------------------------------

@dataclass
class StudyRow:
    L: int
    component: int
    root_value: float
    delta: float  # change from the previous depth (nan for the first)
    component_gap: float  # max_{i,j} |u_i(root) - u_j(root)|


def convergence_study(config, boundary, depths, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS,
                      backend=None, max_values=DEFAULT_MAX_VALUES):
    """Solve at each depth and tabulate root values, their successive
    differences, and the gap between components at the root."""
    depths = list(depths)
    if depths != sorted(depths) or len(set(depths)) != len(depths):
        raise ValueError("depths must be strictly ascending")
    rows = []
    prev = None
    for L in depths:
        fld = solve(config, boundary, L, tol=tol, max_sweeps=max_sweeps, backend=backend, max_values=max_values)
        root = fld.root()
        gap = float(root.max() - root.min())
        for i in range(config.N):
            delta = float(root[i] - prev[i]) if prev is not None else float("nan")
            rows.append(StudyRow(L, i, float(root[i]), delta, gap))
        prev = root
    return rows


def study_series(rows, component):
    """(depths, root values, |deltas|, gaps) for one component."""
    sel = [r for r in rows if r.component == component]
    return ([r.L for r in sel], np.array([r.root_value for r in sel]),
            np.array([abs(r.delta) for r in sel[1:]]), np.array([r.component_gap for r in sel]))
