"""Averaging operators R^m -> R and a sampling-based axiom checker.

Every operator is evaluated row-wise on an ``(n, m)`` array by
:func:`evaluate_rows`; :func:`evaluate` is the single-tuple convenience
wrapper. Results are clipped to ``[min, max]`` of the row, which only
removes floating-point overshoot (e.g. the mean of three copies of 0.1).
"""
from dataclasses import dataclass, field

import numpy as np

from treemvs.errors import ArityError, ConfigError, InternalError

PMEAN_TOL = 1e-13
PMEAN_MAX_ITER = 200

KINDS = ("mean", "midrange", "midrange_mean", "median_mean", "median_midrange", "pmean")
# integer codes understood by the compiled kernels
KIND_CODES = {kind: code for code, kind in enumerate(KINDS)}


@dataclass(frozen=True)
class AveragingOperator:
    """An averaging operator of arity ``m``.

    ``alpha`` is the weight of the first ingredient of the blended kinds
    (``midrange_mean`` = F_0, ``median_mean`` = F_1, ``median_midrange`` =
    F_2); the second ingredient gets ``beta = 1 - alpha``.
    """

    kind: str
    m: int
    alpha: float = 0.5
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.m < 1:
            raise ArityError(f"arity must be >= 1, got {self.m}")
        if self.kind in ("midrange_mean", "median_mean", "median_midrange"):
            if not 0.0 <= self.alpha < 1.0:
                raise ValueError(f"alpha must lie in [0, 1) so that beta = 1 - alpha > 0, got {self.alpha}")
        if self.kind == "pmean" and not (1.0 < self.p < np.inf):
            raise ValueError(f"pmean needs 1 < p < inf, got {self.p}")

    @property
    def beta(self):
        return 1.0 - self.alpha

    @property
    def code(self):
        return KIND_CODES[self.kind]

    def params(self):
        """(alpha, p) as floats, the layout used by the kernels."""
        return float(self.alpha), float(self.p)

    def __call__(self, *values):
        return evaluate(self, values)

    # config-file spelling
    def to_dict(self):
        if self.kind == "pmean":
            return {"kind": "pmean", "p": self.p}
        if self.kind in ("mean", "midrange"):
            return {"kind": self.kind}
        return {"kind": self.kind, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, spec, m, path=""):
        kind = spec.get("kind")
        if kind not in KIND_CODES:
            raise ConfigError(f"{path}/kind", f"unknown operator kind {kind!r}")
        try:
            if kind == "pmean":
                return cls("pmean", m, p=float(spec["p"]))
            if kind in ("mean", "midrange"):
                return cls(kind, m)
            return cls(kind, m, alpha=float(spec.get("alpha", 0.5)))
        except KeyError as exc:
            raise ConfigError(f"{path}/{exc.args[0]}", "missing key") from None
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None


def midrange_mean(m, alpha=0.5):
    return AveragingOperator("midrange_mean", m, alpha=alpha)


def median_mean(m, alpha=0.5):
    return AveragingOperator("median_mean", m, alpha=alpha)


def median_midrange(m, alpha=0.5):
    return AveragingOperator("median_midrange", m, alpha=alpha)


def pmean(m, p):
    return AveragingOperator("pmean", m, p=p)


def median(values):
    """Standard median: middle element for odd length, mean of the two
    middle elements for even length."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ArityError("median needs a non-empty sequence")
    return float(_median_rows(x[None, :])[0])


def _median_rows(X):
    m = X.shape[1]
    y = np.sort(X, axis=1)
    if m % 2 == 1:
        return y[:, m // 2].copy()
    return 0.5 * (y[:, m // 2 - 1] + y[:, m // 2])


def _sum_rows(X):
    # left-to-right, same order as the compiled kernel
    s = X[:, 0].copy()
    for d in range(1, X.shape[1]):
        s += X[:, d]
    return s


def pmean_residual(values, t, p):
    """g(t) = sum_j (x_j - t)|x_j - t|^(p-2), written so that x_j = t
    contributes 0 for every p > 1."""
    d = np.asarray(values, dtype=np.float64) - t
    return float(np.sum(np.sign(d) * np.abs(d) ** (p - 1.0)))


def _pmean_rows(X, p):
    lo = X.min(axis=1)
    hi = X.max(axis=1)
    active = hi > lo
    # absolute tolerance, tightened for spreads below 1: g is not Lipschitz
    # at the data points when p < 2, so the bracket must shrink with them
    tol = PMEAN_TOL * np.minimum(hi - lo, 1.0)
    q = p - 1.0
    for _ in range(PMEAN_MAX_ITER):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        a, b = lo[idx], hi[idx]
        mid = 0.5 * (a + b)
        d = X[idx] - mid[:, None]
        g = _sum_rows(np.sign(d) * np.abs(d) ** q)
        lo[idx] = np.where(g > 0.0, mid, a)
        hi[idx] = np.where(g < 0.0, mid, b)
        zero = g == 0.0
        lo[idx[zero]] = mid[zero]
        hi[idx[zero]] = mid[zero]
        # interval below tolerance, or no double strictly between the ends
        stop = (hi[idx] - lo[idx] <= tol[idx]) | (mid <= a) | (mid >= b) | zero
        active[idx[stop]] = False
    if np.any(active):
        # unreachable for finite input: the interval halves every step
        raise InternalError("pmean bisection did not terminate")
    return 0.5 * (lo + hi)


def evaluate_rows(op, X):
    """Apply ``op`` to every row of ``X`` (shape ``(n, op.m)``)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != op.m:
        raise ArityError(f"expected rows of length {op.m}, got shape {X.shape}")
    m = op.m
    mx = X.max(axis=1)
    mn = X.min(axis=1)
    kind = op.kind
    if kind == "mean":
        out = _sum_rows(X) / m
    elif kind == "midrange":
        out = 0.5 * (mx + mn)
    elif kind == "midrange_mean":
        out = (0.5 * op.alpha) * (mx + mn) + op.beta * _sum_rows(X) / m
    elif kind == "median_mean":
        out = op.alpha * _median_rows(X) + op.beta * _sum_rows(X) / m
    elif kind == "median_midrange":
        out = op.alpha * _median_rows(X) + (0.5 * op.beta) * (mx + mn)
    else:
        out = _pmean_rows(X, op.p)
    return np.minimum(np.maximum(out, mn), mx)


def evaluate(op, values):
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size != op.m:
        raise ArityError(f"{op.kind} has arity {op.m}, got {x.size} values")
    return float(evaluate_rows(op, x[None, :])[0])


# --- axiom checking --------------------------------------------------------

AXIOMS = (
    "normalization",
    "homogeneity",
    "translation",
    "strict_below_max",
    "monotonicity",
    "permutation",
    "kappa",
)


@dataclass
class Witness:
    """Inputs reproducing one axiom violation; see :func:`replay`."""

    axiom: str
    x: tuple
    t: float = 0.0
    c: float = 0.0
    index: int = 0
    perm: tuple = ()
    lhs: float = 0.0
    rhs: float = 0.0


@dataclass
class AxiomReport:
    op: AveragingOperator
    samples: int
    seed: int
    holds: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    kappa: float = 0.0

    @property
    def ok(self):
        return all(self.holds.values())

    def violated(self):
        return [name for name in AXIOMS if not self.holds.get(name, True)]

    def summary(self):
        lines = [f"{self.op.kind} (m={self.op.m}) on {self.samples} samples, seed {self.seed}:"]
        for name in AXIOMS:
            lines.append(f"  {name:17s} {'holds' if self.holds[name] else 'VIOLATED'}")
        lines.append(f"  empirical kappa   {self.kappa:.6f}")
        return "\n".join(lines)


def _tol(*scales):
    return 1e-10 * (1.0 + max(abs(s) for s in scales))


def replay(op, w):
    """Re-evaluate a witness; True if the violation reproduces."""
    x = np.asarray(w.x, dtype=np.float64)
    F = lambda v: evaluate(op, v)  # noqa: E731
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    if w.axiom == "normalization":
        return abs(F(np.zeros(op.m))) > 1e-12 or abs(F(np.ones(op.m)) - 1.0) > 1e-12
    if w.axiom == "homogeneity":
        return abs(F(w.t * x) - w.t * F(x)) > _tol(scale * w.t)
    if w.axiom == "translation":
        return abs(F(w.t + x) - (w.t + F(x))) > _tol(scale, w.t)
    if w.axiom == "strict_below_max":
        return not (F(x) < x.max())
    if w.axiom == "monotonicity":
        y = x.copy()
        y[w.index] += w.c
        return F(y) < F(x) - _tol(scale, w.c)
    if w.axiom == "permutation":
        return abs(F(x[list(w.perm)]) - F(x)) > _tol(scale)
    if w.axiom == "kappa":
        y = x.copy()
        y[0] += w.c
        return F(y) - F(x) - w.c * (1.0 - 1e-12) > _kappa_margin(x, w.c)
    raise ValueError(f"unknown axiom {w.axiom!r}")


def _draw_tuple(rng, m):
    scale = 10.0 ** rng.uniform(-2, 2)
    x = rng.normal(size=m) * scale
    r = rng.random()
    if r < 0.2:
        x = np.round(x)  # integer grid: plenty of ties
    elif r < 0.3:
        x[rng.integers(m)] = x[rng.integers(m)]
    return x


def _draw_kappa_case(rng, m):
    """Half generic, half aimed at the places a kappa violation would live:
    the perturbed coordinate sitting at the median or tied with an extreme."""
    x = _draw_tuple(rng, m)
    if rng.random() < 0.5:
        others = x[1:] if m > 1 else x
        choice = rng.integers(3)
        if choice == 0:
            x[0] = np.median(others)
        elif choice == 1:
            x[0] = others.max()
        else:
            x[0] = others.min()
        c = 10.0 ** rng.uniform(-8, 0) * (1.0 + abs(x).max())
    else:
        c = rng.exponential() * (1.0 + abs(x).max())
    return x, c


def _kappa_margin(x, c):
    """Evaluation error allowance for the kappa test: a witness must beat
    c(1 - 1e-12) by more than what bisection and rounding can produce."""
    return 1e-12 * (1.0 + max(float(np.max(np.abs(x))), abs(c)))


def check_axioms(op, sample_count, seed):
    """Sample-based check of the averaging-operator axioms plus the
    contraction property F(x_1 + c, ...) <= F(x) + c*kappa with kappa < 1.

    All samples are drawn first (in a fixed order, from ``seed``) and then
    evaluated in batches. Violations are reported with a :class:`Witness`
    for the first offending sample; nothing is raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    m = op.m
    n = sample_count
    F = lambda v: evaluate(op, v)  # noqa: E731
    Fr = lambda X: evaluate_rows(op, np.ascontiguousarray(X))  # noqa: E731
    report = AxiomReport(op=op, samples=n, seed=seed)
    holds = {name: True for name in AXIOMS}
    wit = {}

    def fail(w):
        if holds[w.axiom]:
            holds[w.axiom] = False
            wit[w.axiom] = w

    if abs(F(np.zeros(m))) > 1e-12 or abs(F(np.ones(m)) - 1.0) > 1e-12:
        fail(Witness("normalization", tuple(np.ones(m))))

    X = np.empty((n, m))
    T = np.empty(n)
    S = np.empty(n)
    I = np.empty(n, dtype=np.int64)
    Cm = np.empty(n)
    P = np.empty((n, m), dtype=np.int64)
    XK = np.empty((n, m))
    CK = np.empty(n)
    for r in range(n):
        X[r] = _draw_tuple(rng, m)
        scale = float(np.max(np.abs(X[r])))
        T[r] = rng.normal() * 10.0 ** rng.uniform(-1, 1)
        S[r] = rng.normal() * 10.0 ** rng.uniform(-2, 2)
        I[r] = rng.integers(m)
        Cm[r] = rng.exponential() * (1.0 + scale)
        P[r] = rng.permutation(m)
        XK[r], CK[r] = _draw_kappa_case(rng, m)

    rows = np.arange(n)
    scale = np.max(np.abs(X), axis=1)
    tol = lambda *sc: 1e-10 * (1.0 + np.max(np.abs(np.stack(sc)), axis=0))  # noqa: E731
    FX = Fr(X)

    FT = Fr(T[:, None] * X)
    bad = np.abs(FT - T * FX) > tol(scale * T)
    for r in np.nonzero(bad)[0][:1]:
        fail(Witness("homogeneity", tuple(X[r]), t=T[r], lhs=FT[r], rhs=T[r] * FX[r]))

    FS = Fr(S[:, None] + X)
    bad = np.abs(FS - (S + FX)) > tol(scale, S)
    for r in np.nonzero(bad)[0][:1]:
        fail(Witness("translation", tuple(X[r]), t=S[r], lhs=FS[r], rhs=S[r] + FX[r]))

    xmax = X.max(axis=1)
    bad = (xmax > X.min(axis=1)) & ~(FX < xmax)
    for r in np.nonzero(bad)[0][:1]:
        fail(Witness("strict_below_max", tuple(X[r]), lhs=FX[r], rhs=float(xmax[r])))

    Y = X.copy()
    Y[rows, I] += Cm
    FY = Fr(Y)
    bad = FY < FX - tol(scale, Cm)
    for r in np.nonzero(bad)[0][:1]:
        fail(Witness("monotonicity", tuple(X[r]), c=Cm[r], index=int(I[r]), lhs=FY[r], rhs=FX[r]))

    FP = Fr(X[rows[:, None], P])
    bad = np.abs(FP - FX) > tol(scale)
    for r in np.nonzero(bad)[0][:1]:
        fail(Witness("permutation", tuple(X[r]), perm=tuple(int(v) for v in P[r]), lhs=FP[r], rhs=FX[r]))

    YK = XK.copy()
    YK[:, 0] += CK
    gain = Fr(YK) - Fr(XK)
    margin = 1e-12 * (1.0 + np.maximum(np.max(np.abs(XK), axis=1), np.abs(CK)))
    bad = gain - CK * (1.0 - 1e-12) > margin
    for r in np.nonzero(bad)[0][:1]:
        fail(Witness("kappa", tuple(XK[r]), c=CK[r], lhs=gain[r], rhs=CK[r]))

    report.holds = holds
    report.witnesses = wit
    report.kappa = float(np.max(gain / CK))
    return report
