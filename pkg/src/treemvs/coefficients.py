"""Level-indexed coefficient schedules and the solvability classifier.

Convergence verdicts are analytic: they come from the family rule of the
schedule (or of its tail), never from inspecting partial sums. Partial
sums are reported alongside for information only.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from treemvs.errors import ConfigError, DomainError, ScheduleError

CONVERGES = "Converges"
DIVERGES = "Diverges"
UNDETERMINED = "Undetermined"

ANALYTIC = "Analytic"
NUMERIC_ONLY = "NumericOnly"


@dataclass(frozen=True)
class Schedule:
    """Base class. ``upper`` is the declared upper bound of emitted values."""

    def value_at(self, k):
        if k < 0:
            raise ValueError(f"level must be >= 0, got {k}")
        v = self._raw(k)
        if not (0.0 <= v <= self.upper):
            raise ScheduleError(f"{self!r} emits {v} at level {k}, outside [0, {self.upper}]")
        return v

    def values(self, n):
        """Values at levels 0..n-1 as an array."""
        return np.array([self.value_at(k) for k in range(n)], dtype=np.float64)

    def is_zero(self):
        return False

    def with_upper(self, upper):
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Schedule):
    c: float
    upper: float = 1.0

    def _raw(self, k):
        return float(self.c)

    def is_zero(self):
        return self.c == 0

    def with_upper(self, upper):
        return Constant(self.c, upper)

    def to_dict(self):
        return {"family": "constant", "c": self.c}


@dataclass(frozen=True)
class Geometric(Schedule):
    """``c * ratio**k``."""

    c: float
    ratio: float
    upper: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ScheduleError(f"geometric ratio must lie in (0, 1), got {self.ratio}")

    def _raw(self, k):
        return float(self.c) * float(self.ratio) ** k

    def is_zero(self):
        return self.c == 0

    def with_upper(self, upper):
        return Geometric(self.c, self.ratio, upper)

    def to_dict(self):
        return {"family": "geometric", "c": self.c, "ratio": self.ratio}


@dataclass(frozen=True)
class PowerLaw(Schedule):
    """``c / (k + 1)**s``."""

    c: float
    s: float
    upper: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ScheduleError(f"power-law exponent must be > 0, got {self.s}")

    def _raw(self, k):
        return float(self.c) / float(k + 1) ** self.s

    def is_zero(self):
        return self.c == 0

    def with_upper(self, upper):
        return PowerLaw(self.c, self.s, upper)

    def to_dict(self):
        return {"family": "powerlaw", "c": self.c, "s": self.s}


@dataclass(frozen=True)
class Explicit(Schedule):
    """Listed values for levels ``0..len(values)-1``, then ``tail`` evaluated
    at the absolute level. Without a tail the schedule is only defined on
    the list, and classification is Undetermined."""

    values_: tuple
    tail: Schedule = None
    upper: float = 1.0

    def __post_init__(self):
        if isinstance(self.tail, Explicit):
            raise ScheduleError("an explicit schedule's tail must be constant, geometric or powerlaw")

    def _raw(self, k):
        if k < len(self.values_):
            return float(self.values_[k])
        if self.tail is None:
            raise ScheduleError(f"explicit schedule has no value at level {k} and no tail rule")
        return self.tail._raw(k)

    def is_zero(self):
        return all(v == 0 for v in self.values_) and (self.tail is not None and self.tail.is_zero())

    def with_upper(self, upper):
        tail = self.tail.with_upper(upper) if self.tail is not None else None
        return Explicit(self.values_, tail, upper)

    def to_dict(self):
        d = {"family": "explicit", "values": list(self.values_)}
        if self.tail is not None:
            d["tail"] = self.tail.to_dict()
        return d


PROBE_LEVELS = 64


def schedule_from_dict(spec, path="", upper=1.0):
    """Build a schedule from its document form. The first ``PROBE_LEVELS``
    values are checked against the bounds so range errors carry ``path``."""
    sched = _schedule_from_dict(spec, path, upper)
    n = PROBE_LEVELS
    if isinstance(sched, Explicit) and sched.tail is None:
        n = len(sched.values_)
    try:
        sched.values(n)
    except ScheduleError as exc:
        raise ConfigError(path, str(exc)) from None
    return sched


def _schedule_from_dict(spec, path, upper):
    family = spec.get("family")
    try:
        if family == "constant":
            return Constant(float(spec["c"]), upper)
        if family == "geometric":
            return Geometric(float(spec["c"]), float(spec["ratio"]), upper)
        if family == "powerlaw":
            return PowerLaw(float(spec["c"]), float(spec["s"]), upper)
        if family == "explicit":
            tail = spec.get("tail")
            if tail is not None:
                tail = schedule_from_dict(tail, f"{path}/tail", upper)
            return Explicit(tuple(float(v) for v in spec["values"]), tail, upper)
    except KeyError as exc:
        raise ConfigError(f"{path}/{exc.args[0]}", "missing key") from None
    except ScheduleError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}/family", f"unknown schedule family {family!r}")


@dataclass
class SeriesVerdict:
    status: str
    partial_sums: list = field(default_factory=list)
    basis: str = ANALYTIC
    rule: str = ""

    def __post_init__(self):
        if self.basis == NUMERIC_ONLY and self.status != UNDETERMINED:
            raise ValueError("numeric-only verdicts must be Undetermined")


def _checkpoints(K):
    ks = []
    k = 1
    while k < K:
        ks.append(k)
        k *= 2
    ks.append(K)
    return ks


def _family_sum_rule(sched):
    """(status, rule) for sum_k sched(k), from the family alone."""
    if isinstance(sched, Constant):
        if sched.c == 0:
            return CONVERGES, "constant zero"
        return DIVERGES, "constant c > 0"
    if isinstance(sched, Geometric):
        return CONVERGES, "geometric ratio < 1"
    if isinstance(sched, PowerLaw):
        if sched.c == 0:
            return CONVERGES, "powerlaw with c = 0"
        if sched.s > 1:
            return CONVERGES, "powerlaw s > 1"
        return DIVERGES, "powerlaw s <= 1"
    raise TypeError(sched)


def coupling_sum_series(sched, K):
    """Classify ``sum_{k>=0} sched(k)``.

    Partial sums are reported as ``(n, sum of the first n terms)`` for
    n = 1, 2, 4, ..., K.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    total = 0.0
    sums = []
    marks = set(_checkpoints(K))
    for k in range(K):
        try:
            total += sched.value_at(k)
        except ScheduleError:
            if isinstance(sched, Explicit) and sched.tail is None:
                break
            raise
        if k + 1 in marks:
            sums.append((k + 1, total))
    if isinstance(sched, Explicit):
        if sched.tail is None:
            return SeriesVerdict(UNDETERMINED, sums, NUMERIC_ONLY, "explicit without tail")
        status, rule = _family_sum_rule(sched.tail)
        return SeriesVerdict(status, sums, ANALYTIC, f"tail: {rule}")
    status, rule = _family_sum_rule(sched)
    return SeriesVerdict(status, sums, ANALYTIC, rule)


def _ratio_terms(sched, K):
    """log of beta_j / (1 - beta_j) for j = 1..K (``-inf`` where beta_j = 0).
    Stops early at the end of a tail-less explicit list."""
    logs = []
    for j in range(1, K + 1):
        try:
            b = sched.value_at(j)
        except ScheduleError:
            if isinstance(sched, Explicit) and sched.tail is None:
                break
            raise
        if b >= 1.0:
            raise DomainError(f"beta = {b} at level {j}: beta/(1-beta) undefined")
        logs.append(-math.inf if b == 0 else math.log(b) - math.log1p(-b))
    return logs


def _family_ratio_rule(sched):
    if isinstance(sched, Constant):
        if sched.c >= 1.0:
            raise DomainError("constant beta = 1: beta/(1-beta) undefined")
        if sched.c < 0.5:
            return CONVERGES, "constant beta < 1/2 (ratio beta/(1-beta) < 1)"
        return DIVERGES, "constant beta >= 1/2 (terms do not tend to 0)"
    if isinstance(sched, (Geometric, PowerLaw)):
        # beta_k -> 0, so consecutive-term ratio beta_k/(1-beta_k) -> 0
        return CONVERGES, f"{type(sched).__name__.lower()} beta_k -> 0"
    raise TypeError(sched)


def beta_ratio_series(sched, K):
    """Classify ``sum_{k>=1} prod_{j=1..k} beta_j / (1 - beta_j)``.

    Products are accumulated as sums of logs. Level 0 is excluded: the root
    has no predecessor term.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    logs = _ratio_terms(sched, K)
    marks = set(_checkpoints(K))
    sums = []
    acc_log = 0.0
    total = 0.0
    for k, lg in enumerate(logs, start=1):
        acc_log += lg
        total += math.exp(acc_log) if acc_log > -math.inf else 0.0
        if k in marks:
            sums.append((k, total))
    if any(lg == -math.inf for lg in logs):
        return SeriesVerdict(CONVERGES, sums, ANALYTIC, "a beta_j vanishes: all later products are zero")
    if isinstance(sched, Explicit):
        if sched.tail is None:
            return SeriesVerdict(UNDETERMINED, sums, NUMERIC_ONLY, "explicit without tail")
        tail = sched.tail
        if tail.is_zero():
            return SeriesVerdict(CONVERGES, sums, ANALYTIC, "tail identically zero")
        if isinstance(tail, Geometric) and tail.c >= 1.0:
            raise DomainError("geometric tail with c >= 1 reaches beta = 1 at level 0")
        status, rule = _family_ratio_rule(tail)
        return SeriesVerdict(status, sums, ANALYTIC, f"tail: {rule}")
    if sched.is_zero():
        return SeriesVerdict(CONVERGES, sums, ANALYTIC, "identically zero")
    status, rule = _family_ratio_rule(sched)
    return SeriesVerdict(status, sums, ANALYTIC, rule)


def combine(statuses):
    statuses = list(statuses)
    if any(s == DIVERGES for s in statuses):
        return DIVERGES
    if all(s == CONVERGES for s in statuses):
        return CONVERGES
    return UNDETERMINED


SOLVABLE = "Solvable"
UNSOLVABLE = "Unsolvable"


@dataclass
class SolvabilityReport:
    coupling: list  # per component i: (verdict for sum_k sum_j p_ijk, [per-j verdicts])
    beta: list  # per component i: SeriesVerdict
    overall: str

    def lines(self):
        out = []
        for i, (v, _) in enumerate(self.coupling):
            out.append(f"coupling[{i}]  sum_k sum_j p_(i,j,k): {v.status} ({v.rule})")
        for i, v in enumerate(self.beta):
            out.append(f"beta[{i}]      sum_k prod beta/(1-beta): {v.status} ({v.rule})")
        out.append(f"overall: {self.overall}")
        return out


def classify_solvability(config, K=256):
    """Classify the coupling-row series and predecessor-weight series of every
    component; Solvable iff all converge."""
    coupling = []
    for i in range(config.N):
        per_j = [coupling_sum_series(config.coupling[i][j], K) for j in range(config.N) if j != i]
        status = combine(v.status for v in per_j) if per_j else CONVERGES
        basis = ANALYTIC if all(v.basis == ANALYTIC for v in per_j) else NUMERIC_ONLY
        if basis == NUMERIC_ONLY and status == CONVERGES:
            status = UNDETERMINED
        sums = _add_sums([v.partial_sums for v in per_j])
        rules = "; ".join(v.rule for v in per_j) or "single component"
        if status != UNDETERMINED:
            basis = ANALYTIC
        row = SeriesVerdict(status, sums, basis, rules)
        coupling.append((row, per_j))
    beta = [beta_ratio_series(config.beta[i], K) for i in range(config.N)]
    statuses = [row.status for row, _ in coupling] + [v.status for v in beta]
    total = combine(statuses)
    overall = {CONVERGES: SOLVABLE, DIVERGES: UNSOLVABLE, UNDETERMINED: UNDETERMINED}[total]
    return SolvabilityReport(coupling, beta, overall)


def _add_sums(lists):
    if not lists:
        return []
    n = min(len(s) for s in lists)
    return [(lists[0][t][0], sum(s[t][1] for s in lists)) for t in range(n)]


# --- infinite products for the constant-data oracle ------------------------

def _log1p_sum_tail(sched, start, sign, terms=40):
    """sum_{j>=start} log(1 + sign*p_j) for a family with closed-form power
    sums: log(1+sign*p) = sum_n (-1)^(n+1) (sign*p)^n / n."""
    total = 0.0
    for n in range(1, terms + 1):
        if isinstance(sched, Geometric):
            pn = sched.c ** n * sched.ratio ** (n * start) / (1.0 - sched.ratio ** n)
        elif isinstance(sched, PowerLaw):
            pn = sched.c ** n * float(zeta(n * sched.s, start + 1))
        else:
            raise TypeError(sched)
        term = (-1.0) ** (n + 1) * sign ** n * pn / n
        total += term
        if abs(term) < 1e-18 * max(1.0, abs(total)):
            break
    return total


def log_infinite_products(sched, explicit_terms=4096):
    """(log prod_{j>=0}(1 + p_j), log prod_{j>=0}(1 - p_j)) for a summable
    schedule. The first terms are summed directly with log1p; the remainder
    uses power-sum closed forms (Hurwitz zeta for power laws)."""
    status = coupling_sum_series(sched, 1).status
    if status != CONVERGES:
        raise DomainError(f"sum of p_k is not known to converge ({status}); products degenerate")
    base = sched.tail if isinstance(sched, Explicit) else sched
    J = explicit_terms
    if isinstance(sched, Explicit):
        J = max(J, len(sched.values_))
    p = sched.values(J)
    if np.any(p >= 1.0):
        k = int(np.argmax(p >= 1.0))
        raise DomainError(f"p_k = 1 at level {k}")
    log_plus = float(np.sum(np.log1p(p)))
    log_minus = float(np.sum(np.log1p(-p)))
    if isinstance(base, Constant):  # c == 0 here
        return log_plus, log_minus
    log_plus += _log1p_sum_tail(base, J, +1.0)
    log_minus += _log1p_sum_tail(base, J, -1.0)
    return log_plus, log_minus
