"""System configuration, boundary data, and the config-document format."""
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from treemvs.averaging import AveragingOperator
from treemvs.coefficients import Constant, schedule_from_dict
from treemvs.errors import ConfigError, DomainError, ScheduleError

DEFAULT_BETA_MAX = 0.99


# --- boundary data ---------------------------------------------------------

class BoundaryFunction:
    """A function [0, 1] -> R, vectorized over numpy arrays."""

    def __call__(self, t):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantBoundary(BoundaryFunction):
    c: float

    def __call__(self, t):
        return np.full(np.shape(t), float(self.c)) if np.ndim(t) else float(self.c)

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class PiecewiseConstant(BoundaryFunction):
    """``values[i]`` on ``[breakpoints[i-1], breakpoints[i])``; right-continuous."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        b = list(self.breakpoints)
        if len(self.values) != len(b) + 1:
            raise ValueError("piecewise_constant needs len(values) == len(breakpoints) + 1")
        if any(not 0.0 < x < 1.0 for x in b) or any(x >= y for x, y in zip(b, b[1:])):
            raise ValueError("breakpoints must be strictly increasing inside (0, 1)")

    def __call__(self, t):
        idx = np.searchsorted(np.asarray(self.breakpoints, dtype=np.float64), t, side="right")
        out = np.asarray(self.values, dtype=np.float64)[idx]
        return out if np.ndim(t) else float(out)

    def to_dict(self):
        return {"kind": "piecewise_constant", "breakpoints": list(self.breakpoints), "values": list(self.values)}


@dataclass(frozen=True)
class PiecewiseLinear(BoundaryFunction):
    """Linear interpolation through ``knots`` = ((t0, v0), ..., (1, vn)), t0 = 0."""

    knots: tuple

    def __post_init__(self):
        ts = [k[0] for k in self.knots]
        if len(ts) < 2 or ts[0] != 0.0 or ts[-1] != 1.0:
            raise ValueError("piecewise_linear knots must start at t=0 and end at t=1")
        if any(x >= y for x, y in zip(ts, ts[1:])):
            raise ValueError("piecewise_linear knots must be strictly increasing")

    def __call__(self, t):
        ts = np.array([k[0] for k in self.knots], dtype=np.float64)
        vs = np.array([k[1] for k in self.knots], dtype=np.float64)
        out = np.interp(t, ts, vs)
        return out if np.ndim(t) else float(out)

    def to_dict(self):
        return {"kind": "piecewise_linear", "knots": [list(k) for k in self.knots]}


@dataclass(frozen=True)
class Polynomial(BoundaryFunction):
    """``sum_i coefficients[i] * t**i``."""

    coefficients: tuple

    def __call__(self, t):
        out = np.polynomial.polynomial.polyval(t, np.asarray(self.coefficients, dtype=np.float64))
        return out if np.ndim(t) else float(out)

    def to_dict(self):
        return {"kind": "polynomial", "coefficients": list(self.coefficients)}


def boundary_from_dict(spec, path=""):
    kind = spec.get("kind")
    try:
        if kind == "constant":
            return ConstantBoundary(float(spec["c"]))
        if kind == "piecewise_constant":
            return PiecewiseConstant(tuple(map(float, spec["breakpoints"])), tuple(map(float, spec["values"])))
        if kind == "piecewise_linear":
            return PiecewiseLinear(tuple((float(a), float(b)) for a, b in spec["knots"]))
        if kind == "polynomial":
            return Polynomial(tuple(map(float, spec["coefficients"])))
    except KeyError as exc:
        raise ConfigError(f"{path}/{exc.args[0]}", "missing key") from None
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}/kind", f"unknown boundary kind {kind!r}")


@dataclass(frozen=True)
class BoundaryData:
    functions: tuple

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, i):
        return self.functions[i]

    @classmethod
    def constants(cls, *cs):
        return cls(tuple(ConstantBoundary(float(c)) for c in cs))

    def leaf_values(self, m, L):
        """Boundary data sampled at psi of every level-L vertex, shape (N, m**L)."""
        t = np.arange(m ** L, dtype=np.float64) / float(m ** L)
        return np.stack([np.broadcast_to(np.asarray(f(t), dtype=np.float64), t.shape) for f in self.functions])


# --- system configuration --------------------------------------------------

@dataclass
class LevelTables:
    """Per-level coefficient arrays for levels 0..L-1.

    ``beta[i, k]`` is the predecessor weight (0 at the root), ``P[k, i, j]``
    the coupling, ``G[k]`` the nonnegative matrix that maps the uncoupled
    per-component updates to the coupled ones, ``(I - P_k)^-1 diag(1 - sum_j P_k)``.
    """

    beta: np.ndarray
    P: np.ndarray
    G: np.ndarray


@dataclass
class SystemConfig:
    m: int
    operators: list
    beta: list
    coupling: list
    beta_max: float = DEFAULT_BETA_MAX
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 2:
            raise ConfigError("/m", f"branching factor must be >= 2, got {self.m}")
        N = len(self.operators)
        if N < 1:
            raise ConfigError("/components", "need at least one component")
        if len(self.beta) != N:
            raise ConfigError("/components", "one beta schedule per component")
        if len(self.coupling) != N or any(len(row) != N for row in self.coupling):
            raise ConfigError("/coupling", f"coupling must be {N}x{N}")
        for i, op in enumerate(self.operators):
            if op.m != self.m:
                raise ConfigError(f"/components/{i}/operator", f"arity {op.m} != m = {self.m}")
        for i in range(N):
            if not self.coupling[i][i].is_zero():
                raise ConfigError(f"/coupling/{i}/{i}", "diagonal coupling must be the zero schedule")
        if not 0.0 <= self.beta_max < 1.0:
            raise ConfigError("/beta_max", "beta_max must lie in [0, 1)")
        self.beta = [b.with_upper(self.beta_max) for b in self.beta]

    @property
    def N(self):
        return len(self.operators)

    @classmethod
    def build(cls, m, operators, beta=None, coupling=None, beta_max=DEFAULT_BETA_MAX):
        """Convenience constructor; omitted schedules default to zero."""
        N = len(operators)
        zero = Constant(0.0)
        if beta is None:
            beta = [zero] * N
        if coupling is None:
            coupling = [[zero] * N for _ in range(N)]
        return cls(m, list(operators), list(beta), [list(r) for r in coupling], beta_max)

    @classmethod
    def two_board(cls, m, p, q, beta_u=None, beta_v=None, F=None, G=None):
        """The two-component system with couplings p (u -> v) and q (v -> u);
        defaults to midrange for u and the mean for v."""
        F = F or AveragingOperator("midrange", m)
        G = G or AveragingOperator("mean", m)
        zero = Constant(0.0)
        return cls.build(m, [F, G], [beta_u or zero, beta_v or zero], [[zero, p], [q, zero]])

    def validate(self, L):
        """Check the coefficient constraints on levels 0..L-1."""
        N = self.N
        for k in range(L):
            rows = np.zeros(N)
            for i in range(N):
                try:
                    self.beta[i].value_at(k)
                except ScheduleError as exc:
                    raise ConfigError(f"/components/{i}/beta", str(exc)) from None
                for j in range(N):
                    try:
                        rows[i] += self.coupling[i][j].value_at(k)
                    except ScheduleError as exc:
                        raise ConfigError(f"/coupling/{i}/{j}", str(exc)) from None
            if N >= 3 and np.any(rows >= 1.0):
                i = int(np.argmax(rows >= 1.0))
                raise ConfigError(f"/coupling/{i}", f"row sum {rows[i]} >= 1 at level {k}")
            if N == 2 and rows[0] == 1.0 and rows[1] == 1.0:
                raise ConfigError("/coupling", f"both couplings equal 1 at level {k}")

    def tables(self, L):
        self.validate(L)
        N = self.N
        beta = np.zeros((N, L))
        P = np.zeros((L, N, N))
        for i in range(N):
            beta[i] = self.beta[i].values(L)
            for j in range(N):
                if j != i:
                    P[:, i, j] = self.coupling[i][j].values(L)
        if L > 0:
            beta[:, 0] = 0.0  # root: no predecessor term
        G = np.empty_like(P)
        eye = np.eye(N)
        for k in range(L):
            D = np.diag(1.0 - P[k].sum(axis=1))
            try:
                Gk = np.linalg.solve(eye - P[k], D)
            except np.linalg.LinAlgError:
                raise DomainError(f"singular coupling block at level {k}") from None
            G[k] = np.maximum(Gk, 0.0)
        return LevelTables(beta, P, G)

    def is_directed(self, L):
        return all(not np.any(self.beta[i].values(L)[1:]) for i in range(self.N))

    def to_dict(self, boundary=None):
        comps = []
        for i in range(self.N):
            c = {"operator": self.operators[i].to_dict(), "beta": self.beta[i].to_dict()}
            if boundary is not None:
                c["boundary"] = boundary[i].to_dict()
            comps.append(c)
        doc = {
            "m": self.m,
            "components": comps,
            "coupling": [[s.to_dict() for s in row] for row in self.coupling],
            "beta_max": self.beta_max,
        }
        doc.update(self.extras)
        return doc


# --- document parsing ------------------------------------------------------

_SCHEDULE = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["constant", "geometric", "powerlaw", "explicit"]},
        "c": {"type": "number", "minimum": 0},
        "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "s": {"type": "number", "exclusiveMinimum": 0},
        "values": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "tail": {"$ref": "#/$defs/schedule"},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {
        "schedule": _SCHEDULE,
        "operator": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["pmean", "midrange_mean", "median_mean", "median_midrange", "mean", "midrange"]},
                "p": {"type": "number", "exclusiveMinimum": 1},
                "alpha": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
            "additionalProperties": False,
        },
        "boundary": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "piecewise_constant", "piecewise_linear", "polynomial"]},
                "c": {"type": "number"},
                "breakpoints": {"type": "array", "items": {"type": "number"}},
                "values": {"type": "array", "items": {"type": "number"}},
                "knots": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
                "coefficients": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "additionalProperties": False,
        },
    },
    "type": "object",
    "required": ["m", "components", "coupling"],
    "properties": {
        "m": {"type": "integer", "minimum": 2},
        "components": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["operator", "beta", "boundary"],
                "properties": {
                    "operator": {"$ref": "#/$defs/operator"},
                    "beta": {"$ref": "#/$defs/schedule"},
                    "boundary": {"$ref": "#/$defs/boundary"},
                },
                "additionalProperties": False,
            },
        },
        "coupling": {"type": "array", "items": {"type": "array", "items": {"$ref": "#/$defs/schedule"}}},
        "depth": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "beta_max": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "max_sweeps": {"type": "integer", "minimum": 1},
        "max_nodes": {"type": "integer", "minimum": 1},
        "method": {"enum": ["exact", "fixed-point", "auto"]},
        "depths": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "seed": {"type": "integer", "minimum": 0},
        "episodes": {"type": "integer", "minimum": 1},
        "start": {"type": "string"},
        "board": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

_RUN_KEYS = ("depth", "tol", "max_sweeps", "max_nodes", "method", "depths", "seed", "episodes", "start", "board")


def _json_path(error):
    return "/" + "/".join(str(p) for p in error.absolute_path)


def parse_config(doc):
    """Validate a config document; returns ``(SystemConfig, BoundaryData)``.

    Run parameters (depth, tol, seed, ...) are kept in ``config.extras``.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_json_path(err), err.message)
    m = int(doc["m"])
    beta_max = float(doc.get("beta_max", DEFAULT_BETA_MAX))
    ops, betas, bnds = [], [], []
    for i, comp in enumerate(doc["components"]):
        base = f"/components/{i}"
        ops.append(AveragingOperator.from_dict(comp["operator"], m, f"{base}/operator"))
        betas.append(schedule_from_dict(comp["beta"], f"{base}/beta", beta_max))
        bnds.append(boundary_from_dict(comp["boundary"], f"{base}/boundary"))
    N = len(ops)
    coupling = doc["coupling"]
    if len(coupling) != N or any(len(row) != N for row in coupling):
        raise ConfigError("/coupling", f"coupling must be an {N}x{N} array")
    sched = [[schedule_from_dict(s, f"/coupling/{i}/{j}") for j, s in enumerate(row)] for i, row in enumerate(coupling)]
    extras = {k: doc[k] for k in _RUN_KEYS if k in doc}
    cfg = SystemConfig(m, ops, betas, sched, beta_max, extras)
    return cfg, BoundaryData(tuple(bnds))


def load_config(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"not valid JSON: {exc}") from None
    return parse_config(doc)


def config_hull(boundary, m, L):
    leaf = boundary.leaf_values(m, L)
    return float(leaf.min()), float(leaf.max())

