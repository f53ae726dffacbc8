"""Monte Carlo simulation of the multi-board tree game.

A token sits on vertex x of board i. At level k it jumps to board j with
probability p_ijk, steps back to the predecessor with probability
(1 - sum_j p_ijk) beta_ik, and otherwise *plays*: on a tug-of-war board
(midrange operator) a fair coin picks which player chooses the successor; on
a random-walk board (mean operator) the successor is uniform. The game ends
at level L, paying f_i(psi(x)) for the board it ends on.

Every transition consumes exactly one uniform draw from a counter-based
stream, so an episode is a pure function of (master seed, episode number)
and the scalar reference, the numpy backend, and the compiled backend all
replay the same episodes.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from treemvs import _backend, solver, tree
from treemvs.errors import PreconditionError, RunawayEpisodeError, TerminalStateError

TUG_OF_WAR = 0
RANDOM_WALK = 1
STEP_CAP = 10_000_000

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class GameState:
    node: tuple
    board: int  # 0-based component index
    steps: int = 0

    @property
    def level(self):
        return len(self.node)


@dataclass
class Strategy:
    """Successor choices of both players at every interior vertex.

    ``argmax[i, v]`` / ``argmin[i, v]`` are digits chosen on board i at flat
    vertex v by the maximizing / minimizing player.
    """

    m: int
    L: int
    argmax: np.ndarray
    argmin: np.ndarray
    offsets: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.offsets is None:
            self.offsets = tree.level_offsets(self.m, self.L)

    def choose(self, state, maximizer):
        v = self.offsets[state.level] + tree.flat_index(state.node, self.m)
        table = self.argmax if maximizer else self.argmin
        return int(table[state.board, v])


def greedy_strategy(fld):
    """Maximizer takes the successor with the largest value of the board's
    own component, minimizer the smallest; ties go to the smallest digit."""
    m, L, off = fld.m, fld.L, fld.offsets
    n_int = off[L]
    amax = np.empty((fld.N, n_int), dtype=np.int64)
    amin = np.empty((fld.N, n_int), dtype=np.int64)
    for k in range(L):
        kids = fld.values[:, off[k + 1]:off[k + 2]].reshape(fld.N, -1, m)
        amax[:, off[k]:off[k + 1]] = np.argmax(kids, axis=2)
        amin[:, off[k]:off[k + 1]] = np.argmin(kids, axis=2)
    return Strategy(m, L, amax, amin, off)


def mechanisms(config):
    """Play mechanism of each board, derived from its averaging operator."""
    out = []
    for i, op in enumerate(config.operators):
        if op.kind == "midrange":
            out.append(TUG_OF_WAR)
        elif op.kind == "mean":
            out.append(RANDOM_WALK)
        else:
            raise PreconditionError(f"board {i + 1}: operator {op.kind!r} has no game interpretation")
    return np.array(out, dtype=np.int64)


# --- transition law --------------------------------------------------------

def _level_probs(config, i, k):
    """(jump probabilities to the other boards, predecessor, per-play-slot)."""
    N = config.N
    jumps = [(j, config.coupling[i][j].value_at(k)) for j in range(N) if j != i]
    stay = 1.0 - sum(p for _, p in jumps)
    beta = config.beta[i].value_at(k) if k > 0 else 0.0
    return jumps, stay * beta, stay * (1.0 - beta)


@dataclass(frozen=True)
class Outcome:
    probability: float
    kind: str  # "jump", "predecessor", "max", "min", or "successor"
    state: GameState = None  # None for unresolved coin outcomes


def step_distribution(config, state, L, strategy=None):
    """Exact one-step law from ``state`` (zero-probability outcomes omitted).

    Tug-of-war coin outcomes are resolved to successors when a strategy is
    given; otherwise their ``state`` is None.
    """
    k = state.level
    if k >= L:
        raise TerminalStateError(f"{tree.format_node(state.node)} is terminal at depth {L}")
    mech = mechanisms(config)[state.board]
    jumps, pred, play = _level_probs(config, state.board, k)
    nxt = state.steps + 1
    out = [Outcome(p, "jump", GameState(state.node, j, nxt)) for j, p in jumps if p > 0]
    if pred > 0:
        out.append(Outcome(pred, "predecessor", GameState(tree.predecessor(state.node), state.board, nxt)))
    if play > 0:
        if mech == TUG_OF_WAR:
            for label, maximizer in (("max", True), ("min", False)):
                s = None
                if strategy is not None:
                    s = GameState(state.node + (strategy.choose(state, maximizer),), state.board, nxt)
                out.append(Outcome(0.5 * play, label, s))
        else:
            share = play / config.m
            out.extend(Outcome(share, "successor", GameState(y, state.board, nxt))
                       for y in tree.successors(state.node, config.m))
    return out


def threshold_table(config, L):
    """Cumulative transition thresholds, shape (N, L, N + m), plus the
    jump-target table (N, N - 1).

    Slots 0..N-2 jump to ``targets[i, c]``, slot N-1 steps to the
    predecessor, slots N.. play (tug-of-war: slot N is the maximizer's move,
    N+1 the minimizer's; random walk: slot N+d is digit d). A draw u selects
    the first slot whose threshold exceeds u; the last live slot and all
    unused slots hold +inf so every draw lands somewhere.
    """
    N, m = config.N, config.m
    mech = mechanisms(config)
    width = N + m
    th = np.full((N, L, width), np.inf)
    targets = np.zeros((N, max(N - 1, 1)), dtype=np.int64)
    for i in range(N):
        others = [j for j in range(N) if j != i]
        targets[i, : len(others)] = others
        nplay = 2 if mech[i] == TUG_OF_WAR else m
        for k in range(L):
            jumps, pred, play = _level_probs(config, i, k)
            probs = [p for _, p in jumps] + [pred] + [play / nplay] * nplay
            acc = 0.0
            for s, p in enumerate(probs):
                acc += p
                th[i, k, s] = acc
            # pin the last live slot so roundoff never leaves a gap below 1
            last = max(s for s, p in enumerate(probs) if p > 0)
            th[i, k, last:] = np.inf
    return th, targets


# --- random stream ---------------------------------------------------------

def _mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def episode_key(seed, episode):
    base = _mix((seed + _GAMMA) & _MASK)
    return _mix((base + (episode + 1) * _GAMMA) & _MASK)


def uniform(key, t):
    return (_mix((key + (t + 1) * _GAMMA) & _MASK) >> 11) * (1.0 / 9007199254740992.0)


# --- simulation ------------------------------------------------------------

def simulate_episode(config, boundary, start, strategy, L, seed, episode=0, step_cap=STEP_CAP):
    """Play one episode with plain Python arithmetic.

    Returns ``(payoff, trace)``; the trace lists every visited state,
    starting with ``start``. Episode ``e`` of seed ``s`` here is the same
    episode as in :func:`estimate_value`.
    """
    if start.level > L:
        raise PreconditionError(f"start level {start.level} below depth {L}")
    m = config.m
    th, targets = threshold_table(config, L)
    mech = mechanisms(config)
    N = config.N
    key = episode_key(seed, episode)
    node, board = tuple(start.node), start.board
    trace = [GameState(node, board, 0)]
    t = 0
    while len(node) < L:
        if t >= step_cap:
            raise RunawayEpisodeError(f"episode {episode} exceeded {step_cap} steps")
        u = uniform(key, t)
        row = th[board, len(node)]
        c = int(np.argmax(u < row))
        if c < N - 1:
            board = int(targets[board, c])
        elif c == N - 1:
            node = tree.predecessor(node)
        else:
            slot = c - N
            if mech[board] == TUG_OF_WAR:
                digit = strategy.choose(GameState(node, board), slot == 0)
            else:
                digit = slot
            node = node + (digit,)
        t += 1
        trace.append(GameState(node, board, t))
    payoff = float(boundary[board](np.float64(tree.psi(node, m))))
    return payoff, trace


def run_episodes(config, boundary, start, strategy, L, seed, episodes, backend=None, step_cap=STEP_CAP):
    """Payoffs of episodes 0..episodes-1 in episode order."""
    if start.level > L:
        raise PreconditionError(f"start level {start.level} below depth {L}")
    th, targets = threshold_table(config, L)
    off = tree.level_offsets(config.m, L)
    leaf = np.ascontiguousarray(boundary.leaf_values(config.m, L))
    kern = _backend.get(backend)
    payoff, steps = kern.simulate(
        int(seed), np.arange(episodes, dtype=np.int64), start.level,
        int(tree.flat_index(start.node, config.m)), int(start.board), L, config.m,
        np.ascontiguousarray(th), targets, mechanisms(config),
        np.ascontiguousarray(strategy.argmax), np.ascontiguousarray(strategy.argmin),
        off, leaf, step_cap, _backend.threads())
    if np.any(steps < 0):
        bad = int(np.argmax(steps < 0))
        raise RunawayEpisodeError(f"episode {bad} exceeded {step_cap} steps")
    return payoff


def aggregate(x):
    """(mean, stderr) with exactly rounded sums, independent of order."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    x0 = float(x[0])
    mean = x0 + math.fsum((x - x0).tolist()) / n
    if n < 2:
        return mean, float("nan")
    var = math.fsum(((x - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var) / math.sqrt(n)


@dataclass
class ValueEstimate:
    mean: float
    stderr: float
    episodes: int
    seed: int
    start: GameState
    L: int
    solver_value: float = float("nan")

    @property
    def z_score(self):
        diff = self.mean - self.solver_value
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def within(self, bands=4.0):
        return abs(self.mean - self.solver_value) <= bands * self.stderr


def estimate_value(config, boundary, start, L, episodes, seed, method="auto", tol=solver.DEFAULT_TOL,
                   backend=None, strategy=None, fld=None, max_values=solver.DEFAULT_MAX_VALUES):
    """Solve at depth L, play ``episodes`` episodes with the greedy strategy
    (or ``strategy``), and compare the mean payoff to the solved value."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    mechanisms(config)
    if fld is None:
        fld = solver.solve(config, boundary, L, method=method, tol=tol, backend=backend, max_values=max_values)
    if strategy is None:
        strategy = greedy_strategy(fld)
    payoff = run_episodes(config, boundary, start, strategy, L, seed, episodes, backend=backend)
    mean, se = aggregate(payoff)
    return ValueEstimate(mean, se, episodes, seed, start, L, fld.value(start.node, start.board))


# --- CSV -------------------------------------------------------------------

ESTIMATE_HEADER = ("start_node", "start_board", "L", "episodes", "mean", "stderr", "solver_value", "z_score")
TRACE_HEADER = ("step", "node", "board", "level")


def _g(x):
    return "%.17g" % x


def write_estimates(path, estimates):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        for e in estimates:
            w.writerow([tree.format_node(e.start.node), e.start.board + 1, e.L, e.episodes,
                        _g(e.mean), _g(e.stderr), _g(e.solver_value), _g(e.z_score)])


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for s in trace:
            w.writerow([s.steps, tree.format_node(s.node), s.board + 1, s.level])
