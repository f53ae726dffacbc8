"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used
when the extension is not built or ``TREE_MVS_BACKEND=python`` is set.
Sweeps are vectorized across the vertices of a level; episode simulation
advances all episodes in lockstep.
"""
import numpy as np

from treemvs.averaging import KINDS, AveragingOperator, evaluate_rows

NAME = "python"

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _ops(codes, alpha, p, m):
    return [AveragingOperator(KINDS[int(c)], m, alpha=float(a), p=float(q)) for c, a, q in zip(codes, alpha, p)]


def sweep(src, dst, offsets, L, m, op_codes, op_alpha, op_p, beta, G, gauss_seidel, nthreads=1):
    """One pass over levels L-1..0 writing ``dst`` from ``src``.

    Children are read from ``dst`` when ``gauss_seidel`` (already updated,
    levels are visited bottom-up) and from ``src`` otherwise; the
    predecessor is always read from ``src``. ``dst`` must hold the boundary
    row at level L. Returns the sup-norm change over interior vertices.
    """
    N = src.shape[0]
    ops = _ops(op_codes, op_alpha, op_p, m)
    child_src = dst if gauss_seidel else src
    change = 0.0
    for k in range(L - 1, -1, -1):
        a, b = offsets[k], offsets[k + 1]
        n = b - a
        ca, cb = offsets[k + 1], offsets[k + 2]
        upd = np.empty((N, n))
        for i in range(N):
            F = evaluate_rows(ops[i], child_src[i, ca:cb].reshape(n, m))
            bk = beta[i, k]
            if k > 0 and bk != 0.0:
                par = np.repeat(src[i, offsets[k - 1]:a], m)
                v = (1.0 - bk) * F + bk * par
                upd[i] = np.minimum(np.maximum(v, np.minimum(F, par)), np.maximum(F, par))
            else:
                upd[i] = F
        Gk = G[k]
        lo = upd.min(axis=0)
        hi = upd.max(axis=0)
        for i in range(N):
            acc = Gk[i, 0] * upd[0]
            for j in range(1, N):
                acc = acc + Gk[i, j] * upd[j]
            new = np.minimum(np.maximum(acc, lo), hi)
            change = max(change, float(np.max(np.abs(new - src[i, a:b]))) if n else 0.0)
            dst[i, a:b] = new
    return change


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def episode_keys(seed, episodes):
    base = _mix(np.array([seed & MASK], dtype=np.uint64) + np.uint64(GAMMA))[0]
    e = np.asarray(episodes, dtype=np.uint64)
    return _mix(base + (e + np.uint64(1)) * np.uint64(GAMMA))


def uniforms(keys, t):
    """The t-th uniform draw in [0, 1) of each episode stream."""
    z = _mix(keys + np.uint64((t + 1) * GAMMA & MASK))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def simulate(seed, episodes, start_level, start_index, start_board, L, m, thresholds, targets,
             mechanism, argmax, argmin, offsets, leaf, step_cap, nthreads=1):
    """Play every episode to level L; returns (payoffs, steps).

    ``steps[e] == -1`` flags an episode that hit ``step_cap``.
    """
    episodes = np.asarray(episodes, dtype=np.int64)
    n = episodes.size
    keys = episode_keys(seed, episodes)
    lev = np.full(n, start_level, dtype=np.int64)
    idx = np.full(n, start_index, dtype=np.int64)
    brd = np.full(n, start_board, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    payoff = np.zeros(n)
    N = thresholds.shape[0]
    alive = lev < L
    done = ~alive
    payoff[done] = leaf[brd[done], idx[done]]
    t = 0
    while alive.any():
        if t >= step_cap:
            steps[alive] = -1
            break
        act = np.nonzero(alive)[0]
        u = uniforms(keys[act], t)
        b, k, j = brd[act], lev[act], idx[act]
        th = thresholds[b, k]  # (n_act, K)
        cat = np.argmax(u[:, None] < th, axis=1)
        # jumps
        jm = cat < N - 1
        if jm.any():
            brd[act[jm]] = targets[b[jm], cat[jm]]
        # predecessor
        pm = cat == N - 1
        if pm.any():
            lev[act[pm]] = k[pm] - 1
            idx[act[pm]] = j[pm] // m
        # play
        play = cat >= N
        if play.any():
            slot = cat[play] - N
            bp, kp, jp = b[play], k[play], j[play]
            node = offsets[kp] + jp
            tow = mechanism[bp] == 0
            digit = np.where(
                tow,
                np.where(slot == 0, argmax[bp, node], argmin[bp, node]),
                slot,
            ).astype(np.int64)
            lev[act[play]] = kp + 1
            idx[act[play]] = jp * m + digit
        steps[act] += 1
        t += 1
        ended = act[lev[act] >= L]
        payoff[ended] = leaf[brd[ended], idx[ended]]
        alive[ended] = False
    return payoff, steps
