import math

import numpy as np
import pytest

from treemvs import game, solver, tree
from treemvs.averaging import AveragingOperator, pmean
from treemvs.coefficients import Constant, Geometric
from treemvs.config import BoundaryData, Polynomial, SystemConfig
from treemvs.errors import PreconditionError, RunawayEpisodeError, TerminalStateError

GEO = Geometric(0.5, 0.5)
ROOT0 = game.GameState((), 0)
ROOT1 = game.GameState((), 1)


def test_random_walk_board_uniform():
    cfg = SystemConfig.two_board(3, Constant(0.0), Constant(0.0))
    dist = game.step_distribution(cfg, ROOT1, 4)
    assert [o.kind for o in dist] == ["successor"] * 3
    assert all(o.probability == pytest.approx(1 / 3) for o in dist)
    assert [o.state.node for o in dist] == [(0,), (1,), (2,)]


def test_certain_jump():
    cfg = SystemConfig.two_board(2, Constant(1.0), Constant(0.0))
    dist = game.step_distribution(cfg, game.GameState((1,), 0), 4)
    assert len(dist) == 1 and dist[0].kind == "jump" and dist[0].probability == 1.0
    assert dist[0].state.node == (1,) and dist[0].state.board == 1


def test_root_has_no_predecessor_outcome(demo):
    cfg, _ = demo
    kinds = {o.kind for o in game.step_distribution(cfg, ROOT0, 5)}
    assert "predecessor" not in kinds
    kinds = {o.kind for o in game.step_distribution(cfg, game.GameState((0,), 0), 5)}
    assert "predecessor" in kinds


def test_terminal_state_has_no_distribution(demo):
    cfg, _ = demo
    with pytest.raises(TerminalStateError):
        game.step_distribution(cfg, game.GameState((0, 1), 0), 2)


def test_operator_without_game():
    cfg = SystemConfig.two_board(2, GEO, GEO, F=pmean(2, 3.0))
    with pytest.raises(PreconditionError):
        game.mechanisms(cfg)


def test_probabilities_sum_to_one_everywhere(demo):
    cfg, _ = demo
    L = 5
    for k in range(L):
        for node in tree.iter_level(2, k):
            for b in range(2):
                probs = [o.probability for o in game.step_distribution(cfg, game.GameState(node, b), L)]
                assert min(probs) > 0
                assert abs(math.fsum(probs) - 1.0) <= 1e-15


def test_threshold_table_matches_distribution(demo):
    cfg, _ = demo
    th, targets = game.threshold_table(cfg, 6)
    for b in range(2):
        for k in range(6):
            dist = game.step_distribution(cfg, game.GameState((0,) * k, b), 6)
            finite = np.unique(th[b, k][np.isfinite(th[b, k])])  # zero-width slots repeat
            cum = np.cumsum([o.probability for o in dist])[:-1]
            np.testing.assert_allclose(finite, cum, atol=1e-15)


def test_greedy_strategy_ties_and_order():
    cfg = SystemConfig.build(3, [AveragingOperator("midrange", 3)])
    fld = solver.solve_directed_exact(cfg, BoundaryData((Polynomial((0.0, 1.0)),)), 3)
    st = game.greedy_strategy(fld)
    assert np.all(st.argmax == 2) and np.all(st.argmin == 0)
    flat = solver.solve_directed_exact(cfg, BoundaryData.constants(0.5), 3)
    st = game.greedy_strategy(flat)
    assert np.all(st.argmax == 0) and np.all(st.argmin == 0)


def test_greedy_strategy_reproduces_extremal_successors(directed):
    cfg, bd = directed
    bd = BoundaryData((Polynomial((0.0, 1.0, -1.0)), Polynomial((1.0, -1.0))))
    fld = solver.solve_directed_exact(cfg, bd, 6)
    st = game.greedy_strategy(fld)
    for k in range(6):
        for node in tree.iter_level(2, k):
            kids = [fld.value(y, 0) for y in tree.successors(node, 2)]
            s = game.GameState(node, 0)
            assert kids[st.choose(s, True)] == max(kids)
            assert kids[st.choose(s, False)] == min(kids)


def test_value_iteration_consistency(demo):
    cfg, bd = demo
    L = 6
    fld = solver.solve_fixed_point(cfg, bd, L)
    st = game.greedy_strategy(fld)
    for k in range(L):
        for node in tree.iter_level(2, k):
            for b in range(2):
                s = game.GameState(node, b)
                ev = sum(o.probability * fld.value(o.state.node, o.state.board)
                         for o in game.step_distribution(cfg, s, L, st))
                assert ev == pytest.approx(fld.value(node, b), abs=1e-11)


def test_episode_payoffs_and_traces(directed):
    cfg, _ = directed
    bd = BoundaryData.constants(0.7, 0.7)
    st = game.greedy_strategy(solver.solve(cfg, bd, 5))
    for e in range(20):
        pay, trace = game.simulate_episode(cfg, bd, ROOT0, st, 5, seed=3, episode=e)
        assert pay == 0.7
        assert trace[0].node == () and trace[-1].level == 5
        assert all(s.level <= 5 for s in trace)
        for a, b in zip(trace, trace[1:]):
            assert b.steps == a.steps + 1


def test_single_step_episode():
    cfg = SystemConfig.two_board(2, Constant(0.0), Constant(0.0))
    bd = BoundaryData((Polynomial((0.0, 1.0)), Polynomial((0.0, 1.0))))
    st = game.greedy_strategy(solver.solve(cfg, bd, 1))
    pays = {game.simulate_episode(cfg, bd, ROOT0, st, 1, seed=0, episode=e)[0] for e in range(50)}
    assert pays == {0.0, 0.5}


def test_scalar_reference_matches_batch(demo):
    cfg, bd = demo
    st = game.greedy_strategy(solver.solve(cfg, bd, 6))
    start = game.GameState((1,), 1)
    batch = game.run_episodes(cfg, bd, start, st, 6, seed=99, episodes=40)
    ref = [game.simulate_episode(cfg, bd, start, st, 6, seed=99, episode=e)[0] for e in range(40)]
    np.testing.assert_array_equal(batch, ref)


def test_runaway_episode():
    cfg = SystemConfig.two_board(2, Constant(0.0), Constant(0.0), Constant(0.98), Constant(0.98))
    bd = BoundaryData.constants(0.0, 1.0)
    st = game.greedy_strategy(solver.solve(cfg, bd, 6, tol=1e-3))
    with pytest.raises(RunawayEpisodeError):
        game.simulate_episode(cfg, bd, ROOT0, st, 6, seed=1, step_cap=50)
    with pytest.raises(RunawayEpisodeError):
        game.run_episodes(cfg, bd, ROOT0, st, 6, seed=1, episodes=10, step_cap=50)


def test_constant_boundary_estimate(directed):
    cfg, _ = directed
    est = game.estimate_value(cfg, BoundaryData.constants(0.25, 0.25), ROOT0, 6, 500, seed=1)
    assert est.mean == 0.25 and est.stderr == 0.0 and est.z_score == 0.0


def test_random_walk_expectation_half():
    cfg = SystemConfig.two_board(2, Constant(0.0), Constant(0.0))
    bd = BoundaryData((Polynomial((0.0, 1.0)), Polynomial((0.0, 1.0))))
    est = game.estimate_value(cfg, bd, ROOT1, 8, 20000, seed=4)
    assert est.solver_value == pytest.approx(0.5 - 2.0 ** -9)
    assert est.within(4.0)


def test_estimate_deterministic(directed):
    cfg, bd = directed
    a = game.estimate_value(cfg, bd, ROOT0, 6, 3000, seed=17)
    b = game.estimate_value(cfg, bd, ROOT0, 6, 3000, seed=17)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    c = game.estimate_value(cfg, bd, ROOT0, 6, 3000, seed=18)
    assert c.mean != a.mean


def test_aggregate_order_independent(rng):
    x = rng.normal(size=1001) * 1e3 + 1e8
    m1, s1 = game.aggregate(x)
    perm = rng.permutation(x.size)
    y = x[perm]
    y[[0, 1]] = y[[1, 0]]
    m2, s2 = game.aggregate(np.sort(x))
    assert m1 == pytest.approx(np.mean(x), rel=1e-15)
    assert s1 == pytest.approx(np.std(x, ddof=1) / math.sqrt(x.size), rel=1e-12)
    assert abs(m1 - m2) <= 1e-7  # exact sums; only the x0 reference differs


@pytest.mark.slow
def test_suboptimal_minimizer_does_not_gain(directed):
    cfg, bd = directed
    L = 8
    fld = solver.solve(cfg, bd, L)
    greedy = game.greedy_strategy(fld)
    lazy = game.Strategy(2, L, greedy.argmax, 1 - greedy.argmin, greedy.offsets)
    est = game.estimate_value(cfg, bd, ROOT0, L, 100_000, seed=5, strategy=lazy, fld=fld)
    assert est.mean >= est.solver_value - 4 * est.stderr


def test_csv_writers(tmp_path, directed):
    cfg, bd = directed
    est = game.estimate_value(cfg, bd, ROOT0, 4, 100, seed=1)
    game.write_estimates(tmp_path / "e.csv", [est])
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "start_node,start_board,L,episodes,mean,stderr,solver_value,z_score"
    assert lines[1].startswith("@,1,4,100,")
    _, trace = game.simulate_episode(cfg, bd, ROOT0, game.greedy_strategy(solver.solve(cfg, bd, 4)), 4, 1)
    game.write_trace(tmp_path / "t.csv", trace)
    t = (tmp_path / "t.csv").read_text().splitlines()
    assert t[0] == "step,node,board,level" and t[1] == "0,@,1,0"
