import math

import numpy as np
import pytest
from scipy.special import zeta

from treemvs.coefficients import (
    ANALYTIC,
    CONVERGES,
    DIVERGES,
    NUMERIC_ONLY,
    SOLVABLE,
    UNDETERMINED,
    UNSOLVABLE,
    Constant,
    Explicit,
    Geometric,
    PowerLaw,
    SeriesVerdict,
    beta_ratio_series,
    classify_solvability,
    coupling_sum_series,
    log_infinite_products,
    schedule_from_dict,
)
from treemvs.config import SystemConfig
from treemvs.errors import ConfigError, DomainError, ScheduleError


def test_schedule_values():
    assert Geometric(0.5, 0.5).value_at(2) == 0.125
    assert Constant(0.4).value_at(10 ** 6) == 0.4
    assert PowerLaw(1, 1).value_at(3) == 0.25
    assert Explicit((0.1, 0.2), Geometric(1.0, 0.5)).value_at(3) == 0.125  # tail at absolute level


def test_schedule_bounds():
    with pytest.raises(ScheduleError):
        Constant(0.6, upper=0.5).value_at(0)
    with pytest.raises(ScheduleError):
        Explicit((0.1,)).value_at(1)
    with pytest.raises(ConfigError) as exc:
        schedule_from_dict({"family": "constant", "c": 1.5}, "/coupling/0/1")
    assert exc.value.path == "/coupling/0/1"


def test_sum_series_verdicts():
    v = coupling_sum_series(Geometric(0.5, 0.5), 64)
    assert v.status == CONVERGES and v.basis == ANALYTIC
    assert v.partial_sums[-1][1] == pytest.approx(1.0, abs=1e-15)
    assert coupling_sum_series(PowerLaw(1, 1), 64).status == DIVERGES
    assert coupling_sum_series(PowerLaw(1, 2), 64).status == CONVERGES
    assert coupling_sum_series(Constant(0), 64).status == CONVERGES
    assert coupling_sum_series(Constant(0.1), 64).status == DIVERGES
    assert coupling_sum_series(Explicit((0.5, 0.25), PowerLaw(1, 1)), 64).status == DIVERGES


def test_explicit_without_tail_is_undetermined():
    v = coupling_sum_series(Explicit((0.5, 0.25, 0.125)), 64)
    assert (v.status, v.basis) == (UNDETERMINED, NUMERIC_ONLY)
    with pytest.raises(ValueError):
        SeriesVerdict(CONVERGES, [], NUMERIC_ONLY, "numeric evidence only")


@pytest.mark.parametrize("beta,status", [(0.4, CONVERGES), (0.5, DIVERGES), (0.6, DIVERGES), (0.0, CONVERGES)])
def test_constant_beta_threshold(beta, status):
    assert beta_ratio_series(Constant(beta, upper=0.99), 64).status == status


def test_ratio_series_partial_sums():
    v = beta_ratio_series(Constant(0.4, upper=0.99), 256)
    r = 0.4 / 0.6
    assert v.partial_sums[-1][1] == pytest.approx(r * (1 - r ** 256) / (1 - r), rel=1e-12)
    assert beta_ratio_series(Geometric(0.9, 0.5, upper=0.99), 64).status == CONVERGES
    with pytest.raises(DomainError):
        beta_ratio_series(Explicit((0.2, 1.0), Constant(0.1)), 8)


def test_classifier():
    geo = Geometric(0.5, 0.5)
    assert classify_solvability(SystemConfig.two_board(2, geo, geo, Constant(0.25), Constant(0.25))).overall == SOLVABLE
    assert classify_solvability(SystemConfig.two_board(2, PowerLaw(0.5, 1), geo)).overall == UNSOLVABLE
    assert classify_solvability(SystemConfig.two_board(2, geo, geo, Constant(0.5))).overall == UNSOLVABLE
    assert classify_solvability(SystemConfig.two_board(2, Explicit((0.5,)), geo)).overall == UNDETERMINED
    report = classify_solvability(SystemConfig.two_board(2, geo, geo))
    assert sum("Converges" in line for line in report.lines()) == 4


def test_log_products_geometric_against_direct():
    lp, lm = log_infinite_products(Geometric(0.5, 0.5))
    k = np.arange(200)
    p = 0.5 * 0.5 ** k
    assert lp == pytest.approx(np.sum(np.log1p(p)), abs=1e-14)
    assert lm == pytest.approx(np.sum(np.log1p(-p)), abs=1e-14)


def test_log_products_powerlaw_tail():
    # log(1+p) ~ p - p^2/2 + ...; compare a short explicit sum plus zeta tails
    s = 2.0
    lp, _ = log_infinite_products(PowerLaw(0.5, s), explicit_terms=16)
    lp_long, _ = log_infinite_products(PowerLaw(0.5, s), explicit_terms=100_000)
    assert lp == pytest.approx(lp_long, abs=1e-13)
    first_order = 0.5 * zeta(s, 1)
    assert abs(lp - first_order) < 0.5 * 0.25 * zeta(2 * s, 1)
    with pytest.raises(DomainError):
        log_infinite_products(PowerLaw(0.5, 1))
    assert math.isfinite(log_infinite_products(Explicit((0.5,), Geometric(0.5, 0.5)))[1])
