import dataclasses

import numpy as np
import pytest

from serial_monopoly.errors import MixedModularity, NoDeviationFound
from serial_monopoly.verify import (
    KEEP,
    OUTSIDE,
    _subsample,
    check_cdf,
    check_endpoints,
    check_focs,
    check_ic,
    check_ir,
    check_pure_strategy_deviations,
    check_surplus,
    common_agency_gap,
    default_candidates,
    verify_solution,
)
from serial_monopoly.model import MarketPrimitives, QuadraticUtility

from conftest import example


def test_clean_solutions_pass_every_check(sol_any):
    rep = verify_solution(sol_any, n_candidates=10, deviation_grid=801)
    assert rep.passed, rep.failed
    assert rep.ic.max_violation <= 1e-8
    assert rep.focs.foc1_max_residual <= 1e-6 and rep.focs.foc2_max_residual <= 1e-6
    assert rep.cdf.atom_mass == 0.0 and rep.cdf.terminal_one
    d = rep.to_dict()
    assert d["passed"] and d["failed"] == []


def test_ic_gain_is_zero_on_the_diagonal(sol_sub):
    res = check_ic(sol_sub, grid_n=2001)
    assert res.passed and res.consistency <= 1e-12
    assert res.max_violation <= 1e-12


def test_planted_price_defect_is_caught(sol_sub):
    idx = _subsample(sol_sub.x.size, 200)
    j = int(idx[57])
    q = sol_sub.q.copy()
    q[j] -= 0.01
    bad = dataclasses.replace(sol_sub, q=q)
    res = check_ic(bad)
    assert not res.passed
    assert res.max_violation >= 0.01 - 1e-12
    assert res.item_x == sol_sub.x[j] or res.type_x == sol_sub.x[j]


def test_planted_allocation_defect_is_caught(sol_sub):
    y = sol_sub.curve.y.copy()
    y[700] += 0.01
    curve = dataclasses.replace(sol_sub.curve, y=y)
    bad = dataclasses.replace(sol_sub, curve=curve)
    res = check_focs(bad)
    assert not res.passed
    # the first-period condition moves by |u12| times the shift
    assert res.foc1_max_residual == pytest.approx(0.01, rel=1e-9)
    assert res.foc1_at == sol_sub.x[700]


def test_truncated_table_fails_the_terminal_condition(sol_sub):
    cut = dataclasses.replace(sol_sub.cdf, F=sol_sub.cdf.F * 0.9)
    flags = check_cdf(dataclasses.replace(sol_sub, cdf=cut))
    assert not flags.terminal_one and not flags.passed


def test_interior_jump_is_flagged(sol_sub):
    F = sol_sub.cdf.F.copy()
    F[1500:] = np.minimum(F[1500:] + 0.001, 1.0)
    F[-1] = 1.0
    flags = check_cdf(dataclasses.replace(sol_sub, cdf=dataclasses.replace(sol_sub.cdf, F=F)))
    assert not flags.no_interior_atoms
    assert flags.max_excess_jump > 0


def test_non_monotone_cdf_is_flagged(sol_strong):
    F = sol_strong.cdf.F.copy()
    F[1000] = F[1001] + 1e-6
    flags = check_cdf(dataclasses.replace(sol_strong, cdf=dataclasses.replace(sol_strong.cdf, F=F)))
    assert not flags.monotone


def test_ir_binds_at_the_bottom(sol_any):
    res = check_ir(sol_any)
    assert res.passed and res.min_slack >= -1e-12 and abs(res.bottom_slack) <= 1e-8


def test_ir_violation(sol_sub):
    bad = dataclasses.replace(sol_sub, U=sol_sub.U - 0.001)
    assert not check_ir(bad).passed


def test_endpoints_and_surplus(sol_any):
    assert check_endpoints(sol_any).passed
    s = check_surplus(sol_any)
    assert s.passed and s.sigma == pytest.approx(sol_any.observable.Sigma_o, abs=1e-10)
    shifted = dataclasses.replace(sol_any, U=sol_any.U + np.linspace(0, 1e-6, sol_any.x.size))
    assert not check_surplus(shifted).passed


def test_deviation_from_first_best_consumption():
    certs = check_pure_strategy_deviations(example(-1), [1.0])
    assert certs[0].branch == OUTSIDE
    assert certs[0].x_prime == pytest.approx(7 / 6, abs=1e-15)
    assert certs[0].gain == pytest.approx(1 / 12, abs=1e-12)


def test_deviation_from_benchmark_consumption_keeps_the_item():
    c = check_pure_strategy_deviations(example(-1), [7 / 6])[0]
    assert c.branch == KEEP
    assert c.x_prime == pytest.approx(217 / 216, abs=1e-12)
    assert c.gain > 0.07


@pytest.mark.parametrize("a", [-1.0, -3.0, 1.0])
def test_every_default_candidate_has_a_deviation(a):
    p = example(a)
    certs = check_pure_strategy_deviations(p, default_candidates(p, 50), n_grid=1001)
    assert len(certs) == 50 and min(c.gain for c in certs) > 1e-10


def test_modular_utility_has_no_deviation_from_its_optimum():
    p = example(0.0)
    c = check_pure_strategy_deviations(p, [7 / 6], unsafe=True)[0]
    assert abs(c.gain) <= 1e-12
    with pytest.raises(MixedModularity):
        check_pure_strategy_deviations(p, [7 / 6])


def test_vanishing_interaction_finds_no_deviation():
    with pytest.raises(NoDeviationFound):
        check_pure_strategy_deviations(example(-1e-9), [7 / 6 - 1e-9])


def test_common_agency_gap():
    assert common_agency_gap(example(-1)) == pytest.approx(1 / 12, abs=1e-12)
    assert common_agency_gap(example(-3)) == pytest.approx(147 / 324, abs=1e-12)
    assert abs(common_agency_gap(example(0.0))) <= 1e-12
    # the gap is -axx (x_o - x*)^2 for these quadratics
    other = MarketPrimitives(QuadraticUtility(-2, -4, -2, 9, 8), 1.0)
    x_o, x_s = 2.0, 25 / 14
    assert common_agency_gap(other) == pytest.approx(2 * (x_o - x_s) ** 2, abs=1e-12)
