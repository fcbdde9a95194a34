import dataclasses

import numpy as np
import pytest
from scipy import stats

from serial_monopoly.errors import EmpiricalICViolation
from serial_monopoly.sim import CHUNK, replay, sample, uniform_chunk, uniforms
from serial_monopoly.welfare import payoff_report

from conftest import solved
from oracles import Example


def test_uniform_streams_are_deterministic():
    assert np.array_equal(uniforms(7, 1000), uniforms(7, 1000))
    assert not np.array_equal(uniforms(7, 1000), uniforms(8, 1000))


def test_chunks_are_independent_of_generation_order():
    whole = uniforms(11, 2 * CHUNK + 5)
    parts = [uniform_chunk(11, c, n) for c, n in reversed(list(enumerate([CHUNK, CHUNK, 5])))]
    assert np.array_equal(whole, np.concatenate(parts[::-1]))
    # a prefix of a longer run is the shorter run
    assert np.array_equal(uniforms(11, 100), whole[:100])


def test_small_chunks_give_reproducible_but_distinct_streams():
    a = uniforms(3, 50, chunk_size=10)
    assert np.array_equal(a, uniforms(3, 50, chunk_size=10))
    assert np.array_equal(a[10:20], uniform_chunk(3, 1, 10))


def test_invalid_seed():
    with pytest.raises(ValueError):
        uniforms(-1, 3)


def test_sampling_is_bitwise_reproducible(sol_strong):
    a, b = sample(sol_strong, 5000, 42), sample(sol_strong, 5000, 42)
    for name, col in a.table().items():
        assert np.array_equal(col, b.table()[name]), name


def test_empty_batch(sol_sub):
    batch = sample(sol_sub, 0, 1)
    rep = replay(sol_sub.primitives, sol_sub, batch)
    assert batch.n == 0 and not rep.defined and np.isnan(rep.W_hat)


def test_draws_lie_on_the_support(sol_any):
    b = sample(sol_any, 20000, 5)
    sup = sol_any.support
    assert np.all(b.x >= sup.lo) and np.all(b.x <= sup.hi)
    assert np.all(b.delta >= 0)


def test_unit_uniform_maps_to_the_far_end(sol_sub):
    assert sol_sub.cdf.quantile(1.0) == pytest.approx(7 / 6, abs=1e-15)


def test_an_atom_at_the_top_is_sampled_there(sol_strong):
    # a distribution with half its mass on the top type
    lg = np.log(0.5) + sol_strong.cdf.log_mass
    cdf = dataclasses.replace(sol_strong.cdf, log_mass=lg, atom_mass=0.5)
    b = sample(dataclasses.replace(sol_strong, cdf=cdf), 4000, 9)
    at_top = np.count_nonzero(b.delta == 0.0)
    assert at_top == np.count_nonzero(uniforms(9, 4000) < 0.5)
    assert np.all(b.x[b.delta == 0.0] == sol_strong.support.x_top)


def test_payoff_accounting(sol_any):
    b = sample(sol_any, 10000, 3)
    k = sol_any.primitives.k
    total = b.consumer_payoff + b.seller1_payoff + b.seller2_payoff
    assert np.max(np.abs(total - b.welfare)) <= 1e-12
    assert np.allclose(b.seller1_payoff, sol_any.entry_fee, atol=1e-14)
    assert np.allclose(b.p_paid - k * b.x, sol_any.entry_fee, atol=1e-14)
    rep = replay(sol_any.primitives, sol_any, b)
    assert rep.accounting_residual <= 1e-12 and rep.ic_violations == 0


def test_consumer_payoff_is_the_skip_value(sol_any):
    b = sample(sol_any, 10000, 4)
    assert np.max(np.abs(b.consumer_payoff - sol_any.outside_value)) <= 1e-9


def test_table_columns(sol_sub):
    t = sample(sol_sub, 10, 1).table()
    assert list(t) == ["index", "x", "y", "p_paid", "q_paid", "consumer_payoff"]
    assert list(t["index"]) == list(range(10))


def test_mispriced_menu_raises(sol_sub):
    q = sol_sub.q.copy()
    q[1000:1010] -= 0.05
    bad = dataclasses.replace(sol_sub, q=q)
    b = sample(sol_sub, 20000, 8)
    with pytest.raises(EmpiricalICViolation):
        replay(sol_sub.primitives, bad, b)
    rep = replay(sol_sub.primitives, bad, b, raise_on_violation=False)
    assert rep.ic_violations > 0 and rep.max_ic_gain > 0.04


@pytest.mark.parametrize("a", [-1.0, -3.0, 1.0])
def test_distances_follow_the_equilibrium_law(a):
    # the distance from the top type has CDF G in either orientation
    sol = solved(a)
    b = sample(sol, 20000, 123)
    res = stats.kstest(b.delta, Example(a).G_of_delta)
    assert res.statistic * np.sqrt(b.n) < 1.95


def test_empirical_means_match_the_report(sol_strong):
    rep = payoff_report(sol_strong.primitives, sol_strong)
    emp = replay(sol_strong.primitives, sol_strong, sample(sol_strong, 50000, 2))
    assert abs(emp.W_hat - rep.W) <= 4 * emp.se["W"]
    assert abs(emp.pi2_hat - rep.pi2) <= 4 * emp.se["pi2"]
    assert emp.V_hat == pytest.approx(rep.V_lower, abs=1e-9)
