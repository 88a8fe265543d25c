import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samm_lab.amm import MarketPrices
from samm_lab.errors import InfeasibleError, ParameterError
from samm_lab.fees import CpmmFee
from samm_lab.strategy import (LpAction, SystemState, TradeAction, apply_lp, best_trade_cpmm,
                               best_trade_samm, execute_trade, fillup_action, lp_revenue,
                               optimal_split, tie_set, trader_cost)

PRICES = MarketPrices(2.0, 1.0)


def _random_simplex_costs(state, demand, fee, rng, count):
    """Cost of ``count`` random feasible allocations; an independent oracle."""
    ra = state.reserves_a
    w = rng.dirichlet(np.ones(state.n), count)
    # sparse corners too: zero out random coordinates
    mask = rng.random(w.shape) < 0.3
    w = np.where(mask, 0.0, w)
    w[w.sum(axis=1) == 0, 0] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    x = demand * w
    ok = np.all(x < ra * (1 - 1e-9), axis=1)
    x = x[ok]
    g = fee.gross(ra[None, :], state.reserves_b[None, :], x).sum(axis=1)
    return PRICES.price_b * g if state.prices == PRICES else state.prices.price_b * g


def test_from_reserves_is_arbitrage_free():
    s = SystemState.from_reserves([10.0, 20.0], PRICES)
    assert s.is_arbitrage_free()
    assert np.allclose(s.reserves_b, [20.0, 40.0])
    assert s.swapped().swapped() == s


def test_tie_set():
    s = SystemState.from_reserves([10.0, 10.0 * (1 + 1e-12), 11.0], PRICES)
    assert tie_set(s) == [0, 1]


def test_small_trade_goes_to_smallest_shard(solved):
    fee = solved[0.01]
    s = SystemState.from_reserves([300.0, 100.0, 200.0], PRICES)
    act = best_trade_samm(s, 0.5, fee)
    assert act.outputs == (0.0, 0.5, 0.0)
    assert not act.is_split


def test_ties_pick_lowest_index(solved):
    s = SystemState.from_reserves([100.0, 50.0, 50.0], PRICES)
    assert best_trade_samm(s, 0.1, solved[0.01]).shards_used == [1]


def test_zero_and_invalid_demand(solved):
    s = SystemState.from_reserves([100.0, 100.0], PRICES)
    assert best_trade_samm(s, 0.0, solved[0.01]).outputs == (0.0, 0.0)
    with pytest.raises(ParameterError):
        best_trade_samm(s, -1.0, solved[0.01])
    with pytest.raises(InfeasibleError):
        best_trade_samm(s, 200.0, solved[0.01])
    with pytest.raises(InfeasibleError):
        best_trade_cpmm(s, 250.0)


@pytest.mark.parametrize("c", [0.003, 0.01])
def test_one_hot_dominates_random_actions(solved, c):
    fee = solved[c]
    rng = np.random.default_rng(5)
    s = SystemState.from_reserves([100.0, 130.0, 170.0], PRICES)
    demand = c * 100.0
    best = trader_cost(s, best_trade_samm(s, demand, fee), fee)
    others = _random_simplex_costs(s, demand, fee, rng, 10_000)
    assert best <= others.min()


def test_two_balanced_shards_match_grid(solved):
    # demand 0.5 R per shard: far beyond the certified fraction, the solver must split
    fee = solved[0.01]
    ra, rb, d = 1000.0, 1000.0, 500.0
    x = optimal_split([ra, ra], [rb, rb], d, fee)
    got = float(fee.gross(ra, rb, x).sum())
    t = np.linspace(0.0, d, 10_001)
    grid = fee.gross(ra, rb, t) + fee.gross(ra, rb, d - t)
    assert got <= grid.min() * (1 + 1e-12)
    assert got == pytest.approx(grid.min(), rel=1e-6)
    assert x.sum() == pytest.approx(d, rel=1e-12)


def test_two_shard_grid_at_boundary_demands(solved):
    fee = solved[0.005]
    t = np.linspace(0.0, 1.0, 20_001)
    for d in (0.004, 0.008, 0.02, 0.1, 1.5):
        x = optimal_split([1.0, 1.0], [1.0, 1.0], d, fee)
        t_ok = t[(t * d < 1.0) & ((1 - t) * d < 1.0)]
        grid = fee.gross(1.0, 1.0, t_ok * d) + fee.gross(1.0, 1.0, (1 - t_ok) * d)
        assert float(fee.gross(1.0, 1.0, x).sum()) <= grid.min() * (1 + 1e-12)


@pytest.mark.parametrize("reserves", [[50.0, 80.0, 120.0], [100.0, 100.0, 100.0, 100.0]])
def test_large_trade_beats_random_allocations(solved, reserves):
    fee = solved[0.005]
    s = SystemState.from_reserves(reserves, PRICES)
    demand = 0.3 * sum(reserves)
    act = best_trade_samm(s, demand, fee)
    assert act.demand == pytest.approx(demand, rel=1e-12)
    best = trader_cost(s, act, fee)
    others = _random_simplex_costs(s, demand, fee, np.random.default_rng(2), 10_000)
    assert best <= others.min() * (1 + 1e-12)


def test_cpmm_proportional_split_is_optimal():
    fee = CpmmFee(0.997)
    s = SystemState.from_reserves([30.0, 70.0, 100.0], PRICES)
    act = best_trade_cpmm(s, 10.0)
    assert np.allclose(act.outputs, [1.5, 3.5, 5.0])
    best = trader_cost(s, act, fee)
    others = _random_simplex_costs(s, 10.0, fee, np.random.default_rng(3), 10_000)
    assert best <= others.min() * (1 + 1e-12)
    # one-hot on the smallest shard is strictly worse under a constant-ratio fee
    assert trader_cost(s, TradeAction.one_hot(3, 0, 10.0), fee) > best


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(0.01, 1e6), frac=st.floats(0.05, 0.6))
def test_split_is_homogeneous(solved, scale, frac):
    fee = solved[0.01]
    base = optimal_split([1.0, 1.0, 1.0], [2.0, 2.0, 2.0], frac * 3, fee)
    scaled = optimal_split([scale] * 3, [2 * scale] * 3, frac * 3 * scale, fee)
    unit_cost = float(fee.gross(1.0, 2.0, base).sum())
    assert float(fee.gross(scale, 2 * scale, scaled).sum()) == pytest.approx(scale * unit_cost,
                                                                          rel=1e-9)


def test_execute_trade_restores_prices_and_pays_fees(solved):
    fee = solved[0.01]
    s = SystemState.from_reserves([100.0, 200.0], PRICES)
    act = TradeAction((0.5, 1.0))
    new, fees = execute_trade(s, act, fee)
    assert new.is_arbitrage_free()
    for old, shard, out, f in zip(s.shards, new.shards, act.outputs, fees):
        assert f == pytest.approx(float(fee.fee(old.reserve_a, old.reserve_b, out)), rel=1e-12)
        # reserves move along the curve, then back to the price line: product unchanged
        assert shard.product == pytest.approx(old.product, rel=1e-12)


def test_fillup_example():
    s = SystemState.from_reserves([10.0, 20.0, 30.0], PRICES)
    lp = fillup_action(s, 15.0)
    assert lp.level == pytest.approx(22.5)
    assert lp.deposits_a == pytest.approx((12.5, 2.5, 0.0))
    assert lp.deposits_b(PRICES) == pytest.approx((25.0, 5.0, 0.0))


@settings(max_examples=200, deadline=None)
@given(res=st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=8), e=st.floats(0, 1e7))
def test_fillup_conserves_and_levels(res, e):
    s = SystemState.from_reserves(res, PRICES)
    lp = fillup_action(s, e)
    assert math.fsum(lp.deposits_a) == pytest.approx(e, rel=1e-9, abs=1e-9)
    assert min(lp.deposits_a) >= 0
    after = s.reserves_a + np.array(lp.deposits_a)
    touched = np.array(lp.deposits_a) > 0
    if touched.any():
        # filled shards share a common level and untouched ones sit at or above it
        assert np.allclose(after[touched], after[touched].min(), rtol=1e-9)
        assert np.all(after[~touched] >= after[touched].min() * (1 - 1e-9))


def test_apply_lp_mints_proportionally():
    s = SystemState.from_reserves([90.0, 40.0], PRICES, shares=9.0)
    new, minted = apply_lp(s, LpAction((10.0, 0.0)))
    assert minted == pytest.approx([1.0, 0.0])
    assert new.shards[0].reserve_a == pytest.approx(100.0)
    assert new.is_arbitrage_free()


def test_lp_revenue_is_share_of_fee(solved):
    fee = solved[0.01]
    s = SystemState.from_reserves([90.0, 200.0], PRICES)
    lp = LpAction((10.0, 0.0))
    trade = TradeAction((0.5, 0.0))
    expected = PRICES.price_b * float(fee.fee(100.0, 200.0, 0.5)) * 0.1
    assert lp_revenue(s, lp, trade, fee) == pytest.approx(expected, rel=1e-12)
    assert lp_revenue(s, lp, TradeAction((0.0, 0.5)), fee) == 0.0


def test_trader_cost_rejects_bad_actions(solved):
    s = SystemState.from_reserves([10.0, 10.0], PRICES)
    with pytest.raises(ParameterError):
        trader_cost(s, TradeAction((1.0,)), solved[0.01])
    with pytest.raises(ValueError):
        trader_cost(s, TradeAction((10.0, 0.0)), solved[0.01])
    with pytest.raises(ParameterError):
        TradeAction((-1.0, 0.0))
