import math

import numpy as np
import pytest

from samm_lab.errors import ParameterError
from samm_lab.replay import (ReplayConfig, cpmm_cost_increase, run_replay, samm_cost_increase,
                             volume_capacity, volume_capacity_from_ratios)
from samm_lab.strategy import optimal_split
from samm_lab.trace import TraceModel, TraceRecord, synthesize_trace

INF_CAPS = {n: math.inf for n in (1, 2, 4, 8, 16, 32)}


def _cfg(**kw):
    base = dict(warmup_seconds=0, measure_seconds=None, throughput_caps=INF_CAPS)
    base.update(kw)
    return ReplayConfig(**base)


def _burst(count, amount=10.0, side="BA", ts=0):
    return [TraceRecord(ts, side, amount) for _ in range(count)]


def test_cap_drops_excess_trades_per_second():
    trace = _burst(10) + _burst(10, ts=1)
    rep = run_replay(trace, _cfg(n_shards=2, throughput_caps={2: 3, 1: 5}))
    assert rep.trades_offered == 20
    assert rep.trades_executed == 6 and rep.trades_dropped == 14
    assert rep.baseline_trades_executed == 10


def test_split_consumes_one_transaction_per_shard(solved):
    # trades of 10% of a shard must be split across both shards
    trace = _burst(5, amount=50_000.0)
    rep = run_replay(trace, _cfg(n_shards=2, fee=solved[0.01], throughput_caps={2: 4, 1: 10}))
    assert rep.split_ratio == 1.0
    assert rep.trades_executed == 2 and rep.extra_trade_ratio == pytest.approx(1.0)


def test_warmup_and_window():
    trace = _burst(3, ts=0) + _burst(4, ts=1) + _burst(5, ts=2)
    rep = run_replay(trace, _cfg(warmup_seconds=1, measure_seconds=1))
    assert rep.trades_offered == 4


def test_single_trade_cost_ratio_oracle(solved):
    fee = solved[0.01]
    rep = run_replay([TraceRecord(0, "BA", 1000.0)], _cfg(fee=fee))
    # pool 1e6 A / 2e6 B, price of A is 2 B
    gross = fee.gross(1e6, 2e6, 1000.0)
    assert rep.trader_cost_ratio == pytest.approx(gross / (2 * 1000.0), rel=1e-12)
    base = 2e6 * 1000.0 / (1e6 - 1000.0) / 0.997
    assert rep.baseline_trader_cost_ratio == pytest.approx(base / 2000.0, rel=1e-12)


def test_ab_trades_use_token_b_reserves(solved):
    fee = solved[0.01]
    rep = run_replay([TraceRecord(0, "AB", 1000.0)], _cfg(fee=fee))
    gross = fee.gross(2e6, 1e6, 1000.0)
    assert rep.trader_cost_ratio == pytest.approx(2 * gross / 1000.0, rel=1e-12)


def test_small_trades_never_split_and_balance(solved):
    model = TraceModel(median_ratio=1e-5, sigma=0.5, max_ratio=0.01 / 8)
    trace = synthesize_trace(model, seed=3, count=20_000)
    rep = run_replay(trace, _cfg(n_shards=8, fee=solved[0.01]))
    assert rep.split_ratio == 0.0 and rep.extra_trade_ratio == 0.0
    assert sum(rep.shard_counts) == rep.trades_executed == 20_000
    assert rep.shard_count_max_deviation < 0.05
    assert rep.fee_conservation_error < 1e-9


def test_fee_conservation_and_lp_ratio(solved):
    trace = synthesize_trace(seed=5, count=5000)
    rep = run_replay(trace, _cfg(n_shards=4, fee=solved[0.005]))
    assert rep.fee_conservation_error < 1e-9
    assert rep.lp_revenue_ratio == pytest.approx(rep.fees_value / rep.baseline_fees_value)
    assert rep.trades_executed + rep.trades_dropped + rep.trades_infeasible == rep.trades_offered


def test_repetitions_are_seeded():
    trace = synthesize_trace(seed=1, count=3000)
    cfg = _cfg(n_shards=2, repetitions=3, seed=4, measure_seconds=None)
    a, b = run_replay(trace, cfg), run_replay(trace, cfg)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()
    assert len(a.start_indices) == 3 and max(a.start_indices) < 1500
    c = run_replay(trace, _cfg(n_shards=2, repetitions=3, seed=5))
    assert c.start_indices != a.start_indices


def test_report_formats():
    rep = run_replay(synthesize_trace(count=200), _cfg(n_shards=2))
    d = rep.to_dict()
    assert d["volume_capacity"]["n_shards"] == 2
    lines = rep.to_csv().splitlines()
    assert lines[0] == "metric,value" and any(l.startswith("split_ratio,") for l in lines)


def test_config_validation():
    with pytest.raises(ParameterError):
        ReplayConfig(n_shards=0)
    with pytest.raises(ParameterError):
        ReplayConfig(throughput_caps={2: 0})
    with pytest.raises(ParameterError):
        run_replay([], ReplayConfig())
    with pytest.raises(ParameterError):
        run_replay(_burst(2), _cfg(start_index=5))
    assert ReplayConfig().cap(32) == 951


def test_cpmm_cost_increase_formula():
    u = np.array([0.0, 0.001, 0.5])
    direct = [(2 * o / (1 - o)) / 0.997 / (2 * o) - 1 if o > 0 else 1 / 0.997 - 1 for o in u]
    assert np.allclose(cpmm_cost_increase(u, 0.997), direct, rtol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_samm_cost_increase_matches_direct_optimum(solved, n):
    fee = solved[0.005]
    ratios = np.array([1e-4, 0.004 / n, 0.02, 0.2])
    got = samm_cost_increase(ratios, n, fee)
    for u, g in zip(ratios, got):
        # unscaled pools of size 1000 per shard, price 1
        d = u * 1000.0 * n
        if n == 1 or d <= 0.005 * 1000.0:
            cost = float(fee.gross(1000.0, 1000.0, d))
        else:
            x = optimal_split([1000.0] * n, [1000.0] * n, d, fee)
            cost = float(fee.gross(1000.0, 1000.0, x).sum())
        assert g == pytest.approx(cost / d - 1, rel=1e-9)


def test_volume_capacity_fee_floor(solved):
    # at c = 0.005 fee plus slippage never falls below 0.5%, whatever the trade size
    fee = solved[0.005]
    u = np.concatenate([np.geomspace(1e-9, 0.5, 2000), [fee.c]])
    assert samm_cost_increase(u, 1, fee).min() > 0.005
    assert samm_cost_increase(u, 8, fee).min() > 0.005
    vc = volume_capacity_from_ratios(np.array([1e-7, 1e-5, 1e-3]), 1, fee)
    assert vc["samm"][0] == 1.0
    assert vc["cpmm"][0] == 0.0


def test_volume_capacity_of_trace(solved):
    trace = synthesize_trace(count=500)
    vc = volume_capacity(trace, _cfg(fee=solved[0.01], n_shards=2), thresholds=(0.01,))
    assert vc["trades"] == 500 and vc["thresholds"] == [0.01]
    assert 0.0 <= vc["cpmm"][0] <= 1.0
