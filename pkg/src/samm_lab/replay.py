"""Trace replay against n SAMM shards and a single-CPMM baseline.

Each simulated second admits at most ``cap`` shard transactions; a trade
that would exceed the remaining budget of its second is dropped (not queued).
A split trade consumes one transaction per shard it touches.  Arbitrageurs
restore every touched shard to the external price after each trade.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .amm import net_kernel
from .errors import ParameterError
from .fees import CpmmFee, solve_params_for_c
from .strategy import TIE_TOL, balanced_split_batch, optimal_split
from .throughput import default_cap
from .trace import TraceRecord, ratio_statistics_from_ratios

DEFAULT_THRESHOLDS = (0.005, 0.01, 0.015)


@dataclass(frozen=True)
class ReplayConfig:
    n_shards: int = 1
    fee: object = field(default_factory=lambda: solve_params_for_c(0.01))
    reference_reserve_a: float = 1e6
    reference_reserve_b: float = 2e6
    throughput_caps: dict | None = None        # n -> trades/second; math.inf disables the cap
    warmup_seconds: int = 1
    measure_seconds: int | None = 1            # None measures to the end of the trace
    start_index: int = 0
    repetitions: int = 1
    max_start_fraction: float = 0.5
    seed: int = 0
    baseline_gamma: float = 0.997
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    randomize_ties: bool = True
    volume_capacity: bool = True

    def __post_init__(self):
        if self.n_shards < 1:
            raise ParameterError("n_shards must be at least 1")
        if self.reference_reserve_a <= 0 or self.reference_reserve_b <= 0:
            raise ParameterError("reference reserves must be positive")
        if self.warmup_seconds < 0:
            raise ParameterError("warmup_seconds must be non-negative")
        if self.measure_seconds is not None and self.measure_seconds <= 0:
            raise ParameterError("measure window must be positive")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be at least 1")
        if not 0 <= self.max_start_fraction <= 1:
            raise ParameterError("max_start_fraction must lie in [0, 1]")
        for n, cap in (self.throughput_caps or {}).items():
            if not cap > 0:
                raise ParameterError(f"throughput cap for n={n} must be positive")

    def cap(self, n: int) -> float:
        caps = self.throughput_caps or {}
        if n in caps:
            return float(caps[n])
        return float(default_cap(n))


@dataclass
class _Totals:
    """Raw sums for one engine; merging is plain addition."""

    n: int
    offered: int = 0
    executed: int = 0
    dropped: int = 0
    infeasible: int = 0
    splits: int = 0
    transactions: int = 0
    shard_counts: np.ndarray = None
    trader_fee_value: float = 0.0     # sum of (gross - net) paid by traders
    shard_fee_value: float = 0.0      # sum of fees credited to shards
    cost_ratio_sum: float = 0.0
    ratios: list = field(default_factory=list)

    def __post_init__(self):
        if self.shard_counts is None:
            self.shard_counts = np.zeros(self.n, dtype=np.int64)

    def merge(self, other: "_Totals") -> None:
        for name in ("offered", "executed", "dropped", "infeasible", "splits", "transactions",
                     "trader_fee_value", "shard_fee_value", "cost_ratio_sum"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.shard_counts = self.shard_counts + other.shard_counts
        self.ratios.extend(other.ratios)


class _Engine:
    """Mutable n-shard state driven trade by trade."""

    def __init__(self, n: int, fee, cfg: ReplayConfig, rng: np.random.Generator):
        self.n, self.fee, self.rng = n, fee, rng
        self.randomize = cfg.randomize_ties
        self.ra = np.full(n, cfg.reference_reserve_a / n)
        self.rb = np.full(n, cfg.reference_reserve_b / n)
        # prices implied by the reference pool unless the trace says otherwise
        self.pa, self.pb = cfg.reference_reserve_b / cfg.reference_reserve_a, 1.0
        self.c = getattr(fee, "c", 0.0)

    def set_prices(self, pa: float, pb: float) -> None:
        if (pa, pb) != (self.pa, self.pb):
            self.pa, self.pb = pa, pb
            self._rebalance(np.arange(self.n))

    def _rebalance(self, idx) -> None:
        k = self.ra[idx] * self.rb[idx]
        self.ra[idx] = np.sqrt(k * self.pb / self.pa)
        self.rb[idx] = np.sqrt(k * self.pa / self.pb)

    def plan(self, out_res: np.ndarray, in_res: np.ndarray, demand: float) -> tuple[np.ndarray, np.ndarray]:
        """Shard indices and amounts of the cost-minimising action."""
        smallest = out_res.min()
        if self.c > 0 and demand <= self.c * smallest:
            ties = np.flatnonzero(out_res <= smallest * (1 + TIE_TOL))
            i = ties[self.rng.integers(ties.size)] if self.randomize and ties.size > 1 else ties[0]
            return np.array([i]), np.array([demand])
        if self.n == 1:
            return np.array([0]), np.array([demand])
        balanced = (out_res.max() <= smallest * (1 + TIE_TOL)
                    and in_res.max() <= in_res.min() * (1 + TIE_TOL))
        if balanced:
            x = balanced_split_batch(float(out_res[0]), float(in_res[0]), self.n, [demand], self.fee)[0]
            if self.randomize:
                x = x[self.rng.permutation(self.n)]
        else:
            x = optimal_split(out_res, in_res, demand, self.fee)
        idx = np.flatnonzero(x > 0)
        return idx, x[idx]

    def trade(self, rec: TraceRecord, budget: float, totals: _Totals, counted: bool) -> int:
        """Execute one record; returns the number of transactions consumed."""
        if rec.side == "BA":
            out_res, in_res, p_out, p_in = self.ra, self.rb, self.pa, self.pb
        else:
            out_res, in_res, p_out, p_in = self.rb, self.ra, self.pb, self.pa
        demand = rec.output_amount
        if counted:
            totals.offered += 1
        if budget < 1:
            totals.dropped += counted
            return 0
        if demand >= out_res.sum() * (1 - 1e-12):
            totals.infeasible += counted
            return 0
        idx, amounts = self.plan(out_res, in_res, demand)
        if idx.size > budget:
            totals.dropped += counted
            return 0
        ro, ri = out_res[idx], in_res[idx]
        net = net_kernel(ro, ri, amounts)
        gross = self.fee.gross(ro, ri, amounts)
        fees = self.fee.fee(ro, ri, amounts)
        out_res[idx] = ro - amounts
        in_res[idx] = ri + net
        self._rebalance(idx)
        if counted:
            totals.executed += 1
            totals.splits += idx.size > 1
            totals.transactions += idx.size
            np.add.at(totals.shard_counts, idx, 1)
            totals.trader_fee_value += p_in * math.fsum(gross - net)
            totals.shard_fee_value += p_in * math.fsum(fees)
            totals.cost_ratio_sum += p_in * math.fsum(gross) / (p_out * demand)
        return int(idx.size)


def _run_engine(records: Sequence[TraceRecord], engine: _Engine, cap: float, cfg: ReplayConfig,
                out_reserve: tuple[float, float]) -> _Totals:
    totals = _Totals(engine.n)
    t0 = records[0].timestamp
    start = t0 + cfg.warmup_seconds
    stop = math.inf if cfg.measure_seconds is None else start + cfg.measure_seconds
    second, used = None, 0
    for rec in records:
        if rec.timestamp >= stop:
            break
        if rec.has_prices:
            engine.set_prices(rec.price_a, rec.price_b)
        if rec.timestamp != second:
            second, used = rec.timestamp, 0
        counted = rec.timestamp >= start
        if counted:
            totals.ratios.append(rec.output_amount / out_reserve[rec.side == "AB"])
        used += engine.trade(rec, cap - used, totals, counted)
    return totals


@dataclass
class ReplayReport:
    n_shards: int
    repetitions: int
    start_indices: list[int]
    trades_offered: int
    trades_executed: int
    trades_dropped: int
    trades_infeasible: int
    split_ratio: float
    extra_trade_ratio: float
    trader_cost_ratio: float
    baseline_trader_cost_ratio: float
    baseline_trades_executed: int
    lp_revenue_ratio: float
    fees_value: float
    baseline_fees_value: float
    fee_conservation_error: float
    shard_counts: list[int]
    shard_count_max_deviation: float
    volume_capacity: dict | None
    ratio_summary: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for key, value in self.to_dict().items():
            if isinstance(value, (int, float)):
                w.writerow([key, repr(value)])
        return buf.getvalue()


def _safe_div(a: float, b: float) -> float:
    return a / b if b else math.nan


def run_replay(trace: Sequence[TraceRecord], cfg: ReplayConfig) -> ReplayReport:
    """Replay ``trace`` on SAMM and on the CPMM baseline and aggregate the metrics."""
    if not trace:
        raise ParameterError("trace is empty")
    max_start = int(len(trace) * cfg.max_start_fraction)
    root = np.random.SeedSequence(cfg.seed)
    start_rng = np.random.default_rng(root.spawn(1)[0])
    if cfg.repetitions == 1:
        starts = [cfg.start_index]
    else:
        starts = [int(s) for s in start_rng.integers(0, max(1, max_start), cfg.repetitions)]
    if any(s >= len(trace) for s in starts):
        raise ParameterError("start index leaves no trades to replay")
    reserves = (cfg.reference_reserve_a, cfg.reference_reserve_b)
    samm, base = _Totals(cfg.n_shards), _Totals(1)
    for s, child in zip(starts, root.spawn(cfg.repetitions)):
        rng = np.random.default_rng(child)
        records = trace[s:]
        samm.merge(_run_engine(records, _Engine(cfg.n_shards, cfg.fee, cfg, rng), cfg.cap(cfg.n_shards),
                               cfg, reserves))
        base.merge(_run_engine(records, _Engine(1, CpmmFee(cfg.baseline_gamma), cfg, rng), cfg.cap(1),
                               cfg, reserves))
    counts = samm.shard_counts
    mean = counts.mean()
    deviation = float(np.max(np.abs(counts - mean)) / mean) if mean > 0 else 0.0
    conservation = (abs(samm.trader_fee_value - samm.shard_fee_value) / samm.shard_fee_value
                    if samm.shard_fee_value else 0.0)
    vc = None
    if cfg.volume_capacity and samm.ratios:
        vc = volume_capacity_from_ratios(np.array(samm.ratios), cfg.n_shards, cfg.fee,
                                         cfg.baseline_gamma, cfg.thresholds)
    return ReplayReport(
        n_shards=cfg.n_shards,
        repetitions=cfg.repetitions,
        start_indices=starts,
        trades_offered=samm.offered,
        trades_executed=samm.executed,
        trades_dropped=samm.dropped,
        trades_infeasible=samm.infeasible,
        split_ratio=_safe_div(samm.splits, samm.executed),
        extra_trade_ratio=_safe_div(samm.transactions, samm.executed) - 1.0,
        trader_cost_ratio=_safe_div(samm.cost_ratio_sum, samm.executed),
        baseline_trader_cost_ratio=_safe_div(base.cost_ratio_sum, base.executed),
        baseline_trades_executed=base.executed,
        lp_revenue_ratio=_safe_div(samm.shard_fee_value, base.shard_fee_value),
        fees_value=samm.shard_fee_value,
        baseline_fees_value=base.shard_fee_value,
        fee_conservation_error=conservation,
        shard_counts=counts.tolist(),
        shard_count_max_deviation=deviation,
        volume_capacity=vc,
        ratio_summary=ratio_statistics_from_ratios(samm.ratios).to_dict() if samm.ratios else {},
    )


# -- static volume capacity ---------------------------------------------------------

def samm_cost_increase(ratios, n: int, fee, chunk: int | None = None) -> np.ndarray:
    """Trade cost increase of the optimal action on n equal shards.

    ``ratios`` are outputs relative to the total reserve of the output token.
    Everything is scale-free, so shards are normalised to unit reserves and
    unit reported price.
    """
    u = np.asarray(ratios, dtype=float)
    d = u * n                                   # demand in units of one shard
    cost = np.full(u.shape, np.inf)
    feasible = d < n * (1 - 1e-12)
    c = getattr(fee, "c", 0.0)
    single = feasible & ((d <= c) if c > 0 else (n == 1))
    cost[single] = fee.gross(1.0, 1.0, d[single])
    rest = np.flatnonzero(feasible & ~single)
    if rest.size:
        chunk = chunk or max(1, int(1.5e7 // (129 * n)))
        for k in range(0, rest.size, chunk):
            sel = rest[k:k + chunk]
            x = balanced_split_batch(1.0, 1.0, n, d[sel], fee)
            cost[sel] = fee.gross(1.0, 1.0, x).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(d > 0, cost / d - 1.0, _zero_size_increase(fee))


def _zero_size_increase(fee) -> float:
    return float(fee.gross(1.0, 1.0, 1e-300) / 1e-300 - 1.0)


def cpmm_cost_increase(ratios, gamma: float) -> np.ndarray:
    u = np.asarray(ratios, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(u < 1, 1.0 / (gamma * (1.0 - u)) - 1.0, np.inf)


def volume_capacity_from_ratios(ratios, n: int, fee, gamma: float = 0.997,
                                thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> dict:
    samm = samm_cost_increase(ratios, n, fee)
    cpmm = cpmm_cost_increase(ratios, gamma)
    return {
        "n_shards": n,
        "trades": int(np.size(ratios)),
        "thresholds": list(thresholds),
        "cpmm": [float(np.mean(cpmm > t)) for t in thresholds],
        "samm": [float(np.mean(samm > t)) for t in thresholds],
    }


def volume_capacity(trace: Sequence[TraceRecord], cfg: ReplayConfig,
                    thresholds: Sequence[float] | None = None) -> dict:
    """Fraction of trades whose cost increase exceeds each threshold, CPMM vs SAMM.

    Static analysis: every trade is priced on the reference pool split evenly
    into ``cfg.n_shards`` shards.
    """
    if not trace:
        raise ParameterError("trace is empty")
    reserves = (cfg.reference_reserve_a, cfg.reference_reserve_b)
    ratios = np.array([r.output_amount / reserves[r.side == "AB"] for r in trace])
    return volume_capacity_from_ratios(ratios, cfg.n_shards, cfg.fee, cfg.baseline_gamma,
                                       thresholds if thresholds is not None else cfg.thresholds)
