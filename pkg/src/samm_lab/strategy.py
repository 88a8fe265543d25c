"""Best responses of traders and liquidity providers across n shards.

Traders here are BA traders (they want token A and pay token B).  AB traders
are handled by callers through :meth:`SystemState.swapped`, which exchanges
the token roles of every shard and of the market prices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import amm
from .amm import MarketPrices, ShardState
from .errors import InfeasibleError, ParameterError

TIE_TOL = 1e-9
DRAIN_MARGIN = 1e-12


@dataclass(frozen=True)
class SystemState:
    shards: tuple[ShardState, ...]
    prices: MarketPrices

    def __post_init__(self):
        object.__setattr__(self, "shards", tuple(self.shards))
        if not self.shards:
            raise ParameterError("a system needs at least one shard")

    @classmethod
    def from_reserves(cls, reserves_a: Sequence[float], prices: MarketPrices,
                      shares: float | Sequence[float] = 1.0) -> "SystemState":
        """Arbitrage-free state with token-B reserves implied by the prices."""
        if np.isscalar(shares):
            shares = [shares] * len(reserves_a)
        shards = [ShardState(float(r), float(r) * prices.ratio, float(s))
                  for r, s in zip(reserves_a, shares)]
        return cls(tuple(shards), prices)

    @property
    def n(self) -> int:
        return len(self.shards)

    @property
    def reserves_a(self) -> np.ndarray:
        return np.array([s.reserve_a for s in self.shards])

    @property
    def reserves_b(self) -> np.ndarray:
        return np.array([s.reserve_b for s in self.shards])

    def swapped(self) -> "SystemState":
        return SystemState(tuple(s.swapped() for s in self.shards), self.prices.swapped())

    def is_arbitrage_free(self, tol: float = amm.REL_TOL) -> bool:
        return all(amm.rel_close(s.reserve_b / s.reserve_a, self.prices.ratio, tol)
                   for s in self.shards)

    def replace_shards(self, shards) -> "SystemState":
        return SystemState(tuple(shards), self.prices)


@dataclass(frozen=True)
class TradeAction:
    """Per-shard token-A outputs for a single BA demand."""

    outputs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(float(x) for x in self.outputs))
        if any(x < 0 for x in self.outputs):
            raise ParameterError("trade outputs must be non-negative")

    @classmethod
    def one_hot(cls, n: int, index: int, demand: float) -> "TradeAction":
        out = [0.0] * n
        out[index] = demand
        return cls(tuple(out))

    @property
    def demand(self) -> float:
        return math.fsum(self.outputs)

    @property
    def shards_used(self) -> list[int]:
        return [i for i, x in enumerate(self.outputs) if x > 0]

    @property
    def is_split(self) -> bool:
        return len(self.shards_used) > 1


@dataclass(frozen=True)
class LpAction:
    """Token-A deposits per shard; token-B deposits follow the price ratio."""

    deposits_a: tuple[float, ...]
    level: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "deposits_a", tuple(float(x) for x in self.deposits_a))
        if any(x < 0 for x in self.deposits_a):
            raise ParameterError("deposits must be non-negative")

    def deposits_b(self, prices: MarketPrices) -> tuple[float, ...]:
        return tuple(prices.ratio * x for x in self.deposits_a)

    @property
    def total_a(self) -> float:
        return math.fsum(self.deposits_a)


# -- traders -------------------------------------------------------------------

def tie_set(state: SystemState, tol: float = TIE_TOL) -> list[int]:
    """Indices of the shards whose token-A reserve is minimal (within ``tol``)."""
    ra = state.reserves_a
    smallest = ra.min()
    return [int(i) for i in np.flatnonzero(ra <= smallest * (1 + tol))]


def trader_cost(state: SystemState, action: TradeAction, fee) -> float:
    """Value (at external prices) of everything a BA trader pays; utility is its negation."""
    if len(action.outputs) != state.n:
        raise ParameterError("action length does not match the number of shards")
    total = 0.0
    for shard, out in zip(state.shards, action.outputs):
        if out == 0:
            continue
        if out >= shard.reserve_a:
            raise amm.DomainError("trade output would drain a shard")
        total += float(fee.gross(shard.reserve_a, shard.reserve_b, out))
    return state.prices.price_b * total


def _zoom_min(f, lo: np.ndarray, hi: np.ndarray, first: int = 129, later: int = 17,
              rel_width: float = 1e-13, max_rounds: int = 40):
    """Row-wise grid-and-zoom minimisation of a vectorised objective.

    ``f`` maps an (m, g) array of abscissae to objective values; each row is an
    independent 1-D problem on [lo, hi].  Robust to the concave/convex pieces of
    the gross function, which defeat plain golden-section search.
    """
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    scale = np.maximum(np.abs(hi), np.abs(lo)) + 1e-300
    best_x = lo.copy()
    best_v = np.full(lo.shape, np.inf)
    g = first
    for _ in range(max_rounds):
        t = np.linspace(0.0, 1.0, g)
        x = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        v = f(x)
        idx = np.argmin(v, axis=1)
        rows = np.arange(lo.size)
        cand_v = v[rows, idx]
        better = cand_v < best_v
        best_v = np.where(better, cand_v, best_v)
        best_x = np.where(better, x[rows, idx], best_x)
        step = (hi - lo) / (g - 1)
        lo = np.maximum(lo, best_x - step)
        hi = np.minimum(hi, best_x + step)
        g = later
        if np.all(hi - lo <= rel_width * scale):
            break
    return best_x, best_v


def balanced_split_batch(ra: float, rb: float, n: int, demands, fee) -> np.ndarray:
    """Exact optimal allocations of many demands over n identical shards.

    The gross amount is concave up to some output and convex beyond, so an
    optimal allocation uses k shards: at most one of them in the concave part
    and the other k-1 sharing equally.  The search runs over k and the odd
    amount for all demands at once; row t of the result allocates demands[t]
    with the odd amount first.
    """
    d = np.atleast_1d(np.asarray(demands, dtype=float))
    if np.any(d >= n * ra * (1 - DRAIN_MARGIN)):
        raise InfeasibleError("demand exceeds the available liquidity")
    cap = ra * (1 - DRAIN_MARGIN)
    t = d.size
    km1 = np.tile(np.arange(n, dtype=float), t)       # k - 1, flattened (t * n,)
    dd = np.repeat(d, n)
    lo = np.maximum(0.0, dd - km1 * cap)
    hi = np.minimum(dd, cap)
    feasible = lo <= hi
    lo = np.where(feasible, lo, 0.0)
    hi = np.where(feasible, hi, 0.0)

    def total(y, km1=km1, dd=dd, feasible=feasible):
        if y.ndim == 2:
            km1, dd, feasible = km1[:, None], dd[:, None], feasible[:, None]
        z = np.where(km1 > 0, (dd - y) / np.maximum(km1, 1.0), 0.0)
        cost = fee.gross(ra, rb, y) + km1 * fee.gross(ra, rb, z)
        return np.where(feasible, cost, np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        y_best, v_best = _zoom_min(total, lo, hi)
        y_eq = dd / (km1 + 1)
        v_eq = total(y_eq)
    use_eq = v_eq <= v_best
    y_best = np.where(use_eq, y_eq, y_best).reshape(t, n)
    v_best = np.where(use_eq, v_eq, v_best).reshape(t, n)
    k = np.argmin(v_best, axis=1) + 1
    rows = np.arange(t)
    y = y_best[rows, k - 1]
    z = np.where(k > 1, (d - y) / np.maximum(k - 1, 1), 0.0)
    out = np.where(np.arange(n)[None, :] < k[:, None], z[:, None], 0.0)
    out[:, 0] = y
    out = np.where(out <= 1e-12 * d[:, None], 0.0, out)
    sums = out.sum(axis=1, keepdims=True)
    return out * np.divide(d[:, None], sums, out=np.ones_like(sums), where=sums > 0)


def _clean(out: np.ndarray, demand: float) -> np.ndarray:
    out = np.where(out <= 1e-12 * demand, 0.0, out)
    s = out.sum()
    if s > 0:
        out = out * (demand / s)
    return out


def _pair_polish(ra, rb, x, fee, tol=1e-10, max_sweeps=100) -> tuple[np.ndarray, float]:
    """Pairwise coordinate descent: move mass between two shards at a time."""
    n = x.size
    caps = ra * (1 - DRAIN_MARGIN)
    cost = float(np.sum(fee.gross(ra, rb, x)))
    for _ in range(max_sweeps):
        start = cost
        for i in range(n):
            for j in range(i + 1, n):
                s = x[i] + x[j]
                if s <= 0:
                    continue
                lo = max(0.0, s - caps[j])
                hi = min(s, caps[i])
                if hi <= lo:
                    continue

                def pair(t, i=i, j=j, s=s):
                    return fee.gross(ra[i], rb[i], t) + fee.gross(ra[j], rb[j], s - t)

                t_best, v_best = _zoom_min(pair, np.array([lo]), np.array([hi]), first=33)
                current = float(pair(np.array(x[i])))
                if v_best[0] < current:
                    x = x.copy()
                    x[i], x[j] = t_best[0], s - t_best[0]
                    cost = float(np.sum(fee.gross(ra, rb, x)))
        if start - cost <= tol * abs(start):
            break
    return x, cost


def optimal_split(reserves_a, reserves_b, demand: float, fee, polish_limit: int = 0) -> np.ndarray:
    """Cost-minimising per-shard outputs, ignoring the small-trade shortcut."""
    ra = np.asarray(reserves_a, dtype=float)
    rb = np.asarray(reserves_b, dtype=float)
    n = ra.size
    if demand >= ra.sum() * (1 - DRAIN_MARGIN):
        raise InfeasibleError("demand exceeds the available liquidity")
    balanced = (np.all(ra <= ra.min() * (1 + TIE_TOL)) and np.all(rb <= rb.min() * (1 + TIE_TOL)))
    if balanced:
        x = balanced_split_batch(float(ra[0]), float(rb[0]), n, [demand], fee)[0]
        if n <= polish_limit and np.count_nonzero(x) > 0:
            x, _ = _pair_polish(ra, rb, x, fee)
            x = _clean(x, demand)
        return x

    starts = []
    order = np.argsort(-ra, kind="stable")
    for k in range(1, n + 1):
        top = order[:k]
        if demand < ra[top].sum() * (1 - DRAIN_MARGIN):
            x = np.zeros(n)
            x[top] = demand * ra[top] / ra[top].sum()
            starts.append(x)
    for i in range(n):
        if demand < ra[i] * (1 - DRAIN_MARGIN):
            starts.append(np.eye(n)[i] * demand)
    best_x, best_cost = None, math.inf
    for x0 in starts:
        x, cost = _pair_polish(ra, rb, x0, fee)
        if cost < best_cost:
            best_x, best_cost = x, cost
    return _clean(best_x, demand)


def best_trade_samm(state: SystemState, demand: float, fee) -> TradeAction:
    """Cost-minimising action of a BA trader.

    Demands within the certified fraction ``fee.c`` of the smallest shard go
    entirely to the lowest-index smallest shard; :func:`tie_set` lists the
    equally good alternatives.  Larger demands are split by exact minimisation.
    """
    if demand < 0:
        raise ParameterError("demand must be non-negative")
    n = state.n
    if demand == 0:
        return TradeAction((0.0,) * n)
    ra = state.reserves_a
    if demand >= ra.sum():
        raise InfeasibleError("demand exceeds the total token-A liquidity")
    c = getattr(fee, "c", 0.0)
    if c > 0 and demand <= c * ra.min():
        return TradeAction.one_hot(n, tie_set(state)[0], demand)
    return TradeAction(tuple(optimal_split(ra, state.reserves_b, demand, fee)))


def best_trade_cpmm(state: SystemState, demand: float) -> TradeAction:
    """Proportional split, the unique best response against constant-ratio fees."""
    ra = state.reserves_a
    if demand >= ra.sum():
        raise InfeasibleError("demand exceeds the total token-A liquidity")
    return TradeAction(tuple(demand * ra / ra.sum()))


def execute_trade(state: SystemState, action: TradeAction, fee) -> tuple[SystemState, list[float]]:
    """Run a BA action, pay fees out of band and let arbitrageurs restore prices.

    Returns the new state and the token-B fee collected by every shard.
    """
    shards = list(state.shards)
    fees = [0.0] * state.n
    for i, out in enumerate(action.outputs):
        if out == 0:
            continue
        shard = shards[i]
        trade = amm.Trade.buy_a(shard, out)
        fees[i] = float(fee.fee(shard.reserve_a, shard.reserve_b, out))
        shards[i] = amm.arbitrage_rebalance(amm.apply_trade(shard, trade), state.prices)
    return state.replace_shards(shards), fees


# -- liquidity providers ---------------------------------------------------------

def fillup_action(state: SystemState, endowment_a: float) -> LpAction:
    """Water-fill the smallest shards up to a common token-A level."""
    if endowment_a < 0:
        raise ParameterError("endowment must be non-negative")
    ra = state.reserves_a
    n = ra.size
    order = np.argsort(ra, kind="stable")
    r = ra[order]
    prefix = np.cumsum(r)
    level = r[0]
    m = 1
    for m in range(1, n + 1):
        level = (endowment_a + prefix[m - 1]) / m
        if m == n or level <= r[m]:
            break
    deposits = np.zeros(n)
    deposits[order[:m]] = np.maximum(0.0, level - r[:m])
    if endowment_a > 0:
        # put the rounding residue on the largest deposit so the total is exact
        filled = order[:m]
        j = int(filled[np.argmax(deposits[filled])])
        deposits[j] += endowment_a - math.fsum(deposits)
    return LpAction(tuple(deposits), level=float(level))


def apply_lp(state: SystemState, lp: LpAction) -> tuple[SystemState, list[float]]:
    """Deposit an LP action; returns the new state and minted shares per shard."""
    if len(lp.deposits_a) != state.n:
        raise ParameterError("action length does not match the number of shards")
    shards, minted = [], []
    for shard, da, db in zip(state.shards, lp.deposits_a, lp.deposits_b(state.prices)):
        if da > 0:
            shard, m = amm.add_liquidity(shard, da, db)
        else:
            m = 0.0
        shards.append(shard)
        minted.append(m)
    return state.replace_shards(shards), minted


def lp_revenue(state: SystemState, lp: LpAction, trade: TradeAction, fee) -> float:
    """Value of the fees the provider earns from ``trade`` after depositing ``lp``.

    ``trade`` is evaluated on the post-deposit state.
    """
    total = 0.0
    for shard, da, db, out in zip(state.shards, lp.deposits_a, lp.deposits_b(state.prices),
                                  trade.outputs):
        if da == 0 or out == 0:
            continue
        ra, rb = shard.reserve_a + da, shard.reserve_b + db
        total += float(fee.fee(ra, rb, out)) * da / ra
    return state.prices.price_b * total
