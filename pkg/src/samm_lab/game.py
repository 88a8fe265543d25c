"""The sequential trader/provider game and grid-based equilibrium checks."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import amm
from .errors import InfeasibleError, ParameterError
from .strategy import (LpAction, SystemState, TradeAction, apply_lp, best_trade_samm,
                       execute_trade, fillup_action, lp_revenue, tie_set, trader_cost)


@dataclass(frozen=True)
class Distribution:
    """Non-negative draw: ``constant(v)``, ``uniform(a, b)`` or ``exponential(rate)``."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        if self.kind == "constant":
            ok = len(p) == 1 and p[0] >= 0
        elif self.kind == "uniform":
            ok = len(p) == 2 and 0 <= p[0] <= p[1]
        elif self.kind == "exponential":
            ok = len(p) == 1 and p[0] > 0
        else:
            raise ParameterError(f"unknown distribution {self.kind!r}")
        if not ok:
            raise ParameterError(f"bad parameters {p} for {self.kind} distribution")

    @classmethod
    def constant(cls, value: float) -> "Distribution":
        return cls("constant", (value,))

    @classmethod
    def uniform(cls, low: float, high: float) -> "Distribution":
        return cls("uniform", (low, high))

    @classmethod
    def exponential(cls, rate: float) -> "Distribution":
        return cls("exponential", (rate,))

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        return cls(d["kind"], tuple(d["params"]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "uniform":
            return float(rng.uniform(*self.params))
        return float(rng.exponential(1.0 / self.params[0]))


@dataclass(frozen=True)
class SchedulerConfig:
    p_lp: float
    p_trader_ab: float
    p_trader_ba: float
    lp_endowment_dist: Distribution
    demand_dist_ab: Distribution
    demand_dist_ba: Distribution
    seed: int = 0

    def __post_init__(self):
        probs = (self.p_lp, self.p_trader_ab, self.p_trader_ba)
        if any(p < 0 or p > 1 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-12):
            raise ParameterError("actor probabilities must lie in [0, 1] and sum to 1")


@dataclass
class GameStep:
    index: int
    actor: str                      # "lp", "trader_ab" or "trader_ba"
    amount: float
    action: list[float] | None
    state_before: list[list[float]]
    state_after: list[list[float]]
    utility: float | None = None
    fees: list[float] | None = None
    minted: list[float] | None = None
    skipped: str | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "actor": self.actor, "amount": self.amount,
                "action": self.action, "state_before": self.state_before,
                "state_after": self.state_after, "utility": self.utility, "fees": self.fees,
                "minted": self.minted, "skipped": self.skipped}


@dataclass
class GameTrace:
    initial: SystemState
    final: SystemState
    steps: list[GameStep] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(s.to_dict()) + "\n" for s in self.steps)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    def lp_steps(self) -> list[GameStep]:
        return [s for s in self.steps if s.actor == "lp" and s.skipped is None]

    def trader_steps(self) -> list[GameStep]:
        return [s for s in self.steps if s.actor != "lp" and s.skipped is None]


def _snapshot(state: SystemState) -> list[list[float]]:
    return [[s.reserve_a, s.reserve_b, s.shares_outstanding] for s in state.shards]


def _rebalance(state: SystemState) -> SystemState:
    return state.replace_shards(amm.arbitrage_rebalance(s, state.prices) for s in state.shards)


def _trader_turn(state: SystemState, demand: float, fee, rng) -> tuple[SystemState, TradeAction, list[float], float]:
    action = best_trade_samm(state, demand, fee)
    if not action.is_split:
        ties = tie_set(state)
        if action.shards_used and action.shards_used[0] in ties and len(ties) > 1:
            # the equilibrium strategy picks uniformly among the smallest shards
            action = TradeAction.one_hot(state.n, ties[int(rng.integers(len(ties)))], demand)
    cost = trader_cost(state, action, fee)
    new_state, fees = execute_trade(state, action, fee)
    return new_state, action, fees, cost


def run_game(initial: SystemState, cfg: SchedulerConfig, steps: int, fee) -> GameTrace:
    """Drive ``steps`` scheduler rounds from ``initial``; deterministic given ``cfg.seed``.

    Providers play the fillup action and traders their cost-minimising action.
    A provider's utility is its share of the fees from the next step's trade
    (zero if the next step is not a trade).
    """
    if steps < 0:
        raise ParameterError("steps must be non-negative")
    rng = np.random.default_rng(cfg.seed)
    probs = np.array([cfg.p_lp, cfg.p_trader_ab, cfg.p_trader_ba])
    actors = ("lp", "trader_ab", "trader_ba")
    dists = (cfg.lp_endowment_dist, cfg.demand_dist_ab, cfg.demand_dist_ba)
    state = _rebalance(initial)
    trace = GameTrace(initial, state)
    pending_lp: GameStep | None = None
    for k in range(steps):
        which = int(rng.choice(3, p=probs))
        actor = actors[which]
        amount = dists[which].sample(rng)
        before = _snapshot(state)
        step = GameStep(k, actor, amount, None, before, before)
        try:
            if actor == "lp":
                lp = fillup_action(state, amount)
                state, minted = apply_lp(state, lp)
                step.action, step.minted, step.utility = list(lp.deposits_a), minted, 0.0
            elif amount <= 0:
                step.skipped = "zero demand"
            elif actor == "trader_ba":
                state, action, fees, cost = _trader_turn(state, amount, fee, rng)
                step.action, step.fees, step.utility = list(action.outputs), fees, -cost
            else:
                swapped, action, fees, cost = _trader_turn(state.swapped(), amount, fee, rng)
                state = swapped.swapped()
                step.action, step.fees, step.utility = list(action.outputs), fees, -cost
        except InfeasibleError as exc:
            step.skipped = f"infeasible: {exc}"
        state = _rebalance(state)
        step.state_after = _snapshot(state)
        if pending_lp is not None and step.fees is not None:
            # fee value in the token the trader paid with
            price = state.prices.price_a if actor == "trader_ab" else state.prices.price_b
            shares = [row[2] for row in step.state_before]
            pending_lp.utility = price * math.fsum(
                f * m / s for f, m, s in zip(step.fees, pending_lp.minted, shares) if s > 0)
        pending_lp = step if actor == "lp" and step.skipped is None else None
        trace.steps.append(step)
    trace.final = state
    return trace


def reserve_ratio(state: SystemState) -> float:
    ra = state.reserves_a
    return float(ra.max() / ra.min())


# -- equilibrium verification -------------------------------------------------------

def simplex_grid(n: int, grid: int) -> np.ndarray:
    """All vectors of non-negative integers of length ``n`` summing to ``grid``, divided by ``grid``."""
    if n < 1 or grid < 1:
        raise ParameterError("need n >= 1 and grid >= 1")
    rows = []
    for bars in itertools.combinations(range(grid + n - 1), n - 1):
        edges = (-1,) + bars + (grid + n - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(n)])
    return np.array(rows, dtype=float) / grid


@dataclass
class TraderSpneReport:
    passed: bool
    margin: float              # relative cost excess of the best non-equilibrium action
    absolute_margin: float
    equilibrium_cost: float
    tie_set: list[int]
    tie_spread: float
    best_deviation: list[float]
    actions_checked: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_trader_spne(state: SystemState, demand: float, fee, grid: int = 64) -> TraderSpneReport:
    """Check that a one-hot trade on a smallest shard beats every enumerated split."""
    n = state.n
    if n > 4:
        raise ParameterError("grid verification is limited to n <= 4")
    ra, rb = state.reserves_a, state.reserves_b
    actions = simplex_grid(n, grid) * demand
    with np.errstate(divide="ignore", invalid="ignore"):
        costs = np.where((actions < ra).all(axis=1),
                         fee.gross(ra, rb, actions).sum(axis=1), np.inf) * state.prices.price_b
    ties = tie_set(state)
    one_hot_rows = {int(np.flatnonzero(actions[:, i] == demand)[0]): i for i in range(n)}
    eq_rows = [r for r, i in one_hot_rows.items() if i in ties]
    eq_costs = costs[eq_rows]
    eq_cost = float(eq_costs.min())
    mask = np.ones(len(costs), bool)
    mask[eq_rows] = False
    other = costs[mask]
    j = int(np.argmin(other))
    abs_margin = float(other[j] - eq_cost)
    spread = float((eq_costs.max() - eq_costs.min()) / eq_cost) if eq_cost else 0.0
    margin = abs_margin / eq_cost if eq_cost else 0.0
    return TraderSpneReport(bool(margin > 0 and spread <= 1e-9), margin, abs_margin, eq_cost,
                            ties, spread, actions[mask][j].tolist(), int(len(costs)))


@dataclass
class LpSpneReport:
    passed: bool
    fillup: list[float]
    fillup_revenue: float
    grid_best: list[float]
    grid_best_revenue: float
    gap: float                 # (grid best - fillup) / grid best, <= 0 when fillup wins
    distance: float            # max-norm distance of the grid argmax from fillup, in grid cells
    allocations_checked: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _equilibrium_trade(pre: SystemState, post: SystemState, demand: float, fee) -> list[tuple[float, TradeAction]]:
    """Trader response used by the provider check, as (probability, action) pairs.

    If the lowest-index smallest shard before the deposit is still a smallest
    shard afterwards the trader uses it; otherwise a uniform choice among the
    smallest shards.  Demands beyond the certified fraction are split optimally.
    """
    c = getattr(fee, "c", 0.0)
    if not (c > 0 and demand <= c * post.reserves_a.min()):
        return [(1.0, best_trade_samm(post, demand, fee))]
    ties = tie_set(post)
    anchor = tie_set(pre)[0]
    if anchor in ties:
        return [(1.0, TradeAction.one_hot(post.n, anchor, demand))]
    return [(1.0 / len(ties), TradeAction.one_hot(post.n, i, demand)) for i in ties]


def expected_lp_revenue(state: SystemState, lp: LpAction, demands: Sequence[float], fee,
                        weights: Sequence[float] | None = None) -> float:
    post, _ = apply_lp(state, lp)
    if weights is None:
        weights = [1.0 / len(demands)] * len(demands)
    total = 0.0
    for w, d in zip(weights, demands):
        for p, trade in _equilibrium_trade(state, post, d, fee):
            total += w * p * lp_revenue(state, lp, trade, fee)
    return total


def verify_lp_spne(state: SystemState, endowment: float, fee, demands: Sequence[float] | Distribution,
                   grid: int = 64, samples: int = 16, seed: int = 0) -> LpSpneReport:
    """Check that fillup maximises the provider's expected revenue over a simplex grid.

    ``demands`` is either a list of equally weighted trader demands or a
    :class:`Distribution` from which ``samples`` draws are taken.
    """
    if state.n > 3:
        raise ParameterError("grid verification is limited to n <= 3")
    if isinstance(demands, Distribution):
        rng = np.random.default_rng(seed)
        demands = [demands.sample(rng) for _ in range(samples)]
    demands = [d for d in demands if d > 0]
    if not demands:
        raise ParameterError("need at least one positive demand")
    fill = fillup_action(state, endowment)
    fill_rev = expected_lp_revenue(state, fill, demands, fee)
    alloc = simplex_grid(state.n, grid) * endowment
    revs = np.array([expected_lp_revenue(state, LpAction(tuple(a)), demands, fee) for a in alloc])
    j = int(np.argmax(revs))
    best = float(revs[j])
    cell = endowment / grid if endowment > 0 else 1.0
    distance = float(np.max(np.abs(alloc[j] - np.array(fill.deposits_a))) / cell)
    gap = (best - fill_rev) / best if best > 0 else 0.0
    passed = fill_rev >= best * (1 - 1e-12) or distance <= 1.0 + 1e-9
    return LpSpneReport(bool(passed), list(fill.deposits_a), fill_rev, alloc[j].tolist(), best,
                        float(gap), distance, int(len(alloc)))
