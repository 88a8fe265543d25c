"""Sandwich-attack revenue on a single pool and the CPMM counterexample.

Sandwich victims here follow the fixed-input convention: the victim sells a
fixed ``victim_input_a`` of token A for at least ``min_output_b`` of token B.
This is the opposite of the fixed-output traders used elsewhere in the
package; both conventions are intentional.  Trading and gas fees are ignored
unless ``gamma`` is passed to :func:`simulate_sandwich`, which is an
exploration knob outside the closed-form model.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from scipy.optimize import brentq, minimize_scalar

from .amm import MarketPrices, ShardState, net_kernel, rel_close
from .errors import DomainError, ParameterError


@dataclass(frozen=True)
class SandwichScenario:
    victim_input_a: float
    pool: ShardState
    prices: MarketPrices
    min_output_b: float = 0.0

    def __post_init__(self):
        if self.victim_input_a < 0 or self.min_output_b < 0:
            raise ParameterError("victim input and minimum output must be non-negative")
        if not self.pool.is_active():
            raise DomainError("pool must hold both tokens")
        if not rel_close(self.pool.reported_price, self.prices.ratio):
            raise DomainError("pool is not arbitrage-free at the given prices")
        if self.min_output_b > self.expected_output * (1 + 1e-12):
            raise DomainError("minimum output exceeds the expected output; the trade cannot execute")

    @classmethod
    def from_tolerance(cls, victim_input_a: float, tolerance: float, pool: ShardState,
                       prices: MarketPrices) -> "SandwichScenario":
        if not 0 <= tolerance <= 1:
            raise ParameterError("slippage tolerance must lie in [0, 1]")
        o0 = expected_output_raw(pool, victim_input_a)
        return cls(victim_input_a, pool, prices, max(0.0, o0 * (1 - tolerance)))

    @property
    def expected_output(self) -> float:
        return expected_output_raw(self.pool, self.victim_input_a)

    @property
    def slippage_tolerance(self) -> float:
        o0 = self.expected_output
        return (o0 - self.min_output_b) / o0 if o0 > 0 else 0.0

    def with_pool_size(self, reserve_a: float) -> "SandwichScenario":
        pool = ShardState(reserve_a, reserve_a * self.prices.ratio)
        return SandwichScenario(self.victim_input_a, pool, self.prices, self.min_output_b)


def expected_output_raw(pool: ShardState, input_a: float) -> float:
    return pool.reserve_b * input_a / (pool.reserve_a + input_a)


def expected_output(sc: SandwichScenario) -> float:
    """Token B the victim receives without an attack."""
    return sc.expected_output


def sandwich_revenue(sc: SandwichScenario) -> float:
    """Maximal attacker revenue in token A: I s (I + R) / (I s + R)."""
    i, s, r = sc.victim_input_a, sc.slippage_tolerance, sc.pool.reserve_a
    if i == 0 or s == 0:
        return 0.0
    if sc.min_output_b == 0:
        return float(i)     # s = 1: the victim's whole input, independent of R^A
    return i * s * (i + r) / (i * s + r)


def sandwich_revenue_min_output_form(sc: SandwichScenario) -> float:
    """The same revenue written through the minimum output: I - q - q^2 / (R - q)."""
    q = sc.min_output_b / sc.prices.ratio
    r = sc.pool.reserve_a
    return sc.victim_input_a - q - q * q / (r - q)


def revenue_derivative(sc: SandwichScenario) -> float:
    """d Rev / d R^A at fixed minimum output."""
    q = sc.min_output_b / sc.prices.ratio
    return q * q / (sc.pool.reserve_a - q) ** 2


def _swap_out(amount_in: float, reserve_in: float, reserve_out: float, gamma: float) -> float:
    return reserve_out * gamma * amount_in / (reserve_in + gamma * amount_in)


def simulate_sandwich(sc: SandwichScenario, gamma: float = 1.0) -> dict:
    """Numerically optimal front-run / victim / back-run sequence.

    The attacker sells x token A first, the victim trades, and the attacker
    sells back all token B received.  With ``gamma`` = 1 the result must equal
    :func:`sandwich_revenue`; ``gamma`` < 1 charges an input-side fee on
    every swap and is not covered by the closed form.
    """
    if not 0 < gamma <= 1:
        raise ParameterError("gamma must lie in (0, 1]")
    ra, rb, i, omin = sc.pool.reserve_a, sc.pool.reserve_b, sc.victim_input_a, sc.min_output_b

    def legs(x):
        y1 = _swap_out(x, ra, rb, gamma)
        a, b = ra + gamma * x, rb - y1
        y2 = _swap_out(i, a, b, gamma)
        a2, b2 = a + gamma * i, b - y2
        z = _swap_out(y1, b2, a2, gamma)
        return y1, y2, z

    def victim_slack(x):
        return legs(x)[1] - omin

    if i == 0 or victim_slack(0.0) <= 0:
        return {"front_run_a": 0.0, "revenue_a": 0.0, "victim_output_b": legs(0.0)[1]}
    if omin == 0 and gamma == 1.0:
        # unbounded front-run; the revenue only approaches the victim's whole input
        return {"front_run_a": math.inf, "revenue_a": float(i), "victim_output_b": 0.0}
    hi = max(1.0, ra)
    while victim_slack(hi) > 0 and hi < 1e12 * max(1.0, ra):
        hi *= 2
    if victim_slack(hi) > 0:
        x_max = hi
    else:
        x_max = brentq(victim_slack, 0.0, hi, xtol=1e-14 * max(1.0, ra), rtol=1e-15)
    if gamma == 1.0:
        x = x_max   # profit increases with the front-run size
    else:
        res = minimize_scalar(lambda t: -(legs(t)[2] - t), bounds=(0.0, x_max), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, x_max)})
        x = max((0.0, res.x, x_max), key=lambda t: legs(t)[2] - t)
    _, y2, z = legs(x)
    return {"front_run_a": float(x), "revenue_a": float(z - x), "victim_output_b": float(y2)}


@dataclass
class SizePoint:
    reserve_a: float
    revenue: float | None
    feasible: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def revenue_pool_size_sensitivity(sc: SandwichScenario, pool_sizes: Sequence[float]) -> list[SizePoint]:
    """Revenue at each pool size with the victim's minimum output held fixed."""
    out = []
    for r in pool_sizes:
        try:
            out.append(SizePoint(float(r), sandwich_revenue(sc.with_pool_size(r)), True))
        except (DomainError, ParameterError):
            out.append(SizePoint(float(r), None, False))
    return out


def sandwich_report(sc: SandwichScenario, pool_sizes: Sequence[float] = ()) -> dict:
    sweep = revenue_pool_size_sensitivity(sc, pool_sizes)
    revs = [p.revenue for p in sweep if p.feasible]
    return {
        "victim_input_a": sc.victim_input_a,
        "reserve_a": sc.pool.reserve_a,
        "reserve_b": sc.pool.reserve_b,
        "min_output_b": sc.min_output_b,
        "expected_output_b": sc.expected_output,
        "slippage_tolerance": sc.slippage_tolerance,
        "revenue_a": sandwich_revenue(sc),
        "revenue_a_min_output_form": sandwich_revenue_min_output_form(sc),
        "size_sweep": [p.to_dict() for p in sweep],
        "sweep_strictly_increasing": all(b > a for a, b in zip(revs, revs[1:])),
        "sweep_constant": all(math.isclose(a, b, rel_tol=1e-12) for a, b in zip(revs, revs[1:])),
    }


# -- CPMM counterexample ----------------------------------------------------------

@dataclass
class CounterexampleReport:
    c: float
    gamma: float
    splitting_margin: float          # G(cR) - 2 G(cR/2); positive means splitting is cheaper
    splitting_margin_rel: float
    smaller_better_margin: float     # G_small(cR) - G_large(cR); positive means the small pool is costlier
    smaller_better_margin_rel: float

    @property
    def violates_non_splitting(self) -> bool:
        return self.splitting_margin > 0

    @property
    def violates_smaller_better(self) -> bool:
        return self.smaller_better_margin > 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["violates_non_splitting"] = self.violates_non_splitting
        d["violates_smaller_better"] = self.violates_smaller_better
        return d


def cpmm_counterexample(c: float, state: ShardState, gamma: float = 0.997) -> CounterexampleReport:
    """Show that a constant-ratio fee breaks both properties at fraction ``c``.

    Splitting c*R^A into two halves is cheaper than one trade, and a pool of
    twice the size at the same price quotes less for the same output.
    """
    if not 0 < c < 1:
        raise ParameterError("c must lie in (0, 1)")
    if not 0 < gamma <= 1:
        raise ParameterError("gamma must lie in (0, 1]")
    if not state.is_active():
        raise DomainError("pool must hold both tokens")
    ra, rb = state.reserve_a, state.reserve_b
    o = c * ra

    def g(a, b, out):
        return float(net_kernel(a, b, out)) / gamma

    whole = g(ra, rb, o)
    split = 2 * g(ra, rb, o / 2)
    small, large = whole, g(2 * ra, 2 * rb, o)
    return CounterexampleReport(c, gamma, whole - split, (whole - split) / split,
                                small - large, (small - large) / large)


def to_json(obj: dict) -> str:
    return json.dumps(obj, indent=2) + "\n"
