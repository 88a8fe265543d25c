"""Constant-product pool mathematics.

All functions are pure and operate on immutable value types.  Trading fees
are never merged into reserves: they are returned to the caller as a separate
cash flow and belong to the liquidity providers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, IllegalTradeError, ParameterError

REL_TOL = 1e-9


@dataclass(frozen=True)
class ShardState:
    """Reserves of one pool plus the share tokens held by its providers."""

    reserve_a: float
    reserve_b: float
    shares_outstanding: float = 1.0

    def __post_init__(self):
        for name in ("reserve_a", "reserve_b", "shares_outstanding"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ParameterError(f"{name} must be a finite non-negative number, got {value!r}")
        if self.is_active() and self.shares_outstanding == 0:
            raise ParameterError("a funded pool needs outstanding shares")

    @property
    def product(self) -> float:
        return self.reserve_a * self.reserve_b

    @property
    def reported_price(self) -> float:
        """Marginal price of token A in units of token B."""
        return self.reserve_b / self.reserve_a

    def is_active(self) -> bool:
        return self.reserve_a > 0 and self.reserve_b > 0

    def swapped(self) -> "ShardState":
        """The same pool with token roles exchanged."""
        return ShardState(self.reserve_b, self.reserve_a, self.shares_outstanding)


@dataclass(frozen=True)
class MarketPrices:
    price_a: float
    price_b: float

    def __post_init__(self):
        if not (self.price_a > 0 and self.price_b > 0):
            raise ParameterError("external prices must be strictly positive")

    @property
    def ratio(self) -> float:
        """p^A / p^B, the no-arbitrage value of reserve_b / reserve_a."""
        return self.price_a / self.price_b

    def swapped(self) -> "MarketPrices":
        return MarketPrices(self.price_b, self.price_a)


@dataclass(frozen=True)
class Trade:
    """Net token flows of one trade, seen from the pool."""

    input_a: float = 0.0
    output_a: float = 0.0
    input_b: float = 0.0
    output_b: float = 0.0

    def __post_init__(self):
        flows = (self.input_a, self.output_a, self.input_b, self.output_b)
        if any(v < 0 or not math.isfinite(v) for v in flows):
            raise ParameterError("trade amounts must be finite and non-negative")
        b_for_a = self.input_a == 0 and self.output_b == 0
        a_for_b = self.input_b == 0 and self.output_a == 0
        if not (b_for_a or a_for_b):
            raise ParameterError("a trade must go in exactly one direction")

    @classmethod
    def buy_a(cls, state: ShardState, output_a: float) -> "Trade":
        """Legal trade taking ``output_a`` token A and paying the net amount in B."""
        return cls(output_a=output_a, input_b=net_amount(state, output_a))


def _require_active(state: ShardState) -> None:
    if not state.is_active():
        raise DomainError("pool has a zero reserve; only initialisation is allowed")


# Vectorised kernels.  These accept scalars or numpy arrays and do no validation;
# the public wrappers below check preconditions.

def net_kernel(reserve_a, reserve_b, output_a):
    return reserve_b * output_a / (reserve_a - output_a)


def net_amount(state: ShardState, output_a: float) -> float:
    """Fee-free token-B payment for ``output_a`` token A."""
    _require_active(state)
    if output_a < 0:
        raise ParameterError("output amount must be non-negative")
    if output_a >= state.reserve_a:
        raise DomainError("output would drain the pool")
    return float(net_kernel(state.reserve_a, state.reserve_b, output_a))


def cpmm_gross(state: ShardState, output_a: float, gamma: float) -> float:
    """Uniswap-v2 style gross payment: net amount divided by ``gamma``."""
    if not 0 < gamma <= 1:
        raise ParameterError("gamma must lie in (0, 1]")
    return net_amount(state, output_a) / gamma


def mint_shares(state: ShardState, input_a: float, input_b: float) -> float:
    if input_a < 0 or input_b < 0:
        raise ParameterError("deposits must be non-negative")
    _require_active(state)
    return state.shares_outstanding * min(input_a / state.reserve_a, input_b / state.reserve_b)


def burn_shares(state: ShardState, input_shares: float) -> tuple[float, float]:
    if input_shares < 0:
        raise ParameterError("share amount must be non-negative")
    if input_shares > state.shares_outstanding:
        raise DomainError("cannot burn more shares than are outstanding")
    if input_shares == 0:
        return 0.0, 0.0
    frac = input_shares / state.shares_outstanding
    return frac * state.reserve_a, frac * state.reserve_b


def add_liquidity(state: ShardState, input_a: float, input_b: float) -> tuple[ShardState, float]:
    """Deposit and return ``(new_state, minted_shares)``."""
    minted = mint_shares(state, input_a, input_b)
    new = ShardState(state.reserve_a + input_a, state.reserve_b + input_b,
                     state.shares_outstanding + minted)
    return new, minted


def remove_liquidity(state: ShardState, input_shares: float) -> tuple[ShardState, float, float]:
    out_a, out_b = burn_shares(state, input_shares)
    new = ShardState(state.reserve_a - out_a, state.reserve_b - out_b,
                     state.shares_outstanding - input_shares)
    return new, out_a, out_b


def arbitrage_rebalance(state: ShardState, prices: MarketPrices) -> ShardState:
    """Move the pool along its curve until its reported price equals the market's."""
    _require_active(state)
    k = state.reserve_a * state.reserve_b
    return replace(state,
                   reserve_a=math.sqrt(k * prices.price_b / prices.price_a),
                   reserve_b=math.sqrt(k * prices.price_a / prices.price_b))


def apply_trade(state: ShardState, trade: Trade) -> ShardState:
    """Apply net flows, rejecting anything that breaks the constant product."""
    _require_active(state)
    new_a = state.reserve_a + trade.input_a - trade.output_a
    new_b = state.reserve_b + trade.input_b - trade.output_b
    if new_a <= 0 or new_b <= 0:
        raise IllegalTradeError("trade drains a reserve")
    before = state.reserve_a * state.reserve_b
    if abs(new_a * new_b - before) > REL_TOL * before:
        raise IllegalTradeError(
            f"constant product violated: {new_a * new_b!r} != {before!r}")
    return replace(state, reserve_a=new_a, reserve_b=new_b)


def rel_close(x, y, tol: float = REL_TOL) -> bool:
    """Relative closeness used for every equality assertion on reals."""
    return bool(np.all(np.abs(np.asarray(x) - np.asarray(y))
                       <= tol * np.maximum(np.abs(np.asarray(x)), np.abs(np.asarray(y)))))
