"""Sharded constant-product AMM with a bounded-ratio polynomial trading fee.

Submodules: :mod:`amm` (pool math), :mod:`fees` (fee family and parameter
design), :mod:`properties` (sampled property checks), :mod:`strategy` (best
responses), :mod:`game` (sequential game and equilibrium checks),
:mod:`trace` and :mod:`replay` (trace replay), :mod:`throughput` (Amdahl
scaling) and :mod:`risk` (sandwich analysis).
"""
from .amm import (MarketPrices, ShardState, Trade, add_liquidity, apply_trade,
                  arbitrage_rebalance, burn_shares, cpmm_gross, mint_shares, net_amount,
                  remove_liquidity)
from .errors import (DomainError, IllegalTradeError, InfeasibleError, ParameterError, SammError,
                     TraceFormatError)
from .fees import (REFERENCE_PARAMS, CpmmFee, FeasibilityReport, FeeParams, feasibility_report,
                   gross_samm, load_params, max_c, necessary_check, save_params,
                   solve_params_for_c, sufficiency_check, tf_brp)
from .strategy import (LpAction, SystemState, TradeAction, best_trade_cpmm, best_trade_samm,
                       fillup_action, lp_revenue, tie_set, trader_cost)

__version__ = "0.1.0"

__all__ = [
    "MarketPrices", "ShardState", "Trade", "add_liquidity", "apply_trade", "arbitrage_rebalance",
    "burn_shares", "cpmm_gross", "mint_shares", "net_amount", "remove_liquidity",
    "DomainError", "IllegalTradeError", "InfeasibleError", "ParameterError", "SammError",
    "TraceFormatError",
    "REFERENCE_PARAMS", "CpmmFee", "FeasibilityReport", "FeeParams", "feasibility_report",
    "gross_samm", "load_params", "max_c", "necessary_check", "save_params",
    "solve_params_for_c", "sufficiency_check", "tf_brp",
    "LpAction", "SystemState", "TradeAction", "best_trade_cpmm", "best_trade_samm",
    "fillup_action", "lp_revenue", "tie_set", "trader_cost",
]
