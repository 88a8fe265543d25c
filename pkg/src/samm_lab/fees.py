"""Bounded-ratio polynomial trading fee and parameter feasibility.

Two fee models share a small duck-typed interface used throughout the
package::

    model.fee(reserve_a, reserve_b, output_a)    # token-B fee
    model.gross(reserve_a, reserve_b, output_a)  # fee + net amount
    model.c                                      # certified non-splitting fraction (0 if none)

Both methods are vectorised over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .amm import ShardState, net_kernel, net_amount
from .errors import DomainError, InfeasibleError, ParameterError

EPS = 1e-12


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= EPS * max(1.0, abs(a), abs(b))


def _leq(a: float, b: float) -> bool:
    return a <= b or _close(a, b)


@dataclass(frozen=True)
class FeeParams:
    """Coefficients of the bounded-ratio polynomial fee.

    ``certified_c`` is set only for parameter sets known to satisfy the
    sufficient conditions at that fraction; construction re-checks it.
    """

    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    r_min: float
    r_max: float
    certified_c: float | None = None

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ParameterError("need 0 < r_min < r_max")
        if self.certified_c is not None:
            c = self.certified_c
            if not 0 < c < 1:
                raise ParameterError("certified c must lie in (0, 1)")
            nec = necessary_check(self, c)
            suf = sufficiency_check(self, c)
            if not (all(nec.values()) and all(suf.values())):
                raise ParameterError(f"parameters do not satisfy the sufficient conditions at c={c}")

    @classmethod
    def samm(cls, beta1: float, r_min: float, r_max: float, c: float | None = None) -> "FeeParams":
        """The three-parameter specialisation (beta2=-1, beta3=0, beta4=1, beta5=r_max)."""
        return cls(beta1, -1.0, 0.0, 1.0, r_max, r_min, r_max, certified_c=c)

    @property
    def c(self) -> float:
        return self.certified_c or 0.0

    def ratio(self, reserve_a, reserve_b, output_a):
        """Clamped fee ratio applied to the slippage-free payment."""
        poly = (self.beta1 * np.power(reserve_a, self.beta2) * np.power(reserve_b, self.beta3)
                * np.power(output_a, self.beta4) + self.beta5)
        return np.maximum(self.r_min, np.minimum(self.r_max, poly))

    def fee(self, reserve_a, reserve_b, output_a):
        return reserve_b / reserve_a * output_a * self.ratio(reserve_a, reserve_b, output_a)

    def gross(self, reserve_a, reserve_b, output_a):
        return self.fee(reserve_a, reserve_b, output_a) + net_kernel(reserve_a, reserve_b, output_a)

    def with_c(self, c: float | None) -> "FeeParams":
        d = asdict(self)
        d["certified_c"] = c
        return FeeParams(**d)

    def to_dict(self) -> dict:
        return {"beta1": self.beta1, "beta2": self.beta2, "beta3": self.beta3,
                "beta4": self.beta4, "beta5": self.beta5, "r_min": self.r_min,
                "r_max": self.r_max, "c": self.certified_c}


@dataclass(frozen=True)
class CpmmFee:
    """Constant-ratio fee of a plain CPMM (Uniswap v2 uses gamma = 0.997)."""

    gamma: float = 0.997
    c: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ParameterError("gamma must lie in (0, 1]")

    def gross(self, reserve_a, reserve_b, output_a):
        return net_kernel(reserve_a, reserve_b, output_a) / self.gamma

    def fee(self, reserve_a, reserve_b, output_a):
        return net_kernel(reserve_a, reserve_b, output_a) * (1.0 / self.gamma - 1.0)


def _check_trade(state: ShardState, output_a: float) -> None:
    if state.reserve_a <= 0 or state.reserve_b <= 0:
        raise DomainError("reserves must be positive")
    if output_a < 0 or output_a >= state.reserve_a:
        raise DomainError("output must lie in [0, reserve_a)")


def tf_brp(state: ShardState, output_a: float, params: FeeParams) -> float:
    _check_trade(state, output_a)
    if output_a == 0:
        return 0.0
    return float(params.fee(state.reserve_a, state.reserve_b, output_a))


def gross_samm(state: ShardState, output_a: float, params: FeeParams) -> float:
    return tf_brp(state, output_a, params) + net_amount(state, output_a)


# -- feasibility --------------------------------------------------------------

NECESSARY_KEYS = ("beta3_zero", "beta2_plus_beta4_zero", "beta1_negative",
                  "beta4_in_unit", "beta5_in_range", "clamp_reach")
SUFFICIENT_KEYS = ("curvature", "slope")


def necessary_check(params: FeeParams, c: float) -> dict[str, bool]:
    """The six conditions required for the smaller-better property."""
    p = params
    return {
        "beta3_zero": abs(p.beta3) <= EPS,
        "beta2_plus_beta4_zero": abs(p.beta2 + p.beta4) <= EPS,
        "beta1_negative": p.beta1 < 0,
        "beta4_in_unit": 0 < p.beta4 and _leq(p.beta4, 1.0),
        "beta5_in_range": p.r_min < p.beta5 and _leq(p.beta5, p.r_max),
        "clamp_reach": p.beta1 < 0 and _leq(c ** p.beta4, (p.beta5 - p.r_min) / -p.beta1),
    }


def _sufficiency_terms(params: FeeParams, c: float) -> tuple[float, float, float, float]:
    b1, b4 = params.beta1, params.beta4
    curvature = b1 * b4 * (b4 + 1) * c ** (b4 - 1) * (1 - c) ** 3
    slope_lhs = -b1 * b4
    slope_rhs = c ** (1 - b4) / (1 - c) ** 2
    return curvature, -2.0, slope_lhs, slope_rhs


def sufficiency_check(params: FeeParams, c: float) -> dict[str, bool]:
    """The two extra conditions that make both properties hold."""
    curvature, bound, slope_lhs, slope_rhs = _sufficiency_terms(params, c)
    return {"curvature": _leq(curvature, bound), "slope": _leq(slope_rhs, slope_lhs)}


def _is_corollary_form(params: FeeParams) -> bool:
    return (_close(params.beta2, -1.0) and abs(params.beta3) <= EPS
            and _close(params.beta4, 1.0) and _close(params.beta5, params.r_max))


def max_c(params: FeeParams) -> float:
    """Largest c the closed-form corollary certifies for three-parameter fees."""
    if not _is_corollary_form(params):
        raise ParameterError("max_c needs beta2=-1, beta3=0, beta4=1, beta5=r_max")
    if params.beta1 >= -1:
        raise InfeasibleError("beta1 must be below -1")
    return min(1 - (-params.beta1) ** (-1 / 3), (params.r_max - params.r_min) / -params.beta1)


@dataclass
class FeasibilityReport:
    c: float
    necessary_ok: dict[str, bool]
    sufficient_ok: dict[str, bool]
    corollary_ok: bool
    max_c: float | None
    marginal: list[str]

    @property
    def feasible(self) -> bool:
        return all(self.necessary_ok.values()) and all(self.sufficient_ok.values())

    def to_dict(self) -> dict:
        return {"c": self.c, "feasible": self.feasible, "necessary_ok": self.necessary_ok,
                "sufficient_ok": self.sufficient_ok, "corollary_ok": self.corollary_ok,
                "max_c": self.max_c, "marginal": self.marginal}


def feasibility_report(params: FeeParams, c: float) -> FeasibilityReport:
    if not 0 < c < 1:
        raise ParameterError("c must lie in (0, 1)")
    nec = necessary_check(params, c)
    suf = sufficiency_check(params, c)
    curvature, bound, slope_lhs, slope_rhs = _sufficiency_terms(params, c)
    marginal = [name for name, (a, b) in {
        "curvature": (curvature, bound),
        "slope": (slope_lhs, slope_rhs),
        "clamp_reach": (c ** params.beta4,
                        (params.beta5 - params.r_min) / -params.beta1 if params.beta1 else math.inf),
    }.items() if _close(a, b)]
    try:
        mc = max_c(params)
    except (InfeasibleError, ParameterError):
        mc = None
    corollary = mc is not None and _leq(c, mc)
    if mc is not None and _close(c, mc):
        marginal.append("max_c")
    return FeasibilityReport(c, nec, suf, corollary, mc, marginal)


def solve_params_for_c(c: float, ratio: float = 5.0) -> FeeParams:
    """Smallest r_max certifying ``c`` under the constraint r_max = ratio * r_min.

    Both corollary constraints bind at the optimum: the curvature one fixes
    beta1 = -(1-c)^-3 (the least negative admissible value) and the clamp one
    then gives r_max = ratio/(ratio-1) * c * (-beta1).
    """
    if not 0 < c < 1:
        raise InfeasibleError("c must lie in (0, 1)")
    if ratio <= 1:
        raise InfeasibleError("r_max/r_min ratio must exceed 1")
    beta1 = -1.0 / (1 - c) ** 3
    r_max = ratio / (ratio - 1) * c * -beta1
    r_min = r_max / ratio
    params = FeeParams.samm(beta1, r_min, r_max)
    if not feasibility_report(params, c).feasible:
        raise InfeasibleError(f"no feasible parameters for c={c}")
    return params.with_c(c)


REFERENCE_PARAMS = FeeParams.samm(beta1=-1.05, r_min=0.001, r_max=0.012, c=0.0104)


# -- flat key=value files ---------------------------------------------------

_KEYS = ("beta1", "beta2", "beta3", "beta4", "beta5", "r_min", "r_max", "c")


def dumps_params(params: FeeParams) -> str:
    lines = []
    for key, value in params.to_dict().items():
        if value is not None:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


def loads_params(text: str) -> FeeParams:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ParameterError(f"line {lineno}: {value!r} is not a number") from None
    missing = [k for k in _KEYS[:-1] if k not in values]
    if missing:
        raise ParameterError(f"missing keys: {', '.join(missing)}")
    c = values.pop("c", None)
    return FeeParams(**values, certified_c=c)


def save_params(params: FeeParams, path) -> None:
    Path(path).write_text(dumps_params(params), encoding="utf-8")


def load_params(path) -> FeeParams:
    return loads_params(Path(path).read_text(encoding="utf-8"))
