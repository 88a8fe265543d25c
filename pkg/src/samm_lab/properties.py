"""Seeded randomized checks of the non-splitting and smaller-better properties.

Reserves are drawn uniformly from [1, 1e9], the reported price log-uniformly
from [1e-3, 1e3], and output amounts from (0, c * reserve_a].  Every check
works with any fee model exposing ``gross`` (see :mod:`samm_lab.fees`), so a
plain CPMM can be passed as a negative control.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RESERVE_RANGE = (1.0, 1e9)


@dataclass
class PropertyResult:
    name: str
    trials: int
    violations: int
    min_margin: float
    worst_case: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "trials": self.trials, "violations": self.violations,
                "passed": self.passed, "min_margin": self.min_margin,
                "worst_case": self.worst_case}


def _pools(rng: np.random.Generator, size: int):
    ra = rng.uniform(*RESERVE_RANGE, size)
    rho = 10.0 ** rng.uniform(-3, 3, size)
    return ra, rho


def _unit_open_closed(rng, size):
    # (0, 1]
    return 1.0 - rng.random(size)


def _result(name, margins, cases: dict) -> PropertyResult:
    if margins.size == 0:
        return PropertyResult(name, 0, 0, float("nan"))
    worst = int(np.argmin(margins))
    return PropertyResult(
        name, int(margins.size), int(np.count_nonzero(margins <= 0)), float(margins[worst]),
        {k: (v[worst].tolist() if isinstance(v, np.ndarray) else v) for k, v in cases.items()},
    )


def check_non_splitting(fee, c: float, samples: int = 10_000, seed: int = 0,
                        max_parts: int = 5) -> PropertyResult:
    """Splitting a trade of at most c * R^A into 2..max_parts positive pieces must cost more."""
    rng = np.random.default_rng(seed)
    ra, rho = _pools(rng, samples)
    rb = rho * ra
    total = _unit_open_closed(rng, samples) * c * ra
    m = rng.integers(2, max_parts + 1, samples)
    w = _unit_open_closed(rng, (samples, max_parts))
    w[np.arange(max_parts)[None, :] >= m[:, None]] = 0.0
    parts = total[:, None] * w / w.sum(axis=1, keepdims=True)
    single = fee.gross(ra, rb, total)
    split = fee.gross(ra[:, None], rb[:, None], parts).sum(axis=1)
    margins = (split - single) / single
    return _result("non_splitting", margins, {"reserve_a": ra, "reserve_b": rb, "parts": parts})


def check_smaller_better(fee, c: float, samples: int = 10_000, seed: int = 0) -> PropertyResult:
    """At equal reported price, the smaller pool quotes strictly less for O <= c * R_small."""
    rng = np.random.default_rng(seed)
    r1 = rng.uniform(*RESERVE_RANGE, samples)
    r2 = rng.uniform(*RESERVE_RANGE, samples)
    small, large = np.minimum(r1, r2), np.maximum(r1, r2)
    keep = small < large
    small, large = small[keep], large[keep]
    rho = 10.0 ** rng.uniform(-3, 3, small.size)
    out = _unit_open_closed(rng, small.size) * c * small
    g_small = fee.gross(small, rho * small, out)
    g_large = fee.gross(large, rho * large, out)
    margins = (g_large - g_small) / g_small
    return _result("smaller_better", margins,
                   {"reserve_small": small, "reserve_large": large, "price": rho, "output": out})


def check_concavity(fee, c: float, samples: int = 10_000, seed: int = 0,
                    step_fraction: float = 1e-3) -> PropertyResult:
    """Second finite differences of the gross amount are negative on (0, c * R^A)."""
    rng = np.random.default_rng(seed)
    ra, rho = _pools(rng, samples)
    rb = rho * ra
    h = step_fraction * c * ra
    x = h + rng.random(samples) * (c * ra - 2 * h)
    d2 = fee.gross(ra, rb, x + h) - 2 * fee.gross(ra, rb, x) + fee.gross(ra, rb, x - h)
    margins = -d2 / fee.gross(ra, rb, x)
    return _result("concavity", margins, {"reserve_a": ra, "reserve_b": rb, "output": x})
