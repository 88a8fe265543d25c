"""Amdahl-law throughput scaling across shards."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .errors import DomainError, ParameterError, TraceFormatError

# Measured single-shard throughput and the fitted parallel fraction of the reference deployment.
OBSERVED_T_SINGLE = 214.0
FITTED_P = 0.8
# single-shard throughput implied by the quoted 1330 tps asymptote at P = 0.8
IMPLIED_T_SINGLE = 266.0


@dataclass(frozen=True)
class AmdahlParams:
    t_single: float
    p_parallel: float

    def __post_init__(self):
        if not self.t_single > 0:
            raise ParameterError("t_single must be positive")
        if not 0 <= self.p_parallel <= 1:
            raise ParameterError("p_parallel must lie in [0, 1]")


def _s(n, p):
    return 1.0 / ((1.0 - p) + p / n)


def speedup(params: AmdahlParams, n) -> float | np.ndarray:
    """1 / ((1 - P) + P / n); accepts an integer or an array of shard counts."""
    arr = np.asarray(n, dtype=float)
    if np.any(arr < 1):
        raise DomainError("n must be at least 1")
    out = _s(arr, params.p_parallel)
    return float(out) if out.ndim == 0 else out


def throughput(params: AmdahlParams, n, hard_cap: float | None = None):
    """Total throughput t_single * S(n), optionally clipped at a gas-limit plateau."""
    t = params.t_single * speedup(params, n)
    if hard_cap is not None:
        t = np.minimum(t, hard_cap)
        t = float(t) if np.ndim(t) == 0 else t
    return t


def asymptotic_bound(params: AmdahlParams) -> float:
    """t_single / (1 - P); infinite for a fully parallel workload."""
    if params.p_parallel >= 1:
        return math.inf
    return params.t_single / (1.0 - params.p_parallel)


def default_cap(n: int, t_single: float = OBSERVED_T_SINGLE, p: float = FITTED_P) -> int:
    """Trades per second a SAMM with ``n`` shards sustains under the default scaling model."""
    return int(math.floor(t_single * speedup(AmdahlParams(t_single, p), n)))


def fit_p(observations: Sequence[tuple[float, float]]) -> tuple[AmdahlParams, float]:
    """Least-squares fit of (t_single, P); returns the fit and its R^2."""
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 2 or obs.shape[1] != 2:
        raise ParameterError("observations must be (n, throughput) pairs")
    n, y = obs[:, 0], obs[:, 1]
    if np.unique(n).size < 3:
        raise ParameterError("need at least three distinct shard counts")
    if np.any(n < 1) or np.any(y <= 0):
        raise ParameterError("shard counts must be >= 1 and throughputs positive")

    def model(x, t, p):
        return t * _s(x, p)

    best = None
    for p0 in np.arange(0.1, 1.0, 0.1):
        try:
            popt, _ = curve_fit(model, n, y, p0=(float(y[np.argmin(n)]), p0),
                                bounds=([1e-12, 0.0], [np.inf, 1.0]), method="trf",
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10_000)
        except RuntimeError:
            continue
        sse = float(np.sum((model(n, *popt) - y) ** 2))
        if best is None or sse < best[1]:
            best = (popt, sse)
    if best is None:
        raise ParameterError("fit did not converge")
    (t, p), sse = best
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    return AmdahlParams(float(t), float(min(1.0, max(0.0, p)))), r2


def load_observations(path) -> list[tuple[float, float]]:
    """Read a two-column ``n,throughput`` CSV (header required)."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["n", "throughput"]:
        raise TraceFormatError("expected header 'n,throughput'", 1)
    out = []
    for i, row in enumerate(rows[1:], 2):
        if not row:
            continue
        try:
            out.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise TraceFormatError("bad observation row", i) from None
    return out
