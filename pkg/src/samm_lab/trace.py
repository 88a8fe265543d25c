"""Trade traces: CSV I/O, a calibrated synthetic generator and size statistics.

CSV schema (UTF-8, ``.`` decimal separator)::

    timestamp,side,output_amount[,price_a,price_b]

``side`` is ``BA`` (trader receives token A) or ``AB`` (receives token B) and
``output_amount`` is the amount of the received token.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, TraceFormatError

log = logging.getLogger(__name__)

SIDES = ("AB", "BA")
HEADER = ("timestamp", "side", "output_amount")
PRICE_COLUMNS = ("price_a", "price_b")


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    side: str
    output_amount: float
    price_a: float | None = None
    price_b: float | None = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise ParameterError(f"side must be AB or BA, got {self.side!r}")
        if not (math.isfinite(self.output_amount) and self.output_amount > 0):
            raise ParameterError("output_amount must be positive")
        if (self.price_a is None) != (self.price_b is None):
            raise ParameterError("give both prices or neither")
        if self.price_a is not None and not (self.price_a > 0 and self.price_b > 0):
            raise ParameterError("prices must be positive")

    @property
    def has_prices(self) -> bool:
        return self.price_a is not None


def _parse_row(row: list[str], lineno: int, with_prices: bool) -> TraceRecord:
    expected = 5 if with_prices else 3
    if len(row) != expected:
        raise TraceFormatError(f"expected {expected} fields, got {len(row)}", lineno)
    try:
        ts = int(row[0])
        amount = float(row[2])
        prices = (float(row[3]), float(row[4])) if with_prices else (None, None)
    except ValueError as exc:
        raise TraceFormatError(f"bad number ({exc})", lineno) from None
    try:
        return TraceRecord(ts, row[1].strip(), amount, *prices)
    except ParameterError as exc:
        raise TraceFormatError(str(exc), lineno) from None


def parse_trace(text: str) -> list[TraceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i, r) for i, r in enumerate(rows, 1) if r and any(f.strip() for f in r)]
    if not rows:
        raise TraceFormatError("empty trace file")
    lineno, header = rows[0]
    header = tuple(h.strip() for h in header)
    if header == HEADER:
        with_prices = False
    elif header == HEADER + PRICE_COLUMNS:
        with_prices = True
    else:
        raise TraceFormatError(f"unexpected header {','.join(header)!r}", lineno)
    records = [_parse_row([f.strip() for f in r], i, with_prices) for i, r in rows[1:]]
    if not records:
        raise TraceFormatError("trace has a header but no rows")
    if any(b.timestamp < a.timestamp for a, b in zip(records, records[1:])):
        log.warning("trace timestamps out of order; applying a stable sort")
        records.sort(key=lambda r: r.timestamp)
    return records


def load_trace(path) -> list[TraceRecord]:
    return parse_trace(Path(path).read_text(encoding="utf-8"))


def format_trace(records: Sequence[TraceRecord]) -> str:
    with_prices = any(r.has_prices for r in records)
    if with_prices and not all(r.has_prices for r in records):
        raise ParameterError("either every record carries prices or none does")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER + (PRICE_COLUMNS if with_prices else ()))
    for r in records:
        row = [r.timestamp, r.side, repr(r.output_amount)]
        if with_prices:
            row += [repr(r.price_a), repr(r.price_b)]
        writer.writerow(row)
    return buf.getvalue()


def write_trace(records: Sequence[TraceRecord], path) -> None:
    Path(path).write_text(format_trace(records), encoding="utf-8")


@dataclass(frozen=True)
class TraceModel:
    """Lognormal trade sizes relative to a reference pool, Poisson arrivals.

    The defaults put roughly 99% of trades below 0.5% of the reference
    reserve with a mean near 0.035%.
    """

    median_ratio: float = 5e-5
    sigma: float = 1.95
    arrival_rate: float = 2000.0        # trades per second
    ab_fraction: float = 0.5
    reference_reserve_a: float = 1e6
    reference_reserve_b: float = 2e6
    max_ratio: float = 0.5

    def __post_init__(self):
        if not (self.median_ratio > 0 and self.sigma >= 0 and self.arrival_rate > 0):
            raise ParameterError("median_ratio and arrival_rate must be positive, sigma >= 0")
        if not 0 <= self.ab_fraction <= 1:
            raise ParameterError("ab_fraction must lie in [0, 1]")
        if not 0 < self.max_ratio < 1:
            raise ParameterError("max_ratio must lie in (0, 1)")


def synthesize_trace(model: TraceModel = TraceModel(), seed: int = 0, count: int = 10_000) -> list[TraceRecord]:
    if count < 0:
        raise ParameterError("count must be non-negative")
    if count == 0:
        return []
    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / model.arrival_rate, count))
    ratio = np.minimum(model.max_ratio, model.median_ratio * np.exp(model.sigma * rng.standard_normal(count)))
    is_ab = rng.random(count) < model.ab_fraction
    reserve = np.where(is_ab, model.reference_reserve_b, model.reference_reserve_a)
    amounts = ratio * reserve
    return [TraceRecord(int(t), "AB" if ab else "BA", float(a))
            for t, ab, a in zip(arrivals, is_ab, amounts)]


def trade_ratios(records: Iterable[TraceRecord], reserve_a: float, reserve_b: float) -> np.ndarray:
    """Output amount divided by the reference reserve of the output token."""
    return np.array([r.output_amount / (reserve_a if r.side == "BA" else reserve_b)
                     for r in records])


@dataclass
class RatioStatistics:
    count: int
    mean: float
    std: float
    p99: float
    quantiles: dict[str, float]
    cdf_x: np.ndarray
    cdf_y: np.ndarray

    def cdf(self, x) -> np.ndarray:
        """Empirical CDF evaluated at ``x`` (right-continuous step function)."""
        idx = np.searchsorted(self.cdf_x, np.asarray(x, dtype=float), side="right")
        return np.where(idx > 0, self.cdf_y[np.maximum(idx - 1, 0)], 0.0)

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "std": self.std, "p99": self.p99,
                "quantiles": self.quantiles}


QUANTILES = (0.5, 0.9, 0.95, 0.99, 0.999)


def ratio_statistics_from_ratios(ratios) -> RatioStatistics:
    r = np.asarray(ratios, dtype=float)
    if r.size == 0:
        raise ParameterError("need at least one trade")
    xs, counts = np.unique(r, return_counts=True)
    return RatioStatistics(
        int(r.size), float(r.mean()), float(r.std()), float(np.quantile(r, 0.99)),
        {f"q{q:g}": float(np.quantile(r, q)) for q in QUANTILES},
        xs, np.cumsum(counts) / r.size,
    )


def ratio_statistics(records: Sequence[TraceRecord], reference_reserve) -> RatioStatistics:
    """Distribution of trade sizes relative to ``reference_reserve``.

    ``reference_reserve`` is either one number used for both tokens or a
    ``(reserve_a, reserve_b)`` pair.
    """
    if np.isscalar(reference_reserve):
        ra = rb = float(reference_reserve)
    else:
        ra, rb = reference_reserve
    return ratio_statistics_from_ratios(trade_ratios(records, ra, rb))
