import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from samm_lab.errors import ParameterError, TraceFormatError
from samm_lab.trace import (TraceModel, TraceRecord, format_trace, load_trace, parse_trace,
                            ratio_statistics, ratio_statistics_from_ratios, synthesize_trace,
                            trade_ratios, write_trace)


def test_parse_basic():
    recs = parse_trace("timestamp,side,output_amount\n0,BA,1.5\n1, AB ,2\n\n")
    assert recs == [TraceRecord(0, "BA", 1.5), TraceRecord(1, "AB", 2.0)]


def test_parse_with_prices():
    recs = parse_trace("timestamp,side,output_amount,price_a,price_b\n3,AB,1,2.0,1.0\n")
    assert recs[0].has_prices and recs[0].price_a == 2.0


@pytest.mark.parametrize("text,line", [
    ("timestamp,side,output_amount\n0,BA,1\n1,XY,1\n", 3),
    ("timestamp,side,output_amount\n0,BA,abc\n", 2),
    ("timestamp,side,output_amount\n0,BA,-1\n", 2),
    ("timestamp,side,output_amount\n0,BA\n", 2),
    ("time,side,amount\n0,BA,1\n", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(TraceFormatError) as err:
        parse_trace(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}: ")


def test_empty_trace_is_an_error():
    with pytest.raises(TraceFormatError):
        parse_trace("")
    with pytest.raises(TraceFormatError):
        parse_trace("timestamp,side,output_amount\n")


def test_unsorted_trace_is_sorted_stably(caplog):
    with caplog.at_level(logging.WARNING):
        recs = parse_trace("timestamp,side,output_amount\n5,BA,1\n2,AB,2\n5,AB,3\n2,BA,4\n")
    assert [(r.timestamp, r.output_amount) for r in recs] == [(2, 2.0), (2, 4.0), (5, 1.0), (5, 3.0)]
    assert "out of order" in caplog.text


def test_mixed_prices_cannot_be_formatted():
    with pytest.raises(ParameterError):
        format_trace([TraceRecord(0, "BA", 1.0, 1.0, 1.0), TraceRecord(1, "BA", 1.0)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**6), st.sampled_from(["AB", "BA"]),
                          st.floats(1e-12, 1e12)), min_size=1, max_size=30))
def test_format_parse_roundtrip(rows):
    recs = sorted((TraceRecord(*r) for r in rows), key=lambda r: r.timestamp)
    assert parse_trace(format_trace(recs)) == recs


def test_file_roundtrip(tmp_path):
    recs = synthesize_trace(count=50, seed=2)
    path = tmp_path / "t.csv"
    write_trace(recs, path)
    assert load_trace(path) == recs


def test_synthetic_trace_is_deterministic_and_ordered():
    a = synthesize_trace(seed=11, count=2000)
    assert format_trace(a) == format_trace(synthesize_trace(seed=11, count=2000))
    assert format_trace(a) != format_trace(synthesize_trace(seed=12, count=2000))
    ts = [r.timestamp for r in a]
    assert ts == sorted(ts)
    # Poisson arrivals at 2000 per second
    long = synthesize_trace(seed=11, count=40_000)
    assert long[-1].timestamp in (19, 20)
    assert synthesize_trace(count=0) == []


def test_synthetic_calibration_against_lognormal_oracle():
    model = TraceModel()
    dist = stats.lognorm(s=model.sigma, scale=model.median_ratio)
    # analytic share of trades below 0.52% of the reserve
    assert dist.cdf(0.0052) >= 0.99
    recs = synthesize_trace(model, seed=0, count=100_000)
    r = trade_ratios(recs, model.reference_reserve_a, model.reference_reserve_b)
    assert np.mean(r < 0.0052) == pytest.approx(dist.cdf(0.0052), abs=2e-3)
    assert np.median(r) == pytest.approx(model.median_ratio, rel=0.03)
    assert r.max() <= model.max_ratio
    sides = [x.side for x in recs]
    assert sides.count("AB") / len(sides) == pytest.approx(0.5, abs=0.01)


def test_ratio_statistics_oracle():
    s = ratio_statistics_from_ratios([0.1, 0.2, 0.2, 0.4])
    assert s.count == 4 and s.mean == pytest.approx(0.225)
    assert s.cdf([0.05, 0.1, 0.2, 0.3, 1.0]).tolist() == [0.0, 0.25, 0.75, 0.75, 1.0]
    assert s.quantiles["q0.5"] == pytest.approx(0.2)
    with pytest.raises(ParameterError):
        ratio_statistics_from_ratios([])


def test_ratio_statistics_reference_forms():
    recs = [TraceRecord(0, "BA", 10.0), TraceRecord(0, "AB", 10.0)]
    assert ratio_statistics(recs, 100.0).mean == pytest.approx(0.1)
    assert ratio_statistics(recs, (100.0, 200.0)).mean == pytest.approx(0.075)
    assert ratio_statistics(recs, 100.0).to_dict()["count"] == 2


def test_model_validation():
    with pytest.raises(ParameterError):
        TraceModel(median_ratio=0)
    with pytest.raises(ParameterError):
        TraceModel(ab_fraction=1.5)
    with pytest.raises(ParameterError):
        synthesize_trace(count=-1)
