import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samm_lab.errors import DomainError, ParameterError, TraceFormatError
from samm_lab.throughput import (FITTED_P, IMPLIED_T_SINGLE, OBSERVED_T_SINGLE, AmdahlParams,
                                 asymptotic_bound, default_cap, fit_p, load_observations,
                                 speedup, throughput)

MEASURED = AmdahlParams(OBSERVED_T_SINGLE, FITTED_P)


def _linearised_fit(n, y):
    """Oracle: 1/y is affine in 1/n with intercept (1-P)/t and slope P/t."""
    b, a = np.polyfit(1.0 / n, 1.0 / y, 1)
    return 1.0 / (a + b), b / (a + b)


def test_speedup_values():
    assert speedup(MEASURED, 32) == pytest.approx(40 / 9, rel=1e-12)
    assert speedup(MEASURED, 1) == 1.0
    assert np.allclose(speedup(MEASURED, [1, 2, 4]), [1.0, 1 / 0.6, 1 / 0.4])
    with pytest.raises(DomainError):
        speedup(MEASURED, 0)


def test_bounds_and_caps():
    assert asymptotic_bound(AmdahlParams(IMPLIED_T_SINGLE, 0.8)) == pytest.approx(1330.0)
    assert asymptotic_bound(AmdahlParams(OBSERVED_T_SINGLE, 0.8)) == pytest.approx(1070.0)
    assert asymptotic_bound(AmdahlParams(100.0, 1.0)) == math.inf
    assert default_cap(1) == 214 and default_cap(32) == 951
    assert throughput(MEASURED, 32, hard_cap=500.0) == 500.0
    assert throughput(MEASURED, 2) == pytest.approx(214 / 0.6)


def test_param_validation():
    with pytest.raises(ParameterError):
        AmdahlParams(0.0, 0.5)
    with pytest.raises(ParameterError):
        AmdahlParams(10.0, 1.5)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(10.0, 1e5), p=st.floats(0.05, 0.98))
def test_noiseless_fit_recovers_planted_params(t, p):
    n = np.array([1, 2, 4, 8, 16, 32], dtype=float)
    y = throughput(AmdahlParams(t, p), n)
    fit, r2 = fit_p(list(zip(n, y)))
    t_oracle, p_oracle = _linearised_fit(n, y)
    assert fit.p_parallel == pytest.approx(p, abs=1e-9)
    assert fit.t_single == pytest.approx(t, rel=1e-9)
    assert fit.p_parallel == pytest.approx(p_oracle, abs=1e-8)
    assert fit.t_single == pytest.approx(t_oracle, rel=1e-8)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_noisy_fit_is_close():
    rng = np.random.default_rng(0)
    n = np.array([1, 2, 4, 8, 16, 32], dtype=float)
    y = throughput(MEASURED, n) * (1 + 0.02 * rng.standard_normal(n.size))
    fit, r2 = fit_p(list(zip(n, y)))
    assert abs(fit.p_parallel - 0.8) < 0.05 and r2 > 0.95


def test_fit_input_validation():
    with pytest.raises(ParameterError):
        fit_p([(1, 100.0), (2, 150.0)])
    with pytest.raises(ParameterError):
        fit_p([(1, 100.0), (2, -1.0), (4, 3.0)])


def test_load_observations(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("n,throughput\n1,214\n2,356\n\n4,535\n")
    assert load_observations(p) == [(1.0, 214.0), (2.0, 356.0), (4.0, 535.0)]
    p.write_text("shards,tps\n1,2\n")
    with pytest.raises(TraceFormatError):
        load_observations(p)
    p.write_text("n,throughput\n1,x\n")
    with pytest.raises(TraceFormatError) as err:
        load_observations(p)
    assert err.value.line == 2
