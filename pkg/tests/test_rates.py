import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdflow.catalog import BY_KEY
from pdflow.errors import ConfigurationError, RejectedInputError, ResolutionError
from pdflow.rates import (BoundednessReport, RateFit, WindowPolicy, _range_max, compare_to_catalog,
                          envelope, fit_rate, fit_rate_scaled, safe_float)
from pdflow.schedule import ExponentialPowerScaling, PowerScaling, Schedule

GRID = np.geomspace(1.0, 1e4, 400)


def series(f, t=GRID):
    return t, f(t)


# -- exponent fits -----------------------------------------------------------------------

def test_exact_power_law():
    fit = fit_rate(series(lambda t: t ** -2.0))
    assert fit.exponent == pytest.approx(-2.0, abs=1e-9) and fit.r_squared == pytest.approx(1.0)
    assert fit.window == (1e3, 1e4)


def test_wobbly_power_law():
    fit = fit_rate(series(lambda t: 5 / t * (1 + 0.01 * np.sin(t))))
    assert -1.05 <= fit.exponent <= -0.95


def test_constant_series():
    fit = fit_rate(series(lambda t: 0 * t + 3.0))
    assert fit.exponent == pytest.approx(0.0, abs=1e-12) and fit.r_squared == 1.0


def test_pairs_input_matches_tuple_input():
    t, v = series(lambda t: t ** -1.5)
    assert fit_rate(np.column_stack([t, v])).exponent == fit_rate((t, v)).exponent


@given(p=st.integers(-3, 3), n=st.integers(10, 300), lo=st.floats(0.0, 3.0),
       width=st.floats(0.5, 4.0))
def test_integer_powers_recovered(p, n, lo, width):
    t = np.logspace(lo, lo + width, n)
    fit = fit_rate((t, t ** float(p)), WindowPolicy(t_lo=t[0], floor=0.0))
    assert fit.exponent == pytest.approx(p, abs=1e-9)


@given(p=st.floats(-3, 3), c=st.floats(1e-6, 1e6))
def test_scaling_invariance(p, c):
    t = np.geomspace(1, 1e3, 60)
    a = fit_rate((t, t ** p), WindowPolicy(t_lo=1.0, floor=0.0))
    b = fit_rate((t, c * t ** p), WindowPolicy(t_lo=1.0, floor=0.0))
    assert b.exponent == pytest.approx(a.exponent, abs=1e-9)
    assert b.intercept - a.intercept == pytest.approx(np.log(c), abs=1e-8)


def test_window_policy_bounds():
    t = np.geomspace(1, 1e4, 100)
    assert WindowPolicy().bounds(t) == (1e3, 1e4)
    assert WindowPolicy(decades=2).bounds(t) == (1e2, 1e4)
    assert WindowPolicy(t_lo=0.1, t_hi=50).bounds(t) == (1.0, 50.0)


def test_underflow_when_series_hits_floor():
    fit = fit_rate(series(lambda t: np.exp(-t)))
    assert fit.underflow and fit.exponent is None and fit.n_censored > 0


def test_partial_censoring_is_reported():
    t = np.geomspace(1, 100, 200)
    v = np.where(t > 90, 0.0, t ** -1.0)
    fit = fit_rate((t, v))
    assert not fit.underflow and fit.n_censored > 0 and fit.exponent == pytest.approx(-1.0)


def test_window_too_small_is_resolution_error():
    t = np.geomspace(1, 1e4, 20)
    with pytest.raises(ResolutionError):
        fit_rate((t, 1 / t))


@pytest.mark.parametrize("bad", [
    (np.array([1.0, 1.0, 2.0]), np.ones(3)),
    (np.array([0.0, 1.0, 2.0]), np.ones(3)),
    (np.array([1.0, 2.0]), np.ones(3)),
])
def test_rejected_series(bad):
    with pytest.raises(RejectedInputError):
        fit_rate(bad)


# -- envelopes ------------------------------------------------------------------------------

@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 200))
def test_range_max_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    lo = rng.integers(0, n, 50)
    hi = np.minimum(n, lo + 1 + rng.integers(0, n, 50))
    want = np.array([v[a:b].max() for a, b in zip(lo, hi)])
    assert np.array_equal(_range_max(v, lo, hi), want)


@given(seed=st.integers(0, 2**31 - 1), w=st.floats(0.01, 1.0))
def test_envelope_dominates_series(seed, w):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(1, 1e3, 150))
    t = np.unique(t)
    v = rng.standard_normal(t.size)
    env = envelope(t, v, w)
    assert np.all(env >= v)


def test_envelope_of_oscillating_decay_fits_the_decay():
    t = np.geomspace(1, 1e4, 3000)
    v = t ** -1.0 * np.abs(np.cos(t))
    raw = fit_rate((t, v), WindowPolicy(floor=0.0))
    env = fit_rate((t, v), WindowPolicy(floor=0.0, envelope=True))
    assert env.exponent == pytest.approx(-1.0, abs=0.05) and env.r_squared > raw.r_squared


# -- scaled fits ----------------------------------------------------------------------------

def test_scaled_exact_inverse_weight():
    w = lambda t: np.exp(t / 50)
    rep = fit_rate_scaled(series(lambda t: 3 / w(t), np.geomspace(1, 500, 300)), w)
    assert rep.ratio == pytest.approx(1.0) and rep.bounded


def test_scaled_growing_product_is_unbounded():
    rep = fit_rate_scaled(series(lambda t: 1 / t), lambda t: t ** 2)
    assert rep.ratio > 5 and not rep.bounded


def test_scaled_underflow():
    rep = fit_rate_scaled(series(lambda t: 0 * t), lambda t: t)
    assert rep.underflow and rep.bounded and rep.ratio is None


# -- comparison with the catalog -------------------------------------------------------------

def fake_fit(exponent):
    return RateFit(exponent, 0.0, 1.0, (1.0, 10.0), 50)


def test_compare_pass_within_slack():
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0)
    v = compare_to_catalog({"lagrangian_gap": fake_fit(-2.05)}, BY_KEY["T1.r11_large"], sch)
    assert v.passed and v.rows[0].predicted == -2.0 and v.rows[0].verdict == "PASS"


@pytest.mark.parametrize("measured,verdict", [(-1.86, "PASS"), (-1.84, "FAIL"), (-5.0, "PASS")])
def test_compare_is_one_sided(measured, verdict):
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0)
    v = compare_to_catalog({"lagrangian_gap": fake_fit(measured)}, BY_KEY["T1.r11_large"], sch)
    assert v.rows[0].verdict == verdict


def test_compare_small_alpha_prediction():
    sch = Schedule(alpha=3.0, r=1.0, delta=0.5, s=1.0)
    v = compare_to_catalog({}, BY_KEY["T4.r11_small"], Schedule(alpha=3.0, r=1.0, delta=0.5, s=1.0))
    assert {r.diagnostic: r.predicted for r in v.rows}["objective_gap"] == pytest.approx(-2.0)
    assert all(r.verdict == "NOT_MEASURED" for r in v.rows) and v.passed
    assert BY_KEY["T1.r11_small"].summary(sch, 0.0) == {"lagrangian_gap": -2.0}


def test_compare_mid_regime_at_tau():
    sch = Schedule(alpha=3.0, r=0.5, delta=0.7, s=1.0)
    e = BY_KEY["T4.rmid_s1"]
    assert e.matches(sch, 1.4)
    v = compare_to_catalog({"objective_gap": fake_fit(-1.3)}, e, sch, tau=1.4)
    row = [r for r in v.rows if r.diagnostic == "objective_gap"][0]
    assert row.predicted == pytest.approx(-1.4) and row.verdict == "PASS"


def test_compare_rejects_mismatched_entry():
    with pytest.raises(ConfigurationError):
        compare_to_catalog({}, BY_KEY["T1.r0"], Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0))


def test_compare_underflow_counts_as_pass():
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0)
    fit = RateFit(None, None, None, (1.0, 10.0), 0, 40, underflow=True)
    v = compare_to_catalog({"lagrangian_gap": fit}, BY_KEY["T1.r11_large"], sch)
    assert v.rows[0].measured == "underflow" and v.passed


def test_compare_scaled_prediction():
    sch = Schedule(alpha=3.0, r=0.0, delta=0.5, s=0.0, beta=ExponentialPowerScaling(1.0, 2.0, 1.0, 0.0))
    entries = [e for e in BY_KEY.values() if e.matches(sch)]
    scaled = [e for e in entries if any(p.kind == "scaled" for p in e.predictions(sch))]
    assert scaled
    e = scaled[0]
    pred = [p for p in e.predictions(sch) if p.kind == "scaled"][0]
    good = BoundednessReport(1.2, True, 2.0, (1.0, 5.0), 30)
    v = compare_to_catalog({pred.diagnostic: good}, e, sch)
    assert [r.verdict for r in v.rows if r.diagnostic == pred.diagnostic] == ["PASS"]
    with pytest.raises(ConfigurationError):
        compare_to_catalog({pred.diagnostic: fake_fit(-1.0)}, e, sch)


def test_power_beta_shifts_exponent():
    sch = Schedule(alpha=4.0, r=1.0, delta=0.5, s=1.0, beta=PowerScaling(1.0, 1.0))
    assert BY_KEY["T1.r11_large"].summary(sch) == {"lagrangian_gap": -3.0}


def test_safe_float():
    assert safe_float(None) is None and safe_float(np.inf) is None and safe_float(np.nan) is None
    assert safe_float(np.float64(2.5)) == 2.5
