from datetime import datetime

import math

import pytest
from hypothesis import given, strategies as st
from scipy.stats import gamma

from pfha.catalogue import SourceRecord
from pfha.errors import DataError
from pfha.rates import (
    DEFAULT_PRIORS,
    GammaPrior,
    Incident,
    IncidentCount,
    count_incidents,
    credible_interval,
    estimate_rates,
    gamma_ppf,
    load_priors,
    posterior_rate,
)


def _count(n, t):
    return IncidentCount("X", n, t)


@pytest.mark.parametrize(
    "alpha,beta,n,t,expected",
    [(1.0, 2.0, 0, 4.0, 1.0 / 6.0), (1.0, 1.0, 3, 3.0, 1.0), (1.0, 1.0, 53, 4.0, 10.8)],
)
def test_posterior_examples(alpha, beta, n, t, expected):
    assert posterior_rate(GammaPrior("ccgt", alpha, beta), _count(n, t)) == pytest.approx(expected, rel=1e-12)


def test_data_dominated_case_closer_to_mle():
    rate = posterior_rate(GammaPrior("interconnector", 1.0, 1.0), _count(53, 4.0))
    assert abs(rate - 53 / 4) < abs(rate - 1.0)


def test_interval_exponential_posterior():
    prior = GammaPrior("ccgt", 1.0, 1e-300)
    lo, hi = credible_interval(prior, IncidentCount("X", 0, 1.0), 0.9)
    assert lo == pytest.approx(0.0513, abs=5e-5)
    assert hi == pytest.approx(2.996, abs=5e-4)
    assert lo == pytest.approx(gamma.ppf(0.05, 1.0, scale=1.0), rel=1e-8)
    assert hi == pytest.approx(gamma.ppf(0.95, 1.0, scale=1.0), rel=1e-8)


@given(
    st.floats(0.05, 20), st.floats(0.05, 20), st.integers(0, 200), st.floats(0.1, 30), st.floats(0.001, 0.999)
)
def test_ppf_matches_scipy(alpha, beta, n, t, q):
    shape, rate = alpha + n, beta + t
    assert gamma_ppf(q, shape, rate) == pytest.approx(gamma.ppf(q, shape, scale=1.0 / rate), rel=1e-7, abs=1e-12)


def test_interval_limits():
    prior = GammaPrior("wind", 1.0, 2.0)
    c = _count(0, 4.0)
    lo, hi = credible_interval(prior, c, 1e-6)
    median = gamma.ppf(0.5, 1.0, scale=1 / 6.0)
    assert lo == pytest.approx(median, rel=1e-5) and hi == pytest.approx(median, rel=1e-5)
    lo, hi = credible_interval(prior, c, 0.9)
    assert 0 < lo < posterior_rate(prior, c) < hi
    with pytest.raises(ValueError):
        credible_interval(prior, c, 1.0)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.integers(0, 500), st.floats(0.1, 50))
def test_monotone_and_convex_combination(alpha, beta, n, t):
    prior = GammaPrior("ccgt", alpha, beta)
    r = posterior_rate(prior, _count(n, t))
    assert r > 0
    assert posterior_rate(prior, _count(n + 1, t)) > r
    assert posterior_rate(prior, _count(n, t * 1.5)) < r
    weight = beta / (beta + t)
    assert r == pytest.approx(weight * prior.mean + (1 - weight) * (n / t), rel=1e-12)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        GammaPrior("ccgt", 0.0, 1.0)
    with pytest.raises(ValueError):
        IncidentCount("X", -1, 1.0)
    with pytest.raises(ValueError):
        IncidentCount("X", 1, 0.0)


def test_default_priors_are_range_midpoints():
    assert DEFAULT_PRIORS["wind"].mean == pytest.approx(0.425)
    assert DEFAULT_PRIORS["biomass"].mean == pytest.approx(0.76)
    assert all(p.alpha == 1.0 for p in DEFAULT_PRIORS.values())


def test_priors_file_overrides_and_rejects_unknown(tmp_path):
    p = tmp_path / "priors.csv"
    p.write_text("prior_class,alpha,beta\nwind,2,4\n")
    priors = load_priors(p)
    assert priors["wind"].mean == 0.5 and priors["ccgt"] == DEFAULT_PRIORS["ccgt"]
    p.write_text("prior_class,alpha,beta\ncoal,2,4\n")
    with pytest.raises(DataError, match="coal"):
        load_priors(p)


def _ev(ts, sid):
    return Incident(ts, sid, 0.1, 200.0, 0.3)


def test_unmatched_events_go_to_catchall():
    cat = [
        SourceRecord("A", "ccgt", 800, 800, prior_class="ccgt"),
        SourceRecord("FLEET", "fleet_catchall", 500, 500, prior_class="ccgt"),
    ]
    start, end = datetime(2020, 1, 1), datetime(2024, 1, 1)
    evs = [_ev(datetime(2021, 1, 1), "A"), _ev(datetime(2021, 6, 1), None), _ev(datetime(2022, 1, 1), "UNKNOWN"),
           _ev(datetime(2025, 1, 1), "A")]
    counts = count_incidents(evs, cat, start, end, unmatched_to="FLEET")
    assert counts["A"].n_events == 1 and counts["FLEET"].n_events == 2
    assert counts["A"].observation_years == pytest.approx(1461 / 365.25)
    dropped = count_incidents(evs, cat, start, end)
    assert dropped["FLEET"].n_events == 0
    rated = estimate_rates(cat, counts)
    prior = DEFAULT_PRIORS["ccgt"]
    assert rated[1].trip_rate_per_yr == pytest.approx((1 + 2) / (prior.beta + 4.0))
    assert math.isfinite(rated[0].trip_rate_per_yr)
