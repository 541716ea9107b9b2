import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfha.catalogue import SourceRecord
from pfha.controls import DcConfig, LfddConfig
from pfha.errors import NumericError
from pfha.hazard import FrpeSelection, HazardInputs, compute_hazard, hazard_curve, threshold_grid
from pfha.layers import CascadeSpec
from pfha.sfr import SfrParams, aleatory_sigma, effective_damping, sfr_median_nadir

from .conftest import cap_oracle, make_bins, make_source, random_pmf


def phi(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def oracle(sources, bins, thresholds, median, sigma, factor=lambda t: 1.0):
    """Exhaustive scalar sum over sources, loss bins and state bins."""
    out = []
    for t in thresholds:
        terms = []
        for s in sources:
            for c, wj in zip(s.pmf.centres_mw, s.pmf.weights):
                if wj == 0:
                    continue
                for b in bins:
                    mu = median(float(c), b)
                    sg = sigma(float(c), b)
                    terms.append(s.trip_rate_per_yr * wj * b.weight * factor(t) * phi((math.log(mu) - math.log(t)) / sg))
        out.append(math.fsum(terms))
    return np.array(out)


def test_zero_sources():
    bins = make_bins([200.0], [30.0], [1000.0])
    res = compute_hazard(HazardInputs([], bins, FrpeSelection(), (0.5, 0.8)))
    assert res.rates.tolist() == [0.0, 0.0]
    assert np.all(np.isinf(res.return_periods))


def test_degenerate_certain_exceedance():
    bins = make_bins([200.0], [30.0], [1000.0])
    src = [make_source("A", [1000.0], [1.0], 2.0)]
    frpe = FrpeSelection("custom", median_fn=lambda *a: np.full(np.shape(a[0]), 50.0), sigma_fn=lambda l, h: np.full(np.shape(l), 0.3))
    res = compute_hazard(HazardInputs(src, bins, frpe, (0.5,)))
    assert res.rates[0] == pytest.approx(2.0, rel=1e-12)
    assert res.return_periods[0] == pytest.approx(0.5)


def test_hand_set_oracle_2x2x2():
    src = [make_source("A", [500.0, 900.0], [0.3, 0.7], 1.5), make_source("B", [700.0, 1300.0], [0.6, 0.4], 0.4)]
    bins = make_bins([120.0, 260.0], [22.0, 38.0], [900.0, 2100.0], weights=[0.45, 0.55])
    table = {(500.0, 0): 0.21, (500.0, 1): 0.12, (900.0, 0): 0.47, (900.0, 1): 0.29,
             (700.0, 0): 0.33, (700.0, 1): 0.18, (1300.0, 0): 0.91, (1300.0, 1): 0.52}
    sig = {0: 0.31, 1: 0.27}
    h_to_k = {120.0: 0, 260.0: 1}

    def median_fn(loss, h, d, r, dc):
        return np.array([table[(round(float(l), 6), h_to_k[float(x)])] for l, x in zip(np.ravel(loss), np.ravel(h))])

    def sigma_fn(loss, h):
        return np.array([sig[h_to_k[float(x)]] for x in np.ravel(h)])

    thr = (0.2, 0.5, 0.8, 1.2)
    res = compute_hazard(HazardInputs(src, bins, FrpeSelection("custom", median_fn=median_fn, sigma_fn=sigma_fn), thr))
    expect = oracle(src, bins, thr, lambda c, b: table[(c, b.bin_index)], lambda c, b: sig[b.bin_index])
    np.testing.assert_allclose(res.rates, expect, rtol=1e-12, atol=0)
    assert len(res.cells) == 8
    np.testing.assert_allclose(res.cells.contributions.sum(axis=0), res.rates, rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_sfr_path_matches_scalar_oracle(seed, controls):
    """Up to 5 sources x 10 bins x 10 states, including DC routing and the LFDD cap."""
    rng = np.random.default_rng(seed)
    n_src, n_states = int(rng.integers(1, 6)), int(rng.integers(1, 11))
    sources = []
    for i in range(n_src):
        pmf = random_pmf(rng, max_bins=10, width=50.0)
        sources.append(SourceRecord(f"S{i}", "ccgt", 4000.0, 4000.0, trip_rate_per_yr=float(rng.uniform(0.01, 5)), pmf=pmf))
    w = rng.random(n_states)
    bins = make_bins(list(rng.uniform(80, 350, n_states)), list(rng.uniform(15, 45, n_states)),
                     list(rng.uniform(500, 3000, n_states)), list(rng.uniform(0, 1200, n_states)), list(w / w.sum()))
    thr = (0.3, 0.5, 0.8, 1.2, 1.5, 2.0)
    params = SfrParams(bias=float(rng.uniform(0.3, 1.0)))
    dc = DcConfig(None, 0.85) if controls else None
    lfdd = LfddConfig() if controls else None
    frpe = FrpeSelection("sfr", sigma0=0.296, sfr=params)
    res = compute_hazard(HazardInputs(sources, bins, frpe, thr, dc=dc, lfdd=lfdd))

    def median(c, b):
        r = b.mean_response_mw + (0.85 * b.mean_dc_mw if controls else 0.0)
        mu = sfr_median_nadir(c, b.mean_inertia_gva_s, b.mean_demand_gw, r, params)
        if controls and mu >= 1.2:
            d_eff = effective_damping(b.mean_demand_gw, r, params)
            mu = cap_oracle(mu, c, b.mean_demand_gw, d_eff, LfddConfig())
        return mu

    def factor(t):
        return 0.575 ** sum(1 for a in (1.2, 1.4, 1.6, 1.8, 2.0) if a < t) if controls else 1.0

    expect = oracle(sources, bins, thr, median, lambda c, b: aleatory_sigma(c, b.mean_inertia_gva_s), factor)
    np.testing.assert_allclose(res.rates, expect, rtol=1e-12, atol=1e-300)


def test_cascade_matches_expanded_oracle():
    src = [make_source("A", [600.0, 800.0, 1200.0], [0.2, 0.5, 0.3], 2.0)]
    bins = make_bins([100.0, 150.0, 300.0], [20.0, 30.0, 40.0], [800.0, 1500.0, 2500.0])
    spec = CascadeSpec(p_cond=0.3, der_loss_mw=350.0)
    thr = (0.5, 0.8, 1.2)
    res = compute_hazard(HazardInputs(src, bins, FrpeSelection("sfr"), thr, cascade=spec))
    expect = []
    for t in thr:
        terms = []
        for c, wj in zip(src[0].pmf.centres_mw, src[0].pmf.weights):
            for b in bins:
                h = b.mean_inertia_gva_s
                branches = [(c, 1.0)]
                if c * 50.0 / (2 * h * 1000.0) >= 0.125:
                    branches = [(c, 0.7), (c + 350.0, 0.3)]
                for loss, pw in branches:
                    mu = sfr_median_nadir(loss, h, b.mean_demand_gw, b.mean_response_mw)
                    sg = aleatory_sigma(loss, h)
                    terms.append(2.0 * wj * b.weight * pw * phi((math.log(mu) - math.log(t)) / sg))
        expect.append(math.fsum(terms))
    np.testing.assert_allclose(res.rates, expect, rtol=1e-12)
    assert set(res.cells.branch.tolist()) == {0, 1}


def _scenario(seed=0):
    rng = np.random.default_rng(seed)
    src = [SourceRecord(f"S{i}", "ccgt", 4000.0, 4000.0, trip_rate_per_yr=float(rng.uniform(0.1, 3)), pmf=random_pmf(rng)) for i in range(4)]
    bins = make_bins(list(rng.uniform(80, 350, 6)), list(rng.uniform(15, 45, 6)), list(rng.uniform(500, 3000, 6)))
    return src, bins


def test_additive_over_sources():
    src, bins = _scenario()
    thr = threshold_grid()
    total = compute_hazard(HazardInputs(src, bins, FrpeSelection(), thr)).rates
    parts = sum(compute_hazard(HazardInputs([s], bins, FrpeSelection(), thr)).rates for s in src)
    np.testing.assert_allclose(total, parts, rtol=1e-12)


def test_linear_in_rates():
    from dataclasses import replace

    src, bins = _scenario(1)
    thr = (0.5, 0.8, 1.2)
    one = compute_hazard(HazardInputs(src, bins, FrpeSelection(), thr)).rates
    doubled = [replace(s, trip_rate_per_yr=2 * s.trip_rate_per_yr) for s in src]
    two = compute_hazard(HazardInputs(doubled, bins, FrpeSelection(), thr)).rates
    np.testing.assert_allclose(two, 2 * one, rtol=1e-15)


def test_state_permutation_invariance():
    src, bins = _scenario(2)
    thr = (0.5, 0.8, 1.2)
    a = compute_hazard(HazardInputs(src, bins, FrpeSelection(), thr)).rates
    b = compute_hazard(HazardInputs(src, list(reversed(bins)), FrpeSelection(), thr)).rates
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_curve_monotone_and_consistent(default_grid):
    src, bins = _scenario(3)
    inp = HazardInputs(src, bins, FrpeSelection("physics", grid=default_grid), (0.5, 0.8, 1.2), dc=DcConfig(), lfdd=LfddConfig())
    curve = hazard_curve(inp)
    rates = np.array([r for _, r, _ in curve])
    assert len(curve) == 44 and curve[0][0] == 0.05 and curve[-1][0] == 2.2
    assert np.all(np.diff(rates) <= 0)
    point = compute_hazard(inp)
    for thr in (0.5, 0.8, 1.2):
        (row,) = [c for c in curve if abs(c[0] - thr) < 1e-9]
        assert row[1] == pytest.approx(point.rate_at(thr), rel=1e-12)
        assert row[2] == pytest.approx(1.0 / row[1])


def test_cells_sum_and_epsilon():
    src, bins = _scenario(4)
    res = compute_hazard(HazardInputs(src, bins, FrpeSelection(), (0.5, 0.8)))
    c = res.cells
    assert np.all(c.contributions >= 0)
    np.testing.assert_allclose(c.contributions.sum(axis=0), res.rates, rtol=1e-9)
    expect = (np.log(0.8) - np.log(c.median_nadir_hz)) / c.sigma
    np.testing.assert_allclose(c.epsilon[:, 1], expect, rtol=1e-12, atol=1e-14)


def test_invalid_inputs_and_failures():
    src, bins = _scenario(5)
    with pytest.raises(ValueError):
        HazardInputs(src, bins, FrpeSelection(), (0.8, 0.5))
    with pytest.raises(ValueError):
        HazardInputs(src, make_bins([200.0], [30.0], [1000.0], weights=[0.5]), FrpeSelection())
    with pytest.raises(ValueError):
        FrpeSelection("physics")
    bad = FrpeSelection("custom", median_fn=lambda l, *a: np.where(np.asarray(l) > 1000, np.nan, 0.3))
    with pytest.raises(NumericError, match="loss="):
        compute_hazard(HazardInputs([make_source("A", [900.0, 1100.0], [0.5, 0.5], 1.0)], bins, bad))
    res = compute_hazard(HazardInputs(src, bins, FrpeSelection(), (0.5, 0.8)))
    with pytest.raises(KeyError):
        res.rate_at(0.6)


def test_pruning_flag_drops_small_cells():
    src, bins = _scenario(6)
    full = compute_hazard(HazardInputs(src, bins, FrpeSelection(), (0.5, 1.2)))
    pruned = compute_hazard(HazardInputs(src, bins, FrpeSelection(), (0.5, 1.2), prune_below=1e-4))
    assert len(pruned.cells) < len(full.cells)
    assert np.all(pruned.rates <= full.rates)
    np.testing.assert_allclose(pruned.rates, full.rates, rtol=1e-3)
