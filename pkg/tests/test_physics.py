import logging
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator

from pfha.errors import DataError
from pfha.physics import (
    PRIMARY_AXES,
    BandService,
    DcProfile,
    GovernorProfile,
    GridAxes,
    SimConfig,
    build_grid,
    interpolate,
    interpolate_nadir,
    load_grid,
    load_or_build_grid,
    save_grid,
    simulate_nadir,
    simulate_nadirs,
    simulate_trajectory,
)
from pfha.sfr import SfrParams, sfr_median_nadir

NO_BAND = BandService(0.0, 0.015, 0.2, 0.5)
DAMPING_ONLY = SimConfig(dm=NO_BAND, dr=NO_BAND, static_response=())
SMOOTH = SimConfig(static_response=())


def test_damping_only_matches_first_order_lag():
    loss, h, d = 1000.0, 200.0, 30.0
    k = 0.025 * d * 1000.0
    m = 2 * h * 1000.0 / 50.0
    t = np.linspace(0, 60, 6001)
    closed = np.max(loss / k * (1 - np.exp(-t * k / m)))
    got = simulate_nadir(loss, h, d, 0.0, 0.0, DAMPING_ONLY)
    assert got == pytest.approx(closed, rel=5e-3)
    sol = solve_ivp(lambda _, x: (loss - k * x) / m, (0, 60), [0.0], rtol=1e-10, atol=1e-12)
    assert got == pytest.approx(sol.y[0].max(), rel=1e-6)


def test_steady_state_below_triggers():
    cfg = SimConfig(horizon_s=300.0, dm=NO_BAND, dr=NO_BAND)
    loss, d = 100.0, 30.0
    got = simulate_nadir(loss, 200.0, d, 0.0, 0.0, cfg)
    assert got < 0.2
    assert got == pytest.approx(loss / (0.025 * d * 1000.0), rel=1e-6)


def test_dc_shallower():
    without = simulate_nadir(1400.0, 150.0, 25.0, 1000.0, 0.0)
    with_dc = simulate_nadir(1400.0, 150.0, 25.0, 1000.0, 850.0)
    assert with_dc < without


def test_scalar_and_vector_agree():
    loss = np.array([400.0, 1200.0, 1800.0])
    vec = simulate_nadirs(loss, 120.0, 25.0, 1200.0, 300.0).nadir_hz
    for i, l in enumerate(loss):
        assert simulate_nadir(l, 120.0, 25.0, 1200.0, 300.0) == vec[i]


def test_smooth_config_against_adaptive_integrator():
    cfg = SMOOTH
    loss, h, d, r, dc = 1500.0, 110.0, 22.0, 1200.0, 600.0
    from pfha.physics import _Scenarios

    sc = _Scenarios(cfg, *(np.array([v]) for v in (loss, h, d, r, dc)))
    lat = np.zeros((0, 1), dtype=bool)
    sol = solve_ivp(lambda t, x: sc.rhs(t, x, lat), (0, 60), [0.0], rtol=1e-10, atol=1e-12, max_step=0.01)
    assert simulate_nadir(loss, h, d, r, dc, cfg) == pytest.approx(sol.y[0].max(), rel=1e-4)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        simulate_nadir(0.0, 200.0, 30.0, 1000.0, 0.0)
    with pytest.raises(ValueError):
        SimConfig(horizon_s=10.0)
    with pytest.raises(ValueError):
        SimConfig.from_dict({"bogus": 1})


def test_config_from_dict_round_trip():
    cfg = SimConfig.from_dict({"step_s": 0.01, "governor": {"delay_s": 2.0}, "static_response": [[49.7, 50.0]]})
    assert cfg.step_s == 0.01 and cfg.governor == GovernorProfile(delay_s=2.0)
    assert cfg.dc == DcProfile()
    assert cfg.hash() != SimConfig().hash()


def test_energy_sanity_at_nadir():
    # Either the trajectory turns (net power changes sign) or, when response
    # cannot cover the loss, it settles with the net power balanced.
    cases = [(1800, 80, 15, 500, 0), (1000, 200, 30, 1500, 850), (600, 300, 40, 3000, 1200)]
    for loss, h, d, r, dc in cases:
        t, x = simulate_trajectory(loss, h, d, r, dc)
        k = int(np.argmax(x))
        assert x[k] == pytest.approx(simulate_nadir(loss, h, d, r, dc), rel=1e-9)
        if k < x.size - 1:
            assert 0 < k and x[k - 1] <= x[k] >= x[k + 1]
        else:
            assert (x[-1] - x[-2]) / (t[-1] - t[-2]) < 1e-3
    _, x = simulate_trajectory(1800, 80, 15, 500, 0)
    assert np.argmax(x) == x.size - 1


def test_grid_shape_and_counts(default_grid):
    g = default_grid
    assert g.n_points == 13650
    assert g.n_primary == 6125
    assert g.n_simulations == 6125
    assert g.n_points - g.n_primary == 7525
    assert np.all(np.isfinite(g.values)) and np.all(g.values > 0)
    sl = g.primary_slices()
    for d, primary in enumerate(PRIMARY_AXES.as_list()):
        np.testing.assert_array_equal(g.axes[d][sl[d]], primary)


def test_grid_monotone_every_line(default_grid):
    v = default_grid.values
    assert np.all(np.diff(v, axis=0) >= 0)
    for ax in (1, 2, 3, 4):
        assert np.all(np.diff(v, axis=ax) <= 0)
    p = v[default_grid.primary_slices()]
    assert np.all(np.diff(p, axis=0) > 0)
    # A static block trips exactly at its trigger and can arrest the fall
    # there, so nadirs plateau at trigger deviations.
    on_trigger = np.isin(p, SimConfig().trigger_deviations)
    for ax in (1, 2, 3):
        dv = np.diff(p, axis=ax)
        lo = np.take(on_trigger, range(p.shape[ax] - 1), axis=ax)
        hi = np.take(on_trigger, range(1, p.shape[ax]), axis=ax)
        assert np.all(dv[~(lo & hi)] < 0)
    # DC acts only once the deviation passes its deadband.
    dd = np.diff(p, axis=4)
    engaged = p[..., :-1] > 0.21
    assert np.all(dd[engaged] < 0)


def test_grid_deterministic(default_grid):
    again = build_grid()
    np.testing.assert_array_equal(again.values, default_grid.values)
    assert again.config_hash == default_grid.config_hash


def test_physics_not_deeper_than_raw_sfr(default_grid):
    g = default_grid
    sl = g.primary_slices()
    axes = [a[s] for a, s in zip(g.axes, sl)]
    L, H, D, R, _ = np.meshgrid(*axes, indexing="ij")
    raw = sfr_median_nadir(L, H, D, R, SfrParams(bias=1.0))
    assert np.all(g.values[sl] <= raw)


def test_interpolation_exact_at_nodes(default_grid):
    g = default_grid
    rng = np.random.default_rng(0)
    for _ in range(200):
        idx = tuple(int(rng.integers(a.size)) for a in g.axes)
        q = [a[i] for a, i in zip(g.axes, idx)]
        assert interpolate_nadir(g, q) == g.values[idx]


def test_interpolation_matches_reference_interpolator(default_grid):
    g = default_grid
    ref = RegularGridInterpolator(g.axes, g.values, method="linear")
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(a[0], a[-1], 2000) for a in g.axes])
    got = interpolate(g, *pts.T)
    np.testing.assert_allclose(got, ref(pts), rtol=1e-12, atol=1e-14)


def test_midpoint_is_neighbour_mean(default_grid):
    g = default_grid
    base = [2, 3, 2, 1, 2]
    for d in range(5):
        lo = list(base)
        hi = list(base)
        hi[d] += 1
        q = [g.axes[k][base[k]] for k in range(5)]
        q[d] = 0.5 * (g.axes[d][lo[d]] + g.axes[d][hi[d]])
        expect = 0.5 * (g.values[tuple(lo)] + g.values[tuple(hi)])
        assert interpolate_nadir(g, q) == pytest.approx(expect, rel=1e-12)


def test_interpolation_continuous(default_grid):
    g = default_grid
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(a[0], a[-1], 1000) for a in g.axes])
    a = interpolate(g, *pts.T)
    b = interpolate(g, *(pts + 1e-6).T)
    assert np.max(np.abs(a - b)) < 1e-4


def test_clamping_warns(default_grid, caplog):
    with caplog.at_level(logging.WARNING):
        v = interpolate_nadir(default_grid, (5000.0, 10.0, 1.0, 0.0, -5.0))
    a = default_grid.axes
    assert v == interpolate_nadir(default_grid, (a[0][-1], a[1][0], a[2][0], a[3][0], a[4][0]))
    assert "clamped" in caplog.text


def test_interpolation_error_against_fresh_simulation():
    grid = build_grid(SMOOTH, extension={})
    rng = np.random.default_rng(5)
    n = 400
    q = [rng.uniform(a[0], a[-1], n) for a in PRIMARY_AXES.as_list()]
    direct = simulate_nadirs(*q, config=SMOOTH).nadir_hz
    rel = np.abs(interpolate(grid, *q) - direct) / direct
    assert np.percentile(rel, 95) < 0.10


SMALL_AXES = GridAxes((400.0, 1200.0), (100.0, 300.0), (20.0, 40.0), (800.0, 2000.0), (0.0, 1000.0))


def test_boundary_fill_options():
    nn = build_grid(axes=SMALL_AXES, extension={"loss_mw": (0, 1)})
    assert nn.values.shape == (3, 2, 2, 2, 2)
    np.testing.assert_array_equal(nn.values[2], nn.values[1])
    assert nn.boundary_filled_mask[2].all() and not nn.boundary_filled_mask[:2].any()
    sim = build_grid(axes=SMALL_AXES, extension={"loss_mw": (0, 1)}, boundary_fill="simulate")
    assert np.all(sim.values[2] > sim.values[1])
    assert sim.n_simulations == 48
    np.testing.assert_array_equal(sim.values[:2], nn.values[:2])


def test_cache_round_trip(tmp_path):
    grid, hit = load_or_build_grid(SimConfig(), tmp_path, SMALL_AXES, extension={})
    assert not hit
    again, hit = load_or_build_grid(SimConfig(), tmp_path, SMALL_AXES, extension={})
    assert hit
    np.testing.assert_array_equal(again.values, grid.values)
    np.testing.assert_array_equal(again.boundary_filled_mask, grid.boundary_filled_mask)
    for a, b in zip(again.axes, grid.axes):
        np.testing.assert_array_equal(a, b)
    p = tmp_path / "x.txt"
    save_grid(grid, p)
    assert load_grid(p).config_hash == grid.config_hash
    p.write_text("garbage\n")
    with pytest.raises(DataError):
        load_grid(p)
    other, hit = load_or_build_grid(SimConfig(step_s=0.01), tmp_path, SMALL_AXES, extension={})
    assert not hit and other.config_hash != grid.config_hash


def test_nadir_time_is_physical():
    res = simulate_nadirs(np.array([500.0, 1800.0]), 150.0, 30.0, 1500.0, 0.0)
    assert np.all(res.t_nadir_s > 0.5) and np.all(res.t_nadir_s < 60.0)
    assert np.all(res.final_hz <= res.nadir_hz)
    assert math.isfinite(float(res.final_hz.sum()))
