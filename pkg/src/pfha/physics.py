"""Single-bus time-domain frequency simulator and its 5-D nadir lookup grid.

The simulator integrates

    M * d(df)/dt = dP - damping(df) - sum(service injections)

with ``df`` the (positive) deviation below nominal, using fixed-step RK4 that
is vectorised over many independent scenarios. Static response blocks latch
when the deviation first reaches their trigger; the crossing instant is
located inside the step so the latch does not depend on step alignment.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, NumericError

logger = logging.getLogger(__name__)

GRID_FORMAT_VERSION = 1
AXIS_NAMES = ("loss_mw", "inertia_gva_s", "demand_gw", "response_mw", "dc_mw")


@dataclass(frozen=True)
class GovernorProfile:
    """Pure delay, then a linear ramp of available output up to the droop characteristic."""

    delay_s: float = 1.0
    ramp_s: float = 9.0
    droop: float = 0.04


@dataclass(frozen=True)
class DcProfile:
    deadband_hz: float = 0.2
    full_delivery_hz: float = 0.5
    delay_s: float = 0.2
    ramp_s: float = 0.8
    creep_fraction: float = 0.05
    creep_time_s: float = 30.0


@dataclass(frozen=True)
class BandService:
    """Proportional service sized as a fraction of the response holding."""

    volume_fraction: float
    deadband_hz: float
    full_delivery_hz: float
    ramp_s: float


@dataclass(frozen=True)
class StaticBlock:
    trigger_hz: float
    block_mw: float


@dataclass(frozen=True)
class SimConfig:
    f0: float = 50.0
    step_s: float = 0.02
    horizon_s: float = 60.0
    load_damping_coeff: float = 0.025
    governor: GovernorProfile = field(default_factory=GovernorProfile)
    dc: DcProfile = field(default_factory=DcProfile)
    dm: BandService = field(default_factory=lambda: BandService(0.10, 0.015, 0.2, 0.5))
    dr: BandService = field(default_factory=lambda: BandService(0.05, 0.015, 0.2, 10.0))
    static_response: tuple[StaticBlock, ...] = (StaticBlock(49.7, 100.0), StaticBlock(49.6, 100.0))

    def __post_init__(self):
        if not self.step_s > 0:
            raise ValueError("step_s must be positive")
        if self.horizon_s < 30.0:
            raise ValueError("horizon_s must be at least 30 s")
        for blk in self.static_response:
            if not blk.trigger_hz < self.f0:
                raise ValueError("static response triggers must lie below nominal frequency")

    @classmethod
    def from_dict(cls, d: dict | None) -> "SimConfig":
        d = dict(d or {})
        kw = {}
        for key in ("f0", "step_s", "horizon_s", "load_damping_coeff"):
            if key in d:
                kw[key] = float(d.pop(key))
        if "governor" in d:
            kw["governor"] = GovernorProfile(**d.pop("governor"))
        if "dc" in d:
            kw["dc"] = DcProfile(**d.pop("dc"))
        for key in ("dm", "dr"):
            if key in d:
                kw[key] = BandService(**d.pop(key))
        if "static_response" in d:
            kw["static_response"] = tuple(StaticBlock(float(t), float(b)) for t, b in d.pop("static_response"))
        if d:
            raise ValueError(f"unknown simulator settings {sorted(d)}")
        return cls(**kw)

    @property
    def trigger_deviations(self) -> np.ndarray:
        return np.array([round(self.f0 - b.trigger_hz, 9) for b in self.static_response])

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SimResult:
    nadir_hz: np.ndarray
    t_nadir_s: np.ndarray
    final_hz: np.ndarray


class _Scenarios:
    """Per-scenario constants for a (sub)set of simulations."""

    def __init__(self, cfg: SimConfig, loss, h, d, r, dc):
        self.cfg = cfg
        self.loss, self.r, self.dc = loss, r, dc
        self.m = 2.0 * h * 1000.0 / cfg.f0
        self.damp = cfg.load_damping_coeff * d * 1000.0
        self.blocks = np.array([b.block_mw for b in cfg.static_response])
        self.trig = cfg.trigger_deviations

    def subset(self, idx) -> "_Scenarios":
        s = object.__new__(_Scenarios)
        s.cfg, s.blocks, s.trig = self.cfg, self.blocks, self.trig
        for name in ("loss", "r", "dc", "m", "damp"):
            setattr(s, name, getattr(self, name)[idx])
        return s

    def injection(self, t, x, latched):
        cfg = self.cfg
        g = cfg.governor
        env = np.clip((t - g.delay_s) / g.ramp_s, 0.0, 1.0)
        gov = self.r * env * np.clip(x / (g.droop * cfg.f0), 0.0, 1.0)

        p = cfg.dc
        dc_env = np.clip((t - p.delay_s) / p.ramp_s, 0.0, 1.0)
        creep = 1.0 + p.creep_fraction * np.clip((t - p.delay_s - p.ramp_s) / p.creep_time_s, 0.0, 1.0)
        dc = self.dc * dc_env * creep * _band(x, p.deadband_hz, p.full_delivery_hz)

        band = 0.0
        for svc in (cfg.dm, cfg.dr):
            band = band + svc.volume_fraction * self.r * np.clip(t / svc.ramp_s, 0.0, 1.0) * _band(x, svc.deadband_hz, svc.full_delivery_hz)

        static = self.blocks @ latched if self.blocks.size else 0.0
        return self.damp * x + gov + dc + band + static

    def rhs(self, t, x, latched):
        return (self.loss - self.injection(t, x, latched)) / self.m


def _band(x, lo, hi):
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def _rk4(sc: _Scenarios, t, x, h, latched):
    k1 = sc.rhs(t, x, latched)
    k2 = sc.rhs(t + 0.5 * h, x + 0.5 * h * k1, latched)
    k3 = sc.rhs(t + 0.5 * h, x + 0.5 * h * k2, latched)
    k4 = sc.rhs(t + h, x + h * k3, latched)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _next_trigger(sc: _Scenarios, latched):
    """Deviation of the lowest unlatched trigger per scenario (inf when none)."""
    if sc.trig.size == 0:
        return np.full(latched.shape[1], np.inf)
    dev = np.where(latched, np.inf, sc.trig[:, None])
    return dev.min(axis=0)


def _step_with_events(sc: _Scenarios, t0: float, x0, h: float, latched):
    """Advance a subset of scenarios by ``h``, stopping at trigger crossings.

    Returns the new state and the largest deviation visited at crossing points.
    """
    n = x0.size
    tt = np.full(n, t0)
    xx = x0.copy()
    rem = np.full(n, h)
    peak = x0.copy()
    active = np.arange(n)
    while active.size:
        sub = sc.subset(active)
        lat = latched[:, active]
        xn = _rk4(sub, tt[active], xx[active], rem[active], lat)
        dev = _next_trigger(sub, lat)
        hit = xn >= dev
        done = active[~hit]
        xx[done] = xn[~hit]
        rem[done] = 0.0
        if not hit.any():
            break
        ai = active[hit]
        sub_h = sc.subset(ai)
        lat_h = latched[:, ai]
        x_a, t_a, r_a, d_a = xx[ai], tt[ai], rem[ai], dev[hit]
        theta = r_a * np.clip((d_a - x_a) / (xn[hit] - x_a), 0.0, 1.0)
        for _ in range(3):
            xt = _rk4(sub_h, t_a, x_a, theta, lat_h)
            ft = sub_h.rhs(t_a + theta, xt, lat_h)
            step = np.where(ft > 0, (d_a - xt) / np.where(ft > 0, ft, 1.0), 0.0)
            theta = np.clip(theta + step, 0.0, r_a)
        xt = _rk4(sub_h, t_a, x_a, theta, lat_h)
        # latch the block(s) whose trigger was reached
        reach = (sc.trig[:, None] <= np.maximum(xt, d_a)[None, :] + 1e-12) & ~lat_h
        latched[:, ai] = lat_h | reach
        peak[ai] = np.maximum(peak[ai], xt)
        xx[ai] = xt
        tt[ai] = t_a + theta
        rem[ai] = r_a - theta
        active = ai[rem[ai] > 1e-12]
    return xx, peak


def simulate_nadirs(loss_mw, inertia_gva_s, demand_gw, response_mw, dc_effective_mw, config: SimConfig = SimConfig()) -> SimResult:
    """Vectorised simulation; arguments broadcast against each other."""
    arrs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (loss_mw, inertia_gva_s, demand_gw, response_mw, dc_effective_mw)))
    shape = arrs[0].shape
    loss, h, d, r, dc = (a.ravel().copy() for a in arrs)
    if np.any(loss <= 0) or np.any(h <= 0) or np.any(d <= 0) or np.any(r < 0) or np.any(dc < 0):
        raise ValueError("simulation needs positive loss, inertia and demand and non-negative holdings")
    sc = _Scenarios(config, loss, h, d, r, dc)
    n = loss.size
    x = np.zeros(n)
    nadir = np.zeros(n)
    t_nadir = np.zeros(n)
    latched = np.zeros((len(config.static_response), n), dtype=bool)
    dt = config.step_s
    n_steps = int(round(config.horizon_s / dt))
    all_idx = np.arange(n)
    for k in range(n_steps):
        t = k * dt
        x_new = _rk4(sc, t, x, dt, latched)
        if config.static_response:
            cross = x_new >= _next_trigger(sc, latched)
            if cross.any():
                idx = all_idx[cross]
                sub = sc.subset(idx)
                lat = latched[:, idx]
                xs, peak = _step_with_events(sub, t, x[idx], dt, lat)
                latched[:, idx] = lat
                x_new[idx] = xs
                better = peak > nadir[idx]
                nadir[idx[better]] = peak[better]
                t_nadir[idx[better]] = t
        x = x_new
        better = x > nadir
        nadir[better] = x[better]
        t_nadir[better] = t + dt
    if not np.all(np.isfinite(nadir)):
        bad = int(np.flatnonzero(~np.isfinite(nadir))[0])
        raise NumericError(
            f"non-finite trajectory at loss={loss[bad]} H={h[bad]} D={d[bad]} R={r[bad]} dc={dc[bad]}"
        )
    return SimResult(nadir.reshape(shape), t_nadir.reshape(shape), x.reshape(shape))


def simulate_nadir(loss_mw, inertia_gva_s, demand_gw, response_mw, dc_effective_mw, config: SimConfig = SimConfig()) -> float:
    """Maximum deviation (Hz, positive) reached over the simulation horizon."""
    return float(simulate_nadirs(loss_mw, inertia_gva_s, demand_gw, response_mw, dc_effective_mw, config).nadir_hz)


def simulate_trajectory(loss_mw, inertia_gva_s, demand_gw, response_mw, dc_effective_mw, config: SimConfig = SimConfig()):
    """Single-scenario trajectory sampled at step ends: ``(t, deviation)`` arrays."""
    sc = _Scenarios(config, *(np.array([float(v)]) for v in (loss_mw, inertia_gva_s, demand_gw, response_mw, dc_effective_mw)))
    latched = np.zeros((len(config.static_response), 1), dtype=bool)
    dt = config.step_s
    n_steps = int(round(config.horizon_s / dt))
    xs = np.zeros(n_steps + 1)
    x = np.zeros(1)
    for k in range(n_steps):
        if config.static_response:
            x, _ = _step_with_events(sc, k * dt, x, dt, latched)
        else:
            x = _rk4(sc, k * dt, x, dt, latched)
        xs[k + 1] = x[0]
    return dt * np.arange(n_steps + 1), xs


# --- lookup grid -----------------------------------------------------------

@dataclass(frozen=True)
class GridAxes:
    loss_mw: tuple[float, ...]
    inertia_gva_s: tuple[float, ...]
    demand_gw: tuple[float, ...]
    response_mw: tuple[float, ...]
    dc_mw: tuple[float, ...]

    def as_list(self) -> list[np.ndarray]:
        return [np.asarray(getattr(self, n), dtype=float) for n in AXIS_NAMES]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(getattr(self, n)) for n in AXIS_NAMES)


def _lin(a, b, n):
    return tuple(float(v) for v in np.linspace(a, b, n))


PRIMARY_AXES = GridAxes(
    loss_mw=_lin(200.0, 1800.0, 7),
    inertia_gva_s=_lin(80.0, 350.0, 7),
    demand_gw=_lin(15.0, 45.0, 5),
    response_mw=_lin(500.0, 3000.0, 5),
    dc_mw=_lin(0.0, 1200.0, 5),
)

# Extra nodes (below, above) per axis beyond the primary range. Six loss
# steps above 1800 MW cover combined pair losses up to 3400 MW; one demand
# step below 15 GW covers low-demand periods. 13*7*6*5*5 = 13,650 nodes.
DEFAULT_EXTENSION = {"loss_mw": (0, 6), "demand_gw": (1, 0)}


def extend_axes(axes: GridAxes, extension: dict[str, tuple[int, int]]) -> tuple[GridAxes, tuple[slice, ...]]:
    """Axes with uniform one-step extensions; also the slice locating the primary block."""
    out, where = {}, []
    for name, ax in zip(AXIS_NAMES, axes.as_list()):
        below, above = extension.get(name, (0, 0))
        if (below or above) and ax.size < 2:
            raise ValueError(f"cannot extend single-valued axis {name}")
        step = ax[1] - ax[0] if ax.size > 1 else 0.0
        lo = [ax[0] - step * k for k in range(below, 0, -1)]
        hi = [ax[-1] + step * k for k in range(1, above + 1)]
        full = np.concatenate([lo, ax, hi])
        if np.any(np.diff(full) <= 0):
            raise ValueError(f"axis {name} is not strictly ascending after extension")
        out[name] = tuple(float(v) for v in full)
        where.append(slice(below, below + ax.size))
    return GridAxes(**out), tuple(where)


@dataclass(eq=False)
class NadirGrid:
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    boundary_filled_mask: np.ndarray
    config_hash: str = ""
    n_simulations: int = 0

    @property
    def n_points(self) -> int:
        return int(self.values.size)

    @property
    def n_primary(self) -> int:
        return int((~self.boundary_filled_mask).sum())

    def primary_slices(self) -> tuple[slice, ...]:
        sl = []
        for d in range(5):
            other = tuple(k for k in range(5) if k != d)
            keep = np.flatnonzero(~self.boundary_filled_mask.all(axis=other))
            sl.append(slice(int(keep[0]), int(keep[-1]) + 1))
        return tuple(sl)


def _round9(a: np.ndarray) -> np.ndarray:
    return np.array([float(f"{v:.9g}") for v in a.ravel()]).reshape(a.shape)


def grid_hash(config: SimConfig, axes: GridAxes, extension: dict, boundary_fill: str) -> str:
    payload = {
        "format": GRID_FORMAT_VERSION,
        "sim": asdict(config),
        "axes": asdict(axes),
        "extension": {k: list(v) for k, v in sorted(extension.items())},
        "boundary_fill": boundary_fill,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _simulate_block(config: SimConfig, coords: Sequence[np.ndarray], threads: int) -> np.ndarray:
    mesh = np.meshgrid(*coords, indexing="ij")
    flat = [m.ravel() for m in mesh]
    n = flat[0].size
    chunks = np.array_split(np.arange(n), max(1, min(threads, n)))

    def run(idx):
        try:
            return simulate_nadirs(*(f[idx] for f in flat), config=config).nadir_hz
        except NumericError as exc:
            raise NumericError(f"grid build failed: {exc}") from None

    if len(chunks) == 1:
        vals = run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            vals = np.concatenate(list(pool.map(run, chunks)))
    return vals.reshape(mesh[0].shape)


def build_grid(
    config: SimConfig = SimConfig(),
    axes: GridAxes = PRIMARY_AXES,
    *,
    extension: dict[str, tuple[int, int]] | None = None,
    boundary_fill: str = "nearest",
    threads: int = 1,
) -> NadirGrid:
    """Simulate every primary node and fill the boundary extension.

    ``boundary_fill="nearest"`` copies the nearest primary node into each
    boundary node; ``"simulate"`` runs the simulator there too.
    """
    if boundary_fill not in ("nearest", "simulate"):
        raise ValueError(f"unknown boundary_fill {boundary_fill!r}")
    extension = DEFAULT_EXTENSION if extension is None else extension
    full_axes, where = extend_axes(axes, extension)
    primary = _round9(_simulate_block(config, axes.as_list(), threads))
    n_sims = primary.size
    shape = full_axes.shape
    mask = np.ones(shape, dtype=bool)
    mask[where] = False
    if boundary_fill == "nearest":
        idx = [np.clip(np.arange(n) - sl.start, 0, sl.stop - sl.start - 1) for n, sl in zip(shape, where)]
        values = primary[np.ix_(*idx)]
    else:
        values = _round9(_simulate_block(config, full_axes.as_list(), threads))
        values[where] = primary
        n_sims += int(mask.sum())
    values = np.ascontiguousarray(values)
    if not (np.all(np.isfinite(values)) and np.all(values > 0)):
        raise NumericError("grid contains non-positive or non-finite nadir values")
    if np.any(np.diff(values, axis=0) < 0):
        logger.warning("nadir grid is not monotone along the loss axis")
    return NadirGrid(
        axes=tuple(np.asarray(a) for a in full_axes.as_list()),
        values=values,
        boundary_filled_mask=mask,
        config_hash=grid_hash(config, axes, extension, boundary_fill),
        n_simulations=n_sims,
    )


def interpolate(grid: NadirGrid, loss_mw, inertia_gva_s, demand_gw, response_mw, dc_mw, *, warn: bool = True):
    """Multilinear interpolation over the enclosing 32 nodes.

    Queries outside an axis range are clamped onto it.
    """
    pts = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (loss_mw, inertia_gva_s, demand_gw, response_mw, dc_mw)))
    shape = pts[0].shape
    lower, frac = [], []
    outside = np.zeros(shape, dtype=bool)
    for ax, p in zip(grid.axes, pts):
        c = np.clip(p, ax[0], ax[-1])
        outside |= c != p
        if ax.size == 1:
            lower.append(np.zeros(shape, dtype=np.int64))
            frac.append(np.zeros(shape))
            continue
        i = np.clip(np.searchsorted(ax, c, side="right") - 1, 0, ax.size - 2)
        lower.append(i)
        frac.append((c - ax[i]) / (ax[i + 1] - ax[i]))
    if warn and outside.any():
        logger.warning("%d nadir queries outside the grid were clamped", int(outside.sum()))
    out = np.zeros(shape)
    for corner in itertools.product((0, 1), repeat=5):
        wt = np.ones(shape)
        idx = []
        for d, bit in enumerate(corner):
            n = grid.axes[d].size
            wt = wt * (frac[d] if bit else 1.0 - frac[d])
            idx.append(np.minimum(lower[d] + bit, n - 1))
        out = out + wt * grid.values[tuple(idx)]
    return out


def interpolate_nadir(grid: NadirGrid, query: Sequence[float]) -> float:
    """Nadir (Hz) at a single ``(loss, H, D, R, dc)`` query."""
    return float(interpolate(grid, *query))


# --- grid file ---------------------------------------------------------------

def save_grid(grid: NadirGrid, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"PFHA-NADIR-GRID {GRID_FORMAT_VERSION}", f"config_hash {grid.config_hash}"]
    for name, ax in zip(AXIS_NAMES, grid.axes):
        lines.append(f"axis {name} " + " ".join(repr(float(v)) for v in ax))
    lines.append("values")
    lines.extend(f"{v:.9g}" for v in grid.values.ravel())
    lines.append("mask")
    lines.extend("1" if m else "0" for m in grid.boundary_filled_mask.ravel())
    path.write_text("\n".join(lines) + "\n")


def load_grid(path) -> NadirGrid:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
        if lines[0].split() != ["PFHA-NADIR-GRID", str(GRID_FORMAT_VERSION)]:
            raise ValueError("unsupported grid format")
        chash = lines[1].split()[1]
        axes = []
        for k, name in enumerate(AXIS_NAMES):
            tok = lines[2 + k].split()
            if tok[:2] != ["axis", name]:
                raise ValueError(f"expected axis {name}")
            axes.append(np.array([float(v) for v in tok[2:]]))
        shape = tuple(a.size for a in axes)
        n = int(np.prod(shape))
        i0 = 2 + len(AXIS_NAMES)
        if lines[i0] != "values" or lines[i0 + 1 + n] != "mask":
            raise ValueError("bad section markers")
        values = np.array([float(v) for v in lines[i0 + 1:i0 + 1 + n]]).reshape(shape)
        mask = np.array([v == "1" for v in lines[i0 + 2 + n:i0 + 2 + 2 * n]]).reshape(shape)
    except (IndexError, ValueError) as exc:
        raise DataError(f"{path}: corrupt grid file ({exc})") from None
    return NadirGrid(tuple(axes), values, mask, chash, 0)


def load_or_build_grid(
    config: SimConfig,
    cache_dir,
    axes: GridAxes = PRIMARY_AXES,
    *,
    extension: dict[str, tuple[int, int]] | None = None,
    boundary_fill: str = "nearest",
    threads: int = 1,
) -> tuple[NadirGrid, bool]:
    """Reuse a cached grid whose config hash matches; returns ``(grid, cache_hit)``."""
    extension = DEFAULT_EXTENSION if extension is None else extension
    h = grid_hash(config, axes, extension, boundary_fill)
    path = Path(cache_dir) / f"nadir_grid_{h}.txt"
    if path.exists():
        grid = load_grid(path)
        if grid.config_hash == h:
            return grid, True
    grid = build_grid(config, axes, extension=extension, boundary_fill=boundary_fill, threads=threads)
    save_grid(grid, path)
    return grid, False


def grid_summary(grid: NadirGrid) -> dict[str, float]:
    return {
        "points": grid.n_points,
        "primary": grid.n_primary,
        "boundary": grid.n_points - grid.n_primary,
        "min_hz": float(grid.values.min()),
        "max_hz": float(grid.values.max()),
        "simulations": grid.n_simulations,
    }

