"""Exceedance-rate integral over sources, loss bins and system-state bins."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .catalogue import SourceRecord
from .controls import DcConfig, LfddConfig, lfdd_exceedance_factor, lfdd_nadir_cap, route_dc
from .errors import NumericError
from .layers import CascadeSpec, cascade_gate
from .physics import NadirGrid, interpolate
from .sfr import PHYSICS_SIGMA, SFR_SIGMA, SfrParams, SigmaParams, aleatory_sigma, effective_damping, norm_cdf, sfr_median_nadir
from .state import StateBin

REGULATORY_THRESHOLDS_HZ = (0.5, 0.8, 1.2)


@dataclass(frozen=True)
class FrpeSelection:
    """Which nadir model drives the integrand and its scatter.

    ``custom`` uses ``median_fn(loss, H, D, R, dc)`` and
    ``sigma_fn(loss, H)``, both vectorised.
    """

    kind: str = "sfr"
    sigma0: float = 0.296
    sfr: SfrParams = field(default_factory=SfrParams)
    grid: NadirGrid | None = None
    median_fn: Callable | None = None
    sigma_fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("sfr", "physics", "custom"):
            raise ValueError(f"unknown FRPE kind {self.kind!r}")
        if self.kind == "physics" and self.grid is None:
            raise ValueError("physics FRPE needs a nadir grid")
        if self.kind == "custom" and self.median_fn is None:
            raise ValueError("custom FRPE needs median_fn")

    @property
    def sigma_params(self) -> SigmaParams:
        base = PHYSICS_SIGMA if self.kind == "physics" else SFR_SIGMA
        return replace(base, sigma0=self.sigma0)

    def routing_kind(self) -> str:
        return "physics" if self.kind == "physics" else "sfr"


@dataclass(frozen=True)
class HazardInputs:
    sources: Sequence[SourceRecord]
    state_bins: Sequence[StateBin]
    frpe: FrpeSelection
    thresholds: tuple[float, ...] = REGULATORY_THRESHOLDS_HZ
    dc: DcConfig | None = None
    lfdd: LfddConfig | None = None
    cascade: CascadeSpec | None = None
    pair_rate_multiplier: float = 1.0
    keep_cells: bool = True
    prune_below: float | None = None

    def __post_init__(self):
        thr = np.asarray(self.thresholds, dtype=float)
        if thr.size == 0 or np.any(thr <= 0) or np.any(np.diff(thr) <= 0):
            raise ValueError("thresholds must be positive and strictly ascending")
        if self.state_bins:
            tot = math.fsum(b.weight for b in self.state_bins)
            if abs(tot - 1.0) > 1e-9:
                raise ValueError(f"state-bin weights sum to {tot}, not 1")
        if not self.pair_rate_multiplier > 0:
            raise ValueError("pair rate multiplier must be positive")
        for s in self.sources:
            if s.pmf is None or s.trip_rate_per_yr is None:
                raise ValueError(f"source {s.source_id} lacks a PMF or trip rate")


@dataclass
class CellTable:
    """One row per (source, loss bin, state bin, cascade branch)."""

    source_index: np.ndarray
    loss_mw: np.ndarray
    state_index: np.ndarray
    branch: np.ndarray
    inertia_gva_s: np.ndarray
    demand_gw: np.ndarray
    median_nadir_hz: np.ndarray
    sigma: np.ndarray
    contributions: np.ndarray  # (n_cells, n_thresholds), events/yr
    epsilon: np.ndarray  # (n_cells, n_thresholds)

    def __len__(self) -> int:
        return int(self.loss_mw.size)


@dataclass
class HazardResult:
    thresholds: np.ndarray
    rates: np.ndarray
    source_ids: tuple[str, ...]
    cells: CellTable | None = None

    @property
    def return_periods(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.rates > 0, 1.0 / np.where(self.rates > 0, self.rates, 1.0), np.inf)

    def threshold_index(self, threshold: float) -> int:
        hit = np.flatnonzero(np.isclose(self.thresholds, threshold, rtol=0, atol=1e-9))
        if hit.size == 0:
            raise KeyError(f"threshold {threshold} not in result")
        return int(hit[0])

    def rate_at(self, threshold: float) -> float:
        return float(self.rates[self.threshold_index(threshold)])


def _state_arrays(bins: Sequence[StateBin]):
    h = np.array([b.mean_inertia_gva_s for b in bins], dtype=float)
    d = np.array([b.mean_demand_gw for b in bins], dtype=float)
    r = np.array([b.mean_response_mw for b in bins], dtype=float)
    dc = np.array([b.mean_dc_mw for b in bins], dtype=float)
    w = np.array([b.weight for b in bins], dtype=float)
    return h, d, r, dc, w


def _median_and_sigma(inp: HazardInputs, loss, h, d, r_base, dc_state):
    f = inp.frpe
    dc_coord, r_routed = route_dc(f.routing_kind(), inp.dc, r_base, dc_state)
    if f.kind == "sfr":
        mu = sfr_median_nadir(loss, h, d, r_routed, f.sfr)
    elif f.kind == "physics":
        mu = interpolate(f.grid, loss, h, d, r_routed, dc_coord, warn=False)
    else:
        mu = f.median_fn(loss, h, d, r_routed, dc_coord)
    mu = np.asarray(mu, dtype=float)
    if inp.lfdd is not None and inp.lfdd.enabled:
        mu = lfdd_nadir_cap(mu, loss, d, effective_damping(d, r_routed, f.sfr), inp.lfdd)
    if f.kind == "custom" and f.sigma_fn is not None:
        sig = np.asarray(f.sigma_fn(loss, h), dtype=float)
    else:
        sig = np.asarray(aleatory_sigma(loss, h, f.sigma_params), dtype=float)
    return np.broadcast_to(mu, loss.shape), np.broadcast_to(sig, loss.shape)


def compute_hazard(inputs: HazardInputs) -> HazardResult:
    """Annual exceedance rate at each threshold with per-cell contributions."""
    thr = np.asarray(inputs.thresholds, dtype=float)
    ids = tuple(s.source_id for s in inputs.sources)
    if not inputs.sources or not inputs.state_bins:
        empty = _empty_cells(thr.size) if inputs.keep_cells else None
        return HazardResult(thr, np.zeros(thr.size), ids, empty)
    h_s, d_s, r_s, dc_s, w_s = _state_arrays(inputs.state_bins)
    ns = h_s.size
    factors = np.array([lfdd_exceedance_factor(t, inputs.lfdd) for t in thr])
    log_thr = np.log(thr)

    blocks = []
    for i, src in enumerate(inputs.sources):
        pmf = src.pmf
        nz = np.flatnonzero(pmf.weights > 0)
        loss_b, w_b = pmf.centres_mw[nz], pmf.weights[nz]
        nb = loss_b.size
        loss = np.repeat(loss_b, ns)
        weight = np.repeat(w_b, ns) * np.tile(w_s, nb)
        st = np.tile(np.arange(ns), nb)
        branch = np.zeros(loss.size, dtype=np.int8)
        if inputs.cascade is not None and inputs.cascade.p_cond > 0:
            gate = cascade_gate(loss, h_s[st], inputs.cascade)
            p = inputs.cascade.p_cond
            g_idx = np.flatnonzero(gate)
            base = weight
            weight = np.concatenate([np.where(gate, base * (1.0 - p), base), base[g_idx] * p])
            loss = np.concatenate([loss, loss[g_idx] + inputs.cascade.der_loss_mw])
            st = np.concatenate([st, st[g_idx]])
            branch = np.concatenate([branch, np.ones(g_idx.size, dtype=np.int8)])
        h, d, r, dcv = h_s[st], d_s[st], r_s[st], dc_s[st]
        mu, sig = _median_and_sigma(inputs, loss, h, d, r, dcv)
        bad = ~(np.isfinite(mu) & (mu > 0) & np.isfinite(sig) & (sig > 0))
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise NumericError(
                f"nadir model failed for source {src.source_id} at loss={loss[k]} MW, state bin {st[k]} "
                f"(mu={mu[k]}, sigma={sig[k]})"
            )
        rate = src.trip_rate_per_yr * (inputs.pair_rate_multiplier if src.source_type == "pair" else 1.0)
        z = (np.log(mu)[:, None] - log_thr[None, :]) / sig[:, None]
        contrib = rate * weight[:, None] * factors[None, :] * norm_cdf(z)
        blocks.append((np.full(loss.size, i), loss, st, branch, h, d, mu, sig, contrib, -z))

    cat = [np.concatenate([b[k] for b in blocks]) for k in range(10)]
    contrib = cat[8]
    if inputs.prune_below is not None:
        keep = contrib.max(axis=1) >= inputs.prune_below
        cat = [c[keep] for c in cat]
        contrib = cat[8]
    rates = np.array([math.fsum(contrib[:, j]) for j in range(thr.size)])
    cells = CellTable(*cat) if inputs.keep_cells else None
    return HazardResult(thr, rates, ids, cells)


def _empty_cells(n_thr: int) -> CellTable:
    e = np.zeros(0)
    return CellTable(e.astype(int), e, e.astype(int), e.astype(np.int8), e, e, e, e, np.zeros((0, n_thr)), np.zeros((0, n_thr)))


def threshold_grid(start: float = 0.05, stop: float = 2.2, step: float = 0.05) -> tuple[float, ...]:
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + k * step, 10) for k in range(n))


def hazard_curve(inputs: HazardInputs, thresholds: Sequence[float] | None = None) -> list[tuple[float, float, float]]:
    """``(threshold, rate, return period)`` rows over an ascending threshold grid."""
    grid = threshold_grid() if thresholds is None else tuple(float(t) for t in thresholds)
    res = compute_hazard(replace(inputs, thresholds=grid, keep_cells=False))
    rp = res.return_periods
    return [(float(t), float(r), float(p)) for t, r, p in zip(res.thresholds, res.rates, rp)]
