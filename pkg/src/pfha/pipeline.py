"""Assemble model inputs from a run configuration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from datetime import timedelta

from .catalogue import SourceRecord, attach_pmfs, load_catalogue, load_generation_records
from .config import RunConfig
from .controls import control_settings
from .errors import DataError
from .hazard import FrpeSelection, HazardInputs
from .layers import CascadeSpec, build_pair_source, load_pairs
from .physics import NadirGrid, load_or_build_grid
from .rates import DEFAULT_PRIORS, Incident, count_incidents, estimate_rates, load_incidents, load_priors
from .state import StateBin, load_states, quantile_bin

logger = logging.getLogger(__name__)


@dataclass
class Model:
    singles: list[SourceRecord]
    pairs: list[SourceRecord]
    state_bins: list[StateBin]
    incidents: list[Incident]
    grid: NadirGrid
    grid_cache_hit: bool
    base: HazardInputs

    @property
    def sources(self) -> list[SourceRecord]:
        return self.singles + self.pairs


def observation_window(cfg: RunConfig, incidents):
    """Configured window, else the incident span (end exclusive, so pad by one second)."""
    start, end = cfg.start, cfg.end
    if start is None or end is None:
        if not incidents:
            raise DataError("no incidents and no observation window configured")
        start = start or incidents[0].timestamp
        end = end or incidents[-1].timestamp + timedelta(seconds=1)
    return start, end


def load_grid_for(cfg: RunConfig, threads: int | None = None):
    return load_or_build_grid(cfg.sim, cfg.cache_dir, boundary_fill=cfg.boundary_fill, threads=threads or cfg.threads)


def build_model(
    cfg: RunConfig,
    *,
    thresholds: tuple[float, ...] | None = None,
    control_mode: str | None = None,
    cascade: bool | None = None,
    threads: int | None = None,
) -> Model:
    d = cfg.data
    catalogue = load_catalogue(d["catalogue"], d["registry"])
    if not catalogue:
        raise DataError(f"{d['catalogue']}: catalogue has no sources")
    generation = load_generation_records(d["generation"])
    catalogue = attach_pmfs(catalogue, generation, cfg.bin_width_mw, min_periods=cfg.min_periods)
    incidents = load_incidents(d["incidents"])
    priors = load_priors(d["priors"]) if d["priors"] else DEFAULT_PRIORS
    start, end = observation_window(cfg, incidents)
    counts = count_incidents(incidents, catalogue, start, end, unmatched_to=cfg.unmatched_source)
    singles = estimate_rates(catalogue, counts, priors)
    missing = [s.source_id for s in singles if s.trip_rate_per_yr is None]
    if missing:
        raise DataError(f"{d['catalogue']}: sources without prior class or rate: {missing}")

    pairs = [build_pair_source(p, singles) for p in load_pairs(d["pairs"])] if d["pairs"] else []

    states = load_states(d["states"])
    bins = quantile_bin(states, cfg.n_state_bins, cfg.metric_weights)

    grid, hit = load_grid_for(cfg, threads)
    mode = control_mode or cfg.control_mode
    dc, lfdd = control_settings(mode, cfg.dc, cfg.lfdd)
    if cascade is None:
        use_cascade = cfg.cascade
    else:
        use_cascade = (cfg.cascade or CascadeSpec()) if cascade else None
    base = HazardInputs(
        sources=singles + pairs,
        state_bins=bins,
        frpe=FrpeSelection(kind="physics", sfr=cfg.sfr, grid=grid),
        thresholds=tuple(thresholds or cfg.summary_thresholds),
        dc=dc,
        lfdd=lfdd,
        cascade=use_cascade,
        keep_cells=False,
    )
    return Model(singles, pairs, bins, incidents, grid, hit, base)


def with_all_controls(cfg: RunConfig, base: HazardInputs) -> HazardInputs:
    """Inputs with both controls present, for the four-way defence table."""
    return replace(base, dc=cfg.dc, lfdd=cfg.lfdd)
