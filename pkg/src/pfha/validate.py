"""Out-of-sample temporal split, nadir-model replay comparison and pinned numeric anchors."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import Callable, Mapping, Sequence

import numpy as np

from .catalogue import SourceRecord
from .controls import DcConfig, LfddConfig, lfdd_exceedance_factor, route_dc
from .errors import DataError
from .hazard import HazardInputs, compute_hazard
from .layers import CascadeSpec, cascade_adjusted_terms
from .logictree import central_path, enumerate_paths, path_inputs
from .physics import NadirGrid, SimConfig, interpolate, simulate_nadirs
from .rates import DEFAULT_PRIORS, GammaPrior, Incident, count_incidents, estimate_rates, years_between
from .sfr import SFR_SIGMA, NadirPrediction, ReplayEvent, SfrParams, aleatory_sigma, exceedance_probability, replay_residuals, sfr_median_nadir, z_score

STABILITY_BOUNDS = (0.5, 2.0)


@dataclass
class SplitResult:
    split: datetime
    n_training: int
    n_test: int
    training_rates: dict[str, float]
    full_rates: dict[str, float]
    thresholds: np.ndarray
    training_hazard: np.ndarray
    full_hazard: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.full_hazard > 0, self.training_hazard / np.where(self.full_hazard > 0, self.full_hazard, 1.0), np.nan)

    @property
    def stable(self) -> np.ndarray:
        r = self.ratios
        return (r >= STABILITY_BOUNDS[0]) & (r <= STABILITY_BOUNDS[1])


def temporal_split(
    incidents: Sequence[Incident],
    split: datetime,
    catalogue: Sequence[SourceRecord],
    base: HazardInputs,
    *,
    start: datetime,
    end: datetime,
    priors: Mapping[str, GammaPrior] = DEFAULT_PRIORS,
    unmatched_to: str | None = None,
) -> SplitResult:
    """Recalibrate rates on ``[start, split)`` and compare central-path hazard with the full record.

    Only trip rates are recalibrated; nadir-model scatter is held at the
    central value in both runs. A split at or beyond ``end`` uses the full
    record for training.
    """
    split_eff = min(split, end)
    if split_eff <= start:
        raise DataError("split leaves no training window")
    training = [e for e in incidents if start <= e.timestamp < split_eff]
    test = [e for e in incidents if split_eff <= e.timestamp < end]
    if not training:
        raise DataError("empty training set")
    full_cat = estimate_rates(catalogue, count_incidents(incidents, catalogue, start, end, unmatched_to=unmatched_to), priors)
    train_cat = estimate_rates(catalogue, count_incidents(training, catalogue, start, split_eff, unmatched_to=unmatched_to), priors)
    central = path_inputs(central_path(), base)

    def run(cat):
        ids = {s.source_id: s for s in cat}
        srcs = [replace(s, trip_rate_per_yr=ids[s.source_id].trip_rate_per_yr) if s.source_id in ids else s for s in base.sources]
        return compute_hazard(replace(central, sources=srcs)).rates

    return SplitResult(
        split=split_eff,
        n_training=len(training),
        n_test=len(test),
        training_rates={s.source_id: s.trip_rate_per_yr for s in train_cat},
        full_rates={s.source_id: s.trip_rate_per_yr for s in full_cat},
        thresholds=np.asarray(base.thresholds, dtype=float),
        training_hazard=run(train_cat),
        full_hazard=run(full_cat),
    )


def poisson_incidents(
    rng: np.random.Generator,
    rates: Mapping[str, float],
    start: datetime,
    end: datetime,
    *,
    inertia_gva_s: float = 200.0,
) -> list[Incident]:
    """Homogeneous Poisson incident stream per source over ``[start, end)``."""
    span = (end - start).total_seconds()
    years = years_between(start, end)
    out = []
    for sid in sorted(rates):
        n = int(rng.poisson(rates[sid] * years))
        for u in np.sort(rng.uniform(0.0, span, size=n)):
            out.append(Incident(start + timedelta(seconds=float(u)), sid, 0.05, inertia_gva_s, 0.2))
    return sorted(out, key=lambda e: e.timestamp)


# --- nadir-model replay -------------------------------------------------------

@dataclass(frozen=True)
class CompareRow:
    model: str
    mean_log_residual: float
    bias_factor: float
    residual_stdev: float
    mean_abs_error: float
    n_events: int


def _row(model: str, summary) -> CompareRow:
    r = summary.residuals
    mae = math.fsum(np.abs(r)) / r.size if r.size else math.nan
    return CompareRow(model, summary.mean_bias, summary.bias_factor, summary.stdev, mae, int(r.size))


def frpe_compare(
    events: Sequence[ReplayEvent],
    grid: NadirGrid,
    sfr_params: SfrParams = SfrParams(bias=1.0),
) -> list[CompareRow]:
    """Replay residual statistics for the raw SFR model and the physics grid.

    Residuals are ``ln(observed / predicted)``; the mean absolute error is
    taken on those log residuals. Event DC is the delivered volume and is
    routed as each model expects.
    """
    def sfr_pred(loss, h, d, r, dc):
        _, resp = route_dc("sfr", DcConfig(dc, 1.0), r)
        return sfr_median_nadir(loss, h, d, resp, sfr_params)

    def phys_pred(loss, h, d, r, dc):
        coord, resp = route_dc("physics", DcConfig(dc, 1.0), r)
        return float(interpolate(grid, loss, h, d, resp, coord, warn=False))

    return [
        _row("sfr_raw", replay_residuals(events, sfr_params, sfr_pred)),
        _row("physics", replay_residuals(events, sfr_params, phys_pred)),
    ]


def synthetic_replay_events(
    rng: np.random.Generator,
    n: int,
    config: SimConfig = SimConfig(),
    *,
    scatter: float = 0.0,
    bounds: Mapping[str, tuple[float, float]] | None = None,
) -> list[ReplayEvent]:
    """Events whose observed nadir comes from the time-domain simulator (optionally log-scattered)."""
    b = {"loss": (300.0, 1700.0), "h": (100.0, 320.0), "d": (17.0, 43.0), "r": (600.0, 2900.0), "dc": (0.0, 1100.0)}
    b.update(bounds or {})
    draw = {k: rng.uniform(lo, hi, size=n) for k, (lo, hi) in b.items()}
    nadir = simulate_nadirs(draw["loss"], draw["h"], draw["d"], draw["r"], draw["dc"], config).nadir_hz
    if scatter > 0:
        nadir = nadir * np.exp(rng.normal(0.0, scatter, size=n))
    return [
        ReplayEvent(
            nadir_deviation_hz=float(nadir[i]),
            demand_gw=float(draw["d"][i]),
            response_mw=float(draw["r"][i]),
            inertia_gva_s=float(draw["h"][i]),
            actual_mw=float(draw["loss"][i]),
            dc_mw=float(draw["dc"][i]),
        )
        for i in range(n)
    ]


# --- pinned anchors -----------------------------------------------------------

# Assumed system conditions for the 9 August 2019 event (1341 MW lost). Demand
# and response are not observed; these values put the biased closed-form
# median near 0.64 Hz.
AUG2019_REPLAY = {"loss_mw": 1341.0, "inertia_gva_s": 210.0, "demand_gw": 28.0, "response_mw": 1000.0}


@dataclass(frozen=True)
class AnchorResult:
    name: str
    value: float
    lo: float
    hi: float

    @property
    def passed(self) -> bool:
        return self.lo <= self.value <= self.hi


def _anchor(name: str, fn: Callable[[], float], lo: float, hi: float) -> AnchorResult:
    return AnchorResult(name, float(fn()), lo, hi)


def reference_anchors() -> list[AnchorResult]:
    """Evaluate every desk-checkable reference value against its tolerance band."""
    worked = NadirPrediction(0.164, 0.317)
    a = AUG2019_REPLAY
    sfr = SfrParams(bias=0.370)
    gate = CascadeSpec()
    paths = enumerate_paths()
    return [
        _anchor("worked_example_z_0.8Hz", lambda: z_score(0.164, 0.317, 0.8), -5.00, -4.98),
        _anchor("worked_example_p_0.8Hz", lambda: exceedance_probability(worked, 0.8), 2e-7, 4e-7),
        _anchor("worked_example_z_0.5Hz", lambda: z_score(0.164, 0.317, 0.5), -3.53, -3.51),
        _anchor("worked_example_p_0.5Hz", lambda: exceedance_probability(worked, 0.5), 2.0e-4, 2.4e-4),
        _anchor("sfr_median_1000MW", lambda: sfr_median_nadir(1000.0, 180.0, 28.0, 1500.0, sfr), 0.355, 0.370),
        _anchor("sfr_median_2000MW", lambda: sfr_median_nadir(2000.0, 180.0, 28.0, 1500.0, sfr), 0.715, 0.735),
        _anchor("sigma_1198MW_H180", lambda: aleatory_sigma(1198.0, 180.0, SFR_SIGMA), 0.3162, 0.3172),
        _anchor("cascade_branches_749.9MW", lambda: len(cascade_adjusted_terms(749.9, 150.0, gate)), 1, 1),
        _anchor("cascade_branches_750MW", lambda: len(cascade_adjusted_terms(750.0, 150.0, gate)), 2, 2),
        _anchor("aug2019_replay_median", lambda: sfr_median_nadir(a["loss_mw"], a["inertia_gva_s"], a["demand_gw"], a["response_mw"], sfr), 0.63, 0.65),
        _anchor("dc_effective_mw", lambda: route_dc("physics", DcConfig(1000.0, 0.85), 0.0)[0], 850.0 - 1e-9, 850.0 + 1e-9),
        _anchor("lfdd_factor_at_stage1", lambda: lfdd_exceedance_factor(1.2, LfddConfig()), 1.0, 1.0),
        _anchor("logic_tree_paths", lambda: len(paths), 324, 324),
        _anchor("logic_tree_weight_sum", lambda: math.fsum(p.weight for p in paths), 1.0 - 1e-12, 1.0 + 1e-12),
    ]


def format_anchor_report(results: Sequence[AnchorResult]) -> str:
    lines = []
    for r in results:
        lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} {r.value:.6g}  [{r.lo:.6g}, {r.hi:.6g}]")
    return "\n".join(lines)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
