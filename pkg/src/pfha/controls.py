"""Dynamic Containment routing and demand-disconnection (LFDD) modelling."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

FRPE_KINDS = ("sfr", "physics", "custom")
CONTROL_MODES = ("none", "dc_only", "lfdd_only", "both")

DEFAULT_LFDD_STAGES = ((1.2, 0.10), (1.4, 0.10), (1.6, 0.10), (1.8, 0.15), (2.0, 0.15))


@dataclass(frozen=True)
class DcConfig:
    """``contracted_mw=None`` takes the holding from each state bin's mean."""

    contracted_mw: float | None = 1000.0
    effectiveness: float = 0.85

    def __post_init__(self):
        if not 0.0 <= self.effectiveness <= 1.0:
            raise ValueError("DC effectiveness must be in [0, 1]")
        if self.contracted_mw is not None and self.contracted_mw < 0:
            raise ValueError("contracted DC must be >= 0")


@dataclass(frozen=True)
class LfddConfig:
    stages: tuple[tuple[float, float], ...] = DEFAULT_LFDD_STAGES
    relay_effectiveness: float = 0.85
    stage_credit: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        devs = [s[0] for s in self.stages]
        if any(b <= a for a, b in zip(devs, devs[1:])):
            raise ValueError("LFDD stages must deepen strictly")
        if any(not 0.0 < f < 1.0 for _, f in self.stages):
            raise ValueError("shed fractions must be in (0, 1)")
        if sum(f for _, f in self.stages) > 0.6 + 1e-12:
            raise ValueError("cumulative shed exceeds 60% of demand")
        if not 0.0 <= self.relay_effectiveness <= 1.0 or not 0.0 <= self.stage_credit <= 1.0:
            raise ValueError("relay effectiveness and stage credit must be in [0, 1]")


class RoutingAudit:
    """Thread-safe tally of DC routing calls and double-count violations."""

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.double_counts = 0

    def record(self, n_calls: int, n_double: int) -> None:
        with self._lock:
            self.calls += n_calls
            self.double_counts += n_double

    def reset(self) -> None:
        with self._lock:
            self.calls = 0
            self.double_counts = 0


AUDIT = RoutingAudit()


def route_dc(frpe_kind: str, dc: DcConfig | None, base_response_mw, contracted_mw=None):
    """Send the effective DC volume down exactly one pathway.

    Physics models take it as the grid DC coordinate; the SFR model adds it
    to the response holding. Returns ``(dc_coordinate_mw, response_mw)``;
    both broadcast over ``base_response_mw`` and ``contracted_mw``.
    """
    if frpe_kind not in FRPE_KINDS:
        raise ValueError(f"unknown FRPE kind {frpe_kind!r}")
    base = np.asarray(base_response_mw, dtype=float)
    if dc is None:
        eff_mw = np.zeros_like(base)
    else:
        vol = dc.contracted_mw if dc.contracted_mw is not None else contracted_mw
        if vol is None:
            raise ValueError("DC volume comes from state bins but none was supplied")
        eff_mw = np.broadcast_to(np.asarray(vol, dtype=float) * dc.effectiveness, np.broadcast(base, np.asarray(vol)).shape).copy()
    if frpe_kind == "sfr":
        coord = np.zeros_like(eff_mw)
        response = base + eff_mw
    else:
        coord = eff_mw
        response = np.broadcast_to(base, eff_mw.shape).copy()
    augmented = response - np.broadcast_to(base, response.shape)
    AUDIT.record(int(coord.size), int(np.count_nonzero((coord > 0) & (augmented > 0))))
    if coord.ndim == 0:
        return float(coord), float(response)
    return coord, response


def lfdd_exceedance_factor(threshold_hz: float, config: LfddConfig | None) -> float:
    """Product of per-stage survival factors over stages strictly shallower than the threshold."""
    if not threshold_hz > 0:
        raise ValueError("threshold must be positive")
    if config is None or not config.enabled:
        return 1.0
    keep = 1.0 - config.relay_effectiveness * config.stage_credit
    factor = 1.0
    for dev, _ in config.stages:
        if dev < threshold_hz:
            factor *= keep
    return factor


def lfdd_nadir_cap(median_nadir_hz, loss_mw, demand_gw, d_eff_mw_per_hz, config: LfddConfig | None):
    """Limit the median nadir by the depth at which staged shedding covers the imbalance.

    Stages are walked in order. At stage ``s`` the residual imbalance after
    cumulative shedding and damping at its activation depth ``a_s`` is
    ``max(0, loss - shed_s - d_eff*a_s)``, giving a candidate
    ``a_s + residual/d_eff``. The first candidate that does not reach the next
    stage is the cap (the last stage's candidate otherwise). Medians shallower
    than the first stage are returned unchanged.
    """
    mu = np.asarray(median_nadir_hz, dtype=float)
    if config is None or not config.enabled or not config.stages or config.relay_effectiveness == 0.0:
        return float(mu) if mu.ndim == 0 else mu
    loss, dem, d_eff = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (loss_mw, demand_gw, d_eff_mw_per_hz)))
    shed = np.zeros(loss.shape)
    cap = np.full(loss.shape, np.nan)
    devs = [s[0] for s in config.stages]
    for s, (dev, frac) in enumerate(config.stages):
        shed = shed + config.relay_effectiveness * frac * dem * 1000.0
        resid = np.maximum(0.0, loss - shed - d_eff * dev)
        cand = dev + resid / d_eff
        nxt = devs[s + 1] if s + 1 < len(devs) else np.inf
        take = np.isnan(cap) & (cand <= nxt)
        cap = np.where(take, cand, cap)
    cap = np.where(np.isnan(cap), cand, cap)
    out = np.where(mu >= devs[0], np.minimum(mu, cap), mu)
    return float(out) if out.ndim == 0 else out


def control_settings(mode: str, dc: DcConfig | None, lfdd: LfddConfig | None):
    """``(dc, lfdd)`` with the controls outside ``mode`` switched off."""
    if mode not in CONTROL_MODES:
        raise ValueError(f"unknown control mode {mode!r}")
    use_dc = mode in ("dc_only", "both")
    use_lfdd = mode in ("lfdd_only", "both")
    return (dc if use_dc else None), (lfdd if use_lfdd else None)


def run_configuration(mode: str, inputs):
    """Hazard rates per threshold with only the controls named by ``mode`` active."""
    from dataclasses import replace

    from .hazard import compute_hazard

    dc, lfdd = control_settings(mode, inputs.dc, inputs.lfdd)
    return compute_hazard(replace(inputs, dc=dc, lfdd=lfdd, keep_cells=False)).rates


def defence_decomposition(inputs) -> list[dict]:
    """Four-configuration table with reductions relative to the uncontrolled run."""
    rates = {m: run_configuration(m, inputs) for m in CONTROL_MODES}
    rows = []
    for i, thr in enumerate(inputs.thresholds):
        base = rates["none"][i]
        for m in CONTROL_MODES:
            r = rates[m][i]
            rows.append({
                "threshold_hz": float(thr),
                "configuration": m,
                "rate_per_yr": float(r),
                "reduction": (1.0 - r / base) if base > 0 else 0.0,
            })
    return rows
