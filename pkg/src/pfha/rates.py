"""Gamma-Poisson trip-rate estimation."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Mapping, Sequence

from scipy.special import gammainc

from .catalogue import PRIOR_CLASSES, SourceRecord
from .errors import DataError
from .tableio import parse_float, parse_timestamp, read_rows

logger = logging.getLogger(__name__)

SECONDS_PER_YEAR = 365.25 * 86400.0

# Midpoints of the per-type rate ranges, used as prior means with alpha = 1.
_PRIOR_MEAN = {
    "ccgt": (0.16 + 4.24) / 2,
    "interconnector": (0.39 + 13.4) / 2,
    "nuclear": (0.51 + 1.26) / 2,
    "biomass": 0.76,
    "pumped_storage": (0.34 + 0.51) / 2,
    "wind": (0.34 + 0.51) / 2,
}


@dataclass(frozen=True)
class GammaPrior:
    prior_class: str
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"{self.prior_class}: alpha and beta must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / self.beta


DEFAULT_PRIORS = {c: GammaPrior(c, 1.0, 1.0 / _PRIOR_MEAN[c]) for c in PRIOR_CLASSES}


@dataclass(frozen=True)
class IncidentCount:
    source_id: str
    n_events: int
    observation_years: float

    def __post_init__(self):
        if self.n_events < 0:
            raise ValueError("n_events must be >= 0")
        if not self.observation_years > 0:
            raise ValueError("observation_years must be positive")


def posterior_rate(prior: GammaPrior, count: IncidentCount) -> float:
    """Posterior mean trip rate (events/yr)."""
    return (prior.alpha + count.n_events) / (prior.beta + count.observation_years)


def gamma_cdf(x: float, shape: float, rate: float) -> float:
    return float(gammainc(shape, rate * x)) if x > 0 else 0.0


def gamma_ppf(q: float, shape: float, rate: float, tol: float = 1e-10) -> float:
    """Inverse CDF of Gamma(shape, rate) by bisection on the regularised incomplete gamma."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must be in (0, 1)")
    lo, hi = 0.0, max(1.0, shape) / rate
    while gamma_cdf(hi, shape, rate) < q:
        hi *= 2.0
    # Relative tolerance so small quantiles keep full precision.
    for _ in range(400):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if gamma_cdf(mid, shape, rate) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def credible_interval(prior: GammaPrior, count: IncidentCount, level: float) -> tuple[float, float]:
    """Equal-tailed posterior interval at the given probability level."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    shape = prior.alpha + count.n_events
    rate = prior.beta + count.observation_years
    tail = 0.5 * (1.0 - level)
    return gamma_ppf(tail, shape, rate), gamma_ppf(1.0 - tail, shape, rate)


def load_priors(path) -> dict[str, GammaPrior]:
    """Read a priors file; classes it omits keep their defaults."""
    priors = dict(DEFAULT_PRIORS)
    for lineno, row in enumerate(read_rows(path, ("prior_class", "alpha", "beta")), start=2):
        cls = row["prior_class"].lower()
        if cls not in PRIOR_CLASSES:
            raise DataError(f"{path}:{lineno}: unknown prior_class {cls!r}")
        try:
            priors[cls] = GammaPrior(
                cls,
                parse_float(row["alpha"], path, "alpha", lineno),
                parse_float(row["beta"], path, "beta", lineno),
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return priors


@dataclass(frozen=True)
class Incident:
    """One frequency incident; ``actual_mw`` and the state fields are optional replay extras."""

    timestamp: datetime
    source_id: str | None
    rocof_hz_per_s: float
    inertia_gva_s: float
    nadir_deviation_hz: float
    actual_mw: float | None = None
    demand_gw: float | None = None
    response_mw: float | None = None
    dc_mw: float | None = None


INCIDENT_COLUMNS = ("timestamp_iso8601", "source_id", "rocof_hz_per_s", "inertia_gva_s", "nadir_deviation_hz")
_OPTIONAL_INCIDENT_COLUMNS = ("actual_mw", "demand_gw", "response_mw", "dc_mw")


def load_incidents(path) -> list[Incident]:
    rows = read_rows(path, INCIDENT_COLUMNS, _OPTIONAL_INCIDENT_COLUMNS)
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            ts = parse_timestamp(row["timestamp_iso8601"])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad timestamp {row['timestamp_iso8601']!r}") from None
        opt = {
            k: parse_float(row[k], path, k, lineno) if row[k] else None
            for k in _OPTIONAL_INCIDENT_COLUMNS
        }
        out.append(
            Incident(
                timestamp=ts,
                source_id=row["source_id"] or None,
                rocof_hz_per_s=parse_float(row["rocof_hz_per_s"], path, "rocof_hz_per_s", lineno),
                inertia_gva_s=parse_float(row["inertia_gva_s"], path, "inertia_gva_s", lineno),
                nadir_deviation_hz=parse_float(row["nadir_deviation_hz"], path, "nadir_deviation_hz", lineno),
                **opt,
            )
        )
    return sorted(out, key=lambda e: e.timestamp)


def years_between(start: datetime, end: datetime) -> float:
    return (end - start).total_seconds() / SECONDS_PER_YEAR


def count_incidents(
    incidents: Sequence[Incident],
    catalogue: Sequence[SourceRecord],
    start: datetime,
    end: datetime,
    *,
    unmatched_to: str | None = None,
) -> dict[str, IncidentCount]:
    """Per-source event counts over ``[start, end)``.

    Incidents with a blank or unknown source id are added to ``unmatched_to``
    when given, otherwise dropped with a log message.
    """
    years = years_between(start, end)
    if not years > 0:
        raise DataError("observation window has no duration")
    ids = {s.source_id for s in catalogue}
    if unmatched_to is not None and unmatched_to not in ids:
        raise DataError(f"unmatched-event source {unmatched_to!r} not in catalogue")
    n: Counter[str] = Counter()
    dropped = 0
    for ev in incidents:
        if not (start <= ev.timestamp < end):
            continue
        sid = ev.source_id if ev.source_id in ids else unmatched_to
        if sid is None:
            dropped += 1
            continue
        n[sid] += 1
    if dropped:
        logger.info("%d unmatched incidents dropped", dropped)
    return {sid: IncidentCount(sid, n[sid], years) for sid in sorted(ids)}


def estimate_rates(
    catalogue: Sequence[SourceRecord],
    counts: Mapping[str, IncidentCount],
    priors: Mapping[str, GammaPrior] = DEFAULT_PRIORS,
) -> list[SourceRecord]:
    """Fill ``trip_rate_per_yr`` with the posterior mean for every source that has a prior class."""
    out = []
    for src in catalogue:
        if src.prior_class is None:
            out.append(src)
            continue
        prior = priors[src.prior_class]
        out.append(replace(src, trip_rate_per_yr=posterior_rate(prior, counts[src.source_id])))
    return out
