"""Loss-source catalogue and empirical loss-size distributions."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .tableio import parse_float, parse_timestamp, read_rows

logger = logging.getLogger(__name__)

SOURCE_TYPES = (
    "ccgt",
    "interconnector",
    "nuclear",
    "biomass",
    "pumped_storage",
    "wind",
    "fleet_catchall",
    "pair",
    "cascade",
)
PRIOR_CLASSES = ("ccgt", "nuclear", "biomass", "interconnector", "wind", "pumped_storage")

DEFAULT_BIN_WIDTH_MW = 25.0
MIN_PMF_PERIODS = 100


@dataclass(frozen=True, eq=False)
class LossPMF:
    """Loss-size PMF on a uniform lattice of bins.

    Bins are left-closed, right-open; bin ``i`` spans
    ``[first_edge_mw + i*w, first_edge_mw + (i+1)*w)`` and is represented by
    its centre.
    """

    first_edge_mw: float
    bin_width_mw: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("PMF needs at least one bin")
        if self.bin_width_mw <= 0:
            raise ValueError("bin width must be positive")
        if np.any(w < 0):
            raise ValueError("PMF weights must be non-negative")
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise ValueError(f"PMF weights sum to {math.fsum(w)!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_centres(cls, centres: Sequence[float], weights: Sequence[float], bin_width_mw: float = DEFAULT_BIN_WIDTH_MW) -> "LossPMF":
        """Build a PMF from point masses that sit on a common lattice of ``bin_width_mw``."""
        c = np.asarray(centres, dtype=float)
        p = np.asarray(weights, dtype=float)
        lo = c.min()
        steps = (c - lo) / bin_width_mw
        idx = np.rint(steps).astype(int)
        if np.any(np.abs(steps - idx) > 1e-9):
            raise ValueError("centres are not on a common lattice")
        dense = np.zeros(idx.max() + 1)
        np.add.at(dense, idx, p)
        return cls(lo - bin_width_mw / 2.0, float(bin_width_mw), dense / math.fsum(dense))

    @property
    def n_bins(self) -> int:
        return self.weights.size

    @property
    def bin_edges_mw(self) -> np.ndarray:
        return self.first_edge_mw + self.bin_width_mw * np.arange(self.n_bins + 1)

    @property
    def centres_mw(self) -> np.ndarray:
        return self.first_edge_mw + self.bin_width_mw * (np.arange(self.n_bins) + 0.5)

    @property
    def mean_mw(self) -> float:
        return float(np.dot(self.centres_mw, self.weights))

    def support(self) -> tuple[float, float]:
        """Centres of the lowest and highest bins carrying mass."""
        nz = np.flatnonzero(self.weights)
        c = self.centres_mw
        return float(c[nz[0]]), float(c[nz[-1]])

    def as_dict(self) -> dict[float, float]:
        return {float(c): float(w) for c, w in zip(self.centres_mw, self.weights) if w > 0}


def histogram(values, weights=None, bin_width: float = DEFAULT_BIN_WIDTH_MW, max_credible_loss: float | None = None) -> LossPMF:
    """Histogram values onto the zero-anchored ``bin_width`` lattice.

    Values above ``max_credible_loss`` are clamped into the top bin, i.e. the
    highest bin whose centre does not exceed the limit. Leading and trailing
    empty bins are trimmed.
    """
    x = np.asarray(values, dtype=float)
    p = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    idx = np.floor(x / bin_width).astype(np.int64)
    if max_credible_loss is not None:
        top = int(math.floor(max_credible_loss / bin_width))
        if (top + 0.5) * bin_width > max_credible_loss:
            top -= 1
        if top < 0:
            raise ValueError("max credible loss is below the first bin centre")
        idx = np.minimum(idx, top)
    lo, hi = int(idx.min()), int(idx.max())
    dense = np.zeros(hi - lo + 1)
    np.add.at(dense, idx - lo, p)
    return LossPMF(lo * bin_width, float(bin_width), dense / math.fsum(dense))


def build_pmf(
    generation_records: Iterable[tuple[object, float]],
    max_credible_loss: float,
    bin_width: float = DEFAULT_BIN_WIDTH_MW,
    *,
    min_periods: int = MIN_PMF_PERIODS,
) -> LossPMF:
    """Empirical loss PMF from ``(timestamp, output_mw)`` settlement records.

    Only periods with positive output are kept; the result does not depend on
    record order.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if max_credible_loss <= 0:
        raise ValueError("max_credible_loss must be positive")
    out = np.array([float(mw) for _, mw in generation_records], dtype=float)
    out = out[out > 0]
    if out.size == 0:
        raise DataError("no positive-generation periods")
    if out.size < min_periods:
        raise DataError(f"only {out.size} positive-generation periods; at least {min_periods} required")
    return histogram(out, None, bin_width, max_credible_loss)


@dataclass(frozen=True)
class SourceRecord:
    source_id: str
    source_type: str
    capacity_mw: float
    max_credible_loss_mw: float
    bmu_ids: tuple[str, ...] = ()
    prior_class: str | None = None
    trip_rate_per_yr: float | None = None
    pmf: LossPMF | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.source_type not in SOURCE_TYPES:
            raise DataError(f"{self.source_id}: unknown source_type {self.source_type!r}")
        if self.max_credible_loss_mw <= 0:
            raise DataError(f"{self.source_id}: max_credible_loss_mw must be positive")
        if self.source_type not in ("pair", "cascade") and self.max_credible_loss_mw > self.capacity_mw:
            raise DataError(f"{self.source_id}: max_credible_loss_mw exceeds capacity")
        if self.prior_class is not None and self.prior_class not in PRIOR_CLASSES:
            raise DataError(f"{self.source_id}: unknown prior_class {self.prior_class!r}")
        if self.trip_rate_per_yr is not None and not self.trip_rate_per_yr > 0:
            raise DataError(f"{self.source_id}: trip rate must be positive")


CATALOGUE_COLUMNS = ("source_id", "source_type", "capacity_mw", "max_credible_loss_mw", "prior_class", "bmu_ids")


def load_catalogue(catalogue_file, registry_file=None) -> list[SourceRecord]:
    """Parse the catalogue file and merge the BMU registry into it.

    Raises :class:`DataError` on unknown types, duplicate source ids, or a BMU
    claimed by two sources.
    """
    rows = read_rows(catalogue_file, CATALOGUE_COLUMNS)
    if not rows:
        logger.warning("%s: empty catalogue", catalogue_file)
    records: dict[str, SourceRecord] = {}
    owner: dict[str, str] = {}

    def claim(bmu: str, sid: str, where) -> None:
        prev = owner.get(bmu)
        if prev is not None and prev != sid:
            raise DataError(f"{where}: BMU {bmu!r} mapped to both {prev!r} and {sid!r}")
        owner[bmu] = sid

    for lineno, row in enumerate(rows, start=2):
        sid = row["source_id"]
        if not sid:
            raise DataError(f"{catalogue_file}:{lineno}: blank source_id")
        if sid in records:
            raise DataError(f"{catalogue_file}:{lineno}: duplicate source_id {sid!r}")
        bmus = tuple(b.strip() for b in row["bmu_ids"].split(";") if b.strip())
        for b in bmus:
            claim(b, sid, catalogue_file)
        records[sid] = SourceRecord(
            source_id=sid,
            source_type=row["source_type"].lower(),
            capacity_mw=parse_float(row["capacity_mw"], catalogue_file, "capacity_mw", lineno),
            max_credible_loss_mw=parse_float(row["max_credible_loss_mw"], catalogue_file, "max_credible_loss_mw", lineno),
            bmu_ids=bmus,
            prior_class=row["prior_class"].lower() or None,
        )

    if registry_file is not None:
        extra: dict[str, list[str]] = defaultdict(list)
        for lineno, row in enumerate(read_rows(registry_file, ("bmu_id", "source_id")), start=2):
            bmu, sid = row["bmu_id"], row["source_id"]
            if sid not in records:
                raise DataError(f"{registry_file}:{lineno}: unknown source_id {sid!r}")
            claim(bmu, sid, registry_file)
            if bmu not in records[sid].bmu_ids and bmu not in extra[sid]:
                extra[sid].append(bmu)
        for sid, bmus in extra.items():
            rec = records[sid]
            records[sid] = replace(rec, bmu_ids=rec.bmu_ids + tuple(bmus))
    return list(records.values())


def bmu_registry(catalogue: Sequence[SourceRecord]) -> dict[str, str]:
    return {b: s.source_id for s in catalogue for b in s.bmu_ids}


def load_generation_records(path) -> dict[str, list[tuple[object, float]]]:
    """Per-BMU ``(timestamp, output_mw)`` lists from a generation records file."""
    out: dict[str, list[tuple[object, float]]] = defaultdict(list)
    for lineno, row in enumerate(read_rows(path, ("bmu_id", "timestamp_iso8601", "output_mw")), start=2):
        try:
            ts = parse_timestamp(row["timestamp_iso8601"])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad timestamp {row['timestamp_iso8601']!r}") from None
        out[row["bmu_id"]].append((ts, parse_float(row["output_mw"], path, "output_mw", lineno)))
    return dict(out)


def attach_pmfs(
    catalogue: Sequence[SourceRecord],
    generation: dict[str, list[tuple[object, float]]],
    bin_width: float = DEFAULT_BIN_WIDTH_MW,
    *,
    min_periods: int = MIN_PMF_PERIODS,
) -> list[SourceRecord]:
    """Sum each source's BMU output per settlement period and build its PMF.

    Negative output (interconnector export) counts as zero loss and is
    filtered out with the other non-positive periods.
    """
    result = []
    for src in catalogue:
        per_period: dict[object, float] = defaultdict(float)
        for bmu in src.bmu_ids:
            for ts, mw in generation.get(bmu, ()):
                per_period[ts] += max(mw, 0.0)
        if not per_period:
            raise DataError(f"{src.source_id}: no generation records for BMUs {list(src.bmu_ids)}")
        try:
            pmf = build_pmf(sorted(per_period.items()), src.max_credible_loss_mw, bin_width, min_periods=min_periods)
        except DataError as exc:
            raise DataError(f"{src.source_id}: {exc}") from None
        result.append(replace(src, pmf=pmf))
    return result
