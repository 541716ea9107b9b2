"""Empirical system-state distribution as equal-count severity bins."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from .errors import DataError
from .tableio import parse_float, parse_timestamp, read_rows

DEFAULT_METRIC_WEIGHTS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class StateRecord:
    timestamp: datetime
    inertia_gva_s: float
    demand_gw: float
    response_mw: float
    dc_contracted_mw: float = 0.0

    def __post_init__(self):
        if not 0 < self.inertia_gva_s < 1000:
            raise ValueError(f"inertia {self.inertia_gva_s} outside (0, 1000) GVA.s")
        if not 0 < self.demand_gw < 100:
            raise ValueError(f"demand {self.demand_gw} outside (0, 100) GW")
        if self.response_mw < 0 or self.dc_contracted_mw < 0:
            raise ValueError("response and DC holdings must be non-negative")


@dataclass(frozen=True)
class StateBin:
    bin_index: int
    weight: float
    mean_inertia_gva_s: float
    mean_demand_gw: float
    mean_response_mw: float
    mean_dc_mw: float
    record_count: int


@dataclass(frozen=True)
class Normalisation:
    """Per-variable mean and standard deviation for (H, D, R)."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    @classmethod
    def from_records(cls, records: Sequence[StateRecord]) -> "Normalisation":
        x = _hdr(records)
        return cls(tuple(x.mean(axis=0)), tuple(x.std(axis=0)))


def _hdr(records: Sequence[StateRecord]) -> np.ndarray:
    return np.array([(r.inertia_gva_s, r.demand_gw, r.response_mw) for r in records], dtype=float).reshape(-1, 3)


def composite_metric(record: StateRecord, weights=DEFAULT_METRIC_WEIGHTS, normalisation: Normalisation | None = None) -> float:
    """Severity score: weighted negative z-scores of H, D and R.

    Higher means more severe (lower inertia, demand and response).
    """
    if normalisation is None:
        raise ValueError("normalisation is required")
    return float(_scores(_hdr([record]), weights, normalisation)[0])


def _scores(x: np.ndarray, weights, norm: Normalisation) -> np.ndarray:
    std = np.asarray(norm.std, dtype=float)
    if np.any(~(std > 0)):
        raise ValueError("degenerate standard deviation in state normalisation")
    z = (x - np.asarray(norm.mean)) / std
    return -(z @ np.asarray(weights, dtype=float))


def quantile_bin(records: Sequence[StateRecord], n_bins: int = 50, metric_weights=DEFAULT_METRIC_WEIGHTS) -> list[StateBin]:
    """Partition records into ``n_bins`` equal-count bins ordered by severity.

    Bin 0 holds the most severe records. When every record shares a variable's
    value (zero spread) that variable drops out of the metric. Ties are broken
    by timestamp.
    """
    n = len(records)
    if n == 0:
        raise ValueError("no state records")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if n_bins > n:
        raise ValueError(f"n_bins={n_bins} exceeds record count {n}")
    x = _hdr(records)
    mean, std = x.mean(axis=0), x.std(axis=0)
    w = np.asarray(metric_weights, dtype=float) * (std > 0)
    safe = np.where(std > 0, std, 1.0)
    score = -(((x - mean) / safe) @ w)
    order_ts = np.array(sorted(range(n), key=lambda i: records[i].timestamp), dtype=np.int64)
    order = order_ts[np.argsort(-score[order_ts], kind="stable")]

    dc = np.array([r.dc_contracted_mw for r in records], dtype=float)
    q, r = divmod(n, n_bins)
    bins = []
    start = 0
    for k in range(n_bins):
        size = q + (1 if k < r else 0)
        idx = order[start:start + size]
        start += size
        bins.append(
            StateBin(
                bin_index=k,
                weight=size / n,
                mean_inertia_gva_s=math.fsum(x[idx, 0]) / size,
                mean_demand_gw=math.fsum(x[idx, 1]) / size,
                mean_response_mw=math.fsum(x[idx, 2]) / size,
                mean_dc_mw=math.fsum(dc[idx]) / size,
                record_count=size,
            )
        )
    return bins


STATE_COLUMNS = ("timestamp_iso8601", "inertia_gva_s", "demand_gw", "response_mw")


def load_states(path) -> list[StateRecord]:
    rows = read_rows(path, STATE_COLUMNS, ("dc_contracted_mw",))
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            ts = parse_timestamp(row["timestamp_iso8601"])
            out.append(
                StateRecord(
                    ts,
                    parse_float(row["inertia_gva_s"], path, "inertia_gva_s", lineno),
                    parse_float(row["demand_gw"], path, "demand_gw", lineno),
                    parse_float(row["response_mw"], path, "response_mw", lineno),
                    parse_float(row["dc_contracted_mw"], path, "dc_contracted_mw", lineno) if row["dc_contracted_mw"] else 0.0,
                )
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if not out:
        raise DataError(f"{path}: no state records")
    return out
