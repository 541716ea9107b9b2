"""Simultaneous-pair loss sources and the RoCoF-gated cascade branch."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .catalogue import LossPMF, SourceRecord
from .errors import DataError
from .sfr import F0_HZ
from .tableio import parse_float, read_rows

DEPENDENCY_TYPES = ("independent", "common_cause", "proximity", "operator_coupled")

# severity -> (combined loss band MW, default rate, allowed rate range)
SEVERITY_CLASSES = {
    "moderate": ((1000.0, 1500.0), 0.10, (0.10, 0.25)),
    "severe": ((1500.0, 2000.0), 0.03, (0.03, 0.03)),
    "extreme": ((2000.0, math.inf), 0.01, (0.01, 0.01)),
}


@dataclass(frozen=True)
class PairSpec:
    source_id_a: str
    source_id_b: str
    dependency: str
    severity: str
    rate_per_yr: float | None = None
    pair_id: str | None = None
    override: bool = False

    def __post_init__(self):
        if self.dependency not in DEPENDENCY_TYPES:
            raise ValueError(f"unknown dependency {self.dependency!r}")
        if self.severity not in SEVERITY_CLASSES:
            raise ValueError(f"unknown severity {self.severity!r}")
        if self.rate_per_yr is not None:
            if not self.rate_per_yr > 0:
                raise ValueError("pair rate must be positive")
            lo, hi = SEVERITY_CLASSES[self.severity][2]
            if not self.override and not (lo - 1e-12 <= self.rate_per_yr <= hi + 1e-12):
                raise ValueError(
                    f"rate {self.rate_per_yr} outside the {self.severity} band [{lo}, {hi}]; set override to allow"
                )

    @property
    def rate(self) -> float:
        return self.rate_per_yr if self.rate_per_yr is not None else SEVERITY_CLASSES[self.severity][1]

    @property
    def identifier(self) -> str:
        return self.pair_id or f"{self.source_id_a}+{self.source_id_b}"


def convolve_pmfs(a: LossPMF, b: LossPMF) -> LossPMF:
    """PMF of the sum of two independent losses; bins stay centre-aligned."""
    if not math.isclose(a.bin_width_mw, b.bin_width_mw, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"bin widths differ: {a.bin_width_mw} vs {b.bin_width_mw}")
    w = a.bin_width_mw
    p = np.convolve(a.weights, b.weights)
    p = np.clip(p, 0.0, None)
    # centre_a + centre_b must be a centre of the result
    first = a.first_edge_mw + b.first_edge_mw + w / 2.0
    return LossPMF(first, w, p / math.fsum(p))


def build_pair_source(spec: PairSpec, catalogue: Sequence[SourceRecord]) -> SourceRecord:
    by_id = {s.source_id: s for s in catalogue}
    try:
        a, b = by_id[spec.source_id_a], by_id[spec.source_id_b]
    except KeyError as exc:
        raise DataError(f"pair {spec.identifier}: unknown constituent {exc.args[0]!r}") from None
    if a.pmf is None or b.pmf is None:
        raise DataError(f"pair {spec.identifier}: constituents need loss PMFs")
    mcl = a.max_credible_loss_mw + b.max_credible_loss_mw
    return SourceRecord(
        source_id=spec.identifier,
        source_type="pair",
        capacity_mw=a.capacity_mw + b.capacity_mw,
        max_credible_loss_mw=mcl,
        trip_rate_per_yr=spec.rate,
        pmf=convolve_pmfs(a.pmf, b.pmf),
    )


PAIR_COLUMNS = ("pair_id", "source_a", "source_b", "dependency", "severity")


def load_pairs(path) -> list[PairSpec]:
    out = []
    for lineno, row in enumerate(read_rows(path, PAIR_COLUMNS, ("rate_per_yr", "override")), start=2):
        rate = parse_float(row["rate_per_yr"], path, "rate_per_yr", lineno) if row["rate_per_yr"] else None
        try:
            out.append(
                PairSpec(
                    source_id_a=row["source_a"],
                    source_id_b=row["source_b"],
                    dependency=row["dependency"].lower(),
                    severity=row["severity"].lower(),
                    rate_per_yr=rate,
                    pair_id=row["pair_id"] or None,
                    override=row["override"].strip().lower() in ("1", "true", "yes"),
                )
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    ids = [p.identifier for p in out]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate pair ids")
    return out


@dataclass(frozen=True)
class CascadeSpec:
    rocof_threshold_hz_per_s: float = 0.125
    p_cond: float = 0.3
    der_loss_mw: float = 350.0
    f0: float = F0_HZ

    def __post_init__(self):
        if not 0.0 <= self.p_cond <= 1.0:
            raise ValueError("p_cond must be in [0, 1]")
        if self.der_loss_mw < 0:
            raise ValueError("der_loss_mw must be >= 0")
        if not self.rocof_threshold_hz_per_s > 0:
            raise ValueError("RoCoF threshold must be positive")


def cascade_gate(loss_mw, inertia_gva_s, spec: CascadeSpec):
    """True where the initial RoCoF reaches the threshold (inclusive).

    The comparison is done as loss * f0 >= threshold * 2H * 1000 so that the
    boundary case (750 MW at 150 GVA.s) is exact in floating point.
    """
    return np.asarray(loss_mw) * spec.f0 >= spec.rocof_threshold_hz_per_s * 2.0 * np.asarray(inertia_gva_s) * 1000.0


def cascade_adjusted_terms(loss_mw: float, inertia_gva_s: float, spec: CascadeSpec) -> list[tuple[float, float]]:
    """``(effective_loss, weight)`` branches for one loss; weights sum to one."""
    if not bool(cascade_gate(loss_mw, inertia_gva_s, spec)) or spec.p_cond == 0.0:
        return [(float(loss_mw), 1.0)]
    return [(float(loss_mw), 1.0 - spec.p_cond), (float(loss_mw) + spec.der_loss_mw, spec.p_cond)]

