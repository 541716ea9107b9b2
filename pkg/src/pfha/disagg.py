"""Decomposition of an exceedance rate into contributing cells."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .hazard import HazardResult

DIMENSIONS = ("source", "loss_size", "state", "state_bin", "epsilon", "inertia_epsilon", "size_inertia_epsilon", "size_demand")

DEFAULT_EPSILON_EDGES = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
INERTIA_BAND_GVA_S = 10.0
DEMAND_BAND_GW = 5.0


@dataclass(frozen=True)
class DisaggCell:
    keys: tuple
    fraction: float
    mean_epsilon: float
    rate_per_yr: float
    # raw contributions and total, kept so marginals re-sum exactly
    parts: tuple[float, ...] = field(default=(), repr=False, compare=False)
    total: float = field(default=math.nan, repr=False, compare=False)


def epsilon_band_labels(edges=DEFAULT_EPSILON_EDGES) -> list[str]:
    labels = [f"<{edges[0]:g}"]
    labels += [f"{a:g}-{b:g}" for a, b in zip(edges, edges[1:])]
    labels.append(f">={edges[-1]:g}")
    return labels


def epsilon_band_index(eps, edges=DEFAULT_EPSILON_EDGES):
    """Left-closed bands: index 0 is below the first edge."""
    return np.searchsorted(np.asarray(edges, dtype=float), np.asarray(eps, dtype=float), side="right")


def _band(values, width):
    return np.floor(np.asarray(values) / width) * width


def _key_columns(result: HazardResult, j: int, dimension: str, edges) -> list[np.ndarray]:
    c = result.cells
    eps_label = np.array(epsilon_band_labels(edges), dtype=object)[epsilon_band_index(c.epsilon[:, j], edges)]
    src = np.array(result.source_ids, dtype=object)[c.source_index]
    inertia = _band(c.inertia_gva_s, INERTIA_BAND_GVA_S)
    demand = _band(c.demand_gw, DEMAND_BAND_GW)
    cols = {
        "source": [src],
        "loss_size": [c.loss_mw],
        "state": [inertia],
        "state_bin": [c.state_index],
        "epsilon": [eps_label],
        "inertia_epsilon": [inertia, eps_label],
        "size_inertia_epsilon": [c.loss_mw, inertia, eps_label],
        "size_demand": [c.loss_mw, demand],
    }
    return cols[dimension]


def _py(v):
    return v.item() if hasattr(v, "item") else v


def disaggregate(result: HazardResult, threshold: float, dimension: str, *, epsilon_edges=DEFAULT_EPSILON_EDGES) -> list[DisaggCell]:
    """Group per-cell contributions at ``threshold`` by the keys of ``dimension``.

    Fractions are shares of the total; ``mean_epsilon`` is contribution-weighted.
    Cells are returned in ascending key order (epsilon bands in band order).
    """
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dimension!r}; expected one of {DIMENSIONS}")
    if result.cells is None:
        raise ValueError("hazard result carries no cell table")
    try:
        j = result.threshold_index(threshold)
    except KeyError:
        raise KeyError(f"threshold {threshold} not present in hazard result") from None
    contrib = result.cells.contributions[:, j]
    eps = result.cells.epsilon[:, j]
    total = math.fsum(contrib)
    if not total > 0:
        raise ValueError(f"zero total rate at threshold {threshold}; nothing to disaggregate")
    cols = _key_columns(result, j, dimension, epsilon_edges)
    sums: dict[tuple, list[float]] = defaultdict(list)
    eps_sums: dict[tuple, list[float]] = defaultdict(list)
    for i, key in enumerate(zip(*cols)):
        key = tuple(_py(k) for k in key)
        sums[key].append(contrib[i])
        eps_sums[key].append(contrib[i] * eps[i])
    labels = epsilon_band_labels(epsilon_edges)

    def sort_key(key):
        return tuple(labels.index(k) if isinstance(k, str) and k in labels else k for k in key)

    out = []
    for key in sorted(sums, key=sort_key):
        s = math.fsum(sums[key])
        mean_eps = math.fsum(eps_sums[key]) / s if s > 0 else math.nan
        out.append(DisaggCell(key, s / total, mean_eps, s, tuple(sums[key]), total))
    return out


def epsilon_bands(result: HazardResult, threshold: float, band_edges=DEFAULT_EPSILON_EDGES) -> list[DisaggCell]:
    return disaggregate(result, threshold, "epsilon", epsilon_edges=band_edges)


def marginalise(cells: list[DisaggCell], keep: tuple[int, ...]) -> dict[tuple, float]:
    """Fractions of multi-key cells summed over all key positions not in ``keep``.

    Re-sums the raw contributions, so the result equals a direct
    disaggregation on the kept keys bit for bit.
    """
    acc: dict[tuple, list[float]] = defaultdict(list)
    for c in cells:
        acc[tuple(c.keys[k] for k in keep)].extend(c.parts)
    total = cells[0].total if cells else math.nan
    return {k: math.fsum(v) / total for k, v in acc.items()}


def modal_cell(cells: list[DisaggCell]) -> DisaggCell:
    """Largest contributor; ties go to the first cell in key order."""
    best = cells[0]
    for c in cells[1:]:
        if c.fraction > best.fraction:
            best = c
    return best


KEY_NAMES = {
    "source": ("source_id",),
    "loss_size": ("loss_bin_mw",),
    "state": ("inertia_band_gva_s",),
    "state_bin": ("state_bin_index",),
    "epsilon": ("epsilon_band",),
    "inertia_epsilon": ("inertia_band_gva_s", "epsilon_band"),
    "size_inertia_epsilon": ("loss_bin_mw", "inertia_band_gva_s", "epsilon_band"),
    "size_demand": ("loss_bin_mw", "demand_band_gw"),
}
