"""Weighted logic tree over model and parameter choices, fractiles and tornado sensitivity."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .hazard import FrpeSelection, HazardInputs, compute_hazard

BRANCH_NAMES = ("frpe_kind", "sigma0", "bias", "occurrence", "dc_effectiveness", "lfdd_effectiveness")

DEFAULT_BRANCHES: dict[str, tuple[tuple[object, float], ...]] = {
    "frpe_kind": (("sfr", 0.40), ("physics", 0.60)),
    "sigma0": ((0.20, 0.25), (0.296, 0.50), (0.40, 0.25)),
    "bias": ((0.30, 0.30), (0.37, 0.40), (0.50, 0.30)),
    "occurrence": (("poisson", 0.70), ("compound", 0.30)),
    "dc_effectiveness": ((0.70, 0.25), (0.85, 0.50), (0.95, 0.25)),
    "lfdd_effectiveness": ((0.70, 0.25), (0.85, 0.50), (0.95, 0.25)),
}


@dataclass(frozen=True)
class LogicTreePath:
    index: int
    frpe_kind: str
    sigma0: float
    bias: float
    occurrence: str
    dc_effectiveness: float
    lfdd_effectiveness: float
    weight: float

    def values(self) -> tuple:
        return tuple(getattr(self, n) for n in BRANCH_NAMES)

    def descriptor(self) -> str:
        return "/".join(f"{n}={v}" for n, v in zip(BRANCH_NAMES, self.values()))


def _check_branches(branches: Mapping[str, Sequence[tuple[object, float]]]) -> None:
    missing = set(BRANCH_NAMES) - set(branches)
    if missing:
        raise ValueError(f"logic tree lacks branches {sorted(missing)}")
    for name in BRANCH_NAMES:
        opts = branches[name]
        if not opts:
            raise ValueError(f"branch {name} has no options")
        ws = [w for _, w in opts]
        if any(w < 0 for w in ws) or abs(math.fsum(ws) - 1.0) > 1e-9:
            raise ValueError(f"branch {name} weights must be non-negative and sum to 1")


def enumerate_paths(branches: Mapping[str, Sequence[tuple[object, float]]] = DEFAULT_BRANCHES) -> list[LogicTreePath]:
    """Full Cartesian product of the branch options in a fixed order."""
    _check_branches(branches)
    paths = []
    for k, combo in enumerate(itertools.product(*(branches[n] for n in BRANCH_NAMES))):
        vals = [v for v, _ in combo]
        paths.append(LogicTreePath(k, *vals, weight=math.prod(w for _, w in combo)))
    return paths


def central_path(branches: Mapping[str, Sequence[tuple[object, float]]] = DEFAULT_BRANCHES) -> LogicTreePath:
    """Highest-weight option on every branch (first listed wins a tie)."""
    _check_branches(branches)
    picks = [max(branches[n], key=lambda o: o[1]) for n in BRANCH_NAMES]
    return LogicTreePath(-1, *(v for v, _ in picks), weight=math.prod(w for _, w in picks))


def _effective_key(path: LogicTreePath, base: HazardInputs, compound_multiplier: float) -> tuple:
    """Parameters that actually change the hazard; equal keys give equal rates."""
    return (
        path.frpe_kind,
        path.sigma0,
        path.bias if path.frpe_kind == "sfr" else None,
        compound_multiplier if path.occurrence == "compound" else 1.0,
        path.dc_effectiveness if base.dc is not None else None,
        path.lfdd_effectiveness if base.lfdd is not None and base.lfdd.enabled else None,
    )


def path_inputs(path: LogicTreePath, base: HazardInputs, compound_multiplier: float = 1.0) -> HazardInputs:
    frpe = FrpeSelection(
        kind=path.frpe_kind,
        sigma0=path.sigma0,
        sfr=replace(base.frpe.sfr, bias=path.bias),
        grid=base.frpe.grid,
        median_fn=base.frpe.median_fn,
        sigma_fn=base.frpe.sigma_fn,
    )
    return replace(
        base,
        frpe=frpe,
        dc=replace(base.dc, effectiveness=path.dc_effectiveness) if base.dc is not None else None,
        lfdd=replace(base.lfdd, relay_effectiveness=path.lfdd_effectiveness) if base.lfdd is not None else None,
        pair_rate_multiplier=compound_multiplier if path.occurrence == "compound" else 1.0,
        keep_cells=False,
    )


def weighted_percentile(values, weights, p: float) -> float:
    """Smallest value whose cumulative sorted weight reaches ``p`` (step convention)."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    order = np.lexsort((w, v))
    total = math.fsum(w)
    cum = 0.0
    for i in order:
        cum += w[i]
        if cum / total >= p - 1e-12:
            return float(v[i])
    return float(v[order[-1]])


@dataclass
class FractileSummary:
    thresholds: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    p05: np.ndarray
    p95: np.ndarray
    rates: np.ndarray  # (n_paths, n_thresholds)
    weights: np.ndarray

    @classmethod
    def from_rates(cls, thresholds, rates, weights) -> "FractileSummary":
        rates = np.asarray(rates, dtype=float)
        weights = np.asarray(weights, dtype=float)
        total = math.fsum(weights)
        cols = range(rates.shape[1])
        mean = np.array([math.fsum(weights * rates[:, j]) / total for j in cols])
        pct = {p: np.array([weighted_percentile(rates[:, j], weights, p) for j in cols]) for p in (0.05, 0.5, 0.95)}
        return cls(np.asarray(thresholds, dtype=float), mean, pct[0.5], pct[0.05], pct[0.95], rates, weights)


@dataclass
class TreeEvaluation:
    paths: list[LogicTreePath]
    summary: FractileSummary
    n_evaluations: int


def evaluate_tree(
    paths: Sequence[LogicTreePath],
    base: HazardInputs,
    *,
    compound_multiplier: float = 1.0,
    threads: int = 1,
) -> TreeEvaluation:
    """Hazard rates per path, sharing one evaluation between paths with equal effective parameters."""
    if not paths:
        raise ValueError("no logic-tree paths")
    ordered = sorted(paths, key=lambda p: p.index)
    keys = [_effective_key(p, base, compound_multiplier) for p in ordered]
    todo: dict[tuple, LogicTreePath] = {}
    for k, p in zip(keys, ordered):
        todo.setdefault(k, p)

    def run(item):
        key, p = item
        try:
            return key, compute_hazard(path_inputs(p, base, compound_multiplier)).rates
        except Exception as exc:
            raise type(exc)(f"path {p.index} ({p.descriptor()}): {exc}") from exc

    items = list(todo.items())
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = dict(pool.map(run, items))
    else:
        done = dict(map(run, items))
    rates = np.array([done[k] for k in keys])
    summary = FractileSummary.from_rates(base.thresholds, rates, [p.weight for p in ordered])
    return TreeEvaluation(ordered, summary, len(items))


@dataclass(frozen=True)
class TornadoBar:
    branch: str
    low_rate: float
    high_rate: float
    swing: float
    rates: tuple[tuple[object, float], ...]


def tornado(
    base: HazardInputs,
    threshold: float,
    branches: Mapping[str, Sequence[tuple[object, float]]] = DEFAULT_BRANCHES,
    *,
    compound_multiplier: float = 1.0,
) -> list[TornadoBar]:
    """One-at-a-time sensitivity about the central path; bars sorted by swing, largest first."""
    centre = central_path(branches)
    inputs = replace(base, thresholds=(float(threshold),))
    cache: dict[tuple, float] = {}
    bars = []
    for name in BRANCH_NAMES:
        rates = []
        for value, _ in branches[name]:
            p = replace(centre, **{name: value})
            key = _effective_key(p, inputs, compound_multiplier)
            if key not in cache:
                cache[key] = float(compute_hazard(path_inputs(p, inputs, compound_multiplier)).rates[0])
            rates.append((value, cache[key]))
        vals = [r for _, r in rates]
        lo, hi = min(vals), max(vals)
        if hi == lo:
            swing = 1.0
        elif lo == 0.0:
            swing = math.inf
        else:
            swing = hi / lo
        bars.append(TornadoBar(name, lo, hi, swing, tuple(rates)))
    order = sorted(range(len(bars)), key=lambda i: (-bars[i].swing, i))
    return [bars[i] for i in order]
