"""Deterministic synthetic dataset for desk-scale end-to-end runs.

Everything here is invented: twelve sources, a correlated (H, D, R) state
history, Poisson incidents with simulator-derived nadirs, and thirty pair
specs. Same seed, same bytes.
"""

from __future__ import annotations

from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .physics import SimConfig, simulate_nadirs
from .rates import DEFAULT_PRIORS
from .tableio import fmt, write_table

T0 = datetime(2021, 1, 1)
OBS_YEARS = 4
N_STATES = 5000
N_GEN_PERIODS = 2000
HALF_HOUR = timedelta(minutes=30)

# source_id, type, capacity, max credible loss, prior class, bmus in catalogue, bmus in registry, synthetic true rate
SOURCES = (
    ("CCGT_PEMB", "ccgt", 1000.0, 1000.0, "ccgt", ("PEMB-1", "PEMB-2"), ("PEMB-3",), 2.0),
    ("CCGT_WBUR", "ccgt", 870.0, 870.0, "ccgt", ("WBUR-1",), ("WBUR-2",), 2.0),
    ("CCGT_SHBA", "ccgt", 760.0, 760.0, "ccgt", ("SHBA-1",), (), 1.5),
    ("IFA_BP1", "interconnector", 1000.0, 1000.0, "interconnector", ("IFA-BP1",), (), 2.0),
    ("IFA_BP2", "interconnector", 1000.0, 1000.0, "interconnector", ("IFA-BP2",), (), 2.0),
    ("NUC_SZB", "nuclear", 1250.0, 1198.0, "nuclear", ("SZB-1",), (), 0.8),
    ("BIO_DRAX", "biomass", 660.0, 645.0, "biomass", ("DRAX-1",), (), 0.7),
    ("PS_DINO", "pumped_storage", 1728.0, 300.0, "pumped_storage", ("DINO-1",), (), 0.4),
    ("WIND_HORN", "wind", 1218.0, 1000.0, "wind", ("HORN-1",), ("HORN-2",), 0.4),
    ("WIND_EAAN", "wind", 714.0, 714.0, "wind", ("EAAN-1",), (), 0.4),
    ("FLEET_CCGT", "fleet_catchall", 600.0, 500.0, "ccgt", ("FLT-C1",), (), 1.0),
    ("FLEET_OTHER", "fleet_catchall", 400.0, 300.0, "biomass", ("FLT-O1",), (), 0.5),
)

UNMATCHED_SOURCE = "FLEET_CCGT"


def _ts(t: datetime) -> str:
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _states(rng: np.random.Generator):
    z1 = rng.standard_normal(N_STATES)
    z2 = rng.standard_normal(N_STATES)
    h = np.clip(190.0 + 45.0 * z1, 90.0, 340.0)
    d = np.clip(28.0 + 6.0 * (0.6 * z1 + 0.8 * z2), 16.0, 44.0)
    r = np.clip(1400.0 - 150.0 * z1 + 350.0 * rng.standard_normal(N_STATES), 550.0, 2900.0)
    dc = np.clip(1000.0 + 80.0 * rng.standard_normal(N_STATES), 700.0, 1200.0)
    return h, d, r, dc


def _unit_output(rng: np.random.Generator, kind: str, cap: float, n: int) -> np.ndarray:
    if kind == "interconnector":
        on = rng.random(n) < 0.85
        return np.where(on, cap * rng.uniform(0.6, 1.0, n), -cap * rng.uniform(0.2, 1.0, n))
    if kind == "wind":
        return cap * rng.beta(1.6, 2.2, n)
    if kind == "nuclear":
        return np.where(rng.random(n) < 0.9, cap * rng.uniform(0.92, 1.0, n), 0.0)
    if kind == "pumped_storage":
        return np.where(rng.random(n) < 0.35, cap * rng.uniform(0.2, 1.0, n), 0.0)
    on = rng.random(n) < 0.75
    return np.where(on, cap * rng.uniform(0.45, 1.0, n), 0.0)


def generate(out_dir, seed: int = 7) -> dict[str, Path]:
    """Write the dataset and a matching ``config.yaml``; returns file paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    files = {k: out / f"{k}.csv" for k in ("catalogue", "registry", "generation", "incidents", "states", "pairs", "priors")}

    write_table(
        files["catalogue"],
        ("source_id", "source_type", "capacity_mw", "max_credible_loss_mw", "prior_class", "bmu_ids"),
        [(s[0], s[1], s[2], s[3], s[4], ";".join(s[5])) for s in SOURCES],
        provenance=f"synthetic seed={seed}",
    )
    write_table(
        files["registry"],
        ("bmu_id", "source_id"),
        [(b, s[0]) for s in SOURCES for b in s[5] + s[6]],
        provenance=f"synthetic seed={seed}",
    )

    gen_rows = []
    gen_t0 = T0 + timedelta(days=365)
    for sid, kind, cap, mcl, _, bmus, extra, _ in SOURCES:
        units = bmus + extra
        per_unit = cap / len(units)
        for b in units:
            mw = _unit_output(rng, kind, per_unit, N_GEN_PERIODS)
            for k in range(N_GEN_PERIODS):
                gen_rows.append((b, _ts(gen_t0 + k * HALF_HOUR), round(float(mw[k]), 3)))
    write_table(files["generation"], ("bmu_id", "timestamp_iso8601", "output_mw"), gen_rows, provenance=f"synthetic seed={seed}")

    h, d, r, dc = _states(rng)
    st_t0 = T0 + timedelta(days=400)
    write_table(
        files["states"],
        ("timestamp_iso8601", "inertia_gva_s", "demand_gw", "response_mw", "dc_contracted_mw"),
        [(_ts(st_t0 + k * HALF_HOUR), round(float(h[k]), 3), round(float(d[k]), 4), round(float(r[k]), 2), round(float(dc[k]), 2)) for k in range(N_STATES)],
        provenance=f"synthetic seed={seed}",
    )

    span_s = OBS_YEARS * 365.25 * 86400.0
    inc = []
    for sid, kind, cap, mcl, _, _, _, rate in SOURCES:
        n = int(rng.poisson(rate * OBS_YEARS))
        for u in np.sort(rng.uniform(0.0, span_s, n)):
            loss = float(np.clip(mcl * rng.uniform(0.4, 1.0), 100.0, mcl))
            k = int(rng.integers(N_STATES))
            label = "" if rng.random() < 0.1 else sid
            inc.append([T0 + timedelta(seconds=round(float(u))), label, loss, h[k], d[k], r[k], 0.85 * dc[k]])
    inc.sort(key=lambda row: (row[0], row[1]))
    arr = np.array([row[2:] for row in inc], dtype=float).reshape(-1, 5)
    nadir = simulate_nadirs(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], SimConfig()).nadir_hz if len(inc) else np.zeros(0)
    nadir = nadir * np.exp(rng.normal(0.0, 0.1, len(inc)))
    rows = []
    for row, nd in zip(inc, nadir):
        t, sid, loss, hh, dd, rr, dcv = row
        rows.append((_ts(t), sid, round(loss * 50.0 / (2.0 * hh * 1000.0), 6), round(hh, 3), round(float(nd), 5),
                     round(loss, 2), round(dd, 4), round(rr, 2), round(dcv, 2)))
    write_table(
        files["incidents"],
        ("timestamp_iso8601", "source_id", "rocof_hz_per_s", "inertia_gva_s", "nadir_deviation_hz", "actual_mw", "demand_gw", "response_mw", "dc_mw"),
        rows,
        provenance=f"synthetic seed={seed}",
    )

    write_table(files["pairs"], ("pair_id", "source_a", "source_b", "dependency", "severity", "rate_per_yr", "override"),
                _pairs(rng), provenance=f"synthetic seed={seed}; representative, not a recorded list")
    write_table(files["priors"], ("prior_class", "alpha", "beta"),
                [(c, p.alpha, p.beta) for c, p in DEFAULT_PRIORS.items()], provenance="default priors")

    end = T0 + timedelta(seconds=span_s)
    split = T0 + timedelta(seconds=0.75 * span_s)
    cfg = out / "config.yaml"
    cfg.write_text(
        f"""# synthetic scenario, seed {seed}
seed: {seed}
threads: 1
data:
  catalogue: catalogue.csv
  registry: registry.csv
  generation: generation.csv
  incidents: incidents.csv
  states: states.csv
  pairs: pairs.csv
  priors: priors.csv
observation:
  start: "{_ts(T0)}"
  end: "{_ts(end)}"
  split: "{_ts(split)}"
  unmatched_source: {UNMATCHED_SOURCE}
pmf:
  bin_width_mw: 25
  min_periods: 100
states:
  n_bins: 50
thresholds:
  summary: [0.5, 0.8, 1.2]
  curve: {{start: 0.05, stop: 2.2, step: 0.05}}
physics:
  cache_dir: cache
  boundary_fill: nearest
controls:
  mode: both
  dc: {{contracted_mw: 1000}}
  lfdd: {{stage_credit: 0.5}}
cascade:
  enabled: false
  p_cond: 0.3
  der_loss_mw: 350
logic_tree:
  compound_multiplier: 1.0
"""
    )
    files["config"] = cfg
    return files


def _pairs(rng: np.random.Generator) -> list[tuple]:
    """Thirty pairs: the interconnector bipoles as a common-cause pair, then a mix ranked by combined loss."""
    big = [s for s in SOURCES if s[1] != "fleet_catchall"]
    rows = [("P01", "IFA_BP1", "IFA_BP2", "common_cause", "moderate", fmt(0.25), "")]
    combos = []
    for i in range(len(big)):
        for j in range(i + 1, len(big)):
            a, b = big[i], big[j]
            if {a[0], b[0]} == {"IFA_BP1", "IFA_BP2"}:
                continue
            combos.append((a[3] + b[3], a[0], b[0], a[1] == b[1]))
    combos.sort(key=lambda c: (-c[0], c[1], c[2]))
    n_extreme = 0
    for total, a, b, same in combos:
        if len(rows) == 30:
            break
        if total > 2000.0:
            if n_extreme == 5:
                continue
            n_extreme += 1
            sev, dep = "extreme", "independent"
        elif total > 1500.0:
            sev, dep = "severe", "proximity" if same else "independent"
        else:
            sev, dep = "moderate", "operator_coupled" if same else "independent"
        rate = "" if sev != "moderate" else fmt(round(float(rng.uniform(0.10, 0.25)), 3))
        rows.append((f"P{len(rows) + 1:02d}", a, b, dep, sev, rate, ""))
    return rows
