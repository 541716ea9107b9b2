from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest

from pfha.catalogue import LossPMF, SourceRecord
from pfha.cli import main
from pfha.controls import AUDIT
from pfha.config import load_config
from pfha.physics import build_grid
from pfha.pipeline import build_model
from pfha.state import StateBin
from pfha.synth import generate


@pytest.fixture(scope="session")
def default_grid():
    return build_grid()


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synthetic")
    generate(d, seed=7)
    return d


@pytest.fixture(scope="session")
def synthetic_config(synthetic_dir):
    return load_config(synthetic_dir / "config.yaml")


@pytest.fixture(scope="session")
def synthetic_model(synthetic_config):
    return build_model(synthetic_config)


@dataclass
class CliRun:
    data_dir: Path
    out_dir: Path
    seconds: float
    routing_calls: int
    double_counts: int
    exit_code: int


def synth_and_compute(root: Path, seed: int = 7) -> CliRun:
    """``pfha synth`` then a full ``pfha compute``, with the DC routing audit reset first."""
    data = root / "data"
    out = root / "results"
    assert main(["synth", "--out", str(data), "--seed", str(seed)]) == 0
    AUDIT.reset()
    t0 = time.perf_counter()
    code = main(["compute", "--config", str(data / "config.yaml"), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    return CliRun(data, out, elapsed, AUDIT.calls, AUDIT.double_counts, code)


@pytest.fixture(scope="session")
def compute_run(tmp_path_factory):
    return synth_and_compute(tmp_path_factory.mktemp("run_a"))


def read_table(path, provenance: str = "# pfha ") -> list[dict]:
    """CSV rows after checking the leading comment line."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith(provenance), lines[0]
    return list(csv.DictReader(lines[1:]))


def make_bins(h, d, r, dc=None, weights=None) -> list[StateBin]:
    n = len(h)
    dc = [0.0] * n if dc is None else dc
    w = [1.0 / n] * n if weights is None else weights
    return [StateBin(k, w[k], h[k], d[k], r[k], dc[k], 1) for k in range(n)]


def make_source(sid, centres, weights, rate, width=25.0, kind="ccgt") -> SourceRecord:
    pmf = LossPMF.from_centres(centres, weights, width)
    top = float(max(centres)) + width
    return SourceRecord(sid, kind, top, top, trip_rate_per_yr=rate, pmf=pmf)


def random_pmf(rng: np.random.Generator, max_bins: int = 12, width: float = 25.0) -> LossPMF:
    n = int(rng.integers(1, max_bins + 1))
    w = rng.random(n)
    if rng.random() < 0.3:
        w[rng.integers(n)] = 0.0
    if w.sum() == 0:
        w[0] = 1.0
    start = int(rng.integers(0, 60))
    return LossPMF(start * width, width, w / w.sum())


def half_hourly(n: int, t0: datetime = datetime(2022, 1, 1)) -> list[datetime]:
    return [t0 + k * timedelta(minutes=30) for k in range(n)]


def cap_oracle(mu, loss, demand_gw, d_eff, cfg):
    """Scalar stage walk written independently of the vectorised version."""
    if mu < cfg.stages[0][0] or cfg.relay_effectiveness == 0.0:
        return mu
    shed = 0.0
    cand = mu
    for s, (dev, frac) in enumerate(cfg.stages):
        shed += cfg.relay_effectiveness * frac * demand_gw * 1000.0
        cand = dev + max(0.0, loss - shed - d_eff * dev) / d_eff
        nxt = cfg.stages[s + 1][0] if s + 1 < len(cfg.stages) else float("inf")
        if cand <= nxt:
            break
    return min(mu, cand)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, label: str, ok: bool, detail: str = "") -> None:
    """Log one PASS/FAIL line for the acceptance summary, then fail the test if needed."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {label}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
