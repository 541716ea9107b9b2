import math

import numpy as np
import pytest

from pfha.disagg import (
    DIMENSIONS,
    disaggregate,
    epsilon_band_index,
    epsilon_band_labels,
    epsilon_bands,
    marginalise,
    modal_cell,
)
from pfha.hazard import FrpeSelection, HazardInputs, compute_hazard

from .conftest import make_bins, make_source


def _result(thr=(0.5, 0.8, 1.2)):
    bins = make_bins([90.0, 130.0, 180.0, 260.0], [18.0, 24.0, 30.0, 40.0], [700.0, 1100.0, 1600.0, 2500.0])
    src = [make_source("A", [900.0, 1300.0], [0.5, 0.5], 2.0), make_source("B", [500.0, 700.0, 1100.0], [0.3, 0.3, 0.4], 4.0)]
    return compute_hazard(HazardInputs(src, bins, FrpeSelection("sfr"), thr))


def test_single_source_is_whole():
    bins = make_bins([150.0, 250.0], [25.0, 35.0], [1000.0, 2000.0])
    res = compute_hazard(HazardInputs([make_source("ONLY", [1000.0], [1.0], 1.0)], bins, FrpeSelection(), (0.5,)))
    (cell,) = disaggregate(res, 0.5, "source")
    assert cell.keys == ("ONLY",) and cell.fraction == 1.0


@pytest.mark.parametrize("dim", DIMENSIONS)
def test_partitions_sum_to_one(dim):
    res = _result()
    for thr in (0.5, 0.8, 1.2):
        cells = disaggregate(res, thr, dim)
        assert math.fsum(c.fraction for c in cells) == pytest.approx(1.0, abs=1e-9)
        assert all(c.fraction >= 0 for c in cells)
        assert math.fsum(c.rate_per_yr for c in cells) == pytest.approx(res.rate_at(thr), rel=1e-12)


def test_marginals_exact():
    res = _result()
    cube = disaggregate(res, 0.8, "size_inertia_epsilon")
    for keep, dim in [((0,), "loss_size"), ((1,), "state"), ((2,), "epsilon"), ((1, 2), "inertia_epsilon")]:
        direct = {c.keys: c.fraction for c in disaggregate(res, 0.8, dim)}
        assert marginalise(cube, keep) == direct


def test_errors():
    res = _result()
    with pytest.raises(KeyError):
        disaggregate(res, 0.6, "source")
    with pytest.raises(ValueError):
        disaggregate(res, 0.8, "colour")
    bins = make_bins([200.0], [30.0], [1000.0])
    empty = compute_hazard(HazardInputs([], bins, FrpeSelection(), (0.8,)))
    with pytest.raises(ValueError, match="zero total"):
        disaggregate(empty, 0.8, "source")


def test_low_inertia_dominates_when_engineered():
    # 70% of state weight sits below 140 GVA.s
    h = [85.0, 100.0, 115.0, 125.0, 135.0, 138.0, 139.0, 200.0, 260.0, 320.0]
    bins = make_bins(h, [25.0] * 10, [1200.0] * 10)
    src = [make_source("A", [800.0, 1000.0, 1200.0], [0.3, 0.4, 0.3], 2.0)]
    res = compute_hazard(HazardInputs(src, bins, FrpeSelection("sfr"), (0.8,)))
    cells = disaggregate(res, 0.8, "state")
    low = math.fsum(c.fraction for c in cells if c.keys[0] < 140.0)
    assert low > 0.5


def test_epsilon_hand_binned_oracle():
    # three cells with hand-set median and sigma at threshold 1.0
    mus = {500.0: 1.0, 700.0: 0.5, 900.0: 2.0}
    src = [make_source("A", list(mus), [1 / 3] * 3, 1.0)]
    bins = make_bins([200.0], [30.0], [1000.0])

    def median_fn(loss, *_):
        return np.array([mus[float(v)] for v in np.ravel(loss)])

    frpe = FrpeSelection("custom", median_fn=median_fn, sigma_fn=lambda l, h: np.full(np.shape(l), 0.5))
    res = compute_hazard(HazardInputs(src, bins, frpe, (1.0,)))
    cells = {c.keys[0]: c for c in epsilon_bands(res, 1.0)}
    # eps* = ln(1/mu)/0.5: 0 -> "0-0.5", 1.386 -> "1-1.5", -1.386 -> "<0"
    phi = lambda z: 0.5 * math.erfc(-z / math.sqrt(2))
    parts = {"0-0.5": phi(0.0), "1-1.5": phi(-math.log(2) / 0.5), "<0": phi(math.log(2) / 0.5)}
    total = math.fsum(parts.values())
    assert set(cells) == set(parts)
    for k, v in parts.items():
        assert cells[k].fraction == pytest.approx(v / total, rel=1e-12)
    assert cells["0-0.5"].mean_epsilon == 0.0


def test_band_edges():
    assert epsilon_band_labels() == ["<0", "0-0.5", "0.5-1", "1-1.5", "1.5-2", "2-2.5", ">=2.5"]
    idx = epsilon_band_index([-0.1, 0.0, 0.5, 2.49, 2.5, 9.0])
    assert idx.tolist() == [0, 1, 2, 5, 6, 6]


def test_far_above_median_goes_negative():
    src = [make_source("A", [1000.0], [1.0], 1.0)]
    bins = make_bins([200.0], [30.0], [1000.0])
    frpe = FrpeSelection("custom", median_fn=lambda l, *_: np.full(np.shape(l), 5.0), sigma_fn=lambda l, h: np.full(np.shape(l), 0.3))
    res = compute_hazard(HazardInputs(src, bins, frpe, (0.5,)))
    (cell,) = epsilon_bands(res, 0.5)
    assert cell.keys == ("<0",) and cell.mean_epsilon < 0


def test_modal_cell_deterministic():
    res = _result()
    cells = disaggregate(res, 0.8, "size_inertia_epsilon")
    m = modal_cell(cells)
    assert m.fraction == max(c.fraction for c in cells)
    assert modal_cell(list(cells)) == m
