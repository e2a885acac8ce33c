import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aiswh.errors import DomainError, ValidationError
from aiswh.grid import CellKey, Domain
from aiswh.partition import (CountGrid, DivisionSet, SpatialDivision, balance, build_kdtree, build_quadtree,
                             read_divisions, write_divisions)

import oracles


def grid_of(counts, origin=(0.0, 0.0)):
    return CountGrid(origin, np.asarray(counts))


def rects(divs):
    return [d.rect for d in divs]


def skewed_counts(rng, w=40, h=40, hot_share=0.8, hot_area=0.1):
    """Counts with ``hot_share`` of the mass on ``hot_area`` of the cells (lane-like band)."""
    counts = rng.poisson(3, size=(h, w)).astype(np.int64)
    n_hot = int(hot_area * w * h)
    # a diagonal band of hot cells
    idx = np.argsort(np.abs(np.subtract.outer(np.arange(h), np.arange(w) * h / w)).ravel(), kind="stable")[:n_hot]
    cold = counts.sum() - counts.ravel()[idx].sum()
    hot_total = int(cold * hot_share / (1 - hot_share))
    counts.ravel()[idx] = rng.multinomial(hot_total, np.full(n_hot, 1 / n_hot))
    return counts


# -- quad-tree ---------------------------------------------------------------------

def test_quad_uniform_budget_4():
    divs = build_quadtree(grid_of(np.ones((4, 4))), 4)
    assert len(divs) == 4
    assert {d.count for d in divs} == {4}
    assert {(d.width, d.height) for d in divs} == {(10_000.0, 10_000.0)}


def test_quad_budget_1_is_root():
    divs = build_quadtree(grid_of(np.ones((3, 5))), 1)
    assert rects(divs) == [(0.0, 0.0, 40_000.0, 40_000.0)]


def test_quad_corner_mass_descends_into_corner():
    counts = np.zeros((8, 8), dtype=int)
    counts[0, 0] = 100
    divs = build_quadtree(grid_of(counts), 16)
    cells = {tuple(int(v // 5000) for v in d.rect) for d in divs}
    assert cells == oracles.reference_quadtree(counts, 16)
    assert (0, 0, 1, 1) in cells  # chain reached the corner cell
    assert len(divs) == 10  # three splits: 8 -> 4 -> 2 -> 1 cells


@settings(max_examples=60, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.integers(0, 50)),
       st.integers(1, 80))
def test_quad_matches_reference(counts, budget):
    divs = build_quadtree(grid_of(counts), budget)
    got = {tuple(int(v // 5000) for v in d.rect) for d in divs}
    assert got == oracles.reference_quadtree(counts, budget)


def test_quad_max_depth():
    divs = build_quadtree(grid_of(np.ones((8, 8))), 400, max_depth=1)
    assert len(divs) == 4


# -- kd-tree -------------------------------------------------------------------------

def test_kd_two_cells():
    divs = build_kdtree(grid_of([[10, 10]]), 2)
    assert rects(divs) == [(0.0, 0.0, 5000.0, 5000.0), (5000.0, 0.0, 10_000.0, 5000.0)]
    assert [d.count for d in divs] == [10, 10]


def test_kd_uniform_16x16():
    g = grid_of(np.full((16, 16), 7))
    divs = build_kdtree(g, 16)
    assert len(divs) == 16
    rep = balance(divs, g)
    assert rep.sd == 0 and rep.cv == 0


def test_kd_split_rules():
    # square: x axis first; counts (1, 2 | 2, 1) per column: balanced cut after column 2
    g = grid_of([[1, 2, 2, 1]] * 4)
    divs = build_kdtree(g, 2)
    assert rects(divs) == [(0.0, 0.0, 10_000.0, 20_000.0), (10_000.0, 0.0, 20_000.0, 20_000.0)]
    # tall division: y axis
    divs = build_kdtree(grid_of(np.ones((4, 2))), 2)
    assert rects(divs)[0] == (0.0, 0.0, 10_000.0, 10_000.0)
    # tie between two equally balanced positions: lower coordinate
    divs = build_kdtree(grid_of([[2, 0, 2]]), 2)
    assert rects(divs)[0] == (0.0, 0.0, 5000.0, 5000.0)


def test_kd_stops_when_nothing_splits():
    divs = build_kdtree(grid_of([[5, 6]]), 10)
    assert len(divs) == 2


def test_kd_ids_sequential():
    divs = build_kdtree(grid_of(np.arange(36).reshape(6, 6)), 9)
    assert divs.ids == list(range(1, 10))


def test_kd_beats_quad_on_skewed_grid(rng):
    counts = skewed_counts(rng)
    hot = np.sort(counts.ravel())[::-1]
    assert hot[: len(hot) // 10].sum() >= 0.8 * hot.sum()
    g = grid_of(counts)
    assert balance(build_kdtree(g, 64), g).cv < balance(build_quadtree(g, 64), g).cv


# -- balance -----------------------------------------------------------------------------

def test_balance_hand_computed():
    g = grid_of([[10, 20, 30, 40]])
    divs = build_kdtree(g, 4)
    rep = balance(divs, g)
    assert sorted(rep.counts.values()) == [10, 20, 30, 40]
    assert rep.sd == pytest.approx(math.sqrt(125), rel=1e-12)
    assert rep.sd == pytest.approx(oracles.population_sd([10, 20, 30, 40]), rel=1e-12)
    assert rep.cv == pytest.approx(44.72135955, rel=1e-9)


def test_balance_equal_counts():
    g = grid_of(np.full((2, 2), 3))
    assert balance(build_kdtree(g, 4), g).cv == 0


def test_drift_increases_cv(rng):
    h = w = 30
    yy, xx = np.mgrid[0:h, 0:w]

    def lanes(shift):
        base = rng.poisson(1, size=(h, w))
        band = np.abs(yy - (0.5 * xx + 5 + shift)) < 1.5
        return base + band * rng.poisson(60, size=(h, w))

    early, late = grid_of(lanes(0)), grid_of(lanes(8))
    divs = build_kdtree(early, 64)
    assert balance(divs, late).cv > balance(divs, early).cv


def test_balance_rejects_non_partition():
    d = Domain(0, 0, 10_000, 5000)
    divs = DivisionSet([SpatialDivision(1, (0.0, 0.0, 5000.0, 5000.0), 0)], d)
    with pytest.raises(ValidationError):
        balance(divs, grid_of([[1, 1]]))


# -- lookup ------------------------------------------------------------------------------

def test_division_of_corner_and_outside():
    g = grid_of(np.arange(16).reshape(4, 4))
    divs = build_kdtree(g, 5)
    corner = divs.division_of(0.0, 0.0)
    assert divs[corner].rect[:2] == (0.0, 0.0)
    with pytest.raises(DomainError):
        divs.division_of(20_000.0, 0.0)


def test_division_of_every_cell_centroid(rng):
    g = grid_of(rng.integers(0, 100, (12, 17)))
    divs = build_kdtree(g, 40)
    for r in range(12):
        for c in range(17):
            x, y = (c + 0.5) * 5000, (r + 0.5) * 5000
            owner = [d.id for d in divs if d.rect[0] <= x < d.rect[2] and d.rect[1] <= y < d.rect[3]]
            assert owner == [divs.division_of(x, y)]


def test_small_cell_and_ancestor_share_division(rng):
    g = grid_of(rng.integers(0, 100, (10, 10)))
    divs = build_kdtree(g, 30)
    dom = g.domain
    for _ in range(500):
        c, r = (int(v) for v in rng.integers(0, 1000, 2))
        fine = CellKey(50, c, r)
        coarse = CellKey(5000, c // 100, r // 100)
        assert divs.division_of_cell(fine, dom) == divs.division_of_cell(coarse, dom)
        assert divs.division_of_cell(fine, dom) == divs.division_of((c + 0.5) * 50, (r + 0.5) * 50)


# -- invariants over random grids -------------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1000)),
       st.integers(1, 150), st.sampled_from(["kd", "quad"]))
def test_partition_properties(counts, budget, method):
    g = grid_of(counts, origin=(-35_000.0, 10_000.0))
    divs = (build_kdtree if method == "kd" else build_quadtree)(g, budget)
    assert len(divs) <= budget
    assert divs.problems() == []
    assert oracles.covers_exactly(rects(divs), divs.domain.rect)
    assert sum(d.count for d in divs) == counts.sum()
    for d in divs:
        assert d.width % 5000 == 0 and d.height % 5000 == 0
        assert (d.rect[0] - g.origin[0]) % 5000 == 0 and (d.rect[1] - g.origin[1]) % 5000 == 0
    if method == "kd":
        assert divs.domain == g.domain
        assert all(d.count > 0 for d in divs) or len(divs) == 1 or (counts == 0).any()


def test_division_file_round_trip(tmp_path):
    g = grid_of(np.arange(20).reshape(4, 5), origin=(-10_000.0, 5000.0))
    divs = build_kdtree(g, 6)
    write_divisions(tmp_path / "d.csv", divs)
    back = read_divisions(tmp_path / "d.csv")
    assert list(back) == list(divs) and back.domain == divs.domain
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].startswith("# format=aiswh-divisions version=1 lattice=5000")
    assert lines[2] == "id,x_min,y_min,x_max,y_max,count"
