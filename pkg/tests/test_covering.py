import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatlab.covering import (FiniteMetricSpace, c3_bound, greedy_cover, hyperbolic_disk_cloud,
                              kappa_estimate, poincare)


def line(n):
    pts = np.arange(n, dtype=float)
    return FiniteMetricSpace(dist=np.abs(pts[:, None] - pts[None, :]))


def test_empty_and_single():
    rep = greedy_cover(FiniteMetricSpace(dist=np.zeros((1, 1))), 1.0)
    assert rep.centers == [0] and rep.multiplicity == 1 and rep.covered
    empty = FiniteMetricSpace(coords=np.zeros((0, 2)))
    assert greedy_cover(empty, 1.0).centers == []


def test_line_unit_radius():
    rep = greedy_cover(line(11), 1.0, a=1.0)
    # open unit balls on an integer line: every point is its own center
    assert rep.centers == list(range(11))
    assert rep.covered and rep.separation >= 1


def test_line_multiplicity_brute_force():
    space = line(11)
    rep = greedy_cover(space, 1.0, a=3.0)
    D = np.abs(np.arange(11)[:, None] - np.arange(11)[None, :])
    brute = max(int(np.sum(D[rep.centers, p] < 3)) for p in range(11))
    assert rep.multiplicity == brute <= 7


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        greedy_cover(line(3), 0.0)


def test_kappa_small_space_is_one():
    space = FiniteMetricSpace(coords=np.random.default_rng(0).random((30, 2)) * 0.1)
    assert kappa_estimate(space, 1.0).kappa == 1
    with pytest.raises(ValueError):
        kappa_estimate(space, 1.0, 1.0)


def test_kappa_circle_brute_force():
    theta = np.linspace(0, 12, 120, endpoint=False)
    D = np.abs(theta[:, None] - theta[None, :])
    D = np.minimum(D, 12 - D)
    space = FiniteMetricSpace(dist=D)
    est = kappa_estimate(space, 1.0)
    centers = est.witness
    brute = max(int(np.sum(D[centers, p] < 3.0)) for p in range(len(theta)))
    assert est.kappa == brute
    assert 5 <= est.kappa <= 7


def test_hyperbolic_triangle_audit():
    pts = hyperbolic_disk_cloud(300, 3.0, seed=1)
    space = FiniteMetricSpace(coords=pts, metric=poincare)
    assert space.audit_triangle() <= 1e-9


def test_c3_bound_positive():
    assert c3_bound(1.0, 1.0, 2.0, 1.0, 2) > 0


def test_csv_ingest(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("index,x,y\n0,0,0\n1,3,4\n")
    space = FiniteMetricSpace.from_csv(path)
    assert space.row(0)[1] == pytest.approx(5.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 200), st.floats(0.05, 1.5), st.integers(0, 10_000))
def test_cover_invariants(n, h, seed):
    pts = np.random.default_rng(seed).random((n, 2)) * 3
    space = FiniteMetricSpace(coords=pts)
    rep = greedy_cover(space, h, a=1.0)
    assert rep.covered
    assert rep.separation >= 1
    # multiplicity is monotone in the dilation
    assert greedy_cover(space, h, a=2.0).multiplicity >= rep.multiplicity
