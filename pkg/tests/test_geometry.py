import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fractal_forms.geometry import (ArcAddress, ArcWalkError, GeometryConstants, SnowflakeCurve,
                                    arc_walk_partition, build_level, directed_hausdorff,
                                    hausdorff_distance, is_simple, is_simple_bruteforce,
                                    koch_segment, load_curve, polygon_area, refine_arc,
                                    scale_radius, symmetric_difference_area)

from oracles import koch_vertices, sampled_hausdorff, shoelace, snowflake_area


# -- construction -----------------------------------------------------------

def test_koch_segment_quarter_is_flat():
    v = koch_segment(0.25, (0, 0), (1, 0))
    assert v.shape == (5, 2)
    assert np.allclose(v[:, 1], 0)


def test_koch_segment_scaling():
    v = koch_segment(0.45, (0, 0), (2, 0))
    seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
    assert np.allclose(seg, 0.9)


@given(st.floats(0.25, 0.49), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 4),
       st.floats(0, 2 * math.pi))
def test_koch_segment_lengths_equal_p(p, x0, y0, L, ang):
    a = np.array([x0, y0])
    b = a + L * np.array([math.cos(ang), math.sin(ang)])
    v = koch_segment(p, a, b)
    assert np.allclose(v[0], a) and np.allclose(v[-1], b)
    assert np.allclose(np.linalg.norm(np.diff(v, axis=0), axis=1), p * L)


@pytest.mark.parametrize("n", range(5))
def test_level_matches_independent_construction(curve, n):
    assert np.abs(build_level(curve, n).vertices - koch_vertices(n)).max() < 1e-14


def test_level2_counts(curve):
    lvl = build_level(curve, 2)
    assert lvl.n_edges == 48
    assert np.allclose(lvl.edge_lengths, 1 / 9)


def test_level_is_clockwise(curve):
    V = build_level(curve, 3).vertices
    x, y = V[:, 0], V[:, 1]
    assert np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y) < 0


def test_mixed_scales_edge_lengths():
    c = SnowflakeCurve(p=0.4, q=0.3, omega=(0.4, 0.3, 0.3))
    lvl = build_level(c, 3)
    assert lvl.n_edges == 3 * 4 ** 3
    assert np.allclose(lvl.edge_lengths, 0.4 * 0.3 * 0.3)
    assert is_simple(lvl.vertices)


@pytest.mark.parametrize("bad", [dict(p=0.5), dict(p=0.3, q=0.2), dict(p=0.3, q=0.35),
                                 dict(p=0.4, q=0.3, omega=(0.35,))])
def test_curve_validation(bad):
    with pytest.raises(ValueError):
        SnowflakeCurve(**bad)


def test_omega_prefix_too_short():
    c = SnowflakeCurve(p=0.4, q=0.3, omega=(0.4,))
    with pytest.raises(ValueError):
        build_level(c, 2)


@given(st.integers(0, 5), st.data())
def test_arc_address_roundtrip(n, data):
    j = data.draw(st.integers(0, 3 * 4 ** n - 1))
    addr = ArcAddress.from_index(n, j)
    assert addr.index == j and addr.level == n


def test_refine_arc_endpoints(curve):
    lvl = build_level(curve, 2)
    chain = refine_arc(curve, 2, lvl.starts[5], lvl.ends[5], 3)
    assert len(chain) == 4 ** 3 + 1
    assert np.allclose(chain[0], lvl.starts[5]) and np.allclose(chain[-1], lvl.ends[5])
    assert np.allclose(chain, build_level(curve, 5).vertices[5 * 64:6 * 64 + 1])


def test_load_curve(tmp_path):
    c = load_curve({"type": "snowflake", "p": 1 / 3})
    assert isinstance(c, SnowflakeCurve)
    poly = load_curve({"type": "polyline", "points": [[0, 0], [0, 1], [1, 0]]})
    assert poly.n_edges == 3
    with pytest.raises(ValueError):
        load_curve({"type": "spiral"})


# -- simplicity -------------------------------------------------------------

def test_simple_levels(curve):
    for n in range(5):
        assert is_simple(build_level(curve, n).vertices)


def test_bowtie_not_simple():
    assert not is_simple(np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float))


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=4, max_size=9,
                unique=True))
def test_sweep_agrees_with_bruteforce(pts):
    V = np.array(pts, dtype=float)
    assert is_simple(V) == is_simple_bruteforce(V)


# -- constants ----------------------------------------------------------------

def test_constants(constants):
    assert constants.S >= 1
    assert constants.c0 <= 1 + 1e-12 <= constants.c1 + 2e-12
    assert constants.diam == pytest.approx(2 / math.sqrt(3), abs=1e-12)
    assert 0 < constants.theta <= 1


def test_diameter_matches_hull_oracle(curve, constants):
    V = build_level(curve, 8).vertices
    from scipy.spatial import ConvexHull
    H = V[ConvexHull(V).vertices]
    d = np.max(np.linalg.norm(H[:, None] - H[None], axis=2))
    assert constants.diam == pytest.approx(d, rel=1e-12)


def test_scale_radius_arithmetic():
    K = GeometryConstants(S=1.5, theta=0.5, M=5, diam=2, c0=1, c1=1)
    assert scale_radius(K, SnowflakeCurve(), 2) == pytest.approx(2 / 135, rel=1e-14)


def test_scale_radius_ratio(curve, constants):
    for n in range(1, 6):
        assert scale_radius(constants, curve, n + 1) / scale_radius(constants, curve, n) == \
            pytest.approx(1 / 3, rel=1e-14)


# -- distances and areas ------------------------------------------------------

def test_hausdorff_identity(curve):
    lvl = build_level(curve, 2)
    assert hausdorff_distance(lvl, lvl) == 0


def test_hausdorff_levels_0_1(curve):
    d = hausdorff_distance(build_level(curve, 0), build_level(curve, 1))
    assert d == pytest.approx(math.sqrt(3) / 6, rel=1e-9)
    assert d == pytest.approx(sampled_hausdorff(koch_vertices(0), koch_vertices(1)), rel=1e-6)


def test_directed_hausdorff_asymmetry(curve):
    a, b = build_level(curve, 0), build_level(curve, 1)
    assert directed_hausdorff(b, a) == pytest.approx(math.sqrt(3) / 6, rel=1e-9)
    assert directed_hausdorff(a, b) == pytest.approx(math.sqrt(3) / 12, rel=1e-9)


@pytest.mark.parametrize("n", range(5))
def test_areas(curve, n):
    assert build_level(curve, n).area() == pytest.approx(snowflake_area(n), rel=1e-13)
    assert polygon_area(build_level(curve, n).vertices) == pytest.approx(shoelace(koch_vertices(n)))


def test_first_bumps_area(curve):
    assert build_level(curve, 1).area() - build_level(curve, 0).area() == \
        pytest.approx(3 * math.sqrt(3) / 36, rel=1e-13)


def test_symmetric_difference(curve):
    l6 = build_level(curve, 6)
    # the domains are nested, so the oracle is a difference of closed-form areas
    d2 = symmetric_difference_area(build_level(curve, 2), l6)
    d1 = symmetric_difference_area(build_level(curve, 1), l6)
    assert d2 == pytest.approx(snowflake_area(6) - snowflake_area(2), rel=1e-9)
    assert d2 < d1
    lvl = build_level(curve, 3)
    assert symmetric_difference_area(lvl, lvl) == pytest.approx(0, abs=1e-14)


# -- arc walk -----------------------------------------------------------------

def _circle(m=20000):
    th = np.linspace(0, 2 * np.pi, m, endpoint=False)
    return np.stack([np.cos(-th), np.sin(-th)], axis=1)


def _closure_ok(poly, r):
    last = poly.edge_lengths[-1]
    if poly.meta["closing"] == "dropped_start":
        return 0.75 * r - 1e-9 <= last <= 1.25 * r + 1e-9
    return 0.25 * r - 1e-9 <= last <= r + 1e-9


def test_arc_walk_circle():
    r = 0.3
    poly = arc_walk_partition(_circle(), 1.0, r)
    assert np.all(np.abs(poly.edge_lengths[:-1] - r) <= 1e-3 * r)
    assert is_simple(poly.vertices)
    assert _closure_ok(poly, r)


def test_arc_walk_too_short():
    with pytest.raises(ArcWalkError):
        arc_walk_partition(_circle(), 0.5, 1.5)


def test_arc_walk_too_coarse():
    with pytest.raises(ArcWalkError):
        arc_walk_partition(_circle(50), 1.0, 0.3)


@given(st.floats(0.15, 0.6))
def test_arc_walk_circle_radii(r):
    poly = arc_walk_partition(_circle(8000), 1.0, r)
    assert np.all(np.abs(poly.edge_lengths[:-1] - r) <= 1e-3 * r)
    assert is_simple(poly.vertices) and _closure_ok(poly, r)
