import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fractal_forms.geometry import ArcAddress, build_level
from fractal_forms.measures import (BoundaryMeasure, adjacent_arc_comparability, arc_measure,
                                    average_function, build_averaged, gauss_on_edges,
                                    integrate_fractal, integrate_prefractal, mu_ball, mun_ball,
                                    uniform_measure, verify_scaling, weak_convergence_gap)

from oracles import exact_polyline_ball, riemann_ball

APEX = np.array([0.5, math.sqrt(3) / 2])


# -- arc measures -------------------------------------------------------------

def test_arc_measure_exact(mu):
    assert arc_measure(mu, ArcAddress(0, (), 1)) == Fraction(1, 3)
    assert arc_measure(mu, ArcAddress(2, (3, 1), 2)) == Fraction(1, 48)


@pytest.mark.parametrize("n", range(7))
def test_arc_masses_partition(mu, n):
    assert math.fsum(mu.arc_masses(n)) == pytest.approx(1, abs=1e-14)


def test_custom_rule_comparability(curve):
    mc = BoundaryMeasure(curve, split_rule=(0.3, 0.2, 0.2, 0.3))
    assert adjacent_arc_comparability(mc, 1) == pytest.approx(1.5)
    for n in range(1, 5):
        assert adjacent_arc_comparability(mc, n) <= 1.5 + 1e-12


def test_uniform_comparability(mu):
    assert adjacent_arc_comparability(mu, 3) == pytest.approx(1)


def test_bad_rules(curve):
    with pytest.raises(ValueError):
        BoundaryMeasure(curve, split_rule=(0.5, 0.5, 0.1, -0.1))
    with pytest.raises(ValueError):
        BoundaryMeasure(curve, root_weights=(0.5, 0.5, 0.5))


# -- fractal balls ------------------------------------------------------------

def test_ball_full_mass(mu):
    iv = mu_ball(mu, APEX, 2.0, 6)
    assert iv.lo == pytest.approx(1) and iv.hi == pytest.approx(1)


def test_ball_tiny_at_vertex(mu):
    iv = mu_ball(mu, np.array([0.0, 0.0]), 1e-9, 6)
    assert iv.lo >= 0 and iv.hi <= 2 * (1 / 3) * 4.0 ** -6 + 1e-15


def test_ball_apex_bracket(mu):
    iv = mu_ball(mu, APEX, 0.5, 8)
    assert iv.width < 1e-3
    # brute force: masses of depth-10 arcs whose midpoints lie in the ball
    P, W = mu.arc_points(10), mu.arc_masses(10)
    brute = float(np.sum(W[np.linalg.norm(P - APEX, axis=1) < 0.5]))
    assert iv.lo - 1e-4 <= brute <= iv.hi + 1e-4
    assert iv.mid == pytest.approx(0.298143, abs=2e-5)


@given(st.integers(0, 3 * 4 ** 5 - 1), st.floats(0.002, 0.6))
def test_ball_brackets_nested(mu, j, r):
    x = mu.arc_points(5)[j]
    coarse, fine = mu.ball(x, r, 5), mu.ball(x, r, 8)
    assert coarse.lo <= fine.lo + 1e-12 and fine.hi <= coarse.hi + 1e-12


@given(st.integers(0, 3 * 4 ** 4 - 1), st.floats(0.01, 0.5))
def test_ball_monotone_in_radius(mu, j, r):
    x = mu.arc_points(4)[j]
    assert mu.ball(x, r, 7).lo <= mu.ball(x, 1.5 * r, 7).hi + 1e-12


# -- averaged measures --------------------------------------------------------

def test_level1_densities(averaged):
    m1 = averaged(1)
    assert np.allclose(m1.densities, 0.25)
    assert m1.total_mass == pytest.approx(1)


@pytest.mark.parametrize("n", range(7))
def test_densities_exact(averaged, n):
    assert np.allclose(averaged(n).densities, 3.0 ** (n - 1) / 4.0 ** n, rtol=1e-12)
    assert averaged(n).total_mass == pytest.approx(1, abs=1e-12)


def test_mun_ball_edge_midpoint(level, averaged):
    lvl = level(1)
    xi = 0.5 * (lvl.starts[4] + lvl.ends[4])
    assert mun_ball(averaged(1), xi, 1 / 12) == pytest.approx(1 / 24, rel=1e-14)


def test_mun_ball_full(averaged):
    assert mun_ball(averaged(2), APEX, 5.0) == pytest.approx(1)


def test_mun_ball_vertex_riemann(level, averaged):
    lvl, m1 = level(1), averaged(1)
    xi = lvl.vertices[1]
    brute = riemann_ball(lvl.vertices, m1.densities, xi, 1 / 12, 10 ** 6 // 12)
    assert mun_ball(m1, xi, 1 / 12) == pytest.approx(brute, abs=1e-6)


@given(st.integers(0, 191), st.floats(0, 1), st.floats(1e-4, 1.2))
def test_mun_ball_matches_chord_oracle(level, averaged, e, t, r):
    lvl, m3 = level(3), averaged(3)
    xi = lvl.starts[e] + t * (lvl.ends[e] - lvl.starts[e])
    ref = exact_polyline_ball(lvl.vertices, m3.densities, xi, [r])[0]
    assert m3.ball(xi, r) == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_mun_ball_rejects_bad_radius(averaged):
    with pytest.raises(ValueError):
        mun_ball(averaged(1), APEX, 0.0)


def test_uniform_measure_polyline():
    from fractal_forms.geometry import PolygonalLevel
    sq = PolygonalLevel(0, np.array([[0, 0], [0, 1], [1, 1], [1, 0]], float))
    m = uniform_measure(sq)
    assert m.total_mass == pytest.approx(1)
    assert np.allclose(m.densities, 0.25)


# -- integration --------------------------------------------------------------

def test_average_function_constant_and_linear(level, averaged):
    m2 = averaged(2)
    assert np.allclose(average_function(m2, lambda p: np.full(len(p), 3.0)), 3.0)
    lvl = level(2)
    mids = 0.5 * (lvl.starts + lvl.ends)
    assert np.allclose(average_function(m2, lambda p: 2 * p[:, 0] - p[:, 1]),
                       2 * mids[:, 0] - mids[:, 1])


@pytest.mark.parametrize("n", range(5))
def test_trading_identity(mu, averaged, n):
    mun = averaged(n)
    phi = lambda p: p[:, 0] ** 3 - 2 * p[:, 0] * p[:, 1] + p[:, 1] ** 2
    lhs = integrate_prefractal(mun, phi)
    rhs = float(np.sum(mu.arc_masses(n) * average_function(mun, phi)))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_gauss_weights_sum_to_lengths(level):
    lvl = level(2)
    _, w, e, _ = gauss_on_edges(lvl, 5, subdiv=3)
    assert np.allclose(np.bincount(e, weights=w), lvl.edge_lengths)


def test_weak_gap_constant(mu, averaged):
    assert weak_convergence_gap(mu, averaged(3), lambda p: np.ones(len(p))) == \
        pytest.approx(0, abs=1e-13)


def test_weak_gap_decreasing(mu, averaged):
    sq = lambda p: p[:, 0] ** 2 + p[:, 1] ** 2
    gaps = [weak_convergence_gap(mu, averaged(n), sq) for n in range(1, 6)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    x = lambda p: p[:, 0]
    assert weak_convergence_gap(mu, averaged(4), x) <= weak_convergence_gap(mu, averaged(1), x) + 1e-15


def test_weak_gap_depth_guard(mu, averaged):
    with pytest.raises(ValueError):
        weak_convergence_gap(mu, averaged(3), lambda p: p[:, 0], depth=5)


def test_fractal_integral_symmetry(mu):
    # the curve is symmetric about x = 1/2 and mu respects that symmetry
    assert integrate_fractal(mu, lambda p: p[:, 0], 7) == pytest.approx(0.5, abs=1e-13)


# -- scaling ------------------------------------------------------------------

def test_prefractal_scaling_level_independent(averaged, constants):
    r3 = verify_scaling(averaged(3), n_points=1000, constants=constants)
    r5 = verify_scaling(averaged(5), n_points=1000, constants=constants)
    assert r3.extra["band_ratio"] == pytest.approx(r5.extra["band_ratio"], rel=0.25)
    assert r3.c_doubling == pytest.approx(r5.c_doubling, rel=0.25)


def test_fractal_scaling_dimension(mu):
    rep = verify_scaling(mu, n_points=12, depth=9)
    d = math.log(4) / math.log(3)
    assert rep.d_hat <= d + 0.05 and rep.s_hat >= d - 0.05
    assert rep.dim_pooled == pytest.approx(d, abs=0.05)
    assert rep.to_json()["schema"] == 1
