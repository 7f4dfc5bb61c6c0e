import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fractal_forms.forms import (BoundaryFunction, FormSpec, apply_generator, besov_norm,
                                 eval_Q_fractal, eval_Q_prefractal, eval_split_decay,
                                 generator_pairing, lipschitz_extension, rho_n, sigma_alpha,
                                 test_function)
from fractal_forms.measures import build_averaged

from oracles import exact_polyline_ball, midpoint_double_sum

# brute-force midpoint double sums with 32 and 64 cells per edge, Richardson-extrapolated
Q2_COORD_X = 0.678398
# Richardson limit of d_regular depths 6, 7, 8 (differences shrink by about 0.44)
QD_COORD_X_LIMIT = 0.91518


def _linear(a, b, c):
    return BoundaryFunction(lambda p: a * p[:, 0] + b * p[:, 1] + c, math.hypot(a, b), "lin")


@pytest.fixture(scope="module")
def spec2(curve, constants):
    return FormSpec.for_level(curve, constants, 2)


# -- symbols ------------------------------------------------------------------

def test_rho_branches(curve, constants, mu):
    spec = FormSpec.for_level(curve, constants, 3)
    xi = np.array([0.5, math.sqrt(3) / 2])
    c = spec.cutoff
    assert rho_n(spec, constants, xi, c / 2, mu) == pytest.approx(c / 2)
    assert rho_n(spec, constants, xi, c, mu) == pytest.approx(c)
    small = FormSpec.for_level(curve, constants, 3, A=1.0)
    r = 2 * small.cutoff
    assert rho_n(small, constants, xi, r, mu) == pytest.approx(mu.ball(xi, r, 9).mid, rel=1e-9)


@given(st.floats(1e-4, 1.0), st.sampled_from(["measure_scaled", "d_regular"]))
def test_sigma_positive(mu, r, mode):
    spec = FormSpec(sigma_mode=mode, level=3)
    assert sigma_alpha(spec, mu, mu.arc_points(3)[7], r) > 0


def test_spec_validation():
    with pytest.raises(ValueError):
        FormSpec(sigma_mode="nope")
    with pytest.raises(ValueError):
        FormSpec(A=-1.0)
    with pytest.raises(ValueError):
        FormSpec(quad_order=1)


def test_cutoff_requires_scale():
    with pytest.raises(ValueError):
        FormSpec().cutoff


def test_catalog():
    for name in ("const", "coord-x", "coord-y", "product-xy", "abs-sum", "radial"):
        f = test_function(name)
        pts = np.random.default_rng(0).uniform([-0.25, -0.5], [1.25, 1.25], size=(300, 2))
        f.check_lipschitz(pts)
    with pytest.raises(ValueError):
        test_function("sine")


# -- fractal form -------------------------------------------------------------

def test_fractal_constant_zero(mu):
    assert eval_Q_fractal(FormSpec(), mu, test_function("const"), 5).value == 0


def test_fractal_homogeneity(mu):
    phi = test_function("coord-x")
    q1 = eval_Q_fractal(FormSpec(), mu, phi, 5, error_estimate=False).value
    q3 = eval_Q_fractal(FormSpec(), mu, phi.scaled(3), 5, error_estimate=False).value
    assert q3 == pytest.approx(9 * q1, rel=1e-12)


def test_fractal_d_regular_depth7(mu):
    ev = eval_Q_fractal(FormSpec(sigma_mode="d_regular"), mu, test_function("coord-x"), 7)
    assert ev.quadrature_error_estimate < 0.01 * ev.value
    assert ev.value == pytest.approx(QD_COORD_X_LIMIT, rel=0.005)


def test_fractal_alpha_range(mu):
    with pytest.raises(ValueError):
        eval_Q_fractal(FormSpec(alpha=1.5), mu, test_function("coord-x"), 3)


def test_besov_norm_constant(mu):
    assert besov_norm(FormSpec(), mu, test_function("const"), 4) == pytest.approx(1.0)


# -- polygonal form -----------------------------------------------------------

def test_prefractal_constant(spec2, averaged, mu):
    ev = eval_Q_prefractal(spec2, averaged(2), test_function("const"), mu)
    assert ev.value == ev.short_part == ev.long_part == 0


def test_prefractal_oracle(spec2, averaged, mu):
    ev = eval_Q_prefractal(spec2, averaged(2), test_function("coord-x"), mu)
    assert ev.value == pytest.approx(Q2_COORD_X, rel=1e-3)
    assert ev.long_part == 0      # the default cutoff exceeds the diameter at this level


def test_prefractal_oracle_live(level, averaged, spec2, mu):
    """A coarse live run of the brute-force oracle brackets the library value."""
    lvl, m2 = level(2), averaged(2)
    kern = lambda xi, r: 1.0 / (r * exact_polyline_ball(lvl.vertices, m2.densities, xi, r))
    phi = test_function("coord-x")
    q8 = midpoint_double_sum(lvl.vertices, m2.densities, phi, kern, 8)
    q16 = midpoint_double_sum(lvl.vertices, m2.densities, phi, kern, 16)
    lib = eval_Q_prefractal(spec2, m2, phi, mu).value
    assert q8 < q16 < lib < 2 * q16 - q8 + 1e-3


def test_prefractal_sign_symmetry(spec2, averaged, mu):
    phi = test_function("product-xy")
    a = eval_Q_prefractal(spec2, averaged(2), phi, mu).value
    b = eval_Q_prefractal(spec2, averaged(2), phi.scaled(-1), mu).value
    assert a == pytest.approx(b, rel=1e-14)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_prefractal_parallelogram(curve, constants, averaged, mu, a, b, c, d):
    spec = FormSpec.for_level(curve, constants, 1, A=1.0)
    m1 = averaged(1)
    f, g = _linear(a, b, 0.0), BoundaryFunction(lambda p: c * p[:, 0] * p[:, 1] + d * p[:, 1] ** 2)
    Q = lambda h: eval_Q_prefractal(spec, m1, h, mu).value
    s = BoundaryFunction(lambda p: f(p) + g(p))
    t = BoundaryFunction(lambda p: f(p) - g(p))
    lhs, rhs = Q(s) + Q(t), 2 * Q(f) + 2 * Q(g)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


@given(st.floats(-5, 5))
def test_prefractal_shift_invariance(spec2, averaged, mu, c):
    phi = test_function("radial")
    a = eval_Q_prefractal(spec2, averaged(2), phi, mu).value
    b = eval_Q_prefractal(spec2, averaged(2), BoundaryFunction(lambda p: phi(p) + c), mu).value
    assert a == pytest.approx(b, rel=1e-12)


def test_split_decay_short_part_decreasing(curve, constants, averaged, mu):
    specs = [FormSpec.for_level(curve, constants, n, A=1.0) for n in range(1, 5)]
    rows = eval_split_decay(specs, [averaged(n) for n in range(1, 5)], test_function("coord-x"), mu)
    shorts = [r[1] for r in rows]
    assert all(b < a for a, b in zip(shorts, shorts[1:]))


def test_split_decay_constant(curve, constants, averaged, mu):
    specs = [FormSpec.for_level(curve, constants, n) for n in (1, 2)]
    rows = eval_split_decay(specs, [averaged(1), averaged(2)], test_function("const"), mu)
    assert all(r[1] == r[2] == 0 for r in rows)


@pytest.mark.slow
def test_long_part_approaches_fractal(curve, constants, averaged, mu):
    spec = FormSpec.for_level(curve, constants, 5, A=1.0)
    ev = eval_Q_prefractal(spec, averaged(5), test_function("coord-x"), mu)
    ref = eval_Q_fractal(FormSpec(), mu, test_function("coord-x"), 8, error_estimate=False).value
    assert ev.long_part == pytest.approx(ref, rel=0.05)


# -- extension ----------------------------------------------------------------

def test_extension_single_point():
    ext = lipschitz_extension([[0.2, 0.3]], [1.5], 2.0)
    x = np.array([[0.2, 0.3], [1.2, 0.3], [0.2, -0.7]])
    assert np.allclose(ext(x), [1.5, 3.5, 3.5])


def test_extension_of_coordinate(mu):
    P = mu.arc_points(6)
    ext = lipschitz_extension(P, P[:, 0], 1.0, check=False)
    Q = mu.arc_points(7)[::3]
    assert np.abs(ext(Q) - Q[:, 0]).max() < 3.0 ** -6


def test_extension_preserves_lipschitz(level):
    V3, V5 = level(3).vertices, level(5).vertices
    phi = test_function("abs-sum")
    ext = lipschitz_extension(V3, phi(V3), phi.lipschitz_bound)
    probe = BoundaryFunction(ext.evaluator, phi.lipschitz_bound)
    assert probe.check_lipschitz(V5[::4]) <= phi.lipschitz_bound * (1 + 1e-9)


def test_extension_premise_checked():
    with pytest.raises(ValueError):
        lipschitz_extension([[0, 0], [1, 0]], [0, 5], 1.0)


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=12),
       st.floats(0.5, 3))
def test_extension_interpolates_and_is_lipschitz(pts, L):
    P = np.unique(np.array(pts), axis=0)
    v = np.sin(P[:, 0]) * 0.5 * L / 2   # Lipschitz with constant <= L/4 * sqrt(2) < L
    ext = lipschitz_extension(P, v, L)
    assert np.allclose(ext(P), v)
    X = np.random.default_rng(1).uniform(-2, 2, size=(40, 2))
    e = ext(X)
    d = np.linalg.norm(X[:, None] - X[None], axis=2)
    assert np.all(np.abs(e[:, None] - e[None]) <= L * d + 1e-12)


# -- generator ----------------------------------------------------------------

def test_generator_constant_and_sign(spec2, averaged, level, mu):
    m2 = averaged(2)
    x = 0.5 * (level(2).starts[3] + level(2).ends[3])
    assert apply_generator(spec2, m2, test_function("const"), x, mu=mu) == 0
    phi = test_function("product-xy")
    a = apply_generator(spec2, m2, phi, x, mu=mu)
    b = apply_generator(spec2, m2, phi.scaled(-1), x, mu=mu)
    assert a == pytest.approx(-b, rel=1e-12)


def test_generator_fractal_constant(mu):
    spec = FormSpec(level=2)
    assert apply_generator(spec, mu, test_function("const"), mu.arc_points(4)[10], depth=4) == 0


def test_generator_pairing_level1(curve, constants, averaged, mu):
    spec = FormSpec.for_level(curve, constants, 1)
    phi = test_function("coord-x")
    q = eval_Q_prefractal(spec, averaged(1), phi, mu).value
    assert generator_pairing(spec, averaged(1), phi, mu) == pytest.approx(q, rel=1e-3)
