import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fractal_forms.convergence import (StudyConfig, StudyReport, decay_rate, domain_integral,
                                       elliptic_stability_study, energy_study, ks_strong_distance,
                                       measure_study, parabolic_stability_study,
                                       strictly_decreasing, superposition_study)
from fractal_forms.forms import BoundaryFunction, test_function
from fractal_forms.solver import EllipticProblem, ParabolicProblem


def _const(c):
    return lambda x: np.full(len(x), float(c))


# -- plumbing -----------------------------------------------------------------

def test_reference_depth_guard():
    with pytest.raises(ValueError):
        StudyConfig(n_lo=1, n_hi=4, ref_depth=6)
    assert StudyConfig(n_lo=1, n_hi=4).ref_depth == 7


def test_report_rejects_negative_gap():
    row = {"level": 1, "function": "f", "quantity": "q", "value": 1.0, "reference": 1.0, "gap": -1e-9}
    with pytest.raises(ValueError):
        StudyReport("x", [row], {}, {}, {})


def test_decay_helpers():
    assert strictly_decreasing([3, 2, 1]) and not strictly_decreasing([3, 3, 1])
    assert decay_rate([1, 2, 3], [1.0, 0.5, 0.25]) == pytest.approx(0.5)
    assert decay_rate([1], [1.0]) is None


def test_domain_integral_against_shapely(level):
    from shapely.geometry import Polygon
    V = level(3).vertices
    P = Polygon(V)
    assert domain_integral(V, lambda x: np.ones(len(x))) == pytest.approx(P.area, rel=1e-12)
    assert domain_integral(V, lambda x: x[:, 0]) == pytest.approx(P.area * P.centroid.x, rel=1e-12)
    assert domain_integral(V, lambda x: x[:, 1]) == pytest.approx(P.area * P.centroid.y, rel=1e-12)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_domain_integral_quadratic_unit_square(a, b, c):
    sq = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], float)
    g = lambda x: a * x[:, 0] ** 2 + b * x[:, 0] * x[:, 1] + c * x[:, 1] ** 2
    assert domain_integral(sq, g) == pytest.approx(a / 3 + b / 4 + c / 3, abs=1e-13)


# -- energy -------------------------------------------------------------------

def test_energy_constant_zero():
    rep = energy_study(StudyConfig(n_lo=1, n_hi=2, functions=("const",)))
    assert all(r["gap"] == 0 for r in rep.rows)
    assert rep.passed and rep.proxy_depth == 5


def test_energy_report_exports():
    rep = energy_study(StudyConfig(n_lo=1, n_hi=2, functions=("coord-x",), A=1.0))
    csv = rep.to_csv()
    lines = [ln for ln in csv.splitlines() if not ln.startswith("#")]
    assert lines[0] == "level,function,quantity,value,reference,gap" and len(lines) == 3
    js = rep.to_json()
    assert js["schema"] == 1 and js["proxy_depth"] == 5
    assert json.loads(json.dumps(js)) == js
    assert rep.to_svg().startswith("<svg") and "polyline" in rep.to_svg()
    assert set(rep.extra["parts"]["coord-x"]) == {"1", "2"}


def test_energy_deterministic():
    cfg = StudyConfig(n_lo=1, n_hi=2, functions=("abs-sum",))
    assert energy_study(cfg).to_csv() == energy_study(cfg).to_csv()


# -- measure ------------------------------------------------------------------

def test_measure_study():
    rep = measure_study(StudyConfig(n_lo=1, n_hi=5, functions=("const", "coord-x", "abs-sum")))
    assert rep.verdicts["const:zero_gaps"]
    assert rep.verdicts["coord-x:ks_norm_decreasing"]
    assert rep.verdicts["abs-sum:ks_norm_decreasing"]
    _, g = rep.series("integral", "abs-sum")
    assert strictly_decreasing(g)
    assert "reference not converged" not in rep.flags


# -- superposition ------------------------------------------------------------

def test_superposition_dirichlet_part(level):
    rep = superposition_study(StudyConfig(n_lo=1, n_hi=3, functions=("coord-x", "const")))
    lv, d = rep.series("D_n", "coord-x", key="value")
    for n, v in zip(lv, d):
        assert v == pytest.approx(level(n).area(), rel=1e-12)
    assert all(b > a for a, b in zip(d, d[1:]))
    assert rep.verdicts["const:zero_energy"]


@pytest.mark.slow
def test_superposition_product():
    rep = superposition_study(StudyConfig(n_lo=1, n_hi=4, functions=("product-xy",)))
    assert rep.verdicts["product-xy:E_gap_decreasing"]


# -- stability ----------------------------------------------------------------

def test_elliptic_constants_zero_gap():
    cfg = StudyConfig(n_lo=1, n_hi=3, lam=2.0)
    rep = elliptic_stability_study(cfg, EllipticProblem(2.0, _const(2 * 1.5), _const(2 * 1.5)))
    gaps = [r["gap"] for r in rep.rows if r["gap"] is not None]
    assert max(gaps) < 1e-9


def test_elliptic_boundary_source():
    cfg = StudyConfig(n_lo=1, n_hi=3)
    rep = elliptic_stability_study(cfg, EllipticProblem(1.0, _const(0), test_function("coord-x")))
    _, tg = rep.series("trace_gap")
    assert strictly_decreasing(tg)


def test_parabolic_constant_profiles(level):
    cfg = StudyConfig(n_lo=1, n_hi=3)
    rep = parabolic_stability_study(cfg, ParabolicProblem(1.0, _const(1.0), 0.01, 0.1, (0.1,)))
    _, g = rep.series("cauchy_gap")
    assert max(g) < 1e-9
    lv, norms = rep.series("final_norm", key="value")
    # ||c||_M^2 = c^2 (area + mu_n mass), so normalized profiles coincide across levels
    prof = [v / math.sqrt(level(n).area() + 1) for n, v in zip(lv, norms)]
    assert max(prof) - min(prof) < 1e-9


# -- ks distance --------------------------------------------------------------

def test_ks_distance_examples(mu, averaged):
    P = mu.arc_points(6)
    m3 = averaged(3)
    ext_x = lambda x: x[:, 0]
    assert ks_strong_distance(P, P[:, 0], 1.0, m3, ext_x) == pytest.approx(0, abs=3.0 ** -6)
    d = ks_strong_distance(P, P[:, 0], 1.0, m3, lambda x: x[:, 0] + 0.1)
    assert d == pytest.approx(0.1, abs=3.0 ** -6)


def test_ks_distance_own_extension(mu, averaged):
    from fractal_forms.forms import lipschitz_extension
    P = mu.arc_points(5)
    v = test_function("radial")(P)
    ext = lipschitz_extension(P, v, 1.0)
    assert ks_strong_distance(P, v, 1.0, averaged(2), ext) == 0
