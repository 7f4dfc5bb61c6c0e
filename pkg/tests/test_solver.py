import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from fractal_forms.forms import FormSpec, eval_Q_prefractal, test_function
from fractal_forms.geometry import PolygonalLevel
from fractal_forms.measures import integrate_prefractal
from fractal_forms.solver import (AssembledSystem, EllipticProblem, ParabolicProblem, SolverError,
                                  TriMesh, assemble_boundary, assemble_dirichlet, assemble_mass,
                                  assemble_system, mesh_json, read_solver_config, solution_csv,
                                  solve_elliptic, step_parabolic, trace_function, triangulate,
                                  write_trajectory)

# shared-node differences of the f = 1 solution on level 2 for h = 1/9, 1/18, 1/36
REFINE_DIFF = (6.04e-4, 2.17e-4)


@pytest.fixture(scope="module")
def sys2(curve, constants, level, averaged):
    mesh = triangulate(level(2), 1 / 9)
    return assemble_system(mesh, averaged(2), FormSpec.for_level(curve, constants, 2), 1.0)


def _const(c):
    return lambda x: np.full(len(x), float(c))


# -- meshes -------------------------------------------------------------------

def test_triangle_mesh(level):
    m = triangulate(level(0), 1.0)
    assert len(m.triangles) == 1 and m.n_nodes == 3 and len(m.boundary_loop) == 3


@pytest.mark.parametrize("n", range(4))
def test_mesh_partition_and_quality(level, n):
    lvl = level(n)
    m = triangulate(lvl, float(lvl.edge_lengths.min()))
    assert m.areas().sum() == pytest.approx(lvl.area(), abs=1e-10)
    assert np.all(m.areas() > 0)
    assert m.diameters().max() <= lvl.edge_lengths.min() * (1 + 1e-9)
    assert m.min_angle() > 15


def test_mesh_level2_half_edge(level):
    m = triangulate(level(2), 3.0 ** -2 / 2)
    assert (m.n_nodes, len(m.triangles)) == (481, 864)
    assert m.min_angle() > 10


def test_boundary_loop_follows_polygon(level):
    lvl = level(2)
    m = triangulate(lvl, 1 / 18)
    P = m.nodes[m.boundary_loop]
    assert np.all(np.diff(m.edge_of_node) >= 0)
    a, b = lvl.starts[m.edge_of_node], lvl.ends[m.edge_of_node]
    assert np.allclose(a + m.edge_param[:, None] * (b - a), P)


def test_mesh_json_schema(level):
    import json
    d = json.loads(mesh_json(triangulate(level(1), 1 / 3)))
    assert d["schema"] == 1 and len(d["triangles"]) > 0


# -- assembly -----------------------------------------------------------------

def test_unit_triangle_stiffness():
    m = TriMesh(np.array([[0, 0], [1, 0], [0, 1]], float), np.array([[0, 1, 2]]),
                np.array([0, 1, 2]), np.array([0, 1, 2]), np.zeros(3))
    K = assemble_dirichlet(m)
    x = m.nodes[:, 0]
    assert x @ K @ x == pytest.approx(0.5)
    assert np.allclose(K @ np.ones(3), 0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_stiffness_area(level, n):
    lvl = level(n)
    m = triangulate(lvl, float(lvl.edge_lengths.min()))
    K = assemble_dirichlet(m)
    x = m.nodes[:, 0]
    assert x @ K @ x == pytest.approx(lvl.area(), rel=1e-10)
    assert np.abs(K @ np.ones(m.n_nodes)).max() < 1e-12


def test_masses(sys2, level, averaged):
    one = np.ones(sys2.mesh.n_nodes)
    assert one @ sys2.M_omega @ one == pytest.approx(level(2).area(), rel=1e-12)
    assert one @ sys2.M_gamma @ one == pytest.approx(1, abs=1e-12)
    x = sys2.mesh.nodes[:, 0]
    assert one @ sys2.M_gamma @ x == pytest.approx(
        integrate_prefractal(averaged(2), lambda p: p[:, 0]), abs=1e-10)


def test_boundary_matrix_kernel(sys2):
    Q = sys2.Q
    one = np.ones(len(Q))
    assert np.abs(Q @ one).max() < 1e-10
    assert np.array_equal(Q, Q.T)
    interior = np.setdiff1d(np.arange(len(Q)), sys2.mesh.boundary_loop)
    assert not Q[interior].any()


def test_boundary_matrix_matches_form(sys2, curve, constants, averaged, mu):
    spec = FormSpec.for_level(curve, constants, 2)
    x = sys2.mesh.nodes[:, 0]
    ref = eval_Q_prefractal(spec, averaged(2), test_function("coord-x"), mu).value
    assert x @ sys2.Q @ x == pytest.approx(ref, rel=1e-6)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3))
def test_boundary_matrix_matches_trace_form(sys2, curve, constants, averaged, mu, a, b, k):
    u = np.sin(k * sys2.mesh.nodes[:, 0]) * a + b * sys2.mesh.nodes[:, 1] ** 2
    spec = FormSpec.for_level(curve, constants, 2)
    ref = eval_Q_prefractal(spec, averaged(2), trace_function(sys2.mesh, u), mu).value
    assert u @ sys2.apply_Q(u) == pytest.approx(ref, rel=1e-5, abs=1e-14)


def test_alpha_restriction(sys2, averaged):
    with pytest.raises(ValueError):
        assemble_boundary(sys2.mesh, averaged(2), FormSpec(alpha=0.8, level=2, r_n=0.01, A=1.0))


# -- solves -------------------------------------------------------------------

@given(st.floats(-3, 3), st.floats(0.2, 5))
def test_constants_are_solutions(sys2, c, lam):
    u = solve_elliptic(sys2, EllipticProblem(lam, _const(lam * c), _const(lam * c))).u
    assert np.abs(u - c).max() < 1e-10 * max(1, abs(c))


def test_zero_data(sys2):
    sol = solve_elliptic(sys2, EllipticProblem(1.0, _const(0), _const(0)))
    assert not sol.u.any() and sol.iterations == 0


def test_refinement_self_consistency(curve, constants, level, averaged):
    lvl, spec = level(2), FormSpec.for_level(curve, constants, 2)
    vals = []
    for h in (1 / 9, 1 / 18, 1 / 36):
        m = triangulate(lvl, h)
        u = solve_elliptic(assemble_system(m, averaged(2), spec, 1.0),
                           EllipticProblem(1.0, _const(1), _const(0))).u
        from scipy.spatial import cKDTree
        d, i = cKDTree(m.nodes).query(lvl.vertices)
        assert d.max() < 1e-12
        vals.append(u[i])
    d12, d23 = np.abs(vals[0] - vals[1]).max(), np.abs(vals[1] - vals[2]).max()
    assert d12 == pytest.approx(REFINE_DIFF[0], rel=0.05)
    assert d23 == pytest.approx(REFINE_DIFF[1], rel=0.05)


def test_lambda_validation(sys2):
    with pytest.raises(ValueError):
        EllipticProblem(0.0, _const(1), _const(0))
    with pytest.raises(ValueError):
        ParabolicProblem(1.0, _const(1), 0.0, 1.0)


def test_cg_failure_raises(sys2):
    with pytest.raises(SolverError):
        solve_elliptic(sys2, EllipticProblem(1.0, _const(1), _const(0)), maxiter=2)


def test_parabolic_constant_decay(sys2):
    tr = step_parabolic(sys2, ParabolicProblem(2.0, _const(1.0), 0.01, 0.1), keep="all")
    assert np.all(np.diff(tr.norms) < 0)
    # constants stay constant: u^k = (1 + lam dt)^(-k)
    k = len(tr.times) - 1
    assert np.allclose(tr.states[-1], (1 + 0.02) ** -k, rtol=1e-9)


def test_parabolic_dissipative_and_step_halving(sys2):
    fins, M = [], sys2.M
    for dt in (0.01, 0.005, 0.0025):
        tr = step_parabolic(sys2, ParabolicProblem(1.0, lambda x: x[:, 0].copy(), dt, 0.1))
        assert np.all(np.diff(tr.norms) <= 0)
        assert np.all(np.diff(tr.dissipation) >= 0)
        fins.append(tr.states[-1])
    d1, d2 = fins[0] - fins[1], fins[1] - fins[2]
    ratio = math.sqrt(d1 @ M @ d1) / math.sqrt(d2 @ M @ d2)
    assert ratio == pytest.approx(2, abs=0.15)


def test_checkpoints_stored(sys2):
    tr = step_parabolic(sys2, ParabolicProblem(1.0, _const(1), 0.01, 0.05, (0.02,)))
    assert np.allclose(tr.times, [0, 0.02, 0.05])


# -- files --------------------------------------------------------------------

def test_solution_csv_and_trajectory(sys2, tmp_path):
    text = solution_csv(sys2.mesh, np.zeros(sys2.mesh.n_nodes))
    assert text.splitlines()[0] == "node,x,y,value"
    tr = step_parabolic(sys2, ParabolicProblem(1.0, _const(1), 0.01, 0.02))
    paths = write_trajectory(tr, sys2.mesh, tmp_path)
    assert len(paths) == 2 and all(p.exists() for p in paths)


def test_read_solver_config():
    cfg = read_solver_config("level = 3  # comment\nlambda = 2\n\ndt=0.01\n")
    assert cfg == {"level": 3, "lambda": 2.0, "dt": 0.01}
    with pytest.raises(ValueError, match="line 2"):
        read_solver_config("level = 3\nspeed = 9\n")
    with pytest.raises(ValueError, match="line 1"):
        read_solver_config("level: 3\n")
