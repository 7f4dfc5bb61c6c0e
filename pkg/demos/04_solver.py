"""Finite elements with a non-local boundary term: elliptic and parabolic problems."""
# %%
import numpy as np

from fractal_forms import (BoundaryMeasure, EllipticProblem, FormSpec, ParabolicProblem,
                           SnowflakeCurve, assemble_system, build_averaged, build_level,
                           estimate_constants, solve_elliptic, step_parabolic, test_function,
                           triangulate)
from fractal_forms.forms import BoundaryFunction

curve = SnowflakeCurve()
mu = BoundaryMeasure(curve)
n = 2
lvl = build_level(curve, n)
mesh = triangulate(lvl, 1 / 9)
print(f"mesh: {mesh.n_nodes} nodes, {len(mesh.triangles)} triangles")
system = assemble_system(mesh, build_averaged(mu, lvl),
                         FormSpec.for_level(curve, estimate_constants(curve), n), lam=1.0)

# %% Elliptic problem lambda u - Laplace u = f with the non-local boundary condition
one = BoundaryFunction(lambda p: np.ones(len(p)), 0.0, "one")
zero = BoundaryFunction(lambda p: np.zeros(len(p)), 0.0, "zero")
sol = solve_elliptic(system, EllipticProblem(1.0, one, zero))
print(f"u in [{sol.u.min():.4f}, {sol.u.max():.4f}], CG iterations {sol.iterations}, "
      f"residual {sol.residual:.1e}")

# %% Constants solve the problem exactly when f = lambda c and g = c
c = BoundaryFunction(lambda p: np.full(len(p), 2.0), 0.0, "two")
print("max |u - 1| for f = g = 2, lambda = 2:",
      float(abs(solve_elliptic(system, EllipticProblem(2.0, c, c)).u - 1).max()))

# %% Heat flow with the dynamic boundary condition: implicit Euler is dissipative
traj = step_parabolic(system, ParabolicProblem(1.0, test_function("coord-x"), 0.005, 0.1, (0.05, 0.1)))
print("norm at t = 0, 0.05, 0.1:", traj.norms[0], traj.norms[10], traj.norms[-1])
print("every step decreases the norm:", bool(np.all(np.diff(traj.norms) <= 0)))
