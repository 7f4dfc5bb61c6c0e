"""The self-similar boundary measure and its averaged versions on the polygons."""
# %%
import math

import numpy as np

from fractal_forms import (BoundaryMeasure, SnowflakeCurve, build_averaged, build_level,
                           estimate_constants, integrate_fractal, integrate_prefractal, mu_ball,
                           mun_ball, verify_scaling, weak_convergence_gap)

curve = SnowflakeCurve()
mu = BoundaryMeasure(curve)  # every arc of level n carries mass 4^-n / 3

# %% Averaged measures spread each arc's mass uniformly over its chord
for n in range(4):
    mun = build_averaged(mu, build_level(curve, n))
    print(f"level {n}: density {mun.densities[0]:.6f} (3^(n-1)/4^n = {3 ** (n - 1) / 4 ** n:.6f}), "
          f"total mass {mun.total_mass:.15f}")

# %% Ball measures: certified brackets on the curve, exact values on a polygon
apex = np.array([0.5, math.sqrt(3) / 2])
iv = mu_ball(mu, apex, 0.3, 8)
print(f"mu(B(apex, 0.3)) in [{iv.lo:.6f}, {iv.hi:.6f}]")
print(f"mu_4(B(apex, 0.3)) = {mun_ball(build_averaged(mu, build_level(curve, 4)), apex, 0.3):.6f}")

# %% Scaling: the curve is d-regular with d = log 4 / log 3, the polygons locally 1-regular
rep = verify_scaling(mu, n_points=12, depth=9)
print(f"fractal dimension estimate {rep.dim_pooled:.4f} vs {math.log(4) / math.log(3):.4f}")
rep3 = verify_scaling(build_averaged(mu, build_level(curve, 3)), n_points=300,
                      constants=estimate_constants(curve))
print(f"level-3 band ratio of mu_n(B)/r below the cutoff: {rep3.extra['band_ratio']:.3f}")

# %% Weak convergence of the averaged measures
phi = lambda p: p[:, 0] ** 2 + p[:, 1] ** 2
print("integral against mu:", integrate_fractal(mu, phi, 8))
for n in range(1, 5):
    mun = build_averaged(mu, build_level(curve, n))
    print(f"n={n}: {integrate_prefractal(mun, phi):.8f}, gap {weak_convergence_gap(mu, mun, phi):.2e}")
