"""Snowflake polygons, their areas and how fast they approach the limit domain."""
# %%
import numpy as np

from fractal_forms import (SnowflakeCurve, arc_walk_partition, build_level, estimate_constants,
                           hausdorff_distance, is_simple, symmetric_difference_area)

curve = SnowflakeCurve()  # p = q = 1/3, the classical Koch snowflake
for n in range(5):
    lvl = build_level(curve, n)
    print(f"level {n}: {lvl.n_edges:5d} edges of length {lvl.edge_lengths[0]:.6f}, "
          f"area {lvl.area():.6f}, simple {is_simple(lvl.vertices)}")

# %% Geometry constants: bounded turning S, doubling-type M, diameter, walk parameter theta
const = estimate_constants(curve)
print(const)

# %% The polygons fill in the limit domain geometrically fast
fine = build_level(curve, 7)
for n in range(4):
    lvl = build_level(curve, n)
    print(f"n={n}: Hausdorff {hausdorff_distance(lvl, fine):.5f}, "
          f"symmetric difference {symmetric_difference_area(lvl, fine):.5f}")

# %% Arc walk: inscribe a polygon with edges of one prescribed length
poly = arc_walk_partition(build_level(curve, 6).vertices, const.theta, 0.2)
print(f"{poly.n_edges} edges, interior lengths in "
      f"[{poly.edge_lengths[:-1].min():.5f}, {poly.edge_lengths[:-1].max():.5f}], "
      f"closing edge {poly.edge_lengths[-1]:.4f} ({poly.meta['closing']})")

# %% Mixed scale factors give a different quasicircle with the same combinatorics
mixed = build_level(SnowflakeCurve(p=0.4, q=0.3, omega=(0.4, 0.3, 0.3)), 3)
print("mixed level 3 edge lengths:", np.unique(np.round(mixed.edge_lengths, 12)))
