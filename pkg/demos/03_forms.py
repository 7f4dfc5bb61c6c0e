"""Non-local boundary energies on the curve and their scale-split polygon versions."""
# %%
from fractal_forms import (BoundaryMeasure, FormSpec, SnowflakeCurve, build_averaged, build_level,
                           estimate_constants, eval_Q_fractal, eval_Q_prefractal, generator_pairing,
                           lipschitz_extension, test_function)

curve = SnowflakeCurve()
mu = BoundaryMeasure(curve)
const = estimate_constants(curve)
u = test_function("coord-x")

# %% Energy on the fractal boundary (hierarchical double quadrature at a given arc depth)
ev = eval_Q_fractal(FormSpec(alpha=1.0), mu, u, depth=6)
print(f"Q(u) on the curve ~ {ev.value:.5f} (depth-change estimate {ev.quadrature_error_estimate:.1e})")

# %% Polygon energies: short range uses the polygon's own scaling, long range the curve's
for n in (1, 2, 3):
    spec = FormSpec.for_level(curve, const, n)
    e = eval_Q_prefractal(spec, build_averaged(mu, build_level(curve, n)), u, mu)
    print(f"n={n}: Q_n(u) = {e.value:.5f} (short {e.short_part:.5f}, long {e.long_part:.5f})")

# %% The default cutoff A is large; a small cutoff exposes the split faster
for n in (1, 2, 3):
    spec = FormSpec.for_level(curve, const, n, A=1.0)
    e = eval_Q_prefractal(spec, build_averaged(mu, build_level(curve, n)), u, mu)
    print(f"A=1, n={n}: short part {e.short_part:.5f}")

# %% The generator represents the form: <-L u, u> = Q_n(u)
spec1 = FormSpec.for_level(curve, const, 1)
mun1 = build_averaged(mu, build_level(curve, 1))
print("pairing", generator_pairing(spec1, mun1, u, mu), "form", eval_Q_prefractal(spec1, mun1, u, mu).value)

# %% Lipschitz data on finitely many points extend to the whole plane
pts = mu.arc_points(2)
ext = lipschitz_extension(pts, pts[:, 0], 1.0)
print("extension reproduces x on the data:", float(abs(ext(pts) - pts[:, 0]).max()))
