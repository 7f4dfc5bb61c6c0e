"""Convergence and stability studies across polygon levels, with exportable reports."""
# %%
from fractal_forms import (StudyConfig, elliptic_stability_study, energy_study, measure_study,
                           parabolic_stability_study)

# %% Energies of u = x on levels 1..3 against a fractal reference (small cutoff A = 1)
rep = energy_study(StudyConfig(n_lo=1, n_hi=3, A=1.0))
for row in rep.rows:
    print(f"n={row['level']}: Q_n = {row['value']:.5f}, gap {row['gap']:.4f}")
print("verdicts:", rep.verdicts)

# %% Integrals and extension-based norms converge as well
print(measure_study(StudyConfig(n_lo=1, n_hi=3)).verdicts)

# %% Solutions on consecutive levels compared on a common set of interior and boundary points
ell = elliptic_stability_study(StudyConfig(n_lo=1, n_hi=3))
print("elliptic Cauchy gaps:", [round(g, 5) for _, g in zip(*ell.series("cauchy_gap", "solution", key="gap"))])
par = parabolic_stability_study(StudyConfig(n_lo=1, n_hi=2))
print("parabolic verdicts:", par.verdicts, "flags:", par.flags)

# %% Reports export to CSV, JSON and SVG
print(rep.to_csv().splitlines()[0])
with open("energy_study.svg", "w") as fh:
    fh.write(rep.to_svg())
