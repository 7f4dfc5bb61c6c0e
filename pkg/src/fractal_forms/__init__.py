"""Non-local boundary energy forms on snowflake domains and their pre-fractal approximations."""
import os as _os

# FRACTAL_FORMS_THREADS caps numba and BLAS threads; it must act before numpy loads
_threads = _os.environ.get("FRACTAL_FORMS_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("NUMBA_NUM_THREADS", "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ[_var] = _threads

from .geometry import (ArcAddress, GeometryConstants, PolygonalLevel, SnowflakeCurve,  # noqa: E402
                       arc_walk_partition, build_level, estimate_constants, hausdorff_distance,
                       is_simple, scale_radius, symmetric_difference_area)
from .measures import (AveragedMeasure, BoundaryMeasure, ScalingReport, build_averaged,  # noqa: E402
                       integrate_fractal, integrate_prefractal, mu_ball, mun_ball, verify_scaling,
                       weak_convergence_gap)
from .forms import (BoundaryFunction, EnergyValue, FormSpec, apply_generator,  # noqa: E402
                    eval_Q_fractal, eval_Q_prefractal, generator_pairing, lipschitz_extension,
                    test_function)
from .solver import (AssembledSystem, EllipticProblem, ParabolicProblem, TriMesh,  # noqa: E402
                     assemble_boundary, assemble_dirichlet, assemble_mass, assemble_system,
                     solve_elliptic, step_parabolic, triangulate)
from .convergence import (StudyConfig, StudyReport, elliptic_stability_study,  # noqa: E402
                          energy_study, ks_strong_distance, measure_study,
                          parabolic_stability_study, superposition_study)

__version__ = "0.1.0"
