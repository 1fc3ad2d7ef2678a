"""Numerical toolkit for thin elastic plates under dead loads.

Grids and quadrature, the load functional and its optimal rotations, the
Von Karman and Kirchhoff energies, isometric embeddings of developable
profiles, and stability diagnostics for the limiting total energies.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403,E402
from .grid import Grid2D, ScalarField2D, VectorField2D, Field3D, integrate  # noqa: E402
from .loads import Load, MomentMatrix, Coefficients, moment_matrix, coefficients, normalize_mean  # noqa: E402
from .rotations import (  # noqa: E402
    SkewMatrix,
    OptimalRotationSet,
    classify_optimal_set,
    exp_skew,
    log_rotation,
    maximize_F,
    project_to_set,
)
from .elasticity import (  # noqa: E402
    ElasticModel,
    AdmissibleQuadruplet,
    energy_vk,
    energy_kl,
    total_vk,
    total_kl,
    energy_h3d,
    scaling_study,
)
from .isometries import isometric_embedding, solve_u_linearized, sigmoid_ridge  # noqa: E402
from .catalog import make_load  # noqa: E402
from .stability import (  # noqa: E402
    affine_certificate,
    s2_affine_test,
    s2_probe,
    s1_probe,
    minimize_total_vk,
    divergence_probe,
    analyze_stability,
)
