"""Numerical laboratory for epsilon-geodesics and Monge-Ampere fiber families.

Everything lives on the flat torus R/Z: a background density w = 1 + D2 psi,
potentials as periodic nodal fields, and paths of potentials on a uniform
time grid over [0, 1].  The package solves the epsilon-geodesic equation
(w + F_xx) F_ss - F_xs^2 = eps w, the fiberwise Aubin-type equation
theta + beta + D2 phi = eps^{-1} e^phi w, evaluates the Mabuchi-type
functionals along the solved paths, and verifies the structural facts
(uniform bounds, convexity, entropy semicontinuity, the curvature identity)
as quantified pass/fail properties with negative controls.

Module map: ``model`` grids and discrete calculus, ``regularize``
mollification, ``geodesic`` the path solver and its Legendre-duality
oracle, ``ma_fiber`` the fiber equation and family sweeps, ``functionals``
energies and traces, ``verify`` the property suite, ``config``/``cli``
the batch driver.
"""

from .config import ExperimentConfig, load_config, load_schema, parse_config, validate_against_schema
from .errors import (
    ConfigError,
    FamilyMismatch,
    IncompatibleMass,
    InteriorTooThin,
    KGeoError,
    NegativeDensity,
    NoConvergence,
    NonAdmissiblePsi,
    NonConvexInput,
    NotASolution,
    PositivityLoss,
    SingularSystem,
    SkippedHypothesis,
)
from .functionals import (
    DdcReport,
    FunctionalTrace,
    TruncationSpec,
    ddc_energy_check,
    delta_A,
    energy,
    energy_alpha,
    entropy,
    mabuchi,
    mabuchi_eps_A,
    mabuchi_k,
    second_differences,
    truncated_entropy,
)
from .geodesic import (
    EpsGeodesic,
    EpsGeodesicProblem,
    eval_geodesic_residual,
    initial_guess,
    legendre_oracle,
    solve_eps_geodesic,
    weak_geodesic,
)
from .ma_fiber import (
    BoundReport,
    ConvergenceReport,
    FiberFamily,
    FiberProblem,
    FiberSolution,
    VanishingReport,
    check_bounds,
    comparison_defect,
    default_test_set,
    density_convergence,
    eps_phi_vanishing,
    family_report,
    fiber_residual,
    mass_identity_gap,
    max_principle_gap,
    solve_aubin_fiber,
    solve_family,
    solve_yau,
    stability_constant,
)
from .model import (
    Background,
    PathField,
    PeriodicField,
    ReducedHessian,
    SpatialGrid,
    first_derivative,
    fourier_field,
    integrate,
    is_admissible,
    make_background,
    metric_density,
    path_d1s,
    path_d1x,
    path_d2s,
    path_d2x,
    path_dxds,
    reduced_hessian,
    second_derivative,
)
from .regularize import (
    MollifierSpec,
    gaussian_kernel,
    gaussian_multiplier,
    mollify,
    mollify_fiberwise,
    mollify_spacetime,
    neighborhood_drop_constant,
    semipositivity_constant,
)
from .verify import (
    CURVATURE_KAPPA,
    SUITES,
    DensitySequence,
    PropertyResult,
    SuiteData,
    boundary_continuity_refinement,
    convexity_inequality_k,
    curvature_levels,
    ddc_property,
    ddc_test_function,
    delta_a_closed_form,
    density_convergence_property,
    density_entropy,
    density_limit_report,
    density_truncated_entropy,
    entropy_semicontinuity,
    eps_curvature_identity,
    eps_geodesic_residual_c,
    eps_vanishing_property,
    family_bounds_property,
    mabuchi_convexity_and_continuity,
    mabuchi_eps_A_almost_convex,
    mass_pairing_property,
    max_subharmonic_lemma,
    mollified_sequence,
    omega_mask_report,
    oscillation_sequence,
    random_density_sequence,
    run_suite,
    subharmonic_test_fields,
    truncated_semicontinuity,
    truncated_semicontinuity_sweep,
)

__version__ = "0.1.0"
