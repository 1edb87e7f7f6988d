"""Partly smooth set-valued operators as computable objects.

Structured value sets, active-manifold descriptors, concrete operators
with resolvents and calculus combinators, local-union identification
geometry, first-order solvers with identification monitors, and a CLI
that reproduces the reference experiments at desk scale.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    EmptyDomainError,
    InvalidSetError,
    NoClosedFormError,
    NotOnManifoldError,
    PsssoError,
)
from .identification import (
    IdentificationReport,
    error_series,
    fb_predicted_steps,
    first_identification,
    predicted_steps_finite_length,
    predicted_steps_linear,
)
from .local_geometry import (
    LocalUnionSpec,
    brute_force_radius,
    identification_radius,
    interior_inclusion_check,
    union_membership,
)
from .manifolds import (
    AffineSubspace,
    FixedRank,
    FixedSupport,
    ManifoldDesc,
    ProductManifold,
    enlarge_manifold,
    manifold_from_json,
    sample_on_manifold,
)
from .operators import (
    LinearPrecompose,
    LocalizedOperator,
    NormalConeBox,
    PartlySmoothOperator,
    Perturbed,
    ProductOp,
    SmoothMap,
    SubdiffL0,
    SubdiffL1,
    SubdiffNuclear,
    SumOp,
    check_continuity_along_manifold,
    localize,
)
from .sets import (
    AffinePlusBox,
    BoxProduct,
    Singleton,
    SpectralSet,
    StructuredSet,
    set_from_json,
    span_dimension,
)
from .solvers import (
    CompositeProblem,
    SolverTrace,
    StepSchedule,
    fb_rate_params,
    generate_lasso,
    run_fb,
    run_prox_sgd,
)
