"""qseig: orthogonalization-free eigensolver for discretized Schrodinger operators.

Computes the N smallest eigenpairs through a quasi-orthogonal evolution
driven by the inverse operator: a Gram-preserving Cayley predictor plus an
orthogonality-contracting corrector, with every provable property of the
iteration (quasi-Stiefel preservation, monotone energy, orthogonality
contraction, exponential convergence) exposed as executable checks.
"""

from .analysis import (
    EigenReport,
    RateFit,
    closed_form_solution,
    eigenvector_error,
    energy,
    energy_unshifted,
    extract_eigenvalues,
    fit_exponential_rate,
    grad_norms,
    orthogonality_error,
    reference_subspace_iteration,
    rk4_integrate,
)
from .blockvec import combine, gram_a, gram_l2, inv_sqrt, subspace_distance_a, sym_eig
from .discretize import (
    Discretization,
    DomainSpec,
    GridSpec,
    HarmonicPotential,
    SoftCoulombPotential,
    ZeroPotential,
    apply_mass,
    apply_stiffness,
    assemble,
    estimate_lambda1,
    node_coordinates,
)
from .errors import (
    BracketNotSPD,
    ConfigError,
    DimensionMismatch,
    GapTooSmallWarning,
    GridTooSmall,
    InsufficientData,
    MissingLambda1,
    NoConvergence,
    NonFinite,
    NotPositiveDefinite,
    QseigError,
    RankDeficient,
    SingularPotential,
    SmallSolveSingular,
    TauRejected,
    ZeroReference,
)
from .greens import ConjugateGradient, DirectFactorization, InverseOperator, apply_green, prepare
from .scheme import (
    RunHistory,
    SchemeConfig,
    StepBounds,
    StepDiagnostics,
    Termination,
    bounds_from_scalars,
    cayley_step,
    compute_step_bounds,
    corrector_step,
    init_state,
    run,
    skew_apply,
    step,
)

__version__ = "0.1.0"
