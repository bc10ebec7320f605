"""Quantum renewal processes.

Construction, propagation and certification of piecewise quantum dynamics
in which semigroup evolution is interrupted by CPT jump channels at
renewal-distributed times, including modified (first-k or last-k) waiting
time sequences and both factor orderings of the resulting memory-kernel
master equations.
"""

from .errors import (
    ContourNonconvergence,
    DimensionMismatch,
    IllConditionedEigenbasis,
    KrausNotTracePreserving,
    NegativeTime,
    NotTracePreservingGenerator,
    ParseError,
    PoleAtU,
    QRenewalError,
    QuadratureFailure,
    RenewalPole,
    SingularResolvent,
    TruncationTooLoose,
    ValidationError,
    ZeroSurvival,
)
from .laplace import (
    LaplaceMapFamily,
    MatrixFunction,
    Ordering,
    RenewalSpec,
    Side,
    identity_fs_check,
    inhom_hat_inverse,
    inhom_hat_modified,
    invert_laplace,
    kernel_hat_modified,
    kernel_hat_modified_k1,
    kernel_hat_reference,
    kernel_hat_semimarkov,
    map_family,
    map_hat,
    map_hat_inverse_order,
    map_hat_modified,
    map_hat_reference,
    map_hat_semimarkov,
    matfun,
)
from .legitimacy import (
    CheckReport,
    check_cpt_grid,
    check_fs_identity,
    check_induction_a3,
    check_inhomogeneous_relation,
    check_kernel_duality,
    check_normalization,
    run_default_suite,
)
from .superop import (
    CptReport,
    DensityMatrix,
    LindbladGenerator,
    SpectralData,
    SuperOp,
    amplitude_damping,
    apply,
    certify_cpt,
    choi,
    compose,
    dephasing_channel,
    hermitian_basis,
    identity_superop,
    pauli_decay_generator,
    pauli_x_channel,
    semigroup,
    spectral_decompose,
    superop_from_kraus,
    superop_from_lindblad,
)
from .trajectory import (
    EnsembleResult,
    Trajectory,
    dyson_series,
    monte_carlo,
    propagate_trajectory,
    sample_trajectory,
)
from .wtd import (
    ModifiedWtdSequence,
    SemiMarkovSpec,
    WaitingTime,
    classical_kernel_hat,
    jump_count_probs,
    jump_count_probs_adaptive,
    laplace_pdf,
    laplace_survival,
    pdf,
    sample,
    semi_markov_T,
    semi_markov_T_hat,
    sprinkling_hat,
    sprinkling_hat_modified,
    survival,
)

__version__ = "0.1.0"
