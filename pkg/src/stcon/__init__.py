"""Distributed Riemannian consensus on the Stiefel manifold.

Library, simulator and CLI for consensus of N agents holding orthonormal
frames: manifold primitives, doubly stochastic mixing matrices and their
spectral profiles, the multi-step Riemannian consensus iteration in
matrix and message-passing modes, a Euclidean projected-gradient
baseline, and numerical verification of the governing inequalities.
"""

from .analysis import (
    CheckResult,
    RateEstimate,
    RegionParams,
    RsiReport,
    check_descent,
    check_euclidean_rsi,
    check_grad_bounds,
    check_key_relation,
    check_mean_iam,
    check_polar_perturbation,
    check_rsi,
    check_tv_bound,
    classify_critical,
    estimate_rate,
    fd_gradient_check,
    h_value,
    phi_value,
    region_membership,
)
from .consensus import (
    ConvergenceTrace,
    GradientField,
    NetworkState,
    RunConfig,
    RunResult,
    RunStatus,
    drcs_step,
    euclidean_grad_onestep,
    euclidean_pgd_step,
    multistep_grad,
    resolve_alpha,
    riemannian_grad,
    run_drcs,
    run_euclidean_pgd,
)
from .manifold import (
    DegenerateMeanError,
    StiefelPoint,
    TangentVector,
    dist_inf,
    dist_sq,
    euclidean_mean,
    iam,
    normal_project,
    polar_retract,
    qr_retract,
    random_stiefel,
    stiefel_project,
    tangent_project,
)
from .message_passing import NodeNetwork, node_sim_run
from .network import (
    GraphSpec,
    MixingMatrix,
    NotConnectedError,
    SpectralProfile,
    complete_matrix,
    lazy,
    load_edge_list,
    matrix_power,
    metropolis_matrix,
    min_multistep_t,
    multistep_lower_bound,
    ring_matrix,
    spectral_profile,
    validate,
)

__version__ = "0.1.0"
