"""Value-of-information event triggering for a networked LQG control loop.

A sensor-side event trigger decides, step by step, whether to pay for a
transmission over a costly one-step-delay channel feeding a
certainty-equivalent LQR controller. The library provides the exact MMSE
estimators under random processing delay, the age-of-information recursions,
the Riccati/LQR backbone, two backward dynamic programs that price each
transmission (path-dependent on the estimation mismatch, or restricted to
the age pair), a vectorized Monte Carlo harness, and brute-force oracles for
tiny instances.
"""

from .aoi import INFINITE_AGE, AoiState, update_eta, update_zeta, zeta_transition_probs
from .estimation import (
    ModelPowers,
    NoiseSumCov,
    controller_update,
    error_recursion,
    mismatch_closed_form,
    noise_sum_cov,
    trigger_mmse,
)
from .lqr import LqrSchedule, control_input, solve_riccati
from .model import (
    DelayModel,
    ModelError,
    SystemModel,
    load_model,
    model_from_config,
    sample_delay,
    sample_noise,
    sample_output,
    step_dynamics,
)
from .oracle import OracleReport, OracleSizeError, oracle_path, oracle_restricted
from .policies import (
    AlwaysOn,
    AoiThreshold,
    Never,
    OneSidedMismatch,
    PathVoiPolicy,
    Periodic,
    RestrictedVoiPolicy,
    TriggerPolicy,
    decide,
)
from .simulate import (
    BatchRun,
    LossReport,
    SignalingReport,
    TrajectoryRecord,
    audit_batch,
    evaluate,
    loss_samples,
    run_batch,
    run_trajectory,
    signaling_residual_check,
    sweep,
)
from .solver import (
    PathValueTable,
    RestrictedValueTable,
    default_grid_halfwidth,
    load_table,
    save_table,
    solve_path_dp,
    solve_restricted_dp,
    threshold_crossings,
    threshold_extract,
)

__version__ = "0.1.0"
