"""Streaming robust subspace tracking.

Each incoming vector ``y_t = ℓ_t + x_t (+ v_t)`` is split into a sparse
outlier ``x̂_t`` and a vector ``ℓ̂_t`` lying near a slowly changing
``r``-dimensional subspace, whose estimate is refreshed from windows of past
``ℓ̂_t`` and re-estimated after detected changes.
"""

from .errors import (ConvergenceError, DegenerateGapWarning, DegenerateSubspaceError,
                     DimensionMismatchError, NorstError, ParseError, SingularSupportError)
from .experiments import (ExperimentConfig, desk_profile, paper_profile, run_experiment, run_phase_transition,
                          run_trial, run_xmin_sweep)
from .fileio import load_estimates, load_scenario, read_matrix, save_estimates, save_scenario, write_matrix
from .geometry import (coherence, orthonormalize, ric_of_projector, rotate_subspace, sin_theta_max,
                       subspace_diag, top_r_left_singular_vectors)
from .initialization import InitConfig, init_altproj_lite, init_oracle, init_random_orthogonal, initialize
from .metrics import MetricsReport, compute_metrics
from .missing import MaskedFrame, coherence_gate, mc_process_frame, mc_run
from .scenario import (CoeffModel, Scenario, ScenarioConfig, SupportModel, gen_magnitudes, gen_scenario,
                       max_outlier_frac_col, max_outlier_frac_row)
from .sparse import ProjectedObservation, l1_min_noisy, ls_debias, projected_cs_step, threshold_support
from .tracker import (FrameEstimate, Phase, TrackerParams, TrackerState, compute_detection_stat,
                      new_tracker, offline_smooth, process_frame, process_frame_known_changes, run,
                      smooth_state, suggest_params)

__version__ = "0.1.0"

__all__ = [
    "CoeffModel", "ConvergenceError", "ExperimentConfig", "MetricsReport", "compute_metrics", "desk_profile",
    "load_estimates", "load_scenario", "paper_profile", "read_matrix", "run_experiment", "run_phase_transition",
    "run_trial", "run_xmin_sweep", "save_estimates", "save_scenario", "write_matrix", "DegenerateGapWarning", "DegenerateSubspaceError",
    "DimensionMismatchError", "FrameEstimate", "InitConfig", "MaskedFrame", "NorstError", "ParseError",
    "Phase", "ProjectedObservation", "Scenario", "ScenarioConfig", "SingularSupportError", "SupportModel",
    "TrackerParams", "TrackerState", "coherence", "coherence_gate", "compute_detection_stat",
    "gen_magnitudes", "gen_scenario", "init_altproj_lite", "init_oracle", "init_random_orthogonal",
    "initialize", "l1_min_noisy", "ls_debias", "max_outlier_frac_col", "max_outlier_frac_row",
    "mc_process_frame", "mc_run", "new_tracker", "offline_smooth", "orthonormalize", "process_frame",
    "process_frame_known_changes", "projected_cs_step", "ric_of_projector", "rotate_subspace", "run",
    "sin_theta_max", "smooth_state", "subspace_diag", "suggest_params", "threshold_support",
    "top_r_left_singular_vectors",
]
