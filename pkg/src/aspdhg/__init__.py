"""Stochastic primal-dual hybrid gradient solvers with adaptive step-size
control, plus a TV-regularized tomography benchmark and experiment harness."""

from .control import (ControlSchedule, Feedback, FeasibilityReport,
                      FixedController, RuleAController, RuleBController,
                      StepSizeState, adaptivity_budget, audit_quasi_increase,
                      gamma_clamp, initial_steps, make_controller,
                      paper_mode_control, rule_a_step, rule_b_step,
                      validate_init)
from .diag import (MetricBlock, jacobi_eigvals, metric_min_eig,
                   ratio_stabilization, reference_solution,
                   relative_suboptimality, summarize_run)
from .linop import (BlockPartition, IdentityMap, LinearMap, MatrixMap,
                    StackedMap, estimate_norm, forward_diff_1d, from_csv,
                    grad_2d, partition_interleaved)
from .problem import (NoiseSpec, Phantom, SaddleProblem, add_noise,
                      bp_warm_start, build_tv_ct, full_norm, full_operator,
                      objective, phantom_disks, preset_geometry)
from .prox import (ProxFn, prox_conj_l1, prox_conj_sq_l2, prox_l1,
                   prox_primal, prox_sq_l2)
from .solver import (ASPDHG, ConsistencyError, DivergenceError, IterationTrace,
                     RunResult, compute_d_subsampled, compute_vd, compute_w,
                     run, sample_index)
from .tomo import ProjectorMap, toy_projector, trace_ray

__version__ = "0.1.0"

__all__ = [
    "ASPDHG",
    "BlockPartition",
    "ConsistencyError",
    "ControlSchedule",
    "DivergenceError",
    "FeasibilityReport",
    "Feedback",
    "FixedController",
    "IdentityMap",
    "IterationTrace",
    "LinearMap",
    "MatrixMap",
    "MetricBlock",
    "NoiseSpec",
    "Phantom",
    "ProjectorMap",
    "ProxFn",
    "RuleAController",
    "RuleBController",
    "RunResult",
    "SaddleProblem",
    "StackedMap",
    "StepSizeState",
    "add_noise",
    "adaptivity_budget",
    "audit_quasi_increase",
    "bp_warm_start",
    "build_tv_ct",
    "compute_d_subsampled",
    "compute_vd",
    "compute_w",
    "estimate_norm",
    "forward_diff_1d",
    "from_csv",
    "full_norm",
    "full_operator",
    "gamma_clamp",
    "grad_2d",
    "initial_steps",
    "jacobi_eigvals",
    "make_controller",
    "metric_min_eig",
    "objective",
    "paper_mode_control",
    "partition_interleaved",
    "phantom_disks",
    "preset_geometry",
    "prox_conj_l1",
    "prox_conj_sq_l2",
    "prox_l1",
    "prox_primal",
    "prox_sq_l2",
    "ratio_stabilization",
    "reference_solution",
    "relative_suboptimality",
    "rule_a_step",
    "rule_b_step",
    "run",
    "sample_index",
    "summarize_run",
    "toy_projector",
    "trace_ray",
    "validate_init",
    "__version__",
]
