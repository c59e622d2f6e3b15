"""Local and global iteration schemes, certificates and continuation."""

from .local import LocalProblem, double_iteration_local, solve_local_variational
from .monotone import MonotoneProblem, monotone_iteration, newton_solve, verify_subsolution, verify_supersolution
from .pipelines import (PipelineConfig, beta_continuation, solve_global_negative, solve_perturbed_positive)
from .trace import Certificate, GateError, IterationError, IterationTrace

__all__ = ["LocalProblem", "double_iteration_local", "solve_local_variational", "MonotoneProblem",
           "monotone_iteration", "newton_solve", "verify_subsolution", "verify_supersolution", "PipelineConfig",
           "beta_continuation", "solve_global_negative", "solve_perturbed_positive", "Certificate", "GateError",
           "IterationError", "IterationTrace"]
