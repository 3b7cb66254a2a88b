"""Kernel partial least squares with consistent early stopping.

Kernel PLS is run as conjugate gradients on the kernel normal equation.
Two data-driven stopping rules are provided: one that propagates an
observable bound on the distance to the population iterate, and one based
on a pseudo-condition number of the Krylov matrices. A discrete population
oracle makes the population-level quantities exactly computable.
"""

__version__ = "0.1.0"

from .cg import CgTrace, ExitReason, conjugate_gradient, fit_cg, krylov_basis_dim, make_context, predict
from .complexity import KrylovBundle, build_krylov, closed_form_g, complexity, stopping_rule_2
from .data import ClipPolicy, Dataset, preprocess, read_csv
from .errors import (
    BoundsError,
    ConfigError,
    ContextMismatchError,
    KplsError,
    ParameterError,
    SingularityError,
    SizeError,
    UndefinedBound,
)
from .kernels import KernelSpec, eval_kernel, gram_matrix, median_heuristic
from .model import KplsModel, load_model, save_model
from .monitor import epsilon_n, monitor_step, stopping_rule_1, xi, xi_prime, zeta
from .population import (
    PopulationModel,
    consistency_experiment,
    default_model,
    l2_error,
    pca_truncation,
    population_cg,
    sample,
    dominance_check,
)
from .rkhs import OperatorContext, RkhsElement, apply_S, evaluate, h_inner, h_norm, tstar_apply

__all__ = [name for name in dir() if not name.startswith("_")]
