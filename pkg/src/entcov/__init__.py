"""Entropic covariance models: spectral links, Bregman estimators and inference."""

__version__ = "0.1.0"

from .breg import KktReport, bregman, bregman_dual, kkt_residual, objective, objective_gradient
from .errors import *  # noqa: F401,F403
from .mixed import EntryPartition, corr_from_offdiag, entry_constraint, solve_mixed, two_step_fit
from .model import (
    AffineSubspace,
    GraphSpec,
    contains_identity,
    coordinate_subspace,
    equicorrelation_subspace,
    is_jordan_algebra,
    project,
    row_sum_subspace,
    smat,
    subspace_from_graph,
    subspace_from_spec,
    svec,
)
from .solve import (
    FitResult,
    SolveOptions,
    Status,
    fit,
    fit_bregman_projection,
    fit_dual_pgd,
    fit_jordan_closed_form,
    fit_primal_pgd,
    line_search_1d,
    pd_completion,
)
from .specfun import (
    LinkFunction,
    LinkKind,
    SymMatrix,
    apply_matrix_function,
    dgrad_conjugate,
    link_conjugate_value,
    link_gradient,
    link_hessian,
    link_inverse_gradient,
    link_value,
    parse_link,
)
