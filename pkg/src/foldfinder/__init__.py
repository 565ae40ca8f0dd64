"""Fold-point finder for sublinear-plus-superlinear Dirichlet systems."""

from .errors import (ConeError, ConvergenceError, FiberEmptyError,
                     FoldFinderError, GridMismatchError,
                     IndefiniteOperatorError, NoFoldError, SigmaError,
                     SingularBorderError)
from .mesh import (Grid, apply_laplacian, build_grid, inner_product,
                   interval_eigenvalue, norm, principal_laplacian_eigenvalue)
from .linalg import (LinearOperator, smallest_eigenpair, solve_bordered,
                     solve_counter, solve_spd)
from .model import (HypothesisReport, ModelSpec, abc_model, coupled_model,
                    eval_G, eval_g, eval_g_jacobian, make_model,
                    validate_hypotheses, zero_model)
from .energy import (FiberExpansion, State, fiber, fiber_expansion,
                     hessian_operator, make_state, phi, phi_grad,
                     rayleigh_direction_descent, rayleigh_ext,
                     rayleigh_ext_grad_v, rayleigh_nl)
from .spectrum import StabilityResult, is_stable, stability_index, \
    stability_tolerance
from .nehari import (SolveReport, newton_solve, project_nehari, solve_nehari,
                     solve_nehari_multistart, solve_sublinear, sublinear_state)
from .cw import CwCandidate, cw_ascend, cw_value, upper_bound_lambda
from .fold import (Branch, BranchRecord, FoldDetection, FoldPoint,
                   continue_branch, detect_fold, find_fold_direct,
                   fold_from_candidate, moore_spence_solve)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
