"""Deflated restarted Lanczos solvers for Hermitian systems and eigenpairs.

The Galerkin driver (:func:`lan_dr`) solves Ax = b while computing
approximate eigenpairs whose deflation space speeds up later right-hand
sides through :func:`d_cg`.  The minimum-residual pair
(:func:`minres_dr`, :func:`d_minres`) covers indefinite systems, with
:func:`block_cg` as the multi-right-hand-side baseline.
"""

from ._kernels import get_backend, set_backend
from .blockcg import BlockInstabilityError, block_cg
from .core import (
    Counters,
    CsrOperator,
    DiagonalOperator,
    LinearOperator,
    Rng,
    check_hermitian,
    counters,
    orthodefect,
)
from .dcg import (
    IndefiniteOperatorError,
    SolutionCache,
    cg,
    d_cg,
    deflation_project,
)
from .harness import (
    ExperimentSpec,
    MatrixRecipe,
    builtin_experiments,
    emit,
    generate,
    make_rhs,
    run,
)
from .landr import (
    ConvergenceHistory,
    DeflationSpace,
    KrylovBasis,
    LanDrResult,
    ProjectedMatrix,
    RitzSet,
    SolverConfig,
    compute_ritz,
    continue_cycle,
    first_cycle,
    galerkin_update,
    lan_dr,
    restart,
)
from .minresdr import (
    HarmonicRitzSet,
    MinresDrResult,
    d_minres,
    harmonic_ritz,
    minres,
    minres_dr,
    minres_restart,
    minres_update,
)
from .mmio import MatrixMarketError, load_operator
from .reorth import (
    OmegaState,
    ReorthPolicy,
    parse_policy,
    policy_step,
    reorthogonalize,
)

__version__ = "0.1.0"

__all__ = [
    "BlockInstabilityError",
    "ConvergenceHistory",
    "Counters",
    "CsrOperator",
    "DeflationSpace",
    "DiagonalOperator",
    "ExperimentSpec",
    "HarmonicRitzSet",
    "IndefiniteOperatorError",
    "KrylovBasis",
    "LanDrResult",
    "LinearOperator",
    "MatrixMarketError",
    "MatrixRecipe",
    "MinresDrResult",
    "OmegaState",
    "ProjectedMatrix",
    "ReorthPolicy",
    "RitzSet",
    "Rng",
    "SolutionCache",
    "SolverConfig",
    "block_cg",
    "builtin_experiments",
    "cg",
    "check_hermitian",
    "compute_ritz",
    "continue_cycle",
    "counters",
    "d_cg",
    "d_minres",
    "deflation_project",
    "emit",
    "first_cycle",
    "galerkin_update",
    "generate",
    "get_backend",
    "harmonic_ritz",
    "lan_dr",
    "load_operator",
    "make_rhs",
    "minres",
    "minres_dr",
    "minres_restart",
    "minres_update",
    "orthodefect",
    "parse_policy",
    "policy_step",
    "reorthogonalize",
    "restart",
    "run",
    "set_backend",
]
