"""Sketch-preconditioned Riemannian optimization on generalized Stiefel
manifolds, with CCA and FDA solvers built on top."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DefinitenessError,
    DimensionError,
    GeometryError,
    LineSearchError,
    ParseError,
    RankDeficiencyError,
    SingularPreconditionerError,
    StiefelSketchError,
)
from .linops import CrossOperator, DataMatrix, GramOperator, ProductCounter
from .sketching import (
    CountSketchTransform,
    Preconditioner,
    build_dominant_subspace_preconditioner,
    build_exact_preconditioner,
    build_sketched_preconditioner,
    effective_dimension,
    load_preconditioner,
    recommended_sketch_size,
    save_preconditioner,
    sketch_apply,
    sketch_apply_compact,
)
from .geometry import GenStiefelGeometry, ProductGeometry
from .optim import ConvergenceTrace, Problem, SolverOptions, armijo_linesearch, riemannian_cg, riemannian_trust_region
from .cca import CcaProblem, CcaSolution, exact_cca, kappa_star_cca, solve_cca, solve_cca_sketched
from .fda import FdaProblem, compute_scatter_factors, exact_fda, kappa_star_fda, solve_fda, solve_fda_sketched
from .diagnostics import (
    HessianSpectrumReport,
    closed_form_cca_spectrum,
    closed_form_fda_spectrum,
    materialize_hessian,
    pencil_condition,
    suboptimality,
)
