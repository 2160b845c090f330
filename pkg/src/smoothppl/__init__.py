"""Typed probabilistic lambda calculus with smoothed gradient estimation.

Submodules: ``syntax`` (terms, parser, printer), ``types`` and ``checker``
(trace types and the annotated systems), ``semantics`` (measurable,
smoothed and operational evaluation), ``compiler``, ``autodiff``,
``estimators``, ``optim``, ``models``, ``quadrature``, ``experiments``.
"""

from .syntax import (ParseError, Program, SubstitutionError, alpha_equal, desugar_arith,
                     node_count, parse_program, parse_term, pretty, pretty_program, substitute)
from .types import Base, Fun, show_trace, show_type, subtype, subtype_annotated
from .checker import (TypeCheckError, check_poly, check_program, check_sgd, check_unif,
                      infer_basic, is_diffeomorphic_transform)
from .semantics import (EvaluationError, SmoothingConfig, eval_measurable, eval_operational,
                        eval_smoothed)
from .compiler import CompileError, is_first_order, smooth_compile
from .autodiff import finite_diff_grad, grad_measurable, grad_smoothed
from .estimators import Estimator, estimate_reparam, estimate_score, estimate_smooth
from .optim import AdamConfig, StepSchedule, run_adam, run_sgd
from .models import Model, builtin, project_domain
from .quadrature import quadrature_expectation, quadrature_gradient
from .experiments import elbo_experiment, variance_report, work_normalised_variance

__version__ = "0.1.0"
