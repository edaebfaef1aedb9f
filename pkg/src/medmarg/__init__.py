"""Mediation analysis for a binary outcome and a continuous mediator.

Marginalisation of logistic outcome models over a normal mediator, natural
direct/indirect effects on the log odds-ratio scale, unmeasured-confounder
sensitivity analysis and a Monte-Carlo study harness.
"""

__version__ = "0.1.0"

from .core import Adaptive, Cauchy, GaussHermite, Link, Normal, integrate_link_error
from .exceptions import (
    DegenerateResidual,
    InputError,
    InteractionPresent,
    InvalidConfig,
    InvalidVarianceTerm,
    MedMargError,
    NonConvergence,
    NumericalError,
    ParseError,
    RankDeficient,
    Separation,
    SignMismatch,
    SingularCovariance,
    TooManyFailures,
    UnsupportedCombination,
)
from .marginalize import (
    MarginalCurve,
    StructuralModel,
    marginal_logit_approx,
    marginal_prob_closed,
    marginal_prob_exact,
)
from .mediation import (
    Contrast,
    MediationAnalysis,
    Method,
    bootstrap_effects,
    effects_closed,
    effects_exact,
    effects_gaynor,
    effects_vv,
    estimate_effects,
    mediate,
)
from .regression import (
    JointFit,
    LinearMediatorModel,
    LogisticOutcomeModel,
    fit_joint,
    fit_linear,
    fit_logistic,
)
from .sensitivity import SensitivityGrid, SensitivityInput, adjust_beta_x, sign_change_region, sweep
from .simulation import SimConfig, generate_dataset, run_scenario, run_study, true_effects

__all__ = [
    "__version__",
    "Adaptive",
    "Cauchy",
    "GaussHermite",
    "Link",
    "Normal",
    "integrate_link_error",
    "DegenerateResidual",
    "InputError",
    "InteractionPresent",
    "InvalidConfig",
    "InvalidVarianceTerm",
    "MedMargError",
    "NonConvergence",
    "NumericalError",
    "ParseError",
    "RankDeficient",
    "Separation",
    "SignMismatch",
    "SingularCovariance",
    "TooManyFailures",
    "UnsupportedCombination",
    "MarginalCurve",
    "StructuralModel",
    "marginal_logit_approx",
    "marginal_prob_closed",
    "marginal_prob_exact",
    "Contrast",
    "MediationAnalysis",
    "Method",
    "bootstrap_effects",
    "effects_closed",
    "effects_exact",
    "effects_gaynor",
    "effects_vv",
    "estimate_effects",
    "mediate",
    "JointFit",
    "LinearMediatorModel",
    "LogisticOutcomeModel",
    "fit_joint",
    "fit_linear",
    "fit_logistic",
    "SensitivityGrid",
    "SensitivityInput",
    "adjust_beta_x",
    "sign_change_region",
    "sweep",
    "SimConfig",
    "generate_dataset",
    "run_scenario",
    "run_study",
    "true_effects",
]
