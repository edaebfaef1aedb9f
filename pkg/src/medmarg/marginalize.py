"""Marginal outcome probabilities after integrating out the mediator.

Three routes are offered for ``P(Y=1 | X=x)``:

* ``marginal_prob_exact`` -- numerical quadrature, any link / error pair;
* ``marginal_prob_closed`` -- exact closed forms for probit/normal and
  cauchit/Cauchy, where the convolution stays in the family;
* ``marginal_logit_approx`` -- the logit/normal case, where the logistic
  plus scaled-normal sum is replaced by a variance-matched logistic, giving
  a closed-form marginal log-odds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import (
    Cauchy,
    Link,
    Normal,
    QuadratureSpec,
    expit,
    integrate_link_error,
    link_cdf,
    norm_cdf,
)
from .exceptions import InteractionPresent, UnsupportedCombination
from ._validation import check_dataset, check_xw
from .regression import JointFit, MediatorParams, OutcomeParams, fit_joint

__all__ = [
    "StructuralModel",
    "LinearPredictorDecomp",
    "decompose",
    "marginal_prob_exact",
    "marginal_prob_closed",
    "marginal_logit_approx",
    "marginal_logit_terms",
    "eta_x_curve",
    "eta_x_slope_nointeraction",
    "MarginalCurve",
]

LOGISTIC_SCALE = math.pi / math.sqrt(3.0)
LOGISTIC_VAR = math.pi ** 2 / 3.0


@dataclass(frozen=True, eq=False)
class StructuralModel:
    """Outcome model, mediator model, link and mediator error law.

    ``error`` defaults to ``Normal(sqrt(mediator.sigma2))``.
    """

    outcome: OutcomeParams
    mediator: MediatorParams
    link: Link = Link.LOGIT
    error: Normal | Cauchy | None = None

    def __post_init__(self):
        object.__setattr__(self, "link", Link(self.link))
        if self.error is None:
            object.__setattr__(self, "error", Normal(math.sqrt(self.mediator.sigma2)))

    @classmethod
    def from_fit(cls, fit: JointFit, link=Link.LOGIT, error=None):
        return cls(fit.outcome, fit.mediator, link, error)

    @classmethod
    def from_values(cls, beta0, beta_x, beta_w, beta_xw, theta0, theta_x, sigma,
                    link=Link.LOGIT, error=None):
        """Build a model from raw coefficients; ``sigma`` is the mediator error SD."""
        fit = JointFit.from_values(beta0, beta_x, beta_w, beta_xw, theta0, theta_x, sigma ** 2)
        return cls.from_fit(fit, link, error)

    @property
    def is_logit_normal(self):
        return self.link is Link.LOGIT and isinstance(self.error, Normal)


@dataclass(frozen=True)
class LinearPredictorDecomp:
    """Linear predictor ``alpha0 + alpha_s * s`` after centring the mediator.

    For normal errors ``s`` is standardised, so ``alpha_s`` carries the error
    SD; for Cauchy errors ``s`` keeps the error's own scale.
    """

    alpha0: float
    alpha_s: float


def _slope_w(model, x):
    return model.outcome.beta_w + model.outcome.beta_xw * x


def decompose(model: StructuralModel, x, x_star=None) -> LinearPredictorDecomp:
    """Centre the mediator at its mean under ``x_star`` (defaults to ``x``).

    With ``x_star == x`` this gives
    ``alpha0 = b0 + bw*t0 + (bx + bw*tx + bxw*t0 + bxw*tx*x) * x``.
    """
    o, m = model.outcome, model.mediator
    if x_star is None:
        x_star = x
    mean_w = m.theta0 + m.theta_x * x_star
    a_w = _slope_w(model, x)
    alpha0 = o.beta0 + o.beta_x * x + a_w * mean_w
    alpha_s = a_w * model.error.sigma if isinstance(model.error, Normal) else a_w
    return LinearPredictorDecomp(float(alpha0), float(alpha_s))


def _standard_error_law(model):
    return Normal(1.0) if isinstance(model.error, Normal) else model.error


def marginal_prob_exact(model: StructuralModel, x, spec: QuadratureSpec | None = None, x_star=None):
    """``P(Y=1 | X=x)`` by quadrature over the mediator.

    Passing ``x_star`` integrates against the mediator law under ``x_star``
    instead, which is the cross-world quantity used for natural effects.
    """
    d = decompose(model, x, x_star)
    return integrate_link_error(model.link, _standard_error_law(model), d.alpha0, d.alpha_s, spec)


def marginal_prob_closed(model: StructuralModel, x, x_star=None):
    """Closed-form ``P(Y=1 | X=x)`` for probit/normal and cauchit/Cauchy.

    Raises
    ------
    UnsupportedCombination
        For any other link/error pair; under the logit link no closed form
        exists.
    """
    d = decompose(model, x, x_star)
    if model.link is Link.PROBIT and isinstance(model.error, Normal):
        return float(norm_cdf(d.alpha0 / math.sqrt(1.0 + d.alpha_s ** 2)))
    if model.link is Link.CAUCHIT and isinstance(model.error, Cauchy):
        scale = abs(d.alpha_s) * model.error.gamma + 1.0
        return float(link_cdf(Link.CAUCHIT, d.alpha0 / scale))
    raise UnsupportedCombination(
        f"no closed-form marginal for link={model.link.value}, "
        f"error={type(model.error).__name__}"
    )


def _require_logit_normal(model, what):
    if not model.is_logit_normal:
        raise UnsupportedCombination(f"{what} requires the logit link with normal errors")


def _denominator(model, x):
    a = _slope_w(model, x)
    return np.sqrt(a * a * model.error.sigma ** 2 + LOGISTIC_VAR)


def marginal_logit_terms(model: StructuralModel, x):
    """Split the approximate marginal log-odds into ``(intercept term, eta_x(x))``.

    Both share the x-dependent denominator, so the "intercept" term is not
    constant when an interaction is present.
    """
    _require_logit_normal(model, "the marginal logit approximation")
    o, m = model.outcome, model.mediator
    x = np.asarray(x, dtype=float)
    den = _denominator(model, x)
    intercept = LOGISTIC_SCALE * (o.beta0 + o.beta_w * m.theta0) / den
    slope_num = (o.beta_x + o.beta_w * m.theta_x + o.beta_xw * m.theta0) * x + o.beta_xw * m.theta_x * x * x
    eta = LOGISTIC_SCALE * slope_num / den
    return intercept, eta


def marginal_logit_approx(model: StructuralModel, x):
    """Approximate marginal log-odds ``logit P(Y=1 | X=x)`` (logit/normal only)."""
    intercept, eta = marginal_logit_terms(model, x)
    out = intercept + eta
    return float(out) if np.ndim(out) == 0 else out


def eta_x_curve(model: StructuralModel, xs):
    """Exposure part ``eta_x(x)`` of the approximate marginal log-odds, pointwise."""
    _, eta = marginal_logit_terms(model, np.asarray(xs, dtype=float))
    return np.atleast_1d(eta)


def eta_x_slope_nointeraction(model: StructuralModel):
    """Marginal log-OR slope when there is no exposure-mediator interaction.

    ``(pi/sqrt(3)) * (bx + bw*tx) / sqrt(bw^2 sigma^2 + pi^2/3)``. With
    ``theta_x = 0`` and ``sigma2`` set to the marginal variance of ``W``
    this is the attenuated slope for an independent covariate.
    """
    _require_logit_normal(model, "the marginal slope")
    o, m = model.outcome, model.mediator
    if o.beta_xw != 0.0:
        raise InteractionPresent(f"beta_xw = {o.beta_xw} != 0; use eta_x_curve instead")
    den = math.sqrt(o.beta_w ** 2 * model.error.sigma ** 2 + LOGISTIC_VAR)
    return LOGISTIC_SCALE * (o.beta_x + o.beta_w * m.theta_x) / den


class MarginalCurve(TransformerMixin, BaseEstimator):
    """Fit the outcome and mediator models, then map exposures to marginal quantities.

    ``transform`` returns one row per exposure value with columns
    ``(eta_x, marginal_logit_approx, marginal_prob_exact)``.

    Parameters
    ----------
    interaction : bool, default=True
    firth : bool, default=False
    quadrature : GaussHermite or Adaptive, optional
    """

    def __init__(self, interaction=True, firth=False, quadrature=None):
        self.interaction = interaction
        self.firth = firth
        self.quadrature = quadrature

    def fit(self, X, y):
        x, w = check_xw(X)
        data = check_dataset(y, x, w)
        self.fit_ = fit_joint(data, self.interaction, self.firth)
        self.model_ = StructuralModel.from_fit(self.fit_)
        return self

    def transform(self, X):
        check_is_fitted(self)
        xs = np.asarray(X, dtype=float)
        if xs.ndim == 2:
            xs = xs[:, 0]
        intercept, eta = marginal_logit_terms(self.model_, xs)
        exact = [marginal_prob_exact(self.model_, float(v), self.quadrature) for v in xs]
        return np.column_stack([np.atleast_1d(eta), np.atleast_1d(intercept + eta), exact])

    def predict_proba(self, X):
        p1 = self.transform(X)[:, 2]
        return np.column_stack([1.0 - p1, p1])

    def approx_proba(self, X):
        return expit(self.transform(X)[:, 1])
