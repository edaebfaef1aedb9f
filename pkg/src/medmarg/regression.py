"""Outcome (logistic) and mediator (linear) model fitting.

The outcome model is ``logit P(Y=1|x, w) = b0 + bx*x + bw*w + bxw*x*w`` and
the mediator model ``W = t0 + tx*x + e`` with ``e ~ N(0, sigma2)``. Both are
fitted separately and their estimator covariances stacked block-diagonally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import Dataset, _as_vector, check_dataset, check_xw
from .core import expit
from .exceptions import DegenerateResidual, InputError, NonConvergence, RankDeficient, Separation

__all__ = [
    "OutcomeParams",
    "MediatorParams",
    "JointFit",
    "fit_logistic",
    "fit_linear",
    "assemble_joint",
    "LogisticOutcomeModel",
    "LinearMediatorModel",
]

SEPARATION_BOUND = 50.0
SCORE_TOL = 1e-8
STEP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class OutcomeParams:
    beta0: float
    beta_x: float
    beta_w: float
    beta_xw: float = 0.0
    cov: np.ndarray | None = None
    interaction_included: bool = True
    firth_used: bool = False
    n_iter: int = 0

    @property
    def coef(self):
        """Coefficients in design order (``beta_xw`` omitted when not fitted)."""
        c = [self.beta0, self.beta_x, self.beta_w]
        if self.interaction_included:
            c.append(self.beta_xw)
        return np.array(c)

    @property
    def names(self):
        n = ["beta0", "beta_x", "beta_w"]
        return n + ["beta_xw"] if self.interaction_included else n

    @property
    def se(self):
        if self.cov is None:
            return np.zeros(len(self.names))
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


@dataclass(frozen=True, eq=False)
class MediatorParams:
    theta0: float
    theta_x: float
    sigma2: float
    cov_theta: np.ndarray | None = None
    var_sigma2: float = 0.0
    n: int = 0

    @property
    def coef(self):
        return np.array([self.theta0, self.theta_x])

    @property
    def names(self):
        return ["theta0", "theta_x"]

    @property
    def se(self):
        if self.cov_theta is None:
            return np.zeros(2)
        return np.sqrt(np.clip(np.diag(self.cov_theta), 0.0, None))


@dataclass(frozen=True, eq=False)
class JointFit:
    outcome: OutcomeParams
    mediator: MediatorParams
    sigma_full: np.ndarray = field(repr=False)

    @property
    def names(self):
        return self.outcome.names + self.mediator.names + ["sigma2"]

    @property
    def interaction_included(self):
        return self.outcome.interaction_included

    @classmethod
    def from_values(cls, beta0, beta_x, beta_w, beta_xw, theta0, theta_x, sigma2):
        """Fit-free parameter set with zero estimator covariance (for true values)."""
        outcome = OutcomeParams(float(beta0), float(beta_x), float(beta_w), float(beta_xw))
        mediator = MediatorParams(float(theta0), float(theta_x), float(sigma2))
        return assemble_joint(outcome, mediator)


def _design(data: Dataset, with_interaction: bool):
    cols = [np.ones(data.n), data.x, data.w]
    if with_interaction:
        cols.append(data.x * data.w)
    return np.column_stack(cols)


def _check_rank(X, what):
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficient(f"{what} design matrix has rank {rank} < {X.shape[1]} columns")


def _loglik(y, eta):
    # sum of y*eta - log(1 + exp(eta)), stable for large |eta|
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _irls(X, y, firth, max_iter):
    beta = np.zeros(X.shape[1])
    eta = X @ beta

    def objective(eta_):
        ll = _loglik(y, eta_)
        if firth:
            p_ = expit(eta_)
            XW_ = X * np.sqrt(p_ * (1.0 - p_))[:, None]
            sign, logdet = np.linalg.slogdet(XW_.T @ XW_)
            ll += 0.5 * logdet if sign > 0 else -np.inf
        return ll

    current = objective(eta)
    for it in range(1, max_iter + 1):
        p = expit(eta)
        wts = p * (1.0 - p)
        XW = X * np.sqrt(wts)[:, None]
        info = XW.T @ XW
        resid = y - p
        if firth:
            # hat-matrix diagonal of W^{1/2} X (X'WX)^{-1} X' W^{1/2}
            try:
                chol = linalg.cho_factor(info)
            except linalg.LinAlgError:
                raise Separation() from None
            h = np.einsum("ij,ji->i", XW, linalg.cho_solve(chol, XW.T))
            resid = resid + h * (0.5 - p)
        score = X.T @ resid
        if np.max(np.abs(score)) < SCORE_TOL:
            return beta, info, it - 1
        try:
            step = linalg.solve(info, score, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            raise Separation() from None

        # step-halving keeps the (penalised) likelihood non-decreasing
        for _ in range(30):
            cand = beta + step
            eta_c = X @ cand
            val = objective(eta_c)
            if val >= current - 1e-12 * abs(current):
                break
            step = step / 2.0
        beta, eta, current = cand, eta_c, val

        if not firth and np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise Separation()
        if np.max(np.abs(step)) < STEP_TOL:
            return beta, _information(X, eta), it
    if firth:
        beta, extra = _firth_polish(X, y, beta, objective)
        return beta, _information(X, X @ beta), max_iter + extra
    raise NonConvergence(f"logistic fit did not converge in {max_iter} iterations")


def _information(X, eta):
    p = expit(eta)
    XW = X * np.sqrt(p * (1.0 - p))[:, None]
    return XW.T @ XW


def _firth_score(X, y, beta):
    p = expit(X @ beta)
    XW = X * np.sqrt(p * (1.0 - p))[:, None]
    h = np.einsum("ij,ji->i", XW, np.linalg.solve(XW.T @ XW, XW.T))
    return X.T @ (y - p + h * (0.5 - p))


def _firth_polish(X, y, beta, objective):
    # Fisher scoring ignores the penalty's curvature and crawls on
    # near-separated data; quasi-Newton on the penalised likelihood does not
    res = optimize.minimize(lambda b: -objective(X @ b), beta, jac=lambda b: -_firth_score(X, y, b),
                            method="BFGS", options={"gtol": SCORE_TOL, "maxiter": 500})
    if not np.all(np.isfinite(res.x)) or np.max(np.abs(_firth_score(X, y, res.x))) > 1e-6:
        raise NonConvergence("Firth-penalised fit did not converge")
    return res.x, int(res.nit)


def fit_logistic(data: Dataset, with_interaction=True, firth=False, max_iter=100) -> OutcomeParams:
    """Maximum-likelihood (optionally Firth-penalised) fit of the outcome model.

    Newton-Raphson / IRLS with step-halving. Converged when the max absolute
    (modified) score drops below 1e-8 or the step below 1e-10. The reported
    covariance is the inverse Fisher information ``(X'WX)^{-1}`` at the
    optimum.

    Raises
    ------
    Separation
        A coefficient exceeded 50 in absolute value without firth.
    RankDeficient
        The design matrix lacks full column rank.
    NonConvergence
        No convergence after ``max_iter`` iterations.
    """
    X = _design(data, with_interaction)
    _check_rank(X, "outcome")
    beta, info, n_iter = _irls(X, data.y, firth, max_iter)
    if not firth and np.max(np.abs(beta)) > SEPARATION_BOUND:
        raise Separation()
    try:
        cov = linalg.inv(info, check_finite=True)
    except linalg.LinAlgError:
        raise Separation() from None
    cov = 0.5 * (cov + cov.T)
    bxw = float(beta[3]) if with_interaction else 0.0
    return OutcomeParams(
        float(beta[0]), float(beta[1]), float(beta[2]), bxw, cov,
        interaction_included=bool(with_interaction), firth_used=bool(firth), n_iter=n_iter,
    )


def fit_linear(data: Dataset) -> MediatorParams:
    """OLS fit of the mediator model.

    ``sigma2`` is the unbiased ``e'e / (n - 2)``; its variance is taken as
    ``2 sigma2^2 / (n - 2)``, exact under normal errors.
    """
    X = np.column_stack([np.ones(data.n), data.x])
    _check_rank(X, "mediator")
    theta, *_ = np.linalg.lstsq(X, data.w, rcond=None)
    resid = data.w - X @ theta
    dof = data.n - 2
    sigma2 = float(resid @ resid) / dof
    scale = max(1.0, float(np.var(data.w)))
    if not sigma2 > 1e-24 * scale:
        raise DegenerateResidual("mediator fitted exactly (zero residual variance)")
    cov_theta = sigma2 * linalg.inv(X.T @ X)
    cov_theta = 0.5 * (cov_theta + cov_theta.T)
    return MediatorParams(
        float(theta[0]), float(theta[1]), sigma2, cov_theta,
        var_sigma2=2.0 * sigma2 ** 2 / dof, n=data.n,
    )


def assemble_joint(outcome: OutcomeParams, mediator: MediatorParams) -> JointFit:
    """Stack the estimator covariances as ``diag(cov_beta, cov_theta, var_sigma2)``."""
    k = 4 if outcome.interaction_included else 3
    cov_b = np.zeros((k, k)) if outcome.cov is None else np.asarray(outcome.cov, dtype=float)
    cov_t = np.zeros((2, 2)) if mediator.cov_theta is None else np.asarray(mediator.cov_theta, dtype=float)
    sigma = linalg.block_diag(
        cov_b,
        cov_t,
        np.array([[mediator.var_sigma2]]),
    )
    return JointFit(outcome, mediator, sigma)


def fit_joint(data: Dataset, with_interaction=True, firth=False) -> JointFit:
    return assemble_joint(fit_logistic(data, with_interaction, firth), fit_linear(data))


class LogisticOutcomeModel(ClassifierMixin, BaseEstimator):
    """Outcome model ``logit P(Y=1|x, w)`` as an sklearn classifier.

    Parameters
    ----------
    interaction : bool, default=True
        Include the exposure-mediator product term.
    firth : bool, default=False
        Use Firth's penalised likelihood.
    max_iter : int, default=100

    Attributes
    ----------
    params_ : OutcomeParams
    coef_ : ndarray of shape (4,)
        ``(beta0, beta_x, beta_w, beta_xw)``; ``beta_xw`` is 0 when not fitted.
    classes_ : ndarray
    """

    def __init__(self, interaction=True, firth=False, max_iter=100):
        self.interaction = interaction
        self.firth = firth
        self.max_iter = max_iter

    def fit(self, X, y):
        x, w = check_xw(X)
        data = check_dataset(y, x, w)
        self.params_ = fit_logistic(data, self.interaction, self.firth, self.max_iter)
        p = self.params_
        self.coef_ = np.array([p.beta0, p.beta_x, p.beta_w, p.beta_xw])
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        x, w = check_xw(X)
        b0, bx, bw, bxw = self.coef_
        return b0 + bx * x + bw * w + bxw * x * w

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


class LinearMediatorModel(RegressorMixin, BaseEstimator):
    """Mediator model ``E[W | x] = theta0 + theta_x * x`` as an sklearn regressor.

    ``fit`` takes the exposure as a one-column ``X`` and the mediator as ``y``.
    """

    def fit(self, X, y):
        x = np.asarray(X, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        x = _as_vector(x, "x")
        w = _as_vector(y, "w")
        if len(x) != len(w):
            raise InputError(f"length mismatch: x={len(x)}, w={len(w)}")
        data = Dataset(np.zeros(len(w)), x, w)
        self.params_ = fit_linear(data)
        self.coef_ = self.params_.coef
        return self

    def predict(self, X):
        check_is_fitted(self)
        x = np.asarray(X, dtype=float)
        if x.ndim == 2:
            x = x[:, 0]
        return self.coef_[0] + self.coef_[1] * x
