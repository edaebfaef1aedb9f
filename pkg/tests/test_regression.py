import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.linear_model import LogisticRegression

from medmarg._validation import Dataset, check_dataset
from medmarg.core import expit
from medmarg.exceptions import (
    DegenerateResidual,
    InputError,
    RankDeficient,
    Separation,
)
from medmarg.regression import (
    JointFit,
    LinearMediatorModel,
    LogisticOutcomeModel,
    MediatorParams,
    OutcomeParams,
    assemble_joint,
    fit_joint,
    fit_linear,
    fit_logistic,
)
from medmarg.simulation import SimConfig, generate_dataset

import oracles


def _design(d, inter=True):
    cols = [np.ones(d.n), d.x, d.w] + ([d.x * d.w] if inter else [])
    return np.column_stack(cols)


def _separated():
    rng = np.random.default_rng(3)
    x = np.linspace(-1, 1, 20)
    w = rng.normal(size=20)
    return check_dataset((x > 0).astype(float), x, w)


# -- validation

def test_dataset_validation():
    with pytest.raises(InputError, match="binary"):
        check_dataset([0, 1, 2] + [0] * 9, np.arange(12), np.arange(12))
    with pytest.raises(InputError, match="length"):
        check_dataset([0, 1] * 6, np.arange(11), np.arange(12))
    with pytest.raises(InputError, match="at least 10"):
        check_dataset([0, 1] * 4, np.arange(8), np.arange(8))
    with pytest.raises(InputError):
        check_dataset([0, 1] * 6, [np.nan] + [0.0] * 11, np.arange(12))
    with pytest.raises(InputError, match="single class"):
        check_dataset([1] * 12, np.arange(12), np.arange(12))


# -- logistic

def test_matches_sklearn_unpenalised(sim_data):
    fit = fit_logistic(sim_data)
    X = _design(sim_data)
    ref = LogisticRegression(penalty=None, fit_intercept=False, tol=1e-12, max_iter=10000)
    ref.fit(X, sim_data.y)
    np.testing.assert_allclose(fit.coef, ref.coef_[0], atol=1e-6)


def test_score_equations_at_optimum(sim_data):
    fit = fit_logistic(sim_data)
    X = _design(sim_data)
    score = X.T @ (sim_data.y - expit(X @ fit.coef))
    assert np.max(np.abs(score)) < 1e-6


def test_firth_modified_score(sim_data):
    fit = fit_logistic(sim_data, firth=True)
    X = _design(sim_data)
    p = expit(X @ fit.coef)
    XW = X * np.sqrt(p * (1 - p))[:, None]
    h = np.einsum("ij,ji->i", XW, np.linalg.solve(XW.T @ XW, XW.T))
    score = X.T @ (sim_data.y - p + h * (0.5 - p))
    assert np.max(np.abs(score)) < 1e-6
    assert fit.firth_used


def test_firth_matches_penalised_likelihood_optimum():
    d = generate_dataset(SimConfig(n=150, beta0=-2.0), 99)
    X = _design(d)
    fit = fit_logistic(d, firth=True)
    np.testing.assert_allclose(fit.coef, oracles.logistic_mle(X, d.y, firth=True), atol=1e-4)


def test_covariance_is_inverse_numerical_hessian(sim_data):
    fit = fit_logistic(sim_data)
    X = _design(sim_data)
    H = oracles.loglik_hessian(X, sim_data.y, fit.coef)
    np.testing.assert_allclose(fit.cov, np.linalg.inv(-H), rtol=1e-4)
    np.testing.assert_allclose(fit.cov, fit.cov.T, atol=1e-10)
    assert np.all(np.diag(fit.cov) >= 0)


def test_null_model_estimates_near_zero():
    rng = np.random.default_rng(8)
    n = 4000
    y = np.tile([0.0, 1.0], n // 2)
    d = check_dataset(y, rng.normal(size=n), rng.normal(size=n))
    fit = fit_logistic(d)
    assert np.all(np.abs(fit.coef) < 3 * fit.se)


def test_consistency_large_n():
    cfg = SimConfig(n=100_000)
    d = generate_dataset(cfg, 2024)
    fit = fit_logistic(d)
    truth = np.array([cfg.beta0, cfg.beta_x, cfg.beta_w, cfg.beta_xw])
    assert np.all(np.abs(fit.coef - truth) < 4 * fit.se)


def test_without_interaction_shapes(sim_data):
    fit = fit_logistic(sim_data, with_interaction=False)
    assert fit.beta_xw == 0.0
    assert fit.cov.shape == (3, 3)
    assert fit.names == ["beta0", "beta_x", "beta_w"]
    assert not fit.interaction_included


def test_separation_detected_and_firth_rescues():
    d = _separated()
    with pytest.raises(Separation, match="firth"):
        fit_logistic(d)
    fit = fit_logistic(d, firth=True)
    assert np.all(np.isfinite(fit.coef))
    assert np.all(np.abs(fit.coef) < 50)


def test_rank_deficient_outcome():
    rng = np.random.default_rng(1)
    x = np.ones(40)
    d = check_dataset(np.tile([0.0, 1.0], 20), x, rng.normal(size=40))
    with pytest.raises(RankDeficient):
        fit_logistic(d)


# -- linear

def test_linear_exact_fit_rejected():
    x = np.arange(12, dtype=float)
    d = Dataset(np.zeros(12), x, 2.0 + 3.0 * x)
    with pytest.raises(DegenerateResidual):
        fit_linear(d)


def test_linear_constant_exposure_rejected():
    d = Dataset(np.zeros(12), np.ones(12), np.arange(12.0))
    with pytest.raises(RankDeficient):
        fit_linear(d)


def test_linear_matches_normal_equations():
    rng = np.random.default_rng(5)
    x = rng.normal(size=10)
    w = 1.0 - 2.0 * x + rng.normal(size=10)
    m = fit_linear(Dataset(np.zeros(10), x, w))
    # closed-form simple regression
    sxx = np.sum((x - x.mean()) ** 2)
    slope = np.sum((x - x.mean()) * (w - w.mean())) / sxx
    icpt = w.mean() - slope * x.mean()
    np.testing.assert_allclose([m.theta0, m.theta_x], [icpt, slope], rtol=1e-12, atol=1e-12)
    resid = w - icpt - slope * x
    assert m.sigma2 == pytest.approx(resid @ resid / 8, rel=1e-12)
    assert m.var_sigma2 == pytest.approx(2 * m.sigma2 ** 2 / 8, rel=1e-12)
    X = np.column_stack([np.ones(10), x])
    np.testing.assert_allclose(m.cov_theta, m.sigma2 * np.linalg.inv(X.T @ X), rtol=1e-12)


@given(seed=st.integers(0, 10_000), n=st.integers(10, 200))
def test_linear_residuals_orthogonal(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    w = rng.normal(0.3 * x, 1.0)
    m = fit_linear(Dataset(np.zeros(n), x, w))
    r = w - m.theta0 - m.theta_x * x
    scale = np.linalg.norm(w) * np.sqrt(n)
    assert abs(r.sum()) < 1e-8 * scale
    assert abs(r @ x) < 1e-8 * scale * np.linalg.norm(x)


def test_linear_consistency_large_n():
    d = generate_dataset(SimConfig(n=100_000), 31)
    m = fit_linear(d)
    assert abs(m.theta0 - 0.1) < 4 * m.se[0]
    assert abs(m.theta_x - 0.5) < 4 * m.se[1]
    assert m.sigma2 == pytest.approx(0.25, rel=0.02)


# -- joint covariance

def test_assemble_identity_blocks():
    o = OutcomeParams(0, 0, 0, 0, np.eye(4))
    m = MediatorParams(0, 0, 1.0, np.eye(2), 1.0)
    np.testing.assert_array_equal(assemble_joint(o, m).sigma_full, np.eye(7))


def test_assemble_cross_blocks_zero(sim_data):
    fit = fit_joint(sim_data)
    S = fit.sigma_full
    assert S.shape == (7, 7)
    assert np.all(S[:4, 4:] == 0) and np.all(S[4:, :4] == 0)
    assert np.all(S[4:6, 6] == 0)
    assert np.linalg.eigvalsh(S).min() >= -1e-10
    assert fit.names == ["beta0", "beta_x", "beta_w", "beta_xw", "theta0", "theta_x", "sigma2"]
    reduced = fit_joint(sim_data, with_interaction=False)
    assert reduced.sigma_full.shape == (6, 6)


def test_psd_at_n_1000():
    fit = fit_joint(generate_dataset(SimConfig(n=1000), 4))
    assert np.linalg.eigvalsh(fit.sigma_full).min() >= -1e-10


def test_from_values_zero_covariance():
    f = JointFit.from_values(-0.5, 0.4, 0.5, 0.15, 0.1, 0.5, 0.25)
    assert np.all(f.sigma_full == 0)


# -- estimators

def test_logistic_estimator_api(sim_data):
    X = np.column_stack([sim_data.x, sim_data.w])
    est = LogisticOutcomeModel()
    assert est.get_params() == {"interaction": True, "firth": False, "max_iter": 100}
    est.fit(X, sim_data.y)
    np.testing.assert_allclose(est.coef_, fit_logistic(sim_data).coef)
    proba = est.predict_proba(X)
    assert proba.shape == (sim_data.n, 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(np.unique(est.predict(X))) <= {0, 1}
    c = clone(est).set_params(interaction=False)
    assert c.fit(X, sim_data.y).coef_[3] == 0.0


def test_linear_estimator_api(sim_data):
    est = LinearMediatorModel().fit(sim_data.x.reshape(-1, 1), sim_data.w)
    ref = fit_linear(sim_data)
    np.testing.assert_allclose(est.coef_, [ref.theta0, ref.theta_x])
    np.testing.assert_allclose(est.predict([[0.0], [1.0]]), [ref.theta0, ref.theta0 + ref.theta_x])
    assert 0.0 < est.score(sim_data.x.reshape(-1, 1), sim_data.w) < 1.0


def test_firth_converges_on_slow_separated_design():
    # plain Fisher scoring needs >100 iterations here
    x = np.linspace(-1, 1, 30)
    w = np.random.default_rng(0).normal(size=30)
    d = check_dataset((x > 0).astype(float), x, w)
    fit = fit_logistic(d, firth=True)
    X = _design(d)
    np.testing.assert_allclose(fit.coef, oracles.logistic_mle(X, d.y, firth=True), atol=1e-4)
    assert fit.n_iter > 100
