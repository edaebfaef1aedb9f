import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from medmarg.core import Adaptive, Cauchy, Link, Normal, expit
from medmarg.exceptions import InteractionPresent, UnsupportedCombination
from medmarg.marginalize import (
    MarginalCurve,
    StructuralModel,
    decompose,
    eta_x_curve,
    eta_x_slope_nointeraction,
    marginal_logit_approx,
    marginal_logit_terms,
    marginal_prob_closed,
    marginal_prob_exact,
)

import oracles

K = math.pi / math.sqrt(3)
GRID5 = np.linspace(-2.0, 2.0, 5)


def reference_model(beta0=-0.5, bxw=0.15, **kw):
    return StructuralModel.from_values(beta0, 0.4, 0.5, bxw, 0.1, 0.5, 0.5, **kw)


coef = st.floats(-2, 2, allow_nan=False)


def test_decomposition_matches_formula():
    m = reference_model()
    for x in (0.0, 1.0, 2.5):
        d = decompose(m, x)
        a0 = -0.5 + 0.5 * 0.1 + (0.4 + 0.5 * 0.5 + 0.15 * 0.1 + 0.15 * 0.5 * x) * x
        assert d.alpha0 == pytest.approx(a0, abs=1e-14)
        assert d.alpha_s == pytest.approx((0.5 + 0.15 * x) * 0.5, abs=1e-15)


def test_error_defaults_to_fitted_sigma():
    m = reference_model()
    assert m.error == Normal(0.5)
    assert m.is_logit_normal


# -- exact

def test_exact_without_mediator_effect():
    m = StructuralModel.from_values(-1.0, 0.7, 0.0, 0.0, 0.1, 0.5, 0.5)
    for x in (0.0, 1.0, -2.0):
        assert marginal_prob_exact(m, x) == float(expit(-1.0 + 0.7 * x))


@pytest.mark.parametrize("beta0,expected", [(-3.0, 0.0665), (-2.0, 0.1595), (-0.5, 0.4452),
                                            (1.0, 0.7723), (2.0, 0.9003)])
def test_prevalence_reproduction(beta0, expected):
    m = reference_model(beta0)
    prev = 0.7 * marginal_prob_exact(m, 0.0) + 0.3 * marginal_prob_exact(m, 1.0)
    assert prev == pytest.approx(expected, abs=5e-4)
    assert prev == pytest.approx(oracles.prevalence(oracles.reference_params(beta0)), abs=1e-11)


def test_exact_against_direct_integration():
    for b0 in oracles.REF_BETA0:
        p = oracles.reference_params(b0)
        m = reference_model(b0)
        for x in (0.0, 1.0):
            assert marginal_prob_exact(m, x) == pytest.approx(oracles.h(p, x, x), abs=1e-12)


# -- closed forms

@pytest.mark.parametrize("x", [0.0, 1.0])
def test_probit_closed_form_grid(x):
    worst = 0.0
    for b0, bw, sigma in itertools.product(GRID5, GRID5, np.linspace(0.2, 2.0, 5)):
        m = StructuralModel.from_values(b0, 0.4, bw, 0.15, 0.1, 0.5, sigma, link=Link.PROBIT)
        closed = marginal_prob_closed(m, x)
        worst = max(worst, abs(closed - marginal_prob_exact(m, x, Adaptive(1e-12, 1e-12, 500))))
        d = decompose(m, x)
        assert closed == pytest.approx(float(stats.norm.cdf(d.alpha0 / math.sqrt(1 + d.alpha_s ** 2))), abs=1e-15)
    assert worst < 1e-8


@pytest.mark.parametrize("x", [0.0, 1.0])
def test_cauchit_closed_form_grid(x):
    worst = 0.0
    for b0, bw, gamma in itertools.product(GRID5, GRID5, np.linspace(0.2, 2.0, 5)):
        m = StructuralModel.from_values(b0, 0.4, bw, 0.15, 0.1, 0.5, 0.5, link=Link.CAUCHIT,
                                        error=Cauchy(gamma))
        closed = marginal_prob_closed(m, x)
        worst = max(worst, abs(closed - marginal_prob_exact(m, x)))
        d = decompose(m, x)
        ref = stats.cauchy.cdf(d.alpha0, scale=abs(bw + 0.15 * x) * gamma + 1)
        assert closed == pytest.approx(float(ref), abs=1e-14)
    assert worst < 1e-5


def test_probit_closed_without_mediator():
    m = StructuralModel.from_values(0.3, -0.8, 0.0, 0.0, 0.1, 0.5, 0.5, link=Link.PROBIT)
    assert marginal_prob_closed(m, 1.0) == pytest.approx(float(stats.norm.cdf(-0.5)), abs=1e-15)


def test_closed_form_unsupported_for_logit():
    with pytest.raises(UnsupportedCombination):
        marginal_prob_closed(reference_model(), 1.0)
    with pytest.raises(UnsupportedCombination):
        marginal_prob_closed(StructuralModel.from_values(0, 0, 1, 0, 0, 0, 1, link=Link.PROBIT,
                                                         error=Cauchy(1.0)), 0.0)


# -- logistic approximation

def test_approx_exact_under_null():
    m = StructuralModel.from_values(-1.3, 0.6, 0.0, 0.0, 0.1, 0.5, 0.5)
    for x in (0.0, 1.0, 3.0):
        assert marginal_logit_approx(m, x) == pytest.approx(-1.3 + 0.6 * x, abs=1e-14)


def test_approx_example_value():
    m = reference_model()
    expected = K * (-0.45) / math.sqrt(0.25 * 0.25 + math.pi ** 2 / 3)
    assert marginal_logit_approx(m, 0.0) == pytest.approx(expected, abs=1e-14)
    assert marginal_logit_approx(m, 0.0) == pytest.approx(-0.44578, abs=1e-5)


def test_approx_close_to_exact_at_reference_values():
    for b0 in oracles.REF_BETA0:
        m = reference_model(b0)
        for x in (0.0, 1.0):
            assert abs(float(expit(marginal_logit_approx(m, x))) - marginal_prob_exact(m, x)) < 0.005


def test_approx_curve_close_to_exact_on_plot_grid():
    for bxw in (0.0, 0.3):
        m = reference_model(-0.5, bxw)
        for x in np.arange(0, 3.05, 0.1):
            assert abs(float(expit(marginal_logit_approx(m, x))) - marginal_prob_exact(m, x)) < 0.01


@given(b0=coef, bx=coef, bw=coef, bxw=coef, x=st.floats(-3, 3))
def test_intercept_plus_eta_is_approx(b0, bx, bw, bxw, x):
    m = StructuralModel.from_values(b0, bx, bw, bxw, 0.1, 0.5, 0.7)
    intercept, eta = marginal_logit_terms(m, x)
    assert float(intercept + eta) == pytest.approx(marginal_logit_approx(m, x), abs=1e-12)
    assert float(eta_x_curve(m, [x])[0]) == pytest.approx(float(eta), abs=1e-12)


def test_approx_requires_logit_normal():
    with pytest.raises(UnsupportedCombination):
        marginal_logit_approx(reference_model(link=Link.PROBIT), 1.0)


# -- eta_x

@given(b0=coef, bx=coef, bw=coef, bxw=coef)
def test_eta_zero_at_origin(b0, bx, bw, bxw):
    m = StructuralModel.from_values(b0, bx, bw, bxw, 0.1, 0.5, 0.5)
    assert eta_x_curve(m, [0.0])[0] == 0.0


def test_eta_linear_without_interaction():
    m = reference_model(bxw=0.0)
    xs = np.array([0.5, 1.0, 2.0, 3.0])
    ratio = eta_x_curve(m, xs) / xs
    np.testing.assert_allclose(ratio, eta_x_slope_nointeraction(m), rtol=1e-12)


def test_eta_monotone_for_nonnegative_interaction():
    xs = np.linspace(0, 3, 61)
    for bxw in (0.0, 0.15, 0.3, 1.0):
        assert np.all(np.diff(eta_x_curve(reference_model(bxw=bxw), xs)) > 0)


def test_plot_grid_affine_when_no_interaction():
    xs = np.arange(0, 3.05, 0.1)
    m = reference_model(bxw=0.0)
    col = np.array([marginal_logit_approx(m, x) for x in xs])
    np.testing.assert_allclose(np.diff(col, 2), 0.0, atol=1e-12)


def test_slope_examples():
    assert eta_x_slope_nointeraction(StructuralModel.from_values(0, 0.4, 0.0, 0, 0.1, 0.5, 0.5)) == pytest.approx(0.4, abs=1e-15)
    s = eta_x_slope_nointeraction(reference_model(bxw=0.0))
    assert s == pytest.approx(K * 0.65 / math.sqrt(0.0625 + math.pi ** 2 / 3), abs=1e-14)
    assert s == pytest.approx(0.6440, abs=1e-3)


@given(bx=st.floats(-2, 2).filter(lambda v: abs(v) > 1e-3), bw=st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3),
       sigma=st.floats(0.1, 3))
def test_attenuation_with_independent_covariate(bx, bw, sigma):
    m = StructuralModel.from_values(0.0, bx, bw, 0.0, 0.0, 0.0, sigma)
    assert abs(eta_x_slope_nointeraction(m)) < abs(bx)


def test_slope_rejects_interaction():
    with pytest.raises(InteractionPresent):
        eta_x_slope_nointeraction(reference_model())


# -- estimator

def test_marginal_curve_estimator(sim_data):
    X = np.column_stack([sim_data.x, sim_data.w])
    mc = MarginalCurve().fit(X, sim_data.y)
    out = mc.transform([0.0, 1.0])
    assert out.shape == (2, 3)
    assert out[0, 0] == 0.0
    assert np.all((out[:, 2] > 0) & (out[:, 2] < 1))
    np.testing.assert_allclose(mc.predict_proba([0.0, 1.0])[:, 1], out[:, 2])
    np.testing.assert_allclose(mc.approx_proba([0.0, 1.0]), out[:, 2], atol=0.01)
    assert mc.get_params()["interaction"] is True
