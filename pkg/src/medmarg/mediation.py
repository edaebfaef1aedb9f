"""Natural direct and indirect effects on the log odds-ratio scale.

For an exposure change ``x_star -> x`` with

    h(x, x') = ∫ expit(b0 + bx*x + bw*w + bxw*x*w) dN(w; t0 + tx*x', sigma2)

the effects are ``NDE = logit h(x, x*) - logit h(x*, x*)`` and
``NIE = logit h(x, x) - logit h(x, x*)``. The estimators differ only in how
``h`` (or the effects directly) are evaluated:

``closed``  variance-matched logistic approximation, with Delta-method SEs;
``exact``   ``h`` by quadrature;
``vv``      rare-outcome product formulas;
``gaynor``  probit approximation of the inverse logit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._parallel import parallel_map
from ._validation import Dataset, check_contrast, check_dataset, check_level, check_xw
from .core import QuadratureSpec, expit, integrate_expit_normal, logit, norm_cdf
from .exceptions import (
    InputError,
    MedMargError,
    NumericalError,
    SignMismatch,
    SingularCovariance,
    TooManyFailures,
)
from .regression import JointFit, assemble_joint, fit_linear, fit_logistic

__all__ = [
    "Effect",
    "Method",
    "Contrast",
    "EffectEstimate",
    "MediationReport",
    "BootstrapResult",
    "GAYNOR_C",
    "h_exact",
    "h_closed",
    "closed_form_nde",
    "closed_form_nie",
    "closed_form_nde_gradient",
    "closed_form_nie_gradient",
    "nde_closed",
    "nie_closed",
    "effects_closed",
    "effects_exact",
    "effects_vv",
    "effects_gaynor",
    "estimate_effects",
    "delta_se_nde",
    "delta_se_nie",
    "bootstrap_effects",
    "proportion_mediated",
    "interaction_wald_test",
    "mediate",
    "MediationAnalysis",
]

K = math.pi / math.sqrt(3.0)
LOGISTIC_VAR = math.pi ** 2 / 3.0
# expit(t) ~ Phi(t / GAYNOR_C), the usual logit-to-probit scaling of 1.6
GAYNOR_C = 1.6

PARAM_NAMES = ("beta0", "beta_x", "beta_w", "beta_xw", "theta0", "theta_x", "sigma2")
_REDUCED = [0, 1, 2, 4, 5, 6]


class Effect(str, enum.Enum):
    NDE = "NDE"
    NIE = "NIE"
    NTE = "NTE"
    PROP_MEDIATED = "PropMediated"


class Method(str, enum.Enum):
    CLOSED = "closed"
    EXACT = "exact"
    VV = "vv"
    GAYNOR = "gaynor"


def parse_methods(methods):
    if isinstance(methods, (str, Method)):
        methods = [m for m in str(getattr(methods, "value", methods)).split(",") if m.strip()]
    out = []
    for m in methods:
        try:
            m = Method(str(getattr(m, "value", m)).strip().lower())
        except ValueError:
            raise InputError(f"unknown method {m!r}; choose from {[v.value for v in Method]}") from None
        if m not in out:
            out.append(m)
    if not out:
        raise InputError("at least one method is required")
    return out


@dataclass(frozen=True)
class Contrast:
    """Exposure change from ``x_star`` (reference) to ``x``."""

    x_star: float = 0.0
    x: float = 1.0

    def __post_init__(self):
        check_contrast((self.x_star, self.x))


@dataclass
class EffectEstimate:
    effect: Effect
    estimate: float
    method: Method
    se_delta: float | None = None
    ci: tuple | None = None  # (lower, upper, level)

    def to_dict(self):
        d = {
            "effect": Effect(self.effect).value,
            "method": Method(self.method).value,
            "estimate": self.estimate,
            "se_delta": self.se_delta,
        }
        if self.ci is not None:
            d["ci_lower"], d["ci_upper"], d["ci_level"] = (float(v) for v in self.ci)
        else:
            d["ci_lower"] = d["ci_upper"] = d["ci_level"] = None
        return d

    @classmethod
    def from_dict(cls, d):
        ci = None
        if d.get("ci_lower") is not None:
            ci = (d["ci_lower"], d["ci_upper"], d["ci_level"])
        return cls(Effect(d["effect"]), d["estimate"], Method(d["method"]), d.get("se_delta"), ci)


@dataclass
class BootstrapResult:
    methods: list
    level: float
    replications: int
    seed: int
    n_failed: int
    estimates: np.ndarray = field(repr=False)  # (replications, n_methods, 2), NaN rows failed
    cis: dict = field(default_factory=dict)  # method -> ((lo, hi), (lo, hi))


@dataclass
class MediationReport:
    fit: JointFit
    contrast: Contrast
    estimates: list
    bootstrap_meta: dict | None = None
    interaction_test: dict | None = None
    warnings: list = field(default_factory=list)

    def get(self, effect, method=Method.CLOSED):
        effect, method = Effect(effect), Method(method)
        for e in self.estimates:
            if e.effect is effect and e.method is method:
                return e
        raise KeyError((effect.value, method.value))

    def rows(self):
        return [e.to_dict() for e in self.estimates]


def _params(fit: JointFit):
    o, m = fit.outcome, fit.mediator
    return np.array([o.beta0, o.beta_x, o.beta_w, o.beta_xw, m.theta0, m.theta_x, m.sigma2])


def _contrast(c):
    if isinstance(c, Contrast):
        return c
    x_star, x = check_contrast(c)
    return Contrast(x_star, x)


def h_exact(fit: JointFit, x, x_star, spec: QuadratureSpec | None = None):
    """``h(x, x*)`` by quadrature (mediator drawn under ``x_star``, outcome under ``x``)."""
    o, m = fit.outcome, fit.mediator
    a_w = o.beta_w + o.beta_xw * x
    a0 = o.beta0 + o.beta_x * x + a_w * (m.theta0 + m.theta_x * x_star)
    return integrate_expit_normal(a0, a_w * math.sqrt(m.sigma2), spec)


def _closed_numerator(p, x, x_star):
    b0, bx, bw, bxw, t0, tx, _ = p
    return b0 + bw * t0 + (bx + bxw * t0 + bxw * tx * x_star) * x + bw * tx * x_star


def h_closed(fit: JointFit, x, x_star):
    """Closed-form approximation of ``h(x, x*)``."""
    p = _params(fit)
    a = p[2] + p[3] * x
    return float(expit(K * _closed_numerator(p, x, x_star) / math.sqrt(a * a * p[6] + LOGISTIC_VAR)))


def closed_form_nde(params, x_star, x):
    """Closed-form log-OR NDE as a function of ``(b0, bx, bw, bxw, t0, tx, sigma2)``."""
    p = np.asarray(params, dtype=float)
    s2 = p[6]
    a1 = p[2] + p[3] * x
    a0 = p[2] + p[3] * x_star
    d1 = math.sqrt(a1 * a1 * s2 + LOGISTIC_VAR)
    d0 = math.sqrt(a0 * a0 * s2 + LOGISTIC_VAR)
    return K * (_closed_numerator(p, x, x_star) / d1 - _closed_numerator(p, x_star, x_star) / d0)


def closed_form_nie(params, x_star, x):
    p = np.asarray(params, dtype=float)
    a1 = p[2] + p[3] * x
    return K * a1 * p[5] * (x - x_star) / math.sqrt(a1 * a1 * p[6] + LOGISTIC_VAR)


def closed_form_nde_gradient(params, x_star, x):
    """Analytic gradient of :func:`closed_form_nde` in parameter order ``PARAM_NAMES``."""
    b0, bx, bw, bxw, t0, tx, s2 = np.asarray(params, dtype=float)
    p = (b0, bx, bw, bxw, t0, tx, s2)
    a1 = bw + bxw * x
    a0 = bw + bxw * x_star
    d1 = math.sqrt(a1 * a1 * s2 + LOGISTIC_VAR)
    d0 = math.sqrt(a0 * a0 * s2 + LOGISTIC_VAR)
    n1 = _closed_numerator(p, x, x_star)
    n0 = _closed_numerator(p, x_star, x_star)
    m_star = t0 + tx * x_star
    g = np.array([
        1.0 / d1 - 1.0 / d0,
        x / d1 - x_star / d0,
        m_star / d1 - a1 * n1 * s2 / d1 ** 3 - m_star / d0 + a0 * n0 * s2 / d0 ** 3,
        m_star * x / d1 - a1 * n1 * x * s2 / d1 ** 3
        - m_star * x_star / d0 + a0 * n0 * x_star * s2 / d0 ** 3,
        a1 / d1 - a0 / d0,
        a1 * x_star / d1 - a0 * x_star / d0,
        -0.5 * a1 * a1 * n1 / d1 ** 3 + 0.5 * a0 * a0 * n0 / d0 ** 3,
    ])
    return K * g


def closed_form_nie_gradient(params, x_star, x):
    """Analytic gradient of :func:`closed_form_nie`; entries for b0, bx and t0 are exactly 0."""
    _, _, bw, bxw, _, tx, s2 = np.asarray(params, dtype=float)
    a1 = bw + bxw * x
    d1 = math.sqrt(a1 * a1 * s2 + LOGISTIC_VAR)
    dx = x - x_star
    common = tx * (1.0 / d1 - a1 * a1 * s2 / d1 ** 3)
    g = np.array([
        0.0,
        0.0,
        common,
        common * x,
        0.0,
        a1 / d1,
        -0.5 * a1 ** 3 * tx / d1 ** 3,
    ])
    return K * dx * g


def _delta_se(fit, grad, propagate_sigma2):
    if not fit.interaction_included:
        grad = grad[_REDUCED]
    sigma = np.array(fit.sigma_full, dtype=float)
    if not propagate_sigma2:
        sigma[-1, :] = 0.0
        sigma[:, -1] = 0.0
    eig = np.linalg.eigvalsh(0.5 * (sigma + sigma.T))
    if eig.size and eig.min() < -1e-10 * max(1.0, float(np.abs(eig).max())):
        raise SingularCovariance(f"estimator covariance is not PSD (min eigenvalue {eig.min():.3g})")
    var = float(grad @ sigma @ grad)
    return math.sqrt(max(var, 0.0))


def delta_se_nde(fit: JointFit, c, propagate_sigma2=True):
    """First-order Delta-method SE of the closed-form NDE.

    ``propagate_sigma2=False`` treats the mediator variance as known.
    """
    c = _contrast(c)
    return _delta_se(fit, closed_form_nde_gradient(_params(fit), c.x_star, c.x), propagate_sigma2)


def delta_se_nie(fit: JointFit, c, propagate_sigma2=True):
    c = _contrast(c)
    return _delta_se(fit, closed_form_nie_gradient(_params(fit), c.x_star, c.x), propagate_sigma2)


def delta_se_nte(fit: JointFit, c, propagate_sigma2=True):
    # the total is a sum, so its gradient is too
    c = _contrast(c)
    p = _params(fit)
    grad = closed_form_nde_gradient(p, c.x_star, c.x) + closed_form_nie_gradient(p, c.x_star, c.x)
    return _delta_se(fit, grad, propagate_sigma2)


def nde_closed(fit: JointFit, c, with_se=False, propagate_sigma2=True) -> EffectEstimate:
    c = _contrast(c)
    est = closed_form_nde(_params(fit), c.x_star, c.x)
    se = delta_se_nde(fit, c, propagate_sigma2) if with_se else None
    return EffectEstimate(Effect.NDE, float(est), Method.CLOSED, se)


def nie_closed(fit: JointFit, c, with_se=False, propagate_sigma2=True) -> EffectEstimate:
    c = _contrast(c)
    est = closed_form_nie(_params(fit), c.x_star, c.x)
    se = delta_se_nie(fit, c, propagate_sigma2) if with_se else None
    return EffectEstimate(Effect.NIE, float(est), Method.CLOSED, se)


def effects_closed(fit: JointFit, c, with_se=True, propagate_sigma2=True):
    return (nde_closed(fit, c, with_se, propagate_sigma2),
            nie_closed(fit, c, with_se, propagate_sigma2))


def _effects_from_h(h, c, method):
    x, xs = c.x, c.x_star
    probs = (h(x, xs), h(xs, xs), h(x, x))
    if not all(0.0 < p < 1.0 for p in probs):
        raise NumericalError(f"{method.value}: marginal probability saturated at 0 or 1; "
                             "coefficients are too large for a log-odds contrast")
    l_x_xs, l_xs, l_x = (logit(p) for p in probs)
    nde = l_x_xs - l_xs
    nie = l_x - l_x_xs
    return (EffectEstimate(Effect.NDE, float(nde), method),
            EffectEstimate(Effect.NIE, float(nie), method))


def effects_exact(fit: JointFit, c, spec: QuadratureSpec | None = None):
    c = _contrast(c)
    return _effects_from_h(lambda a, b: h_exact(fit, a, b, spec), c, Method.EXACT)


def effects_vv(fit: JointFit, c):
    """Rare-outcome product-method effects (valid when ``expit ~ exp``)."""
    c = _contrast(c)
    b0, bx, bw, bxw, t0, tx, s2 = _params(fit)
    x, xs = c.x, c.x_star
    nde = (bx + bxw * (t0 + tx * xs + bw * s2)) * (x - xs) + 0.5 * bxw ** 2 * s2 * (x * x - xs * xs)
    nie = (bw * tx + bxw * tx * x) * (x - xs)
    return (EffectEstimate(Effect.NDE, float(nde), Method.VV),
            EffectEstimate(Effect.NIE, float(nie), Method.VV))


def _h_gaynor(fit, x, x_star, c_const):
    o, m = fit.outcome, fit.mediator
    a_w = o.beta_w + o.beta_xw * x
    num = o.beta0 + o.beta_x * x + a_w * (m.theta0 + m.theta_x * x_star)
    return float(norm_cdf(num / math.sqrt(c_const ** 2 + a_w * a_w * m.sigma2)))


def effects_gaynor(fit: JointFit, c, c_const=GAYNOR_C):
    """Effects from the probit approximation ``expit(t) ~ Phi(t / c_const)``."""
    c = _contrast(c)
    return _effects_from_h(lambda a, b: _h_gaynor(fit, a, b, c_const), c, Method.GAYNOR)


def estimate_effects(fit: JointFit, c, methods=(Method.CLOSED,), spec=None, with_se=True,
                     propagate_sigma2=True):
    """Point estimates for each method: ``{Method: (nde, nie)}``."""
    c = _contrast(c)
    out = {}
    for m in parse_methods(methods):
        if m is Method.CLOSED:
            out[m] = effects_closed(fit, c, with_se, propagate_sigma2)
        elif m is Method.EXACT:
            out[m] = effects_exact(fit, c, spec)
        elif m is Method.VV:
            out[m] = effects_vv(fit, c)
        else:
            out[m] = effects_gaynor(fit, c)
    return out


def proportion_mediated(nde: EffectEstimate, nie: EffectEstimate) -> EffectEstimate:
    """``NIE / (NDE + NIE)``; only meaningful when the effects share a sign."""
    if nde.estimate * nie.estimate < 0 or nde.estimate + nie.estimate == 0:
        raise SignMismatch(
            f"NDE ({nde.estimate:.4g}) and NIE ({nie.estimate:.4g}) differ in sign; "
            "proportion mediated is not meaningful"
        )
    return EffectEstimate(Effect.PROP_MEDIATED, nie.estimate / (nde.estimate + nie.estimate), nde.method)


def _boot_one(r, data, c, methods, seed, with_interaction, firth, spec):
    rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
    idx = rng.integers(0, data.n, data.n)
    out = np.full((len(methods), 2), np.nan)
    try:
        sample = data.take(idx)
        if sample.y.min() == sample.y.max():
            return out
        fit = assemble_joint(fit_logistic(sample, with_interaction, firth), fit_linear(sample))
        for i, (nde, nie) in enumerate(estimate_effects(fit, c, methods, spec, with_se=False).values()):
            out[i] = (nde.estimate, nie.estimate)
    except (MedMargError, FloatingPointError, np.linalg.LinAlgError):
        out[:] = np.nan
    return out


def bootstrap_effects(data: Dataset, c, methods=(Method.CLOSED,), replications=500, level=0.95,
                      seed=0, with_interaction=True, firth=False, spec=None, n_jobs=1,
                      max_fail_frac=0.10) -> BootstrapResult:
    """Percentile-bootstrap CIs from row resampling with both models refitted.

    Replicate ``r`` draws from a stream seeded by ``(seed, r)``, so the output
    is identical for any ``n_jobs``. Replicates whose fit fails are dropped.

    Raises
    ------
    TooManyFailures
        When more than ``max_fail_frac`` of the replicates fail.
    """
    c = _contrast(c)
    methods = parse_methods(methods)
    level = check_level(level)
    if int(replications) < 100:
        raise InputError(f"need at least 100 bootstrap replications, got {replications}")
    if int(seed) < 0:
        raise InputError("seed must be non-negative")
    work = partial(_boot_one, data=data, c=c, methods=methods, seed=int(seed),
                   with_interaction=with_interaction, firth=firth, spec=spec)
    est = np.stack(parallel_map(work, range(int(replications)), n_jobs))
    failed = np.isnan(est).any(axis=(1, 2))
    n_failed = int(failed.sum())
    if n_failed > max_fail_frac * replications:
        raise TooManyFailures(
            f"{n_failed} of {replications} bootstrap replicates failed to fit",
            n_failed, int(replications),
        )
    good = est[~failed]
    q = [(1.0 - level) / 2.0, (1.0 + level) / 2.0]
    cis = {}
    for i, m in enumerate(methods):
        lo_hi = np.quantile(good[:, i, :], q, axis=0)
        cis[m] = (tuple(lo_hi[:, 0]), tuple(lo_hi[:, 1]))
    return BootstrapResult(methods, level, int(replications), int(seed), n_failed, est, cis)


def interaction_wald_test(outcome):
    """Two-sided Wald p-value for ``beta_xw = 0``."""
    se = math.sqrt(outcome.cov[3, 3])
    z = outcome.beta_xw / se
    return {"z": z, "p_value": float(2.0 * norm.sf(abs(z)))}


def _resolve_interaction(data, interaction, firth, alpha=0.10):
    """Return ``(with_interaction, test_info)``; ``"auto"`` keeps the term when p < alpha."""
    if interaction in (True, "on"):
        return True, None
    if interaction in (False, "off"):
        return False, None
    if interaction != "auto":
        raise InputError(f"interaction must be True, False or 'auto', got {interaction!r}")
    full = fit_logistic(data, True, firth)
    test = interaction_wald_test(full)
    keep = test["p_value"] < alpha
    test.update(alpha=alpha, kept=bool(keep))
    return bool(keep), test


def mediate(data: Dataset, c=(0.0, 1.0), methods=(Method.CLOSED,), interaction=True, firth=False,
            n_bootstrap=0, level=0.95, seed=0, spec=None, propagate_sigma2=True, n_jobs=1):
    """Fit both models and estimate NDE, NIE, NTE and the proportion mediated."""
    c = _contrast(c)
    methods = parse_methods(methods)
    with_int, test = _resolve_interaction(data, interaction, firth)
    fit = assemble_joint(fit_logistic(data, with_int, firth), fit_linear(data))
    point = estimate_effects(fit, c, methods, spec, True, propagate_sigma2)

    boot = None
    if n_bootstrap:
        boot = bootstrap_effects(data, c, methods, n_bootstrap, level, seed, with_int, firth,
                                 spec, n_jobs)

    estimates, notes = [], []
    for m, (nde, nie) in point.items():
        if boot is not None:
            (lo_d, hi_d), (lo_i, hi_i) = boot.cis[m]
            nde.ci = (lo_d, hi_d, boot.level)
            nie.ci = (lo_i, hi_i, boot.level)
        nte = EffectEstimate(Effect.NTE, nde.estimate + nie.estimate, m)
        if m is Method.CLOSED:
            nte.se_delta = delta_se_nte(fit, c, propagate_sigma2)
        if boot is not None:
            i = methods.index(m)
            tot = boot.estimates[:, i, :].sum(axis=1)
            tot = tot[~np.isnan(tot)]
            lo, hi = np.quantile(tot, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
            nte.ci = (float(lo), float(hi), boot.level)
        estimates += [nde, nie, nte]
        try:
            estimates.append(proportion_mediated(nde, nie))
        except SignMismatch as exc:
            notes.append(f"{m.value}: {exc}")
    meta = None
    if boot is not None:
        meta = {"replications": boot.replications, "seed": boot.seed, "level": boot.level,
                "n_failed": boot.n_failed}
    return MediationReport(fit, c, estimates, meta, test, notes)


class MediationAnalysis(BaseEstimator):
    """Regression-based natural-effect mediation analysis, sklearn-style.

    ``fit(X, y)`` takes ``X = [exposure, mediator]`` and a binary ``y``.

    Parameters
    ----------
    contrast : tuple of float, default=(0.0, 1.0)
        ``(x_star, x)``: reference and target exposure levels.
    methods : sequence of str, default=("closed",)
        Any of ``"closed"``, ``"exact"``, ``"vv"``, ``"gaynor"``.
    interaction : bool or "auto", default=True
        ``"auto"`` keeps the exposure-mediator term when its Wald p-value
        is below 0.10.
    firth : bool, default=False
    n_bootstrap : int, default=0
        Percentile-bootstrap replications; 0 disables the bootstrap.
    level : float, default=0.95
    random_state : int, default=0
    quadrature : GaussHermite or Adaptive, optional
    propagate_sigma2 : bool, default=True
        Include the uncertainty of the mediator variance in Delta SEs.
    n_jobs : int, default=1

    Attributes
    ----------
    report_ : MediationReport
    fit_ : JointFit
    effects_ : dict
        ``{(effect, method): estimate}``.
    """

    def __init__(self, contrast=(0.0, 1.0), methods=("closed",), interaction=True, firth=False,
                 n_bootstrap=0, level=0.95, random_state=0, quadrature=None, propagate_sigma2=True,
                 n_jobs=1):
        self.contrast = contrast
        self.methods = methods
        self.interaction = interaction
        self.firth = firth
        self.n_bootstrap = n_bootstrap
        self.level = level
        self.random_state = random_state
        self.quadrature = quadrature
        self.propagate_sigma2 = propagate_sigma2
        self.n_jobs = n_jobs

    def fit(self, X, y):
        x, w = check_xw(X)
        data = check_dataset(y, x, w)
        self.report_ = mediate(
            data, self.contrast, self.methods, self.interaction, self.firth, self.n_bootstrap,
            self.level, self.random_state, self.quadrature, self.propagate_sigma2, self.n_jobs,
        )
        self.fit_ = self.report_.fit
        self.effects_ = {(e.effect.value, e.method.value): e.estimate for e in self.report_.estimates}
        return self

    def summary(self):
        check_is_fitted(self)
        return self.report_.rows()
