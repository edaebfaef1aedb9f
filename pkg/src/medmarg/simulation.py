"""Monte-Carlo study harness for the natural-effect estimators.

Design: ``X ~ Bernoulli(p_x)``, ``W | X ~ N(theta0 + theta_x X, sigma^2)``,
``Y | X, W ~ Bernoulli(expit(beta0 + beta_x X + beta_w W + beta_xw X W))``.
True effects come from quadrature at the generating parameters. Each
replicate draws from its own stream seeded by ``(seed, scenario, replicate)``
so results are identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.stats import norm

from ._parallel import parallel_map
from ._validation import Dataset
from .core import expit
from .exceptions import InvalidConfig, MedMargError, TooManyFailures
from .mediation import (
    Contrast,
    Method,
    bootstrap_effects,
    effects_exact,
    estimate_effects,
    parse_methods,
)
from .regression import JointFit, assemble_joint, fit_linear, fit_logistic

__all__ = [
    "SimConfig",
    "MethodSummary",
    "ScenarioResult",
    "StudyReport",
    "GENERATOR",
    "generate_dataset",
    "true_effects",
    "run_scenario",
    "run_study",
    "reference_grid",
]

GENERATOR = "numpy.random.PCG64 seeded by SeedSequence([seed, scenario, replicate])"
MAX_FAIL_FRAC = 0.20


@dataclass(frozen=True)
class SimConfig:
    """One simulation scenario. Defaults follow the reference design at ``beta0 = -0.5``."""

    p_x: float = 0.3
    theta0: float = 0.1
    theta_x: float = 0.5
    sigma: float = 0.5
    beta0: float = -0.5
    beta_x: float = 0.4
    beta_w: float = 0.5
    beta_xw: float = 0.15
    n: int = 1000
    replications: int = 500
    contrast: tuple = (0.0, 1.0)
    bootstrap_reps: int = 0
    ci_level: float = 0.95
    seed: int = 0
    methods: tuple = ("closed", "exact", "vv", "gaynor")
    firth: bool = False

    def validate(self):
        problems = []
        if not 0.0 < self.p_x < 1.0:
            problems.append(f"p_x: must lie in (0, 1), got {self.p_x}")
        if not self.sigma > 0:
            problems.append(f"sigma: must be positive, got {self.sigma}")
        if int(self.n) != self.n or self.n < 50:
            problems.append(f"n: must be an integer >= 50, got {self.n}")
        if int(self.replications) != self.replications or self.replications < 1:
            problems.append(f"replications: must be an integer >= 1, got {self.replications}")
        if self.bootstrap_reps and self.bootstrap_reps < 100:
            problems.append(f"bootstrap_reps: must be 0 or >= 100, got {self.bootstrap_reps}")
        if not 0.0 < self.ci_level < 1.0:
            problems.append(f"ci_level: must lie in (0, 1), got {self.ci_level}")
        if int(self.seed) != self.seed or self.seed < 0:
            problems.append(f"seed: must be a non-negative integer, got {self.seed}")
        if not self.methods:
            problems.append("methods: at least one method is required")
        else:
            try:
                parse_methods(self.methods)
            except MedMargError as exc:
                problems.append(f"methods: {exc}")
        try:
            Contrast(*self.contrast)
        except (MedMargError, TypeError) as exc:
            problems.append(f"contrast: {exc}")
        for name in ("theta0", "theta_x", "beta0", "beta_x", "beta_w", "beta_xw"):
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{name}: must be finite")
        if problems:
            raise InvalidConfig("; ".join(problems))
        return self

    @property
    def generating_fit(self) -> JointFit:
        return JointFit.from_values(self.beta0, self.beta_x, self.beta_w, self.beta_xw,
                                    self.theta0, self.theta_x, self.sigma ** 2)


@dataclass
class MethodSummary:
    effect: str
    method: str
    true_value: float
    mean_estimate: float
    bias: float
    sd: float
    coverage_delta: float | None = None
    coverage_boot: float | None = None


@dataclass
class ScenarioResult:
    config: SimConfig
    true_nde: float
    true_nie: float
    summaries: list
    n_valid: int
    n_failed: int
    n_boot_failed: int = 0
    estimates: np.ndarray | None = field(default=None, repr=False)

    def get(self, effect, method):
        for s in self.summaries:
            if s.effect == effect and s.method == Method(method).value:
                return s
        raise KeyError((effect, method))


@dataclass
class StudyReport:
    results: list  # ScenarioResult, or None where the scenario failed
    errors: list  # (scenario index, message)
    metadata: dict = field(default_factory=dict)

    @property
    def partial(self):
        return bool(self.errors)


def _seed_sequence(replicate_seed):
    if isinstance(replicate_seed, np.random.SeedSequence):
        return replicate_seed
    return np.random.SeedSequence(replicate_seed)


def generate_dataset(cfg: SimConfig, replicate_seed) -> Dataset:
    """Draw one sample of size ``cfg.n``; deterministic in ``replicate_seed``.

    ``replicate_seed`` is an int, a sequence of ints or a ``SeedSequence``.
    """
    rng = np.random.default_rng(_seed_sequence(replicate_seed))
    n = int(cfg.n)
    x = rng.binomial(1, cfg.p_x, n).astype(float)
    w = rng.normal(cfg.theta0 + cfg.theta_x * x, cfg.sigma)
    p = expit(cfg.beta0 + cfg.beta_x * x + cfg.beta_w * w + cfg.beta_xw * x * w)
    y = (rng.random(n) < p).astype(float)
    return Dataset(y, x, w)


def true_effects(cfg: SimConfig, spec=None):
    """``(NDE, NIE)`` at the generating parameters, by quadrature."""
    nde, nie = effects_exact(cfg.generating_fit, Contrast(*cfg.contrast), spec)
    return nde.estimate, nie.estimate


def _replicate(r, cfg, scenario_index, methods):
    ss = np.random.SeedSequence([int(cfg.seed), int(scenario_index), int(r)])
    data_ss, boot_ss = ss.spawn(2)
    n_m = len(methods)
    out = {"ok": False, "est": np.full((n_m, 2), np.nan), "se": np.full(2, np.nan),
           "boot": np.full((n_m, 2, 2), np.nan), "boot_failed": False}
    data = generate_dataset(cfg, data_ss)
    contrast = Contrast(*cfg.contrast)
    try:
        if data.y.min() == data.y.max():
            return out
        fit = assemble_joint(fit_logistic(data, True, cfg.firth), fit_linear(data))
        est = estimate_effects(fit, contrast, methods, with_se=True)
    except (MedMargError, np.linalg.LinAlgError, FloatingPointError):
        return out
    for i, (nde, nie) in enumerate(est.values()):
        out["est"][i] = (nde.estimate, nie.estimate)
        if nde.se_delta is not None:
            out["se"] = np.array([nde.se_delta, nie.se_delta])
    out["ok"] = True
    if cfg.bootstrap_reps:
        boot_seed = int(boot_ss.generate_state(1)[0])
        try:
            b = bootstrap_effects(data, contrast, methods, cfg.bootstrap_reps, cfg.ci_level,
                                  boot_seed, True, cfg.firth)
            for i, m in enumerate(methods):
                (lo_d, hi_d), (lo_i, hi_i) = b.cis[m]
                out["boot"][i] = ((lo_d, hi_d), (lo_i, hi_i))
        except MedMargError:
            out["boot_failed"] = True
    return out


def _pct(mask):
    return float(100.0 * np.mean(mask)) if mask.size else float("nan")


def run_scenario(cfg: SimConfig, scenario_index=0, n_jobs=1, spec=None) -> ScenarioResult:
    """Run ``cfg.replications`` replicates and summarise bias, SD and coverage.

    Delta-method coverage is reported for the closed-form method;
    percentile-bootstrap coverage for every method when
    ``cfg.bootstrap_reps > 0``. Replicates whose fit fails are excluded
    and counted.

    Raises
    ------
    TooManyFailures
        More than 20% of replicates failed.
    """
    cfg.validate()
    methods = parse_methods(cfg.methods)
    work = partial(_replicate, cfg=cfg, scenario_index=scenario_index, methods=methods)
    reps = parallel_map(work, range(int(cfg.replications)), n_jobs)

    ok = np.array([r["ok"] for r in reps])
    n_failed = int((~ok).sum())
    if n_failed > MAX_FAIL_FRAC * cfg.replications:
        raise TooManyFailures(
            f"{n_failed} of {cfg.replications} replicates failed "
            f"(beta0={cfg.beta0}, n={cfg.n}); consider firth=True",
            n_failed, int(cfg.replications),
        )
    est = np.stack([r["est"] for r in reps])[ok]
    se = np.stack([r["se"] for r in reps])[ok]
    boot = np.stack([r["boot"] for r in reps])[ok]
    boot_failed = np.array([r["boot_failed"] for r in reps])[ok]

    truth = true_effects(cfg, spec)
    z = float(norm.ppf(0.5 + cfg.ci_level / 2.0))
    summaries = []
    for k, effect in enumerate(("NDE", "NIE")):
        for i, m in enumerate(methods):
            vals = est[:, i, k]
            sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            mean = float(np.mean(vals))
            cov_delta = cov_boot = None
            if m is Method.CLOSED:
                cov_delta = _pct(np.abs(vals - truth[k]) <= z * se[:, k])
            if cfg.bootstrap_reps:
                good = ~boot_failed
                lo, hi = boot[good, i, k, 0], boot[good, i, k, 1]
                cov_boot = _pct((lo <= truth[k]) & (truth[k] <= hi))
            summaries.append(MethodSummary(effect, m.value, truth[k], mean, mean - truth[k], sd,
                                           cov_delta, cov_boot))
    return ScenarioResult(cfg, truth[0], truth[1], summaries, int(ok.sum()), n_failed,
                          int(boot_failed.sum()), est)


def run_study(cfgs, n_jobs=1, spec=None) -> StudyReport:
    """Run every scenario in order; a failing scenario is recorded and skipped."""
    cfgs = list(cfgs)
    if not cfgs:
        raise InvalidConfig("study needs at least one scenario")
    for i, cfg in enumerate(cfgs):
        try:
            cfg.validate()
        except InvalidConfig as exc:
            raise InvalidConfig(f"scenario {i}: {exc}") from None
    results, errors = [], []
    for i, cfg in enumerate(cfgs):
        try:
            results.append(run_scenario(cfg, i, n_jobs, spec))
        except MedMargError as exc:
            results.append(None)
            errors.append((i, str(exc)))
    return StudyReport(results, errors, {"generator": GENERATOR})


def reference_grid(beta0s=(-3.0, -2.0, -0.5, 1.0, 2.0), ns=(150, 500, 1000, 5000), **overrides):
    """Scenario list over intercepts and sample sizes, other settings shared."""
    base = SimConfig(**overrides)
    return [dataclasses.replace(base, beta0=float(b), n=int(n)) for b in beta0s for n in ns]
