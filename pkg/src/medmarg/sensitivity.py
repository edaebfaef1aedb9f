"""Sensitivity of a marginal log-OR to an unmeasured continuous confounder.

Given the observed marginal slope ``eta_x`` of ``Y`` on ``X``, and a
hypothesised confounder ``W`` (effect ``beta_w`` on the outcome log-odds,
correlation ``rho`` with ``X``), recover the conditional slope ``beta_x``.
No exposure-confounder interaction is assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, InvalidConfig, InvalidVarianceTerm

__all__ = [
    "SensitivityInput",
    "SensitivityGrid",
    "adjust_beta_x",
    "sign_change_region",
    "sweep",
]

C3 = 3.0 / math.pi ** 2


@dataclass(frozen=True)
class SensitivityInput:
    """Observed marginal slope and the SD of the exposure.

    In ``standardized`` mode the exposure has unit variance and ``sigma_x``
    must be 1.
    """

    eta_x: float
    sigma_x: float = 1.0
    standardized: bool = True

    def __post_init__(self):
        if not math.isfinite(self.eta_x):
            raise InputError("eta_x must be finite")
        if not self.sigma_x > 0:
            raise InputError(f"sigma_x must be positive, got {self.sigma_x}")
        if self.standardized and self.sigma_x != 1.0:
            raise InputError("standardized mode requires sigma_x = 1")


@dataclass(frozen=True)
class SensitivityGrid:
    beta_w_values: tuple
    rho_values: tuple

    def __post_init__(self):
        bw = tuple(float(v) for v in np.atleast_1d(self.beta_w_values))
        rho = tuple(float(v) for v in np.atleast_1d(self.rho_values))
        if not bw or not rho:
            raise InvalidConfig("sensitivity grid must be non-empty")
        if any(not abs(r) < 1.0 for r in rho):
            raise InputError("correlations must lie strictly inside (-1, 1)")
        object.__setattr__(self, "beta_w_values", bw)
        object.__setattr__(self, "rho_values", rho)


def _residual_term(inp, rho):
    if inp.standardized:
        return 1.0 - rho * rho
    term = 1.0 - rho * rho * inp.sigma_x ** 2
    if term < 0:
        raise InvalidVarianceTerm(
            f"1 - rho^2 sigma_x^2 = {term:.4g} < 0 for rho={rho}, sigma_x={inp.sigma_x}"
        )
    return term


def _confounding_shift(inp, beta_w, rho):
    return beta_w * rho if inp.standardized else beta_w * rho / inp.sigma_x


def adjust_beta_x(inp: SensitivityInput, beta_w, rho):
    """Conditional exposure log-OR implied by ``eta_x`` and a confounder ``(beta_w, rho)``.

    ``beta_x ~ eta_x * sqrt(1 + (3/pi^2) beta_w^2 (1 - rho^2 sigma_x^2)) - beta_w rho / sigma_x``;
    the standardized mode uses ``(1 - rho^2)`` and ``beta_w * rho``.

    Raises
    ------
    InvalidVarianceTerm
        Non-standardized mode with ``rho^2 sigma_x^2 > 1``.
    """
    inflate = math.sqrt(1.0 + C3 * beta_w ** 2 * _residual_term(inp, rho))
    return inp.eta_x * inflate - _confounding_shift(inp, beta_w, rho)


def _flipped(inp, beta_w, rho):
    lhs = math.sqrt(1.0 + C3 * beta_w ** 2 * _residual_term(inp, rho))
    return lhs < _confounding_shift(inp, beta_w, rho) / inp.eta_x


def sign_change_region(inp: SensitivityInput, grid: SensitivityGrid):
    """Boolean matrix ``[i, j]`` (``beta_w_values[i]``, ``rho_values[j]``): does ``beta_x`` flip sign?

    The test is ``sqrt(1 + (3/pi^2) beta_w^2 (1 - rho^2)) < beta_w rho / eta_x``,
    which is exactly ``beta_x / eta_x < 0`` whatever the sign of ``eta_x``.
    """
    if inp.eta_x == 0:
        raise InputError("eta_x must be non-zero for a sign-change analysis")
    out = np.zeros((len(grid.beta_w_values), len(grid.rho_values)), dtype=bool)
    for i, bw in enumerate(grid.beta_w_values):
        for j, rho in enumerate(grid.rho_values):
            try:
                out[i, j] = _flipped(inp, bw, rho)
            except InvalidVarianceTerm:
                out[i, j] = False
    return out


def sweep(inp: SensitivityInput, grid: SensitivityGrid):
    """Long-format rows over the grid, ``beta_w`` outer and ``rho`` inner.

    Each row is a dict with ``beta_w, rho, beta_x_adjusted, sign_flipped,
    valid``; rows where the variance term is negative have ``valid=False``
    and NaN for ``beta_x_adjusted``.
    """
    rows = []
    for bw in grid.beta_w_values:
        for rho in grid.rho_values:
            try:
                bx = adjust_beta_x(inp, bw, rho)
                flipped = inp.eta_x != 0 and _flipped(inp, bw, rho)
                valid = True
            except InvalidVarianceTerm:
                bx, flipped, valid = float("nan"), False, False
            rows.append({"beta_w": bw, "rho": rho, "beta_x_adjusted": bx,
                         "sign_flipped": bool(flipped), "valid": valid})
    return rows
