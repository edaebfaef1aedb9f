"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d

from .exceptions import InputError

MIN_SAMPLES = 10


@dataclass(frozen=True, eq=False)
class Dataset:
    """Exposure ``x``, mediator ``w`` and binary outcome ``y`` of equal length."""

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray

    @property
    def n(self):
        return self.y.shape[0]

    def take(self, idx):
        return Dataset(self.y[idx], self.x[idx], self.w[idx])


def _as_vector(v, name):
    try:
        v = column_or_1d(np.asarray(v, dtype=float), warn=False)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from None
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name} contains missing or non-finite values")
    return v


def check_dataset(y, x, w, *, require_both_classes=True) -> Dataset:
    """Validate and coerce raw columns into a :class:`Dataset`."""
    y = _as_vector(y, "y")
    x = _as_vector(x, "x")
    w = _as_vector(w, "w")
    if not (len(y) == len(x) == len(w)):
        raise InputError(f"length mismatch: y={len(y)}, x={len(x)}, w={len(w)}")
    if len(y) < MIN_SAMPLES:
        raise InputError(f"need at least {MIN_SAMPLES} observations, got {len(y)}")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("outcome must be binary (0/1)")
    if require_both_classes and (y.min() == y.max()):
        raise InputError("outcome has a single class; both 0 and 1 are required")
    for arr in (y, x, w):
        arr.setflags(write=False)
    return Dataset(y, x, w)


def check_xw(X):
    """Split a two-column ``[x, w]`` feature matrix."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[1] != 2:
        raise InputError(f"expected 2 feature columns [exposure, mediator], got {X.shape[1]}")
    return X[:, 0], X[:, 1]


def check_contrast(contrast):
    try:
        x_star, x = (float(v) for v in contrast)
    except (TypeError, ValueError):
        raise InputError(f"contrast must be a pair (x_star, x), got {contrast!r}") from None
    if not (np.isfinite(x_star) and np.isfinite(x)):
        raise InputError("contrast values must be finite")
    return x_star, x


def check_level(level):
    level = float(level)
    if not 0.0 < level < 1.0:
        raise InputError(f"confidence level must lie in (0, 1), got {level}")
    return level
