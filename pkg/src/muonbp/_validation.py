"""Input validation helpers shared across the package."""
from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np
from sklearn.utils import check_array


def as_matrix(x, name: str = "X") -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array or raise ``ValueError``."""
    try:
        return check_array(
            x,
            dtype=np.float64,
            ensure_2d=True,
            ensure_all_finite=True,
            input_name=name,
        )
    except ValueError as exc:
        raise ValueError(f"{name}: {exc}") from None


def is_finite_tree(mats) -> bool:
    return all(bool(np.all(np.isfinite(m))) for m in mats)


def check_period(period):
    """Normalize a period: a positive int, or ``math.inf`` (also spelled "inf")."""
    if isinstance(period, str):
        if period.strip().lower() in ("inf", "infinite", "infinity"):
            return math.inf
        period = int(period)
    if isinstance(period, Real) and math.isinf(period) and period > 0:
        return math.inf
    if not isinstance(period, Integral) and not (isinstance(period, Real) and float(period).is_integer()):
        raise ValueError(f"period must be a positive integer or 'inf', got {period!r}")
    period = int(period)
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    return period


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite positive number, got {value}")
    return value
