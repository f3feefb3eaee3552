"""Small argument checkers shared across modules."""

import numbers

import numpy as np

from .exceptions import ValidationError


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must be a non-negative finite number, got {value!r}")
    return float(value)


def check_probability(value, name, open_low=False, open_high=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValidationError(f"{name} must be a real number, got {value!r}")
    if value < 0 or value > 1 or (open_low and value == 0) or (open_high and value == 1):
        raise ValidationError(f"{name} must lie in the unit interval, got {value!r}")
    return float(value)


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValidationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_prob_vector(p, name, atol=1e-9):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValidationError(f"{name} must be finite and non-negative")
    if abs(p.sum() - 1.0) > atol:
        raise ValidationError(f"{name} must sum to 1, sums to {p.sum()!r}")
    return p
