"""Small input-validation helpers.

Every public constructor and the CLI funnel their parameter checks through
these so error messages consistently name the offending field.
"""

import math
import numbers

import numpy as np

from .errors import ConfigError


def check_real(value, field):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(field, f"expected a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(field, f"must be finite, got {value!r}")
    return value


def check_positive(value, field):
    value = check_real(value, field)
    if value <= 0.0:
        raise ConfigError(field, f"must be > 0, got {value}")
    return value


def check_in_open_interval(value, field, lo, hi):
    value = check_real(value, field)
    if not (lo < value < hi):
        raise ConfigError(field, f"must lie in ({lo}, {hi}), got {value}")
    return value


def check_int(value, field, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value}")
    return value


def check_triple(value, field, kind=float):
    try:
        items = tuple(value)
    except TypeError:
        raise ConfigError(field, f"expected a length-3 sequence, got {value!r}") from None
    if len(items) != 3:
        raise ConfigError(field, f"expected length 3, got length {len(items)}")
    if kind is float:
        return tuple(check_real(v, f"{field}[{i}]") for i, v in enumerate(items))
    return tuple(check_int(v, f"{field}[{i}]") for i, v in enumerate(items))


def check_point(value, field):
    """Coerce to a 3-tuple of floats (a group element in coordinates)."""
    return check_triple(value, field, kind=float)


def check_field_shape(data, spec, field="data"):
    data = np.asarray(data, dtype=float)
    if data.shape != tuple(spec.n):
        raise ConfigError(field, f"shape {data.shape} does not match grid {tuple(spec.n)}")
    return data


def check_same_spec(a, b, field="field"):
    if a.spec != b.spec:
        raise ConfigError(field, "grid specs differ between fields")


def check_choice(value, field, choices):
    if value not in choices:
        raise ConfigError(field, f"must be one of {sorted(choices)}, got {value!r}")
    return value
