"""Input validation helpers shared by the estimators and functional APIs.

scikit-learn's ``check_array`` refuses complex input, so the complex-valued
paths go through :func:`check_complex_array` instead.
"""

import numbers

import numpy as np


def check_positive(value, name, allow_inf=False):
    """Return ``value`` as float, raising ``ValueError`` unless it is > 0."""
    if not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if np.isnan(value) or value <= 0 or (np.isinf(value) and not allow_inf):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_seed(seed):
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    if not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def check_real_array(x, name, ndim=None, nonneg=False):
    x = np.asarray(x, dtype=np.float64)
    if ndim is not None and x.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    if nonneg and np.any(x < 0):
        raise ValueError(f"{name} must be non-negative")
    return x


def check_complex_array(x, name, ndim=None, min_last=None):
    """Coerce to complex128 and check shape/finiteness.

    ``min_last`` is the minimum length of the last axis (echo axis for
    voxel signals).
    """
    x = np.asarray(x)
    if not (np.issubdtype(x.dtype, np.number) or x.dtype == bool):
        raise TypeError(f"{name} must be numeric, got dtype {x.dtype}")
    x = x.astype(np.complex128, copy=False)
    if ndim is not None and x.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {x.shape}")
    if min_last is not None and (x.ndim == 0 or x.shape[-1] < min_last):
        raise ValueError(f"{name} needs at least {min_last} samples along the last axis, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_same_shape(*arrays, names=None):
    shapes = [np.shape(a) for a in arrays]
    if any(s != shapes[0] for s in shapes):
        label = ", ".join(names) if names else "inputs"
        raise ValueError(f"shape mismatch between {label}: {shapes}")
    return shapes[0]
