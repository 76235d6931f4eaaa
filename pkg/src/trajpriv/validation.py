"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np

__all__ = [
    "as_generator",
    "check_points",
    "check_vector",
    "check_positive",
    "check_probabilities",
]


def as_generator(random_state=None) -> np.random.Generator:
    """Coerce ``random_state`` (None, int, SeedSequence, Generator) to a Generator.

    ``None`` draws fresh OS entropy, so pass an int or Generator whenever
    reproducibility matters.
    """
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def check_points(points, name: str = "points") -> np.ndarray:
    """Validate an (N, 2) array of latitude/longitude pairs in degrees."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (N, 2), got {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    if arr.size:
        lat, lon = arr[:, 0], arr[:, 1]
        if lat.min() < -90.0 or lat.max() > 90.0:
            raise ValueError(f"{name}: latitude outside [-90, 90]")
        if lon.min() < -180.0 or lon.max() > 180.0:
            raise ValueError(f"{name}: longitude outside [-180, 180]")
    return arr


def check_vector(v, name: str = "v") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_positive(x, name: str = "value", allow_inf: bool = False) -> float:
    if not isinstance(x, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(x).__name__}")
    x = float(x)
    if np.isnan(x) or x <= 0:
        raise ValueError(f"{name} must be positive, got {x}")
    if not allow_inf and np.isinf(x):
        raise ValueError(f"{name} must be finite, got {x}")
    return x


def check_probabilities(p, name: str = "p") -> np.ndarray:
    """Normalize a nonnegative count/probability vector to sum exactly 1."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.isfinite(arr).all() or (arr < 0).any():
        raise ValueError(f"{name} must be finite and nonnegative")
    total = arr.sum()
    if total <= 0:
        raise ValueError(f"{name} has zero total mass")
    return arr / total
