"""Input-validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np


def check_probability_vector(p, name: str = "p", atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(float(p.sum()) - 1.0) > atol:
        raise ValueError(f"{name} sums to {p.sum()}, expected 1 +/- {atol}")
    return p


def check_positive(value, name: str):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_in_open_unit_interval(value: float, name: str):
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_window(window) -> tuple[float, float]:
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ValueError(f"window end must exceed start: [{t0}, {t1})")
    return (t0, t1)


def check_fitted(estimator, attributes: tuple[str, ...]) -> None:
    missing = [a for a in attributes if getattr(estimator, a, None) is None]
    if missing:
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted (missing {', '.join(missing)}); "
            "call fit() first"
        )
