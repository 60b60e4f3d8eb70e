"""Discrete power-law fitting and sampling.

Model: P(X = x) = x**(-gamma) / zeta(gamma, xmin) for integer x >= xmin.
Fitting is maximum likelihood in gamma with the lower cutoff chosen by
Kolmogorov-Smirnov distance minimisation over candidate xmin values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

GAMMA_BOUNDS = (1.01, 6.0)
MAX_XMIN_CANDIDATES = 60
MIN_TAIL_POINTS = 10


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    xmin: int
    ks: float
    n_tail: int


def _mle_gamma(log_sum: float, n: int, xmin: int) -> float:
    """Maximize the discrete power-law likelihood for a fixed xmin."""

    def nll(g: float) -> float:
        return n * np.log(zeta(g, xmin)) + g * log_sum

    res = minimize_scalar(nll, bounds=GAMMA_BOUNDS, method="bounded")
    return float(res.x)


def _ks_distance(values: np.ndarray, counts: np.ndarray, gamma: float, xmin: int) -> float:
    """Sup distance between empirical and model CDFs over observed values."""
    norm = zeta(gamma, xmin)
    # model P(X <= v) evaluated at each observed unique value
    model_cdf = 1.0 - zeta(gamma, values + 1) / norm
    emp_cdf = np.cumsum(counts) / counts.sum()
    return float(np.max(np.abs(emp_cdf - model_cdf)))


def fit_discrete_power_law(data, xmin: int | None = None) -> PowerLawFit:
    """Fit (gamma, xmin) to integer-valued data.

    With ``xmin`` given, only gamma is estimated. Otherwise every unique
    data value (subsampled to at most 60 candidates) is tried as the cutoff
    and the one minimising the KS distance wins.
    """
    x = np.asarray(data, dtype=float)
    x = x[x >= 1]
    if x.size < 2:
        raise ValueError("need at least 2 positive observations")
    x = np.sort(x)

    if xmin is not None:
        tail = x[x >= xmin]
        if tail.size < 2:
            raise ValueError(f"fewer than 2 observations >= xmin={xmin}")
        gamma = _mle_gamma(float(np.log(tail).sum()), tail.size, int(xmin))
        vals, cnts = np.unique(tail, return_counts=True)
        return PowerLawFit(gamma, int(xmin), _ks_distance(vals, cnts, gamma, int(xmin)), tail.size)

    uniq = np.unique(x).astype(int)
    # candidates must leave a usable tail
    candidates = [int(v) for v in uniq if (x >= v).sum() >= MIN_TAIL_POINTS]
    if not candidates:
        candidates = [int(uniq[0])]
    if len(candidates) > MAX_XMIN_CANDIDATES:
        # keep every small cutoff (where the choice matters most) and
        # subsample the long tail of large candidates
        n_keep = MAX_XMIN_CANDIDATES // 2
        head, rest = candidates[:n_keep], candidates[n_keep:]
        idx = np.unique(
            np.linspace(0, len(rest) - 1, MAX_XMIN_CANDIDATES - n_keep).round().astype(int)
        )
        candidates = head + [rest[i] for i in idx]

    log_x = np.log(x)
    best: PowerLawFit | None = None
    for xm in candidates:
        i0 = int(np.searchsorted(x, xm, side="left"))
        tail = x[i0:]
        gamma = _mle_gamma(float(log_x[i0:].sum()), tail.size, xm)
        vals, cnts = np.unique(tail, return_counts=True)
        ks = _ks_distance(vals, cnts, gamma, xm)
        if best is None or ks < best.ks:
            best = PowerLawFit(gamma, xm, ks, tail.size)
    assert best is not None
    return best


def sample_discrete_power_law(
    gamma: float,
    xmin: int,
    size: int,
    rng: np.random.Generator,
    *,
    table_cap: int = 1_000_000,
) -> np.ndarray:
    """Draw integer samples by exact inverse transform.

    The pmf is tabulated up to ``table_cap``; the residual tail mass is
    resolved per-sample by bisection on the zeta-function CDF, so the
    sampler is exact for arbitrarily heavy tails.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    if xmin < 1:
        raise ValueError("xmin must be >= 1")
    norm = zeta(gamma, xmin)
    support = np.arange(xmin, table_cap + 1, dtype=float)
    pmf = support ** (-gamma) / norm
    cdf = np.cumsum(pmf)
    u = rng.random(size)
    out = xmin + np.searchsorted(cdf, u, side="left")
    in_tail = out > table_cap
    for i in np.nonzero(in_tail)[0]:
        # invert P(X >= x) = zeta(gamma, x) / norm by doubling + bisection
        target = 1.0 - u[i]
        lo = table_cap + 1
        hi = lo * 2
        while zeta(gamma, hi) / norm > target:
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if zeta(gamma, mid) / norm > target:
                lo = mid
            else:
                hi = mid
        out[i] = lo
    return out.astype(np.int64)


def rank_selection_exponent(gamma: float) -> float:
    """Map a degree-distribution exponent to its rank-form exponent.

    If item counts follow a power law with exponent gamma, the count of the
    k-th ranked item scales as k**(-1/(gamma-1)).
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    return 1.0 / (gamma - 1.0)


def rank_weights(n: int, gamma: float) -> np.ndarray:
    """Unnormalised selection weights k**(-1/(gamma-1)) for ranks 1..n."""
    if n < 1:
        raise ValueError("need at least one rank")
    b = rank_selection_exponent(gamma)
    return np.arange(1, n + 1, dtype=float) ** (-b)
