"""Small shared numerics: regression, bootstrap, float formatting."""

from __future__ import annotations

import numpy as np

__all__ = ["fmt", "linreg", "bootstrap_ci", "fit_stretched_tail"]


def fmt(x: float) -> str:
    """Full round-trip decimal representation."""
    return repr(float(x))


def linreg(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line y ~ a + b x; returns (slope, intercept, r2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("regression needs at least two points")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise ValueError("degenerate regression abscissae")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    syy = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if syy == 0 else 1.0 - float(np.sum(resid**2)) / syy
    return slope, intercept, r2


def bootstrap_ci(
    samples: np.ndarray,
    stat,
    rng: np.random.Generator,
    n_boot: int = 400,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval for a statistic of an i.i.d. sample."""
    samples = np.asarray(samples)
    vals = []
    n = len(samples)
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        try:
            vals.append(stat(samples[idx]))
        except ValueError:
            continue
    if not vals:
        return (float("nan"), float("nan"))
    lo = (1.0 - level) / 2.0
    return (
        float(np.quantile(vals, lo)),
        float(np.quantile(vals, 1.0 - lo)),
    )


def fit_stretched_tail(counts: np.ndarray) -> float:
    """Stretched-exponential survival exponent of an integer sample.

    Fits log(-log P(N > n)) ~ c + beta log n over n with empirical survival
    strictly inside (0, 1) and returns beta."""
    counts = np.asarray(counts)
    ns = np.arange(1, counts.max() + 1)
    surv = np.array([(counts > n).mean() for n in ns])
    keep = (surv > 0.0) & (surv < 1.0)
    if keep.sum() < 3:
        raise ValueError("not enough spread in the sample to fit a tail")
    x = np.log(ns[keep].astype(float))
    y = np.log(-np.log(surv[keep]))
    slope, _, _ = linreg(x, y)
    return slope
