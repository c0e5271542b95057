"""Monte Carlo estimates with standard errors and effective sample sizes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_effective: float
    raw_n: int

    def __post_init__(self):
        if self.stderr < 0 or not math.isfinite(self.stderr):
            raise ValueError(f"stderr must be finite and >= 0, got {self.stderr}")
        if self.n_effective > self.raw_n * (1 + 1e-12):
            raise ValueError("n_effective cannot exceed raw_n")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr,
                "n_effective": self.n_effective, "raw_n": self.raw_n}

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 1.0, 1)


def effective_sample_size(x) -> float:
    """ESS by Geyer's initial positive sequence estimator.

    Autocovariances are summed in adjacent pairs until the first pair sum is
    non-positive; the pair sums are also forced to be non-increasing.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = float(np.dot(xc, xc)) / n
    if var == 0.0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    prev = math.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    tau = max(tau, 1.0 / n)
    return float(min(n, n / tau))


def estimate_mean(values, correlated: bool = False) -> Estimate:
    """Sample mean with standard error; ``correlated`` uses the ESS in place of ``n``."""
    v = np.asarray(values, dtype=float).ravel()
    n = len(v)
    if n == 0:
        raise ValueError("no values")
    if n == 1:
        return Estimate(float(v[0]), 0.0, 1.0, 1)
    ess = effective_sample_size(v) if correlated else float(n)
    sd = float(np.std(v, ddof=1))
    return Estimate(float(v.mean()), sd / math.sqrt(ess), ess, n)


def estimate_ratio(num, den, correlated: bool = False) -> Estimate:
    """``mean(num) / mean(den)`` with a delta-method standard error."""
    a = np.asarray(num, dtype=float)
    b = np.asarray(den, dtype=float)
    n = len(a)
    mb = b.mean()
    if mb == 0:
        raise ValueError("denominator mean is zero")
    r = a.mean() / mb
    resid = (a - r * b) / mb
    est = estimate_mean(resid, correlated)
    return Estimate(float(r), est.stderr, est.n_effective, n)


def estimate_covariance(f, g) -> Estimate:
    """Covariance of paired i.i.d. values, with the influence-function SE."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = len(f)
    fc, gc = f - f.mean(), g - g.mean()
    prod = fc * gc
    cov = float(prod.sum() / (n - 1))
    se = float(np.std(prod, ddof=1) / math.sqrt(n))
    return Estimate(cov, se, float(n), n)


def z_score(lhs, rhs, bias: float = 0.0) -> float:
    """``(|lhs - rhs| - bias)_+ / combined SE``, signed like ``lhs - rhs``.

    Either side may be an :class:`Estimate` or a plain number.
    """
    def parts(v):
        if isinstance(v, Estimate):
            return v.mean, v.stderr
        return float(v), 0.0

    a, sa = parts(lhs)
    b, sb = parts(rhs)
    diff = a - b
    excess = max(abs(diff) - bias, 0.0)
    se = math.hypot(sa, sb)
    if excess == 0.0:
        return 0.0
    if se == 0.0:
        return math.copysign(1e12, diff)
    return math.copysign(excess / se, diff)
