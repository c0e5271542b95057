import math

import numpy as np
import pytest

from gammagibbs.stats import (Estimate, effective_sample_size, estimate_covariance,
                              estimate_mean, estimate_ratio, z_score)


def test_estimate_validation():
    with pytest.raises(ValueError):
        Estimate(1.0, -1.0, 1.0, 1)
    with pytest.raises(ValueError):
        Estimate(1.0, 0.1, 5.0, 2)
    assert Estimate.exact(3.0).stderr == 0.0


def test_ess_iid_and_ar1(rng):
    x = rng.standard_normal(20_000)
    assert effective_sample_size(x) == pytest.approx(20_000, rel=0.1)
    phi = 0.5
    y = np.empty(200_000)
    y[0] = 0.0
    e = rng.standard_normal(len(y))
    for i in range(1, len(y)):
        y[i] = phi * y[i - 1] + e[i]
    # integrated autocorrelation time (1 + phi) / (1 - phi) = 3
    assert effective_sample_size(y) == pytest.approx(len(y) / 3, rel=0.1)
    assert effective_sample_size(np.ones(10)) == 10


def test_estimate_mean(rng):
    v = rng.normal(2.0, 3.0, size=40_000)
    est = estimate_mean(v)
    assert est.stderr == pytest.approx(3.0 / 200, rel=0.05)
    assert abs(est.mean - 2.0) < 4 * est.stderr
    with pytest.raises(ValueError):
        estimate_mean([])


def test_ratio_and_covariance(rng):
    a = rng.normal(3.0, 1.0, 50_000)
    b = rng.normal(2.0, 0.1, 50_000)
    r = estimate_ratio(a, b)
    assert abs(r.mean - 1.5) < 4 * r.stderr
    x = rng.standard_normal(50_000)
    c = estimate_covariance(x, 0.5 * x + rng.standard_normal(50_000))
    assert abs(c.mean - 0.5) < 4 * c.stderr


def test_z_score():
    a, b = Estimate(1.0, 0.1, 10, 10), Estimate(1.5, 0.0, 1, 1)
    assert z_score(a, b) == pytest.approx(-5.0)
    assert z_score(a, b, bias=0.5) == 0.0
    assert z_score(a, b, bias=0.3) == pytest.approx(-2.0)
    assert z_score(1.0, 2.0) == -1e12
    assert z_score(1.0, 1.0) == 0.0
