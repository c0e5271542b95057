import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from gammagibbs import (LevySpec, Window, sample_batch, sample_gamma_measure, sample_mark,
                        truncated_mass, truncation_bias)
from gammagibbs.levy import laplace_exponent, mark_cdf, sample_total_masses

# E1 values frozen from adaptive quadrature of e^{-s}/s (scipy.integrate.quad, rtol 1e-13)
E1_AT_1 = 0.21938393439552023
E1_AT_1EM3 = 6.331539364136149


def test_truncated_mass_examples():
    assert truncated_mass(LevySpec.gamma(1.0, 1.0)) == pytest.approx(E1_AT_1, rel=1e-12)
    assert truncated_mass(LevySpec.gamma(2.0, 1.0)) == pytest.approx(2 * E1_AT_1, rel=1e-12)
    assert truncated_mass(LevySpec.gamma(1.0, 1e-3)) == pytest.approx(E1_AT_1EM3, rel=1e-12)
    assert truncated_mass(LevySpec.gamma(1.0, 50.0)) < 1e-22


def test_zero_truncation_is_infinite_mass():
    spec = LevySpec.gamma(1.0, 0.0)
    with pytest.raises(ValueError):
        truncated_mass(spec)
    assert truncation_bias(spec, 1.0) == (0.0, 0.0)


def test_truncation_bias_examples():
    mean, var = truncation_bias(LevySpec.gamma(1.0, 1e-3), 1.0)
    assert mean == pytest.approx(9.995e-4, rel=1e-4)
    assert mean == pytest.approx(-math.expm1(-1e-3), rel=1e-12)
    mean3, _ = truncation_bias(LevySpec.gamma(3.0, 1e-3), 2.0)
    assert mean3 == pytest.approx(5.997e-3, rel=1e-3)
    # variance: int_0^eps s e^{-s} ds by quadrature
    q = integrate.quad(lambda s: s * math.exp(-s), 0, 1e-3, epsabs=0, epsrel=1e-12)[0]
    assert var == pytest.approx(q, rel=1e-9)


def test_incomplete_gamma_against_quadrature():
    # the moment machinery relies on Gamma(k) Q(k, eps) = int_eps^inf s^{k-1} e^{-s} ds
    for k in (1, 2, 3, 4):
        for eps in (1e-6, 1e-3, 0.5, 2.0):
            q = integrate.quad(lambda s: s ** (k - 1) * math.exp(-s), eps, np.inf,
                               epsabs=0, epsrel=1e-13)[0]
            assert special.gamma(k) * special.gammaincc(k, eps) == pytest.approx(q, rel=1e-10)


def test_laplace_exponent():
    spec = LevySpec.gamma(1.5, 1e-4)
    assert laplace_exponent(spec, 1.0) == pytest.approx(1.5 * math.log(2.0))
    # truncated exponent is smaller and close
    tr = laplace_exponent(spec, 1.0, truncated=True)
    assert tr < laplace_exponent(spec, 1.0)
    assert laplace_exponent(spec, 1.0) - tr == pytest.approx(1.5 * 1e-4, rel=1e-3)


def test_mark_support_and_mean(rng):
    spec = LevySpec.gamma(1.0, 1e-3)
    s = sample_mark(spec, rng, size=1_000_000)
    assert s.min() >= 1e-3
    se = s.std() / math.sqrt(len(s))
    assert abs(s.mean() - 0.1577816139771682) < 4 * se
    assert abs(s.mean() - 0.1578) < 5e-3


def test_mark_ks_against_quadrature_cdf(rng):
    spec = LevySpec.gamma(1.0, 1e-3)
    s = sample_mark(spec, rng, size=100_000)
    grid = np.geomspace(1e-3, 40.0, 400)
    cdf = mark_cdf(spec, grid)
    f = lambda x: np.interp(np.log(x), np.log(grid), cdf)
    assert stats.kstest(s, f).pvalue > 0.01


def test_mark_cdf_matches_closed_form():
    spec = LevySpec.gamma(1.0, 1e-3)
    x = np.array([2e-3, 0.1, 1.0, 5.0])
    want = 1 - special.exp1(x) / special.exp1(1e-3)
    assert np.allclose(mark_cdf(spec, x), want, rtol=0, atol=1e-9)


def test_generic_intensity_matches_gamma(rng):
    dens = lambda s: np.exp(-s) / s
    gen = LevySpec.generic(dens, 1.0, 1.0, trunc=1e-3)
    assert truncated_mass(gen) == pytest.approx(E1_AT_1EM3, rel=1e-6)
    s = sample_mark(gen, rng, size=200_000)
    assert s.min() >= 1e-3
    assert abs(s.mean() - 0.1577816139771682) < 4 * s.std() / math.sqrt(len(s))


def test_sample_counts_and_mean(rng):
    spec = LevySpec.gamma(1.0, 1e-3)
    w = Window.box([0.0], [1.0])
    batch = sample_batch(spec, w, 20_000, rng)
    c = batch.counts()
    assert abs(c.mean() - E1_AT_1EM3) < 4 * math.sqrt(E1_AT_1EM3 / len(c))
    m = batch.masses_in()
    mean_loss, _ = truncation_bias(spec, 1.0)
    assert abs(m.mean() - 1.0) < 4 * m.std() / math.sqrt(len(m)) + mean_loss
    assert np.all(w.contains(batch.positions))


def test_laplace_one_half(rng):
    spec = LevySpec.gamma(1.0, 1e-3)
    m = sample_total_masses(spec, 1.0, 100_000, rng)
    v = np.exp(-m)
    bias = abs(math.exp(-laplace_exponent(spec, 1.0, truncated=True)) - 0.5)
    assert abs(v.mean() - 0.5) <= 3 * v.std() / math.sqrt(len(v)) + bias


def test_positions_uniform(rng):
    spec = LevySpec.gamma(2.0, 1e-3)
    w = Window.box([0.0, 0.0], [2.0, 1.0])
    batch = sample_batch(spec, w, 2000, rng)
    assert stats.kstest(batch.positions[:, 0] / 2.0, "uniform").pvalue > 0.01
    assert stats.kstest(batch.positions[:, 1], "uniform").pvalue > 0.01


def test_batch_samples_are_canonical(rng):
    batch = sample_batch(LevySpec.gamma(1.0, 1e-2), Window.box([0.0], [3.0]), 50, rng)
    for i, eta in enumerate(batch):
        assert np.all(np.diff(eta.positions[:, 0]) > 0)
        assert eta == batch[i]
    assert np.all(np.diff(batch.sample_id) >= 0)


def test_seed_determinism():
    spec = LevySpec.gamma(1.0)
    w = Window.box([0.0], [2.0])
    a = sample_gamma_measure(spec, w, np.random.default_rng(7))
    b = sample_gamma_measure(spec, w, np.random.default_rng(7))
    assert a == b
