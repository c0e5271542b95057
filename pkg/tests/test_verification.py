import math

import numpy as np
import pytest
from scipy import integrate, stats

from gammagibbs import (ChainConfig, CubeGrid, LevySpec, PotentialSpec, Window, certify,
                        run_specification)
from gammagibbs.config import parse_config_dict
from gammagibbs.verification import (CertificateError, TestFunctional, capped_mass, cylinder,
                                     exact_moment, fkg_check, gnz_check, independence_check,
                                     laplace_check, mecke_check, mecke_closed_form,
                                     moment_bound_check, moment_check, factorial_moment_bound,
                                     partition_series_oracle, run_suite, truncated_moments,
                                     window_exp_functional, window_indicator_functional)
from gammagibbs.levy import sample_batch

G1 = CubeGrid(1, 1.0, 1.0)
CUBE = Window.from_cubes([(0,)], G1)
LEVY = LevySpec.gamma(1.0)


def test_laplace_target_and_pass(rng):
    rep = laplace_check(LEVY, 1.0, 1.0, 50_000, rng)
    assert rep.rhs == pytest.approx(0.5)
    assert rep.passed


def test_moment_targets(rng):
    assert exact_moment(LevySpec.gamma(3.0), 2.0, 1) == pytest.approx(6.0)
    assert exact_moment(LEVY, 1.0, 3) == pytest.approx(6.0)   # 1*2*3
    rep = moment_check(LevySpec.gamma(2.0), 1.5, 1, 50_000, rng)
    assert rep.rhs == pytest.approx(3.0) and rep.passed


def test_truncated_moments_against_quadrature():
    levy = LevySpec.gamma(1.3, 1e-2)
    V = 0.7
    k1 = V * 1.3 * integrate.quad(lambda s: math.exp(-s), 1e-2, np.inf)[0]
    k2 = V * 1.3 * integrate.quad(lambda s: s * math.exp(-s), 1e-2, np.inf)[0]
    mu = truncated_moments(levy, V, 2)
    assert mu[1] == pytest.approx(k1, rel=1e-10)
    assert mu[2] == pytest.approx(k2 + k1 ** 2, rel=1e-10)


def test_factorial_moment_bound_counterexample():
    # theta m = 0.25: E eta^2 = 0.25 * 1.25 = 0.3125 > 2! * 0.25^2 = 0.125
    assert exact_moment(LevySpec.gamma(0.25), 1.0, 2) == pytest.approx(0.3125)
    assert factorial_moment_bound(0.25, 1.0, 2) == pytest.approx(0.125)
    # the bound holds once theta m >= 1
    for a in (1.0, 2.0, 4.5):
        for n in range(1, 7):
            assert exact_moment(LevySpec.gamma(a), 1.0, n) <= factorial_moment_bound(a, 1.0, n)


def test_moment_bound_check_reports_truth(rng):
    rep = moment_bound_check(LevySpec.gamma(0.25), 1.0, 2, 50_000, rng)
    assert rep.details["bound_holds_exactly"] is False
    assert not rep.passed
    rep = moment_bound_check(LevySpec.gamma(2.0), 1.0, 3, 50_000, rng)
    assert rep.details["bound_holds_exactly"] and rep.passed


def test_independence(rng):
    w1 = Window.from_cubes([(0,)], G1)
    w2 = Window.from_cubes([(1,), (2,)], G1)
    assert independence_check(LEVY, w1, w2, 20_000, rng).passed
    with pytest.raises(ValueError):
        independence_check(LEVY, w1, w1, 10, rng)


def test_mecke_zero_functional(rng):
    zero = cylinder("zero", lambda x: np.zeros(len(x)), lambda: np.zeros(1), [], 1.0)
    rep = mecke_check(LEVY, CUBE, zero, 1000, rng)
    assert rep.lhs.mean == 0.0 and rep.rhs.mean == 0.0 and rep.z_score == 0.0


def test_mecke_indicator_value(rng):
    levy = LevySpec.gamma(2.0)
    w = Window.from_cubes([(0,), (1,)], G1)
    rep = mecke_check(levy, w, window_indicator_functional(w), 20_000, rng)
    assert rep.passed
    assert abs(rep.lhs.mean - 4.0) < 4 * rep.lhs.stderr
    assert rep.rhs.mean == pytest.approx(4.0, rel=1e-5)    # theta e^{-eps} m exactly


def test_mecke_direct_marks(rng):
    rep = mecke_check(LEVY, CUBE, window_exp_functional(CUBE), 20_000, rng,
                      mark_sampling="direct")
    assert rep.passed


def test_mecke_closed_form_value():
    assert mecke_closed_form(1.0, 1.0) == pytest.approx(0.25)


def test_mecke_negative_control_fails(rng):
    rep = mecke_check(LEVY, CUBE, window_indicator_functional(CUBE), 20_000, rng,
                      rhs_intensity_scale=0.5)
    assert not rep.passed and rep.success


def test_unbounded_functional_rejected(rng):
    bad = TestFunctional("unbounded", None, math.inf, cylinder=(lambda x: np.ones(len(x)),
                                                                 lambda: np.ones(1), ()))
    with pytest.raises(CertificateError):
        mecke_check(LEVY, CUBE, bad, 10, rng)
    liar = cylinder("liar", lambda x: 5 * np.ones(len(x)), lambda: np.ones(1), [], 1.0)
    with pytest.raises(CertificateError):
        mecke_check(LEVY, CUBE, liar, 10, rng)


def test_gnz_zero_potential_is_mecke(rng):
    cfg = ChainConfig(levy=LEVY, potential=PotentialSpec.zero(1.0, 1.0), window=CUBE,
                      n_steps=200_000, thinning=20, seed=2, require_certified=False)
    res = run_specification(cfg)
    rep = gnz_check(res, cfg, window_exp_functional(CUBE), rng)
    assert abs(rep.z_score) <= 3


def test_gnz_config_mismatch(rng):
    cs = certify(PotentialSpec.core_shell(10.0, 1.0, 1.0, 1.0), G1)
    cfg = ChainConfig(levy=LEVY, potential=cs, window=CUBE, n_steps=2000)
    res = run_specification(cfg)
    other = ChainConfig(levy=LEVY, potential=PotentialSpec.core_shell(10.0, 1.0, 1.0, 1.0,
                                                                      self_interaction=False),
                        window=CUBE, n_steps=2000, require_certified=False)
    with pytest.raises(ValueError):
        gnz_check(res, other, window_indicator_functional(CUBE), rng)


def test_fkg_requires_certificate(rng):
    plain = cylinder("p", None, lambda p: np.minimum(p, 5.0), [lambda x: np.ones(len(x))], 5.0,
                     kind="measure", monotone=False)
    with pytest.raises(CertificateError):
        fkg_check(lambda n, r: sample_batch(LEVY, CUBE, n, r), [(plain, plain)], 10, rng)


def test_fkg_same_functional_is_variance(rng):
    F = capped_mass(CUBE)
    (rep,) = fkg_check(lambda n, r: sample_batch(LEVY, CUBE, n, r), [(F, F)], 5000, rng)
    assert rep.lhs.mean > 0 and rep.passed


def test_series_oracle_against_direct_quadrature():
    # n = 1 term by direct quadrature over the mark law
    levy = LevySpec.gamma(1.0, 0.5)
    A, V = 3.0, 0.2
    from scipy.special import exp1
    E = exp1(0.5)
    one = integrate.quad(lambda s: math.exp(-A * s * s) * math.exp(-s) / s / E, 0.5, np.inf,
                         epsabs=1e-13)[0]
    two = integrate.dblquad(lambda t, s: math.exp(-A * (s + t) ** 2) * math.exp(-s - t) / (s * t)
                            / E ** 2, 0.5, 30, 0.5, 30, epsabs=1e-12)[0]
    nu = E * V
    want = stats.poisson.pmf(0, nu) + stats.poisson.pmf(1, nu) * one + stats.poisson.pmf(2, nu) * two
    got, tail = partition_series_oracle(levy, V, A, n_max=2)
    assert got == pytest.approx(want, abs=1e-10)
    assert tail == pytest.approx(stats.poisson.sf(2, nu))


def test_suites_unknown_name():
    with pytest.raises(ValueError):
        run_suite("nope", parse_config_dict({}))


def test_report_pass_key(rng):
    d = laplace_check(LEVY, 1.0, 1.0, 1000, rng).to_dict()
    assert set(d) >= {"check_name", "lhs", "rhs", "z_score", "pass", "bias_budget"}
