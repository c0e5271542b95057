"""Hypothesis checks for the Gamma measure and its Gibbs perturbations.

Every check returns a :class:`CheckReport`.  ``z_score`` is computed after
the truncation bias budget has been subtracted from the raw discrepancy, so
``passed`` is simply ``|z_score| <= threshold``.  Negative controls are
checks that are expected to fail; a suite succeeds when every ordinary
check passes and every negative control fails.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special, stats

from .gibbs import ChainConfig, ChainResult, cube_mass_series, exp_moment, run_specification
from .interaction import (PotentialSpec, _radial_eval, bound_constants, hamiltonian,
                          stability_lower_bound)
from .lattice import CubeGrid, Window, cubes_meeting
from .levy import (LevySpec, MeasureBatch, laplace_exponent, sample_batch, sample_mark,
                   sample_total_masses, truncated_mass, truncation_bias)
from .measures import DiscreteMeasure
from .stats import Estimate, estimate_covariance, estimate_mean, z_score

REPORT_VERSION = 1


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    lhs: Estimate
    rhs: Union[Estimate, float]
    z_score: float
    passed: bool
    bias_budget: float = 0.0
    threshold: float = 3.0
    negative_control: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.z_score):
            raise ValueError("z_score must be finite")

    @property
    def success(self) -> bool:
        """``passed`` for ordinary checks, ``not passed`` for negative controls."""
        return self.passed != self.negative_control

    def to_dict(self) -> dict:
        rhs = self.rhs.to_dict() if isinstance(self.rhs, Estimate) else self.rhs
        return {"check_name": self.check_name, "lhs": self.lhs.to_dict(), "rhs": rhs,
                "z_score": self.z_score, "pass": self.passed, "bias_budget": self.bias_budget,
                "threshold": self.threshold, "negative_control": self.negative_control,
                "success": self.success, "details": self.details}


def _report(name, lhs, rhs, z, threshold, bias=0.0, negative=False, **details) -> CheckReport:
    return CheckReport(name, lhs, rhs, float(z), abs(z) <= threshold, float(bias), threshold,
                       negative, details)


# ---------------------------------------------------------------------------
# test functionals


class CertificateError(ValueError):
    """A functional exceeded its declared sup bound or lacks a needed certificate."""


@dataclass(frozen=True, eq=False)
class TestFunctional:
    """Bounded functional ``F(x, eta)`` (``kind="point"``) or ``F(eta)`` (``kind="measure"``).

    ``cylinder = (f, g, phis)`` declares the form ``F(x, eta) = f(x) g(<phi_1, eta>, ...)``
    (``f`` is ignored for measure functionals), which allows vectorised
    evaluation on whole batches.  ``monotone`` certifies that ``F`` is
    increasing in ``eta``.
    """

    __test__ = False  # not a pytest class

    name: str
    evaluator: Optional[Callable]
    sup_bound: float
    kind: str = "point"
    monotone: bool = False
    cylinder: Optional[tuple] = None

    def _check(self, values):
        values = np.asarray(values, dtype=float)
        if values.size and np.max(np.abs(values)) > self.sup_bound * (1 + 1e-12):
            raise CertificateError(f"functional {self.name!r} exceeds its sup bound "
                                   f"{self.sup_bound}")
        return values

    def _g(self, P):
        f, g, phis = self.cylinder
        return np.asarray(g(*P), dtype=float)

    def point_terms(self, batch: MeasureBatch) -> np.ndarray:
        """``sum_{x in eta_i} s_x F(x, eta_i)`` for every sample."""
        if self.cylinder is not None:
            f, g, phis = self.cylinder
            P = [batch.pair(p) for p in phis]
            gv = self._check(self._g(P))
            fv = self._check(np.asarray(f(batch.positions), float)) if len(batch.marks) else 0.0
            inner = np.bincount(batch.sample_id, weights=fv * batch.marks,
                                minlength=batch.n_samples)
            return inner * gv
        out = np.empty(len(batch))
        for i, eta in enumerate(batch):
            vals = [self.evaluator(x, eta) for x in eta.positions]
            out[i] = float(np.dot(self._check(vals), eta.marks)) if len(eta) else 0.0
        return out

    def augmented(self, batch: MeasureBatch, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """``F(x_i, eta_i + s_i delta_{x_i})`` for every sample."""
        if self.cylinder is not None:
            f, g, phis = self.cylinder
            P = [batch.pair(p) + s * np.asarray(p(x), float) for p in phis]
            return self._check(np.asarray(f(x), float)) * self._check(self._g(P))
        out = np.empty(len(batch))
        for i, eta in enumerate(batch):
            out[i] = self.evaluator(x[i], eta.add_atom(x[i], s[i]))
        return self._check(out)

    def measure_values(self, batch: MeasureBatch) -> np.ndarray:
        if self.kind != "measure":
            raise ValueError(f"{self.name!r} is a point functional")
        if self.cylinder is not None:
            f, g, phis = self.cylinder
            return self._check(self._g([batch.pair(p) for p in phis]))
        return self._check([self.evaluator(eta) for eta in batch])


def indicator(window: Window) -> Callable:
    return lambda x: window.contains(x).astype(float)


def cylinder(name: str, f: Callable, g: Callable, phis: Sequence[Callable], sup_bound: float,
             kind: str = "point", monotone: bool = False) -> TestFunctional:
    return TestFunctional(name, None, float(sup_bound), kind, monotone, (f, g, tuple(phis)))


def window_indicator_functional(window: Window) -> TestFunctional:
    """``F(x, eta) = 1_Delta(x)``."""
    one = indicator(window)
    return cylinder("1_window", one, lambda: np.ones(1), [], 1.0)


def window_exp_functional(window: Window) -> TestFunctional:
    """``F(x, eta) = 1_Delta(x) exp(-eta(Delta))``."""
    one = indicator(window)
    return cylinder("1_window*exp(-mass)", one, lambda p: np.exp(-p), [one], 1.0)


def capped_mass(window: Window, cap: float = 5.0, name: Optional[str] = None) -> TestFunctional:
    """``min(eta(window), cap)``: bounded and increasing."""
    return cylinder(name or f"min(mass,{cap:g})", None, lambda p: np.minimum(p, cap),
                    [indicator(window)], cap, kind="measure", monotone=True)


# ---------------------------------------------------------------------------
# free-measure checks


def _gamma_only(levy: LevySpec):
    if levy.kind != "gamma":
        raise ValueError("this check needs the Gamma Levy measure")


def laplace_check(levy: LevySpec, window: Union[Window, float], t: float, n: int,
                  rng: np.random.Generator, masses: Optional[np.ndarray] = None,
                  threshold: float = 3.0) -> CheckReport:
    """``E exp(-t eta(Delta))`` against ``exp(-m(Delta) int (1 - e^{-ts}) lambda(ds))``.

    The bias budget is the exact gap between the truncated and untruncated
    transforms.
    """
    V = window.volume if isinstance(window, Window) else float(window)
    if masses is None:
        masses = sample_total_masses(levy, V, n, rng)
    lhs = estimate_mean(np.exp(-t * masses))
    target = math.exp(-V * laplace_exponent(levy, t))
    truncated = math.exp(-V * laplace_exponent(levy, t, truncated=True))
    bias = abs(truncated - target)
    return _report("laplace", lhs, target, z_score(lhs, target, bias), threshold, bias,
                   t=t, volume=V, theta=levy.theta)


def truncated_moments(levy: LevySpec, volume: float, n_max: int) -> np.ndarray:
    """Raw moments ``E eta_eps(Delta)^n`` of the truncated Gamma measure, from its cumulants."""
    _gamma_only(levy)
    eps = levy.trunc
    kappa = [0.0] + [volume * levy.theta * special.gamma(k) * special.gammaincc(k, eps)
                     for k in range(1, n_max + 1)]
    mu = [1.0]
    for n in range(1, n_max + 1):
        mu.append(sum(special.comb(n - 1, k - 1) * kappa[k] * mu[n - k]
                      for k in range(1, n + 1)))
    return np.array(mu)


def exact_moment(levy: LevySpec, volume: float, n: int) -> float:
    """``E eta(Delta)^n`` without truncation.

    Gamma: the rising factorial ``a (a+1) ... (a+n-1)`` with ``a = theta m(Delta)``.
    Generic intensities: orders 1 and 2 from the first two moments.
    """
    if levy.kind == "gamma":
        return float(special.poch(levy.theta * volume, n))
    m1, m2 = volume * levy.first_moment, volume * levy.second_moment
    if n == 1:
        return m1
    if n == 2:
        return m2 + m1 * m1
    raise ValueError("generic intensities only carry two moments")


def moment_check(levy: LevySpec, window: Union[Window, float], order: int, n: int,
                 rng: np.random.Generator, masses: Optional[np.ndarray] = None,
                 threshold: float = 3.0) -> CheckReport:
    """Empirical ``E eta(Delta)^n`` against the exact moment (bias: truncated vs untruncated)."""
    V = window.volume if isinstance(window, Window) else float(window)
    if masses is None:
        masses = sample_total_masses(levy, V, n, rng)
    lhs = estimate_mean(masses ** order)
    target = exact_moment(levy, V, order)
    if levy.kind == "gamma":
        bias = abs(target - truncated_moments(levy, V, order)[order])
    else:
        mean_loss, var_loss = truncation_bias(levy, V)
        bias = order * max(target, 1.0) * (mean_loss + var_loss)
    return _report("moment", lhs, target, z_score(lhs, target, bias), threshold, bias,
                   order=order, volume=V)


def factorial_moment_bound(theta: float, volume: float, order: int, sup_norm: float = 1.0) -> float:
    """``n! ||phi|| m(Delta)^n theta^n``."""
    return math.factorial(order) * sup_norm * volume ** order * theta ** order


def moment_bound_check(levy: LevySpec, window: Union[Window, float], order: int, n: int,
                       rng: np.random.Generator, masses: Optional[np.ndarray] = None,
                       threshold: float = 4.0) -> CheckReport:
    """One-sided check ``E eta(Delta)^n <= n! m(Delta)^n theta^n`` (``phi = 1_Delta``).

    The bound is false for ``a = theta m(Delta) < 1`` and ``n >= 2`` (the exact
    moment is the rising factorial), and the report says so in ``details``.
    """
    V = window.volume if isinstance(window, Window) else float(window)
    if masses is None:
        masses = sample_total_masses(levy, V, n, rng)
    lhs = estimate_mean(np.abs(masses) ** order)
    bound = factorial_moment_bound(levy.theta, V, order)
    z = max(0.0, (lhs.mean - bound) / lhs.stderr) if lhs.stderr > 0 else 0.0
    exact = exact_moment(levy, V, order)
    return _report("moment_bound", lhs, bound, z, threshold, 0.0, order=order, volume=V,
                   exact_moment=exact, bound_holds_exactly=exact <= bound)


def independence_check(levy: LevySpec, window1: Window, window2: Window, n: int,
                       rng: np.random.Generator, f: Callable = lambda m: np.exp(-m),
                       g: Callable = lambda m: np.minimum(m, 5.0),
                       threshold: float = 3.0) -> CheckReport:
    """``Cov(f(eta(D1)), g(eta(D2))) = 0`` for disjoint windows (default ``f(m) = e^{-m}``)."""
    if window1.is_cube_aligned and window2.is_cube_aligned and window1.grid == window2.grid:
        if window1.cubes & window2.cubes:
            raise ValueError("windows overlap")
        domain = Window.from_cubes(window1.cubes | window2.cubes, window1.grid)
    else:
        lo = np.minimum(window1.bounding_box()[0], window2.bounding_box()[0])
        hi = np.maximum(window1.bounding_box()[1], window2.bounding_box()[1])
        domain = Window.box(lo, hi)
    batch = sample_batch(levy, domain, n, rng)
    a = batch.masses_in(window1)
    b = batch.masses_in(window2)
    cov = estimate_covariance(f(a), g(b))
    return _report("independence", cov, 0.0, z_score(cov, 0.0), threshold)


def marginal_ks_check(levy: LevySpec, volume: float, n: int, rng: np.random.Generator,
                      level: float = 0.01, masses: Optional[np.ndarray] = None) -> CheckReport:
    """Two-sided KS test of ``eta(Delta)`` against ``Gamma(theta m(Delta), 1)``.

    ``z_score`` is the normal quantile of the p-value, so the check passes
    exactly when ``p > level``.
    """
    _gamma_only(levy)
    if masses is None:
        masses = sample_total_masses(levy, volume, n, rng)
    a = levy.theta * volume
    res = stats.kstest(masses, lambda x: special.gammainc(a, np.maximum(x, 0.0)))
    z = float(stats.norm.isf(max(res.pvalue, 1e-300) / 2))
    thr = float(stats.norm.isf(level / 2))
    return _report("marginal_ks", estimate_mean(masses), a, min(z, 1e12), thr,
                   statistic=float(res.statistic), pvalue=float(res.pvalue))


# ---------------------------------------------------------------------------
# Mecke and GNZ


def _augment(levy: LevySpec, window: Window, n: int, rng: np.random.Generator,
             mark_sampling: str):
    """Auxiliary atoms and the weight ``w_i`` with ``E[w F] = int int s F lambda(ds) dx``."""
    x = window.sample_uniform(n, rng)
    if mark_sampling == "size_biased":
        _gamma_only(levy)
        # s lambda(ds) restricted to [eps, inf) is theta e^{-s} ds: mass theta e^{-eps}, law eps + Exp(1)
        s = levy.trunc + rng.standard_exponential(n)
        w = np.full(n, levy.theta * math.exp(-levy.trunc) * window.volume)
    elif mark_sampling == "direct":
        s = sample_mark(levy, rng, size=n)
        w = truncated_mass(levy) * window.volume * s
    else:
        raise ValueError(f"unknown mark_sampling {mark_sampling!r}")
    return x, s, w


def mecke_check(levy: LevySpec, window: Window, functional: TestFunctional, n_samples: int,
                rng: np.random.Generator, mark_sampling: str = "size_biased",
                rhs_intensity_scale: float = 1.0, threshold: float = 3.0) -> CheckReport:
    """``E[int F(x, eta) eta(dx)] = E[int int s F(x, eta + s delta_x) lambda(ds) dx]``.

    Both sides are estimated from the same Gamma samples; the SE is that of
    the per-sample difference.  ``rhs_intensity_scale != 1`` replaces the
    intensity on the right by a wrong one (negative control).
    """
    if functional.kind != "point":
        raise ValueError("Mecke functionals take (x, eta)")
    if not math.isfinite(functional.sup_bound):
        raise CertificateError("Mecke functionals must be bounded")
    batch = sample_batch(levy, window, n_samples, rng)
    lhs_i = functional.point_terms(batch)
    x, s, w = _augment(levy, window, n_samples, rng, mark_sampling)
    rhs_i = rhs_intensity_scale * w * functional.augmented(batch, x, s)
    lhs, rhs, diff = estimate_mean(lhs_i), estimate_mean(rhs_i), estimate_mean(lhs_i - rhs_i)
    mean_loss, _ = truncation_bias(levy, window.volume)
    bias = 2 * functional.sup_bound * mean_loss
    z = z_score(diff, 0.0, bias)
    return _report("mecke", lhs, rhs, z, threshold, bias,
                   negative=rhs_intensity_scale != 1.0, functional=functional.name,
                   mark_sampling=mark_sampling, rhs_intensity_scale=rhs_intensity_scale,
                   difference=diff.to_dict())


def mecke_closed_form(theta: float, volume: float) -> float:
    """``E[eta(Delta) exp(-eta(Delta))] = a 2^{-a-1}`` with ``a = theta m(Delta)``."""
    a = theta * volume
    return a * 2.0 ** (-a - 1)


def mecke_closed_form_check(levy: LevySpec, window: Window, n_samples: int,
                            rng: np.random.Generator, threshold: float = 3.0) -> CheckReport:
    """LHS of the ``1_Delta e^{-eta(Delta)}`` Mecke check against the Laplace-derivative value."""
    _gamma_only(levy)
    m = sample_total_masses(levy, window.volume, n_samples, rng)
    lhs = estimate_mean(m * np.exp(-m))
    target = mecke_closed_form(levy.theta, window.volume)
    mean_loss, _ = truncation_bias(levy, window.volume)
    bias = mean_loss  # |d/dm (m e^{-m})| <= 1
    return _report("mecke_closed_form", lhs, target, z_score(lhs, target, bias), threshold, bias)


def _pair_values(spec: PotentialSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Elementwise ``phi(X_i, Y_i)`` with the finite range enforced."""
    diff = X - Y
    r = np.sqrt(np.sum(diff * diff, axis=1))
    if spec.radial is not None:
        return _radial_eval(spec.radial, r)
    return np.where(r > spec.range, 0.0, np.asarray(spec.phi(X, Y), dtype=float))


def insertion_weights(batch: MeasureBatch, x: np.ndarray, s: np.ndarray,
                      xi: Optional[DiscreteMeasure], window: Window, spec: PotentialSpec,
                      weight: str = "increment") -> np.ndarray:
    """Energy cost ``W`` of inserting ``s_i delta_{x_i}`` into sample ``i``.

    ``"increment"``: ``H(eta + s delta_x | xi) - H(eta | xi)`` (includes the
    self term).  ``"cross"``: ``2 s sum_y s_y phi(x, y)`` over the atoms of
    ``eta`` and ``xi``, without the self term.  ``"none"``: zero.
    """
    n = len(batch)
    if weight == "none":
        return np.zeros(n)
    if weight not in ("increment", "cross"):
        raise ValueError(f"unknown weight {weight!r}")
    field_ = np.zeros(n)
    if len(batch.marks):
        xa = x[batch.sample_id]
        vals = _pair_values(spec, xa, batch.positions) * batch.marks
        field_ += np.bincount(batch.sample_id, weights=vals, minlength=n)
    if xi is not None and len(xi):
        keep = ~window.contains(xi.positions) & (window.distance_to(xi.positions) <= spec.range)
        if keep.any():
            field_ += spec.matrix(x, xi.positions[keep]) @ xi.marks[keep]
    W = 2.0 * s * field_
    if weight == "increment":
        W += spec.diagonal(x) * s * s
    return W


def gnz_check(result: ChainResult, config: ChainConfig, functional: TestFunctional,
              rng: np.random.Generator, weight: str = "increment",
              threshold: float = 4.0) -> CheckReport:
    """GNZ identity on chain samples of the finite-volume Gibbs measure.

    ``E[int F(x, eta) eta(dx)] = E[int int s F(x, eta + s delta_x) e^{-W} lambda(ds) dx]``
    with ``W`` from :func:`insertion_weights`.  ``weight="none"`` is the
    unweighted negative control.  The sampling config and the checking
    config must describe the same specification.
    """
    sc = result.config
    if (sc.potential is not config.potential and
            (sc.potential.to_dict() if sc.potential.family != "custom" else id(sc.potential))
            != (config.potential.to_dict() if config.potential.family != "custom"
                else id(config.potential))):
        raise ValueError("sampling and checking potentials differ (self-interaction flag "
                         "or parameters)")
    if sc.window != config.window or sc.levy.to_dict() != config.levy.to_dict():
        raise ValueError("sampling and checking configs differ in window or Levy measure")
    batch = result.samples
    n = len(batch)
    lhs_i = functional.point_terms(batch)
    x, s, w = _augment(config.levy, config.window, n, rng, "size_biased")
    W = insertion_weights(batch, x, s, sc.boundary, config.window, config.potential, weight)
    rhs_i = w * functional.augmented(batch, x, s) * np.exp(-W)
    lhs = estimate_mean(lhs_i, correlated=True)
    rhs = estimate_mean(rhs_i, correlated=True)
    diff = estimate_mean(lhs_i - rhs_i, correlated=True)
    mean_loss, _ = truncation_bias(config.levy, config.window.volume)
    bias = 2 * functional.sup_bound * mean_loss
    return _report("gnz", lhs, rhs, z_score(diff, 0.0, bias), threshold, bias,
                   negative=weight == "none", weight=weight, functional=functional.name,
                   difference=diff.to_dict())


# ---------------------------------------------------------------------------
# FKG


def fkg_check(sampler: Callable, monotone_pairs, n_samples: int, rng: np.random.Generator,
              threshold: float = 3.0) -> list:
    """One-sided covariance checks ``Cov(F, G) >= -threshold SE`` for increasing pairs.

    ``sampler(n, rng)`` returns a :class:`MeasureBatch`.  ``z_score`` is
    ``min(cov / SE, 0)``; ``details["z_positive"]`` carries ``cov / SE``.
    """
    for F, G in monotone_pairs:
        for fn in (F, G):
            if not fn.monotone or fn.kind != "measure":
                raise CertificateError(f"functional {fn.name!r} is not certified increasing")
    batch = sampler(n_samples, rng)
    out = []
    for F, G in monotone_pairs:
        cov = estimate_covariance(F.measure_values(batch), G.measure_values(batch))
        zpos = cov.mean / cov.stderr if cov.stderr > 0 else (0.0 if cov.mean == 0 else 1e12)
        out.append(_report("fkg", cov, 0.0, min(zpos, 0.0), threshold, 0.0,
                           pair=(F.name, G.name), z_positive=zpos))
    return out


# ---------------------------------------------------------------------------
# partition function oracle and bound checks


def partition_series_oracle(levy: LevySpec, volume: float, A: float, n_max: int = 4) -> tuple:
    """``Z`` on a window where ``H = A eta(Delta)^2`` (every pair interacts), as a series.

    ``Z = sum_{n <= n_max} P(N = n) E[exp(-A (s_1 + ... + s_n)^2)]``.  Each
    term is one quadrature: writing ``exp(-A S^2) = E[cos(sqrt(2A) Z S)]``
    with ``Z`` standard normal turns the ``n``-fold mark integral into the
    ``n``-th power of the mark characteristic function, available through the
    complex exponential integral.  Returns ``(value, tail)``, where ``tail``
    bounds the omitted terms by ``P(N > n_max)``.
    """
    _gamma_only(levy)
    eps = levy.trunc
    nu = truncated_mass(levy) * volume
    E1eps = special.exp1(eps)

    def char(u):
        # E exp(i u s) for the normalised truncated mark law
        return special.exp1(eps * (1 - 1j * u)) / E1eps

    total = 0.0
    for n in range(n_max + 1):
        pn = stats.poisson.pmf(n, nu)
        if n == 0:
            term = 1.0
        else:
            f = lambda z: stats.norm.pdf(z) * (char(math.sqrt(2 * A) * z) ** n).real
            term = 2 * integrate.quad(f, 0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
        total += pn * term
    tail = float(stats.poisson.sf(n_max, nu))
    return total, tail


def partition_check(estimate: Estimate, oracle: tuple, threshold: float = 3.0) -> CheckReport:
    value, tail = oracle
    bias = tail + 1e-3
    return _report("partition_function", estimate, value, z_score(estimate, value, bias),
                   threshold, bias, series_tail=tail)


def partition_upper_check(estimate: Estimate, threshold: float = 3.0) -> CheckReport:
    """``Z <= 1`` for a nonnegative potential, one-sided."""
    z = max(0.0, (estimate.mean - 1.0) / estimate.stderr) if estimate.stderr > 0 else (
        0.0 if estimate.mean <= 1.0 else 1e12)
    return _report("partition_upper", estimate, 1.0, z, threshold)


def stability_sweep(levy: LevySpec, window: Window, shell: Window, spec: PotentialSpec,
                    grid: CubeGrid, n: int, rng: np.random.Generator) -> CheckReport:
    """``H(eta | xi) >= stability bound`` on ``n`` independent free-field pairs (deterministic).

    ``eta`` is sampled on ``window`` and ``xi`` on ``shell`` (which should
    cover the ``R``-neighbourhood of the window).
    """
    etas = sample_batch(levy, window, n, rng)
    xis = sample_batch(levy, shell, n, rng)
    violations = 0
    worst = math.inf
    witness = None
    for eta, xi in zip(etas, xis):
        H = hamiltonian(eta, xi, window, spec)
        bound = stability_lower_bound(eta, xi, window, spec, grid)
        slack = H - bound
        if slack < worst:
            worst = slack
        if H < bound - 1e-9 * max(1.0, abs(H), abs(bound)):
            violations += 1
            if witness is None:
                witness = {"eta": eta.positions.tolist(), "H": H, "bound": bound}
    lhs = Estimate(float(violations), 0.0, float(n), n)
    return _report("stability", lhs, 0.0, float(violations), 0.0, 0.0,
                   n_states=n, min_slack=worst, witness=witness)


def bound_check(name: str, estimate: Estimate, bound: float, threshold: float = 3.0,
                **details) -> CheckReport:
    """One-sided ``estimate <= bound`` up to ``threshold`` SE."""
    if estimate.stderr > 0:
        z = max(0.0, (estimate.mean - bound) / estimate.stderr)
    else:
        z = 0.0 if estimate.mean <= bound else 1e12
    return _report(name, estimate, float(bound), min(z, 1e12), threshold, 0.0, **details)


# ---------------------------------------------------------------------------
# suites


SUITES = ("free-measure", "gibbs", "bounds", "negative-control", "all")


def _free_suite(rc, rng) -> list:
    levy, window = rc.levy, rc.window
    n = rc.n_samples
    V = window.volume
    out = []
    masses = sample_total_masses(levy, V, n, rng)
    for t in (0.25, 0.5, 1.0, 2.0):
        out.append(laplace_check(levy, V, t, n, rng, masses=masses))
    for order in (1, 2):
        out.append(moment_check(levy, V, order, n, rng, masses=masses))
    out.append(marginal_ks_check(levy, V, min(n, 10_000), rng, masses=masses[:10_000]))
    grid = rc.grid
    cubes = sorted(cubes_meeting(window, grid)) if window.is_cube_aligned else []
    if len(cubes) >= 2:
        w1 = Window.from_cubes([cubes[0]], grid)
        w2 = Window.from_cubes(cubes[1:], grid)
        out.append(independence_check(levy, w1, w2, n, rng))
    out.append(mecke_check(levy, window, window_indicator_functional(window), n, rng))
    out.append(mecke_check(levy, window, window_exp_functional(window), n, rng))
    out.append(mecke_closed_form_check(levy, window, n, rng))
    sampler = lambda k, r: sample_batch(levy, window, k, r)
    pairs = [(capped_mass(window), capped_mass(window))]
    if len(cubes) >= 2:
        w1 = Window.from_cubes([cubes[0]], grid)
        pairs.append((capped_mass(w1, name="min(mass_1,5)"), capped_mass(window)))
    out.extend(fkg_check(sampler, pairs, n, rng))
    return out


def _gibbs_cfg(rc, window, seed_offset=0):
    return ChainConfig(levy=rc.levy, potential=rc.potential, window=window,
                       n_steps=rc.chain["n_steps"], burn_in=rc.chain.get("burn_in"),
                       thinning=rc.chain["thinning"], move_mix=tuple(rc.chain["move_mix"]),
                       seed=(rc.seed + seed_offset) % 2 ** 64, boundary=rc.boundary,
                       audit_every=rc.chain["audit_every"])


def _single_cube(rc) -> Window:
    return Window.from_cubes([tuple([0] * rc.grid.dimension)], rc.grid)


def _gibbs_suite(rc, rng) -> list:
    out = []
    cube = _single_cube(rc)
    cfg = _gibbs_cfg(rc, cube)
    res = run_specification(cfg)
    out.append(gnz_check(res, cfg, window_indicator_functional(cube), rng))
    out.append(gnz_check(res, cfg, window_exp_functional(cube), rng))
    if rc.potential.nonnegative:
        from .gibbs import estimate_partition_function
        z = estimate_partition_function(cube, rc.boundary, rc.potential, rc.levy,
                                        rc.n_samples, rng)
        out.append(partition_upper_check(z))
    if rc.window.is_cube_aligned and len(rc.window.cubes) > 1:
        from .gibbs import consistency_check
        rep = consistency_check(cube, rc.window, rc.boundary, _gibbs_cfg(rc, rc.window, 1),
                                n_outer=rc.chain.get("n_outer", 400),
                                inner_steps=rc.chain.get("inner_steps", 2000))
        out.append(_consistency_report(rep))
    return out


def _consistency_report(rep: dict, negative: bool = False) -> CheckReport:
    worst = max(rep["rows"], key=lambda r: abs(r["z"]))
    d = worst["direct"]
    return _report("consistency", Estimate(**d), Estimate(**worst["resampled"]), worst["z"],
                   4.0, 0.0, negative=negative, rows=rep["rows"],
                   inner_energy_scale=rep["inner_energy_scale"])


def _bounds_suite(rc, rng) -> list:
    out = []
    grid, spec, levy = rc.grid, rc.potential, rc.levy
    W = rc.window
    lo, hi = W.bounding_box()
    R = spec.range
    shell = Window.box(lo - R - grid.edge, hi + R + grid.edge).without(W)
    out.append(stability_sweep(levy, W, shell, spec, grid, min(rc.n_samples, 10_000), rng))
    consts = bound_constants(spec, grid, levy.theta, rc.eps_h, W)
    cube = _single_cube(rc)
    res = run_specification(_gibbs_cfg(rc, cube, 2))
    k = tuple([0] * grid.dimension)
    for frac in (0.25, 0.5, 1.0):
        lam = frac * consts.lambda0
        est = exp_moment(res.samples, lam, k, grid, lambda0=consts.lambda0)
        out.append(bound_check("exp_moment", est, consts.c_lambda(lam), lam=lam))
        sq = estimate_mean(cube_mass_series(res.samples, k, grid) ** 2, correlated=True)
        xi_sq = 0.0
        if rc.boundary is not None and len(rc.boundary):
            from .lattice import neighbor_indices
            q = rc.boundary.outside(cube).cube_masses(grid)
            xi_sq = sum(q.get(j, 0.0) ** 2 for j in neighbor_indices(k, grid))
        out.append(bound_check("dobrushin", sq, consts.dobrushin_bound(lam, xi_sq), lam=lam))
    return out


def _negative_suite(rc, rng) -> list:
    out = []
    levy, window = rc.levy, rc.window
    out.append(mecke_check(levy, window, window_indicator_functional(window), rc.n_samples,
                           rng, rhs_intensity_scale=0.5))
    cube = _single_cube(rc)
    cfg = _gibbs_cfg(rc, cube)
    res = run_specification(cfg)
    out.append(gnz_check(res, cfg, window_indicator_functional(cube), rng, weight="none"))
    if rc.window.is_cube_aligned and len(rc.window.cubes) > 1:
        from .gibbs import consistency_check
        rep = consistency_check(cube, rc.window, rc.boundary, _gibbs_cfg(rc, rc.window, 1),
                                n_outer=rc.chain.get("n_outer", 400),
                                inner_steps=rc.chain.get("inner_steps", 2000),
                                inner_energy_scale=2.0)
        out.append(_consistency_report(rep, negative=True))
    return out


def run_suite(suite_name: str, config) -> dict:
    """Run a named suite on a :class:`~gammagibbs.config.RunConfig`.

    Returns ``{"suite", "version", "success", "reports", "elapsed_s"}``;
    ``success`` is true when every ordinary check passed and every negative
    control failed.
    """
    if suite_name not in SUITES:
        raise ValueError(f"unknown suite {suite_name!r}; choose from {', '.join(SUITES)}")
    rng = np.random.default_rng(config.seed)
    parts = {"free-measure": _free_suite, "gibbs": _gibbs_suite, "bounds": _bounds_suite,
             "negative-control": _negative_suite}
    names = list(parts) if suite_name == "all" else [suite_name]
    t0 = time.perf_counter()
    reports = []
    for name in names:
        reports.extend(parts[name](config, rng))
    return {"suite": suite_name, "version": REPORT_VERSION,
            "success": all(r.success for r in reports),
            "reports": [r.to_dict() for r in reports],
            "elapsed_s": time.perf_counter() - t0}


def format_table(result: dict) -> str:
    """Human-readable table of a suite result."""
    lines = [f"{'check':<20} {'z':>10} {'thr':>6} {'bias':>10}  status"]
    for r in result["reports"]:
        tag = "ok" if r["success"] else "FAIL"
        if r["negative_control"]:
            tag += " (negative control)"
        lines.append(f"{r['check_name']:<20} {r['z_score']:>10.3f} {r['threshold']:>6.2f} "
                     f"{r['bias_budget']:>10.3g}  {tag}")
    lines.append(f"suite {result['suite']}: {'PASS' if result['success'] else 'FAIL'}")
    return "\n".join(lines)


def dumps_report(result: dict) -> str:
    return json.dumps(result, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")
