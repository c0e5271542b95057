"""Finite-volume Gibbs specifications: partition functions and MCMC sampling.

The target on a window ``Delta`` with boundary ``xi`` is
``mu(d eta) ~ exp(-H(eta | xi)) G(d eta)`` where ``G`` is the truncated
Levy (Gamma) reference measure.  Sampling uses a birth/death/resize
Metropolis-Hastings chain whose proposals are drawn from the reference, so
the acceptance ratio only needs the energy increment and the atom count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernel
from .interaction import PotentialSpec, hamiltonian, stability_lower_bound
from .lattice import CubeGrid, Window
from .levy import (LevySpec, MeasureBatch, canonical_batch_order, sample_batch, sample_mark,
                   truncated_mass)
from .measures import DiscreteMeasure
from .stats import Estimate, effective_sample_size, estimate_mean, estimate_ratio, z_score

AUDIT_TOL = 1e-8
_BLOCK = 1 << 15


@dataclass(frozen=True, eq=False)
class ChainConfig:
    """Everything that determines a chain run.

    ``burn_in`` defaults to 20% of ``n_steps``.  Samples are recorded after
    steps ``burn_in + k * thinning`` for ``k >= 1``.  ``require_certified``
    may be switched off for oracle runs with an uncertified potential such as
    ``phi = 0``.
    """

    levy: LevySpec
    potential: PotentialSpec
    window: Window
    n_steps: int
    burn_in: Optional[int] = None
    thinning: int = 1
    move_mix: tuple = (0.4, 0.4, 0.2)
    seed: int = 0
    boundary: Optional[DiscreteMeasure] = None
    audit_every: int = 10_000
    require_certified: bool = True
    initial: Optional[DiscreteMeasure] = None

    def __post_init__(self):
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.n_steps // 5)
        for name in ("n_steps", "thinning", "audit_every"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if int(self.burn_in) != self.burn_in or not 0 <= self.burn_in < self.n_steps:
            raise ValueError(f"burn_in must satisfy 0 <= burn_in < n_steps, got {self.burn_in}")
        mix = tuple(float(p) for p in self.move_mix)
        if len(mix) != 3 or any(not 0.0 <= p <= 1.0 for p in mix) or abs(sum(mix) - 1) > 1e-12:
            raise ValueError(f"move_mix must be three probabilities summing to 1, got {mix}")
        object.__setattr__(self, "move_mix", mix)
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.levy.trunc <= 0:
            raise ValueError("the chain needs a positive mark truncation")

    @property
    def n_samples(self) -> int:
        return (self.n_steps - self.burn_in) // self.thinning


@dataclass
class ChainState:
    """Mutable chain state with capacity-managed atom arrays."""

    positions: np.ndarray
    marks: np.ndarray
    n: int
    energy: float
    window: Window
    step: int = 0
    counters: np.ndarray = field(default_factory=lambda: np.zeros(6, dtype=np.int64))

    @property
    def eta(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.positions[:self.n], self.marks[:self.n], self.window)

    @property
    def acceptance(self) -> dict:
        out = {}
        for i, name in enumerate(("birth", "death", "resize")):
            prop, acc = int(self.counters[i]), int(self.counters[i + 3])
            out[name] = {"proposed": prop, "accepted": acc,
                         "rate": acc / prop if prop else float("nan")}
        return out

    def grow(self):
        cap = max(16, 2 * len(self.marks))
        pos = np.zeros((cap, self.positions.shape[1]))
        marks = np.zeros(cap)
        pos[:self.n] = self.positions[:self.n]
        marks[:self.n] = self.marks[:self.n]
        self.positions, self.marks = pos, marks


class _Prepared:
    """Per-run constants derived from a config."""

    def __init__(self, config: ChainConfig, backend: str):
        pot = config.potential
        if config.require_certified and not pot.certified:
            raise ValueError("the chain needs a certified potential "
                             "(pass require_certified=False for oracle runs)")
        w = config.window
        self.d = w.dimension
        self.nu = truncated_mass(config.levy) * w.volume
        p_b, p_d, _ = config.move_mix
        self.p_birth = p_b
        self.p_bd = p_b + p_d
        with np.errstate(divide="ignore"):
            self.log_nu = float(np.log(self.nu))
            self.log_d_over_b = float(np.log(p_d) - np.log(p_b))
        xi = config.boundary
        if xi is not None and len(xi):
            keep = ~w.contains(xi.positions) & (w.distance_to(xi.positions) <= pot.range)
            self.bpos = np.ascontiguousarray(xi.positions[keep])
            self.bmarks = np.ascontiguousarray(xi.marks[keep])
        else:
            self.bpos, self.bmarks = np.zeros((0, self.d)), np.zeros(0)
        self.boundary = DiscreteMeasure(self.bpos, self.bmarks)
        if backend == "auto":
            backend = "numba" if pot.radial is not None else "python"
        if backend == "numba" and pot.radial is None:
            raise ValueError("the compiled kernel handles built-in radial potentials only")
        if backend not in ("numba", "python"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        if pot.radial is not None:
            self.edges = np.ascontiguousarray(pot.radial[0], dtype=float)
            self.values = np.ascontiguousarray(pot.radial[1], dtype=float)
            self.diag = float(self.values[0]) if pot.self_interaction else 0.0
        self.grid = CubeGrid(self.d, pot.delta, pot.range)

    def draw(self, config: ChainConfig, rng: np.random.Generator, m: int):
        """Proposal stream for ``m`` steps; independent of the chain state."""
        u_move = rng.random(m)
        xs = np.ascontiguousarray(config.window.sample_uniform(m, rng))
        ss = sample_mark(config.levy, rng, size=m)
        u_pick = rng.random(m)
        u_acc = rng.random(m)
        return u_move, xs, ss, u_pick, u_acc

    def advance(self, state: ChainState, config: ChainConfig, props, start: int, stop: int):
        t = start
        while t < stop:
            args = (state.positions, state.marks, state.n, state.energy, *props, t, stop,
                    self.p_birth, self.p_bd, self.log_nu, self.log_d_over_b,
                    self.bpos, self.bmarks, len(self.bmarks))
            if self.backend == "numba":
                n, e, t_end = _kernel.run_radial(*args, self.edges, self.values, self.diag,
                                                 state.counters)
            else:
                n, e, t_end = _kernel.run_python(*args, config.potential, state.counters)
            state.n, state.energy = int(n), float(e)
            state.step += int(t_end) - t
            t = int(t_end)
            if t < stop:
                state.grow()


def initial_state(config: ChainConfig, capacity: Optional[int] = None) -> ChainState:
    w = config.window
    eta = config.initial.restrict(w) if config.initial is not None else DiscreteMeasure.empty(
        w.dimension, w)
    nu = truncated_mass(config.levy) * w.volume
    cap = capacity or int(max(64, 2 * len(eta), 2 * nu + 10 * math.sqrt(nu) + 16))
    pos = np.zeros((cap, w.dimension))
    marks = np.zeros(cap)
    pos[:len(eta)] = eta.positions
    marks[:len(eta)] = eta.marks
    energy = hamiltonian(eta, config.boundary, w, config.potential) if len(eta) else 0.0
    return ChainState(pos, marks, len(eta), energy, w)


def mh_step(state: ChainState, config: ChainConfig, rng: np.random.Generator,
            backend: str = "python") -> ChainState:
    """One birth, death or resize step (mutates and returns ``state``)."""
    prep = _Prepared(config, backend)
    props = prep.draw(config, rng, 1)
    prep.advance(state, config, props, 0, 1)
    return state


@dataclass(frozen=True, eq=False)
class ChainResult:
    samples: MeasureBatch
    energies: np.ndarray
    diagnostics: dict
    config: ChainConfig
    final_state: ChainState

    def __iter__(self):
        # allows ``samples, diagnostics = run_specification(...)``
        return iter((self.samples, self.diagnostics))

    def masses(self, window: Optional[Window] = None) -> np.ndarray:
        return self.samples.masses_in(window)


def _audit(state: ChainState, config: ChainConfig, prep: _Prepared, log: dict):
    eta = state.eta
    H = hamiltonian(eta, prep.boundary, config.window, config.potential)
    rel = abs(state.energy - H) / max(1.0, abs(H))
    log["n_audits"] += 1
    log["max_rel_error"] = max(log["max_rel_error"], rel)
    if rel > AUDIT_TOL:
        raise RuntimeError(f"energy cache drifted: cached {state.energy!r}, recomputed {H!r}")
    state.energy = H
    bound = stability_lower_bound(eta, prep.boundary, config.window, config.potential, prep.grid)
    log["stability_min_slack"] = min(log["stability_min_slack"], H - bound)
    if H < bound - 1e-9 * max(1.0, abs(H)):
        raise RuntimeError(f"stability bound violated at step {state.step}: H={H}, bound={bound}")


def run_specification(config: ChainConfig, backend: str = "auto") -> ChainResult:
    """Run the chain and return thinned post-burn-in samples with diagnostics.

    Diagnostics hold per-move acceptance rates, the ESS of ``eta(Delta)``, the
    energy-cache audit (every ``audit_every`` steps and at the end) and the
    smallest observed slack of the stability bound at audit points.
    """
    prep = _Prepared(config, backend)
    rng = np.random.default_rng(config.seed)
    state = initial_state(config)
    n_steps = config.n_steps
    next_sample = config.burn_in + config.thinning
    next_audit = config.audit_every
    snaps_pos, snaps_marks, energies = [], [], []
    audit = {"n_audits": 0, "max_rel_error": 0.0, "stability_min_slack": math.inf}

    t0 = 0
    while t0 < n_steps:
        m = min(_BLOCK, n_steps - t0)
        props = prep.draw(config, rng, m)
        t = t0
        while t < t0 + m:
            event = min(next_sample, next_audit, t0 + m)
            prep.advance(state, config, props, t - t0, event - t0)
            t = event
            if t == next_audit:
                _audit(state, config, prep, audit)
                next_audit += config.audit_every
            if t == next_sample:
                snaps_pos.append(state.positions[:state.n].copy())
                snaps_marks.append(state.marks[:state.n].copy())
                energies.append(state.energy)
                next_sample += config.thinning
        t0 += m
    if state.step % config.audit_every:
        _audit(state, config, prep, audit)

    samples = _to_batch(snaps_pos, snaps_marks, config.window)
    masses = samples.masses_in()
    diagnostics = {
        "backend": prep.backend,
        "n_steps": n_steps,
        "n_samples": len(samples),
        "acceptance": state.acceptance,
        "ess_mass": effective_sample_size(masses) if len(masses) else 0.0,
        "mean_atoms": float(samples.counts().mean()) if len(samples) else float("nan"),
        "energy_audit": {**audit, "passed": audit["max_rel_error"] <= AUDIT_TOL},
    }
    return ChainResult(samples, np.asarray(energies), diagnostics, config, state)


def _to_batch(pos_list, marks_list, window: Window) -> MeasureBatch:
    d = window.dimension
    n = len(pos_list)
    counts = np.array([len(mk) for mk in marks_list], dtype=np.int64)
    sid = np.repeat(np.arange(n), counts)
    pos = np.vstack(pos_list) if n and counts.sum() else np.zeros((0, d))
    marks = np.concatenate(marks_list) if n and counts.sum() else np.zeros(0)
    order = canonical_batch_order(pos, sid)
    return MeasureBatch(pos[order], marks[order], sid[order], n, window)


# ---------------------------------------------------------------------------
# energies of batches and partition functions


def batch_energies(batch: MeasureBatch, xi: Optional[DiscreteMeasure], window: Window,
                   spec: PotentialSpec) -> np.ndarray:
    """``H(eta_i | xi)`` for every sample of a batch living in ``window``."""
    if spec.radial is not None:
        d = window.dimension
        if xi is not None and len(xi):
            keep = ~window.contains(xi.positions) & (window.distance_to(xi.positions) <= spec.range)
            bpos, bmarks = xi.positions[keep], xi.marks[keep]
        else:
            bpos, bmarks = np.zeros((0, d)), np.zeros(0)
        offsets = np.searchsorted(batch.sample_id, np.arange(batch.n_samples + 1))
        diag = float(spec.radial[1][0]) if spec.self_interaction else 0.0
        return _kernel.batch_energy_radial(
            np.ascontiguousarray(batch.positions), np.ascontiguousarray(batch.marks),
            offsets.astype(np.int64), np.ascontiguousarray(bpos), np.ascontiguousarray(bmarks),
            np.asarray(spec.radial[0], float), np.asarray(spec.radial[1], float), diag)
    return np.array([hamiltonian(eta, xi, window, spec) for eta in batch])


def estimate_partition_function(window: Window, xi: Optional[DiscreteMeasure],
                                spec: PotentialSpec, levy: LevySpec, n_samples: int,
                                rng: np.random.Generator) -> Estimate:
    """Plain Monte Carlo estimate of ``Z = E_G[exp(-H(eta | xi))]``.

    Raises ``RuntimeError`` when the estimate is not positive, or exceeds
    ``1 + 3 SE`` for a nonnegative potential.  Warns when a handful of
    samples carry most of the weight.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    batch = sample_batch(levy, window, n_samples, rng)
    w = np.exp(-batch_energies(batch, xi, window, spec))
    est = estimate_mean(w)
    if not est.mean > 0:
        raise RuntimeError("partition function estimate is not positive")
    if spec.nonnegative and est.mean > 1 + 3 * est.stderr:
        raise RuntimeError(f"Z estimate {est.mean} exceeds 1 + 3 SE for a nonnegative potential")
    if n_samples > 1 and w.max() > 0.05 * w.sum():
        warnings.warn("exp(-H) is heavy tailed on this window: one sample carries "
                      f"{w.max() / w.sum():.1%} of the weight", RuntimeWarning, stacklevel=2)
    return est


def importance_estimate(functional: Callable, window: Window, xi: Optional[DiscreteMeasure],
                        spec: PotentialSpec, levy: LevySpec, n_samples: int,
                        rng: np.random.Generator) -> Estimate:
    """``E_mu[f] = E_G[f exp(-H)] / E_G[exp(-H)]`` by reweighting reference samples.

    ``functional`` maps a :class:`MeasureBatch` to one value per sample.
    """
    batch = sample_batch(levy, window, n_samples, rng)
    w = np.exp(-batch_energies(batch, xi, window, spec))
    f = np.asarray(functional(batch), dtype=float)
    return estimate_ratio(f * w, w)


# ---------------------------------------------------------------------------
# observables


def cube_mass_series(samples: MeasureBatch, cube, grid: CubeGrid) -> np.ndarray:
    """``eta_i(Q_k)`` for every sample."""
    k = np.asarray(cube, dtype=np.int64).reshape(1, -1)
    if len(samples.marks) == 0:
        return np.zeros(samples.n_samples)
    hit = np.all(grid.indices(samples.positions) == k, axis=1)
    return np.bincount(samples.sample_id, weights=samples.marks * hit,
                       minlength=samples.n_samples)


def exp_moment(samples: MeasureBatch, lam: float, cube, grid: CubeGrid,
               correlated: bool = True, lambda0: Optional[float] = None) -> Estimate:
    """``E[exp(lam * eta(Q_k)^2)]`` over chain samples (ESS-based SE when ``correlated``)."""
    if lam == 0:
        return Estimate.exact(1.0)
    if lambda0 is not None and lam > lambda0 * (1 + 1e-12):
        raise ValueError(f"lambda={lam} exceeds lambda0={lambda0}")
    q = cube_mass_series(samples, cube, grid)
    return estimate_mean(np.exp(lam * q * q), correlated=correlated)


def support_diagnostic(samples: MeasureBatch, grid: CubeGrid, b_log: float) -> float:
    """Fraction of (sample, occupied cube) pairs with ``eta(Q_k)^2 > b_log log(1 + |k|)``."""
    if len(samples.marks) == 0:
        return 0.0
    idx = grid.indices(samples.positions)
    keys = np.column_stack([samples.sample_id, idx])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    mass = np.bincount(inv.ravel(), weights=samples.marks)
    norm = np.sqrt(np.sum(uniq[:, 1:].astype(float) ** 2, axis=1))
    return float(np.mean(mass ** 2 > b_log * np.log1p(norm)))


def transition_flux(counts, bins: Sequence[int]) -> dict:
    """Detailed-balance diagnostic on a consecutive series of atom counts.

    Counts are binned with ``np.digitize(counts, bins)``; for every pair of
    adjacent bins the flux ``N(i -> j)`` is compared with ``N(j -> i)``.
    Returns the largest ``|z|`` over the pairs along with the table.
    """
    c = np.digitize(np.asarray(counts), bins)
    a, b = c[:-1], c[1:]
    table = []
    zmax = 0.0
    for i in np.unique(c):
        for j in np.unique(c):
            if j <= i:
                continue
            nij = int(np.sum((a == i) & (b == j)))
            nji = int(np.sum((a == j) & (b == i)))
            if nij + nji == 0:
                continue
            z = (nij - nji) / math.sqrt(nij + nji)
            table.append((int(i), int(j), nij, nji, z))
            zmax = max(zmax, abs(z))
    return {"max_abs_z": zmax, "pairs": table}


# ---------------------------------------------------------------------------
# consistency and thermodynamic sweeps

def _default_panel(c: float) -> list:
    return [
        (f"indicator(mass<={c:g})", lambda m: (m <= c).astype(float)),
        ("exp(-mass)", lambda m: np.exp(-m)),
        ("min(mass,10)", lambda m: np.minimum(m, 10.0)),
    ]


def _check_nested(small: Window, big: Window):
    if not (small.is_cube_aligned and big.is_cube_aligned):
        raise ValueError("consistency windows must be unions of grid cubes")
    if small.grid != big.grid or not small.cubes <= big.cubes:
        raise ValueError("the small window must be a sub-union of the big one (same grid)")


def consistency_check(window_small: Window, window_big: Window,
                      xi: Optional[DiscreteMeasure], config: ChainConfig, *,
                      n_outer: int = 1000, inner_steps: int = 2000,
                      inner_energy_scale: float = 1.0, c: Optional[float] = None,
                      threshold: float = 4.0) -> dict:
    """Compare ``pi_Delta`` with ``pi_Delta`` followed by inner resampling by ``pi_small``.

    Pipeline (i) runs the chain on the big window.  Pipeline (ii) takes
    ``n_outer`` states of an independent big-window chain and, for each,
    re-samples the small window from the empty measure for ``inner_steps``
    steps, with the outer atoms (and ``xi``) as boundary.  The panel of
    functionals of ``eta(small)`` must agree within ``threshold`` SE.
    ``inner_energy_scale != 1`` deliberately uses a wrong inner kernel.
    """
    _check_nested(window_small, window_big)
    base = replace(config, window=window_big, boundary=xi, initial=None)
    if c is None:
        c = config.levy.theta * window_small.volume if config.levy.kind == "gamma" else 1.0
    panel = _default_panel(c)

    ss = np.random.SeedSequence(config.seed)
    seeds = [int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(3)]
    res_i = run_specification(replace(base, seed=seeds[0]))
    m_i = res_i.samples.masses_in(window_small)

    outer_cfg = replace(base, seed=seeds[1])
    outer = run_specification(outer_cfg)
    pick = np.linspace(0, len(outer.samples) - 1, min(n_outer, len(outer.samples))).astype(int)
    pot = config.potential
    inner_pot = pot if inner_energy_scale == 1.0 else pot.scaled(inner_energy_scale)
    inner_seeds = np.random.SeedSequence(seeds[2]).generate_state(len(pick), np.uint64)
    xi_out = xi.outside(window_big) if xi is not None else DiscreteMeasure.empty(
        window_big.dimension)
    m_ii = np.empty(len(pick))
    for r, i in enumerate(pick):
        eta = outer.samples[int(i)]
        bnd = eta.outside(window_small) + xi_out
        inner_cfg = ChainConfig(levy=config.levy, potential=inner_pot, window=window_small,
                                n_steps=inner_steps, burn_in=inner_steps - 1, thinning=1,
                                move_mix=config.move_mix, seed=int(inner_seeds[r]),
                                boundary=bnd, audit_every=inner_steps,
                                require_certified=config.require_certified and
                                inner_energy_scale == 1.0)
        m_ii[r] = run_specification(inner_cfg).samples.masses_in()[0]

    rows = []
    for name, f in panel:
        a = estimate_mean(f(m_i), correlated=True)
        b = estimate_mean(f(m_ii), correlated=True)
        z = z_score(a, b)
        rows.append({"functional": name, "direct": a.to_dict(), "resampled": b.to_dict(),
                     "z": z})
    zmax = max(abs(r["z"]) for r in rows)
    return {"check_name": "consistency", "rows": rows, "max_abs_z": zmax,
            "pass": zmax <= threshold, "inner_energy_scale": inner_energy_scale,
            "n_outer": len(pick), "inner_steps": inner_steps}


def thermodynamic_sweep(windows: Sequence[Window], xi: Optional[DiscreteMeasure],
                        config: ChainConfig, *, obs_window: Optional[Window] = None,
                        lam: float = 1.0, cube=None, threshold: float = 4.0) -> dict:
    """Track local statistics along a nested sequence of windows.

    Statistics on the observation window (default: the first window):
    ``E[eta(obs)]``, ``E[exp(-eta(obs))]`` and ``E[exp(lam eta(Q_0)^2)]``.
    ``flagged`` is set when the last two windows differ by more than
    ``threshold`` combined SE in any statistic.
    """
    windows = list(windows)
    if len(windows) < 2:
        raise ValueError("a sweep needs at least two windows")
    for a, b in zip(windows, windows[1:]):
        _check_nested(a, b)
        if a.cubes == b.cubes:
            raise ValueError("windows must be strictly increasing")
    obs = obs_window or windows[0]
    grid = windows[0].grid
    cube = tuple([0] * grid.dimension) if cube is None else tuple(cube)
    rows = []
    for w in windows:
        res = run_specification(replace(config, window=w, boundary=xi, initial=None))
        m = res.samples.masses_in(obs)
        q = cube_mass_series(res.samples, cube, grid)
        stats = {
            "mass": estimate_mean(m, correlated=True),
            "exp_neg_mass": estimate_mean(np.exp(-m), correlated=True),
            "exp_moment": estimate_mean(np.exp(lam * q * q), correlated=True),
        }
        rows.append({"n_cubes": len(w.cubes), "stats": stats,
                     "acceptance": res.diagnostics["acceptance"]})
    diffs = []
    for a, b in zip(rows, rows[1:]):
        diffs.append({k: z_score(b["stats"][k], a["stats"][k]) for k in a["stats"]})
    flagged = any(abs(z) > threshold for z in diffs[-1].values())
    return {"rows": rows, "differences": diffs, "flagged": flagged, "lam": lam,
            "all_within": all(abs(z) <= threshold for d in diffs for z in d.values())}


def sweep_table(report: dict) -> list:
    """Flatten a sweep report into CSV-ready rows."""
    out = []
    for r in report["rows"]:
        for k, est in r["stats"].items():
            out.append({"n_cubes": r["n_cubes"], "statistic": k, "mean": est.mean,
                        "stderr": est.stderr, "n_effective": est.n_effective})
    return out
