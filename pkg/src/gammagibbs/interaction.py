"""Pair potentials, relative energy and the deterministic stability bounds.

The relative energy of ``eta`` in a window given the boundary ``xi`` is

    H(eta | xi) = sum_{x, x' in eta_Delta} phi(x, x') s_x s_x'
                  + 2 sum_{x in eta_Delta, y in xi outside Delta} phi(x, y) s_x s_y

where the first sum runs over all ordered pairs including ``x = x'`` unless
the potential was built with ``self_interaction=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.stats import qmc

from .lattice import (CubeGrid, Window, cubes_meeting, index_hull, interaction_parameter,
                      neighbor_indices, shell_cubes)
from .measures import DiscreteMeasure

# dense pair evaluation below this many pairs, cube buckets above
_DENSE_PAIRS = 250_000


class CertificationError(ValueError):
    """A potential violates one clause of the standing assumption.

    Attributes:
        clause: ``"finite_range"``, ``"lower_bound"`` or ``"repulsion_condition"``.
        witness: pair of points exhibiting the violation, when one exists.
        values: the numbers that were compared.
    """

    def __init__(self, clause: str, message: str, witness=None, values: Optional[dict] = None):
        super().__init__(f"{clause}: {message}")
        self.clause = clause
        self.witness = witness
        self.values = values or {}


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Symmetric bounded pair potential of finite range with its constants.

    ``phi(x, y)`` must be vectorised over leading axes (points on the last
    axis).  Built-in families also carry a piecewise-constant radial profile
    ``radial = (edges, values)``: ``phi = values[i]`` for
    ``edges[i-1] < |x - y| <= edges[i]`` and 0 beyond the last edge.
    """

    phi: Callable
    range: float
    delta: float
    sup_norm: float
    lower_bound_b: float
    repulsion_A: float
    family: str = "custom"
    params: dict = field(default_factory=dict)
    radial: Optional[tuple] = None
    self_interaction: bool = True
    certified: bool = False

    @property
    def nonnegative(self) -> bool:
        return self.lower_bound_b == 0.0

    def m_phi(self, d: int) -> float:
        return interaction_parameter(d, self.range, self.delta)

    def diagonal(self, x: np.ndarray) -> np.ndarray:
        """``phi(x, x)`` for an ``(n, d)`` array (zero when self-interaction is off)."""
        x = np.asarray(x, dtype=float)
        if not self.self_interaction:
            return np.zeros(len(x))
        if self.radial is not None:
            return np.full(len(x), _radial_eval(self.radial, np.zeros(1))[0])
        return np.asarray(self.phi(x, x), dtype=float)

    def matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """``phi(X_i, Y_j)`` with the finite range enforced."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        diff = X[:, None, :] - Y[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if self.radial is not None:
            return _radial_eval(self.radial, r)
        vals = np.asarray(self.phi(X[:, None, :], np.broadcast_to(Y[None, :, :], diff.shape)),
                          dtype=float)
        return np.where(r > self.range, 0.0, vals)

    def scaled(self, factor: float) -> "PotentialSpec":
        """The potential multiplied by ``factor > 0``."""
        if not factor > 0:
            raise ValueError("factor must be positive")
        phi = self.phi
        radial = None
        if self.radial is not None:
            radial = (self.radial[0], self.radial[1] * factor)
        return replace(self, phi=lambda x, y: factor * phi(x, y),
                       sup_norm=self.sup_norm * factor,
                       lower_bound_b=self.lower_bound_b * factor,
                       repulsion_A=self.repulsion_A * factor,
                       params={**self.params, "scale": self.params.get("scale", 1.0) * factor},
                       radial=radial)

    def to_dict(self) -> dict:
        if self.family == "custom":
            raise ValueError("custom potentials are not serialisable")
        return {"family": self.family, **self.params, "self_interaction": self.self_interaction}

    # built-in families -------------------------------------------------

    @classmethod
    def step(cls, A: float, delta: float, self_interaction: bool = True) -> "PotentialSpec":
        """``A * 1{|x - y| <= delta}``, purely repulsive, range ``delta``."""
        return cls._radial_family("step", [delta], [A], delta, delta, {"A": A},
                                  self_interaction)

    @classmethod
    def core_shell(cls, A: float, b: float, delta: float, R: float,
                   self_interaction: bool = True) -> "PotentialSpec":
        """``A`` on ``|x - y| <= delta`` and ``-b`` on ``delta < |x - y| <= R``.

        The lower-bound constant is reported as ``b`` even when ``R == delta``
        (empty shell), which keeps every bound valid.
        """
        if R < delta:
            raise ValueError("core-shell needs R >= delta")
        if b < 0:
            raise ValueError("b must be nonnegative")
        spec = cls._radial_family("core_shell", [delta, R], [A, -b], delta, R,
                                  {"A": A, "b": b}, self_interaction)
        return replace(spec, lower_bound_b=float(b))

    @classmethod
    def zero(cls, delta: float, R: Optional[float] = None) -> "PotentialSpec":
        """``phi = 0``.  It fails the strict repulsion condition, so it is never certified."""
        R = delta if R is None else R
        return cls._radial_family("zero", [R], [0.0], delta, R, {}, True)

    @classmethod
    def _radial_family(cls, family, edges, values, delta, R, params, self_interaction):
        edges = np.asarray(edges, dtype=float)
        values = np.asarray(values, dtype=float)
        radial = (edges, values)

        def phi(x, y):
            diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
            return _radial_eval(radial, np.sqrt(np.sum(diff * diff, axis=-1)))

        reach = [i for i in range(len(edges)) if i == 0 or edges[i - 1] < delta]
        A = float(values[reach].min())
        if edges[-1] < delta:
            A = min(A, 0.0)
        return cls(phi=phi, range=float(R), delta=float(delta),
                   sup_norm=float(np.max(np.abs(values))),
                   lower_bound_b=float(max(0.0, -values.min())),
                   repulsion_A=A,
                   family=family, params={"delta": float(delta), "R": float(R), **params},
                   radial=radial, self_interaction=self_interaction)


def _radial_eval(radial, r):
    edges, values = radial
    table = np.append(values, 0.0)
    return table[np.searchsorted(edges, r, side="left")]


def certify(potential: Union[PotentialSpec, Callable], grid: CubeGrid, *,
            n_pairs: int = 100_000, region: Optional[tuple] = None,
            self_interaction: bool = True) -> PotentialSpec:
    """Check finite range, lower bound and the repulsion condition ``A > 2 m b``.

    Built-in families use their analytic constants.  For a plain callable the
    constants are estimated on a deterministic quasi-random set of pairs per
    clause; this is a heuristic certificate, not a proof.

    Raises:
        CertificationError: naming the violated clause and a witnessing pair.
    """
    d = grid.dimension
    if isinstance(potential, PotentialSpec):
        spec = potential
        if not math.isclose(spec.delta, grid.delta) or not math.isclose(spec.range, grid.range):
            raise ValueError(f"grid (delta={grid.delta}, R={grid.range}) does not match "
                             f"potential (delta={spec.delta}, R={spec.range})")
        if spec.radial is None:
            spec = _numeric_constants(spec.phi, grid, n_pairs, region, spec.self_interaction)
    else:
        spec = _numeric_constants(potential, grid, n_pairs, region, self_interaction)
    m = interaction_parameter(d, spec.range, spec.delta)
    if not spec.repulsion_A > 2 * m * spec.lower_bound_b:
        raise CertificationError(
            "repulsion_condition",
            f"A_delta = {spec.repulsion_A} is not > 2 m b = {2 * m * spec.lower_bound_b}",
            witness=spec.params.get("_witness_A"),
            values={"A_delta": spec.repulsion_A, "2m_b": 2 * m * spec.lower_bound_b,
                    "m_phi": m, "b": spec.lower_bound_b})
    return replace(spec, certified=True)


def _pair_points(d: int, n: int, rmin: float, rmax: float, region, seed: int):
    lo, hi = region
    # Halton without scrambling is deterministic
    u = qmc.Halton(d=2 * d + 1, scramble=False).random(n + 1)[1:]
    x = lo + (hi - lo) * u[:, :d]
    direction = u[:, d:2 * d] - 0.5
    norm = np.linalg.norm(direction, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    r = rmin + (rmax - rmin) * u[:, 2 * d:2 * d + 1]
    return x, x + direction / norm * r


def _numeric_constants(phi, grid: CubeGrid, n_pairs: int, region, self_interaction: bool):
    d, R, delta = grid.dimension, grid.range, grid.delta
    if region is None:
        region = (np.full(d, -5 * R), np.full(d, 5 * R))
    region = (np.asarray(region[0], float), np.asarray(region[1], float))
    # finite range
    x, y = _pair_points(d, n_pairs, R * (1 + 1e-9), 3 * R, region, 1)
    v = np.asarray(phi(x, y), dtype=float)
    bad = np.flatnonzero(v != 0)
    if bad.size:
        i = int(bad[0])
        raise CertificationError("finite_range", f"phi = {v[i]} at distance "
                                 f"{np.linalg.norm(x[i] - y[i]):.6g} > R = {R}",
                                 witness=(x[i].tolist(), y[i].tolist()))
    # lower bound and sup norm over |x - y| <= R
    x, y = _pair_points(d, n_pairs, 0.0, R, region, 2)
    v = np.asarray(phi(x, y), dtype=float)
    if not np.all(np.isfinite(v)):
        i = int(np.flatnonzero(~np.isfinite(v))[0])
        raise CertificationError("lower_bound", "phi is not finite",
                                 witness=(x[i].tolist(), y[i].tolist()))
    # symmetry spot check
    vs = np.asarray(phi(y, x), dtype=float)
    if not np.allclose(v, vs, rtol=1e-12, atol=1e-12):
        i = int(np.flatnonzero(~np.isclose(v, vs))[0])
        raise ValueError(f"phi is not symmetric at {(x[i].tolist(), y[i].tolist())}")
    b = float(max(0.0, -v.min()))
    sup = float(np.max(np.abs(v)))
    # repulsion constant over |x - y| <= delta
    xa, ya = _pair_points(d, n_pairs, 0.0, delta, region, 3)
    va = np.asarray(phi(xa, ya), dtype=float)
    diag = np.asarray(phi(xa, xa), dtype=float)
    va = np.concatenate([va, diag])
    i = int(np.argmin(va))
    witness = ((xa[i].tolist(), ya[i].tolist()) if i < len(xa)
               else (xa[i - len(xa)].tolist(), xa[i - len(xa)].tolist()))
    return PotentialSpec(phi=phi, range=float(R), delta=float(delta), sup_norm=sup,
                         lower_bound_b=b, repulsion_A=float(va[i]), family="custom",
                         params={"_witness_A": witness}, radial=None,
                         self_interaction=self_interaction)


# ---------------------------------------------------------------------------
# energies


def _cross_energy(spec: PotentialSpec, X, sX, Y, sY) -> float:
    """``sum_{i, j} phi(X_i, Y_j) sX_i sY_j`` (no diagonal special-casing)."""
    if len(X) == 0 or len(Y) == 0:
        return 0.0
    if len(X) * len(Y) <= _DENSE_PAIRS:
        return float(sX @ spec.matrix(X, Y) @ sY)
    index = SpatialIndex(spec, Y)
    total = 0.0
    grid = index.grid
    keys = grid.indices(X)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    for c, k in enumerate(uniq):
        rows = np.flatnonzero(inv == c)
        cols = index.near(tuple(k))
        if cols.size:
            total += float(sX[rows] @ spec.matrix(X[rows], Y[cols]) @ sY[cols])
    return total


class SpatialIndex:
    """Atom ids bucketed by cube index, cube edge ``delta / sqrt(d)``."""

    def __init__(self, spec: PotentialSpec, positions: np.ndarray):
        positions = np.asarray(positions, dtype=float)
        self.grid = CubeGrid(positions.shape[1], spec.delta, spec.range)
        self.buckets: dict = {}
        for i, k in enumerate(map(tuple, self.grid.indices(positions).tolist())):
            self.buckets.setdefault(k, []).append(i)

    def near(self, k) -> np.ndarray:
        """Ids of atoms in cube ``k`` and its neighbour cubes."""
        out = list(self.buckets.get(k, ()))
        for j in neighbor_indices(k, self.grid):
            out.extend(self.buckets.get(j, ()))
        return np.array(sorted(out), dtype=np.int64)


def _split(eta: DiscreteMeasure, xi: Optional[DiscreteMeasure], window: Window, spec):
    inside = eta.restrict(window)
    if xi is None or len(xi) == 0:
        d = eta.dimension
        return inside, np.zeros((0, d)), np.zeros(0)
    out = ~window.contains(xi.positions)
    near = window.distance_to(xi.positions) <= spec.range
    keep = out & near
    return inside, xi.positions[keep], xi.marks[keep]


def hamiltonian(eta: DiscreteMeasure, xi: Optional[DiscreteMeasure], window: Window,
                spec: PotentialSpec) -> float:
    """Relative energy ``H_Delta(eta | xi)``.

    Atoms of ``eta`` outside the window and atoms of ``xi`` inside it are
    ignored; boundary atoms farther than ``R`` from the window cannot contribute
    and are dropped before any arithmetic.
    """
    inside, Y, sY = _split(eta, xi, window, spec)
    X, s = inside.positions, inside.marks
    if len(X) == 0:
        return 0.0
    total = _cross_energy(spec, X, s, X, s)
    if not spec.self_interaction:
        total -= float(np.sum(np.asarray(spec.phi(X, X), dtype=float) * s * s))
    return total + 2.0 * _cross_energy(spec, X, s, Y, sY)


@dataclass(frozen=True)
class Birth:
    x: tuple
    s: float


@dataclass(frozen=True)
class Death:
    atom_id: int


@dataclass(frozen=True)
class Resize:
    atom_id: int
    s_new: float


def _field(spec, x, X, s, exclude: Optional[int] = None) -> float:
    """``sum_j phi(x, X_j) s_j`` over all j except ``exclude``."""
    if len(X) == 0:
        return 0.0
    row = spec.matrix(np.asarray(x, float).reshape(1, -1), X)[0] * s
    if exclude is not None:
        row[exclude] = 0.0
    return float(row.sum())


def energy_increment(eta: DiscreteMeasure, xi: Optional[DiscreteMeasure], window: Window,
                     spec: PotentialSpec, move) -> float:
    """``H(after) - H(before)`` for a single birth, death or resize, in O(atoms)."""
    inside, Y, sY = _split(eta, xi, window, spec)
    X, s = inside.positions, inside.marks
    if isinstance(move, Birth):
        x = np.asarray(move.x, float).reshape(1, -1)
        diag = spec.diagonal(x)[0]
        return (diag * move.s ** 2 + 2 * move.s * _field(spec, x, X, s)
                + 2 * move.s * _field(spec, x, Y, sY))
    i = int(move.atom_id)
    if not 0 <= i < len(X):
        raise IndexError(f"unknown atom id {move.atom_id} (window holds {len(X)} atoms)")
    x = X[i:i + 1]
    diag = spec.diagonal(x)[0]
    local = _field(spec, x, X, s, exclude=i) + _field(spec, x, Y, sY)
    if isinstance(move, Death):
        return -(diag * s[i] ** 2 + 2 * s[i] * local)
    if isinstance(move, Resize):
        return diag * (move.s_new ** 2 - s[i] ** 2) + 2 * (move.s_new - s[i]) * local
    raise TypeError(f"unknown move {move!r}")


def gnz_weight(s: float, x, eta: DiscreteMeasure, spec: PotentialSpec,
               literal: bool = False) -> float:
    """``Phi((s, x); eta) = 2 s sum_y s_y phi(x, y)``.

    With ``literal=True`` the self term ``phi(x, x) s^2`` is added, which is
    the exact energy increment of adding ``s delta_x`` when the diagonal is
    part of the energy.
    """
    x = np.asarray(x, float).reshape(1, -1)
    w = 2.0 * s * _field(spec, x, eta.positions, eta.marks)
    if literal:
        w += spec.diagonal(x)[0] * s * s
    return w


def stability_lower_bound(eta: DiscreteMeasure, xi: Optional[DiscreteMeasure],
                          window: Window, spec: PotentialSpec, grid: CubeGrid,
                          variant: str = "general") -> float:
    """Lower bound for ``H_Delta(eta | xi)`` from cube masses alone.

    ``variant="general"``:
        ``(A - 2 m b) sum_{j in K_Delta} eta_Delta(Q_j)^2 - m b sum_{l in K_U} xi_out(Q_l)^2``.
    ``variant="single_cube"`` (window must be one grid cube ``Q_k``):
        ``(A - m b) eta(Q_k)^2 - b sum_{j in neighbours(k)} xi_out(Q_j)^2``.
    """
    A, b = spec.repulsion_A, spec.lower_bound_b
    m = interaction_parameter(grid.dimension, spec.range, spec.delta)
    inside = eta.restrict(window)
    outside = xi.outside(window) if xi is not None else DiscreteMeasure.empty(grid.dimension)
    eta_q = inside.cube_masses(grid)
    xi_q = outside.cube_masses(grid)
    if variant == "general":
        K = cubes_meeting(window, grid)
        KU = shell_cubes(window, grid)
        return ((A - 2 * m * b) * sum(eta_q.get(j, 0.0) ** 2 for j in K)
                - m * b * sum(xi_q.get(l, 0.0) ** 2 for l in KU))
    if variant == "single_cube":
        if not (window.is_cube_aligned and len(window.cubes) == 1 and window.grid == grid):
            raise ValueError("single_cube variant needs a window that is one grid cube")
        (k,) = window.cubes
        return ((A - m * b) * eta_q.get(k, 0.0) ** 2
                - b * sum(xi_q.get(j, 0.0) ** 2 for j in neighbor_indices(k, grid)))
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the exponential-moment and weak-dependence estimates.

    ``eps_h`` is the free Young/Hoelder parameter (unrelated to the mark
    truncation) and ``delta_fraction`` the fraction ``B_eps < delta_fraction * lambda``.
    """

    m_phi: float
    edge: float
    C_Delta: float
    C_phi: float
    Upsilon_eps: float
    B_eps: float
    lambda0: float
    lambda0_zero_bc: float
    eps_h: float
    delta_fraction: float
    vartheta: float
    admissible_interval: tuple
    eps_admissible: bool
    C_lambda: float
    dimension: int = 1
    log_C_lambda: float = math.inf

    def c_lambda(self, lam: float) -> float:
        """Bound on ``E exp(lam eta(Q_k)^2)`` valid for every ``0 <= lam <= lambda0``.

        The bound is derived at ``lambda0``; smaller ``lam`` inherit it by monotonicity.
        """
        if lam < 0 or lam > self.lambda0 * (1 + 1e-12):
            raise ValueError(f"lambda={lam} outside [0, lambda0={self.lambda0}]")
        return self.C_lambda

    def dobrushin_bound(self, lam: float, neighbour_sq_sum: float = 0.0) -> float:
        """``(1/lam) [Upsilon + (b + eps C_phi) sum_{j ~ k} xi(Q_j)^2]``."""
        if not 0 < lam <= self.lambda0 * (1 + 1e-12):
            raise ValueError(f"lambda={lam} outside (0, lambda0={self.lambda0}]")
        coeff = self.B_eps / self.m_phi
        return (self.Upsilon_eps + coeff * neighbour_sq_sum) / lam

    def nu_alpha(self, alpha: float, lam: Optional[float] = None) -> float:
        lam = self.lambda0 if lam is None else lam
        return lam / _lattice_exp_sum(alpha, self.dimension)

    def C_alpha(self, alpha: float) -> float:
        q = self.delta_fraction * math.exp(alpha * self.vartheta)
        if q >= 1:
            return math.inf
        log_c = self.Upsilon_eps / (1 - q)
        return math.exp(log_c) if log_c < 709.0 else math.inf

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["admissible_interval"] = list(self.admissible_interval)
        return out


def _lattice_exp_sum(alpha: float, d: int) -> float:
    """``sum_{k in Z^d} exp(-alpha |k|)`` with Euclidean ``|k|``."""
    reach = int(math.ceil(40.0 / alpha)) + 1
    one = np.arange(-reach, reach + 1, dtype=float)
    if d == 1:
        return float(np.exp(-alpha * np.abs(one)).sum())
    grids = np.meshgrid(*([one] * d), indexing="ij", sparse=True)
    r = np.sqrt(sum(g ** 2 for g in grids))
    return float(np.exp(-alpha * r).sum())


def max_admissible_eps_h(spec: PotentialSpec, grid: CubeGrid, theta: float) -> float:
    """Supremum of the Young parameters ``eps_h`` with ``B_eps < A - m b``."""
    m = interaction_parameter(grid.dimension, spec.range, spec.delta)
    C_phi = theta * grid.edge ** grid.dimension * spec.sup_norm
    room = (spec.repulsion_A - m * spec.lower_bound_b) / m - spec.lower_bound_b
    if not room > 0 or C_phi == 0:
        return 0.0 if not room > 0 else math.inf
    return room / C_phi


def bound_constants(spec: PotentialSpec, grid: CubeGrid, theta: float, eps_h: float,
                    window: Optional[Window] = None,
                    delta_fraction: Optional[float] = None) -> BoundConstants:
    """Constants ``C_Delta, C_phi, Upsilon_eps, B_eps, lambda0, C_lambda`` and friends.

    Raises:
        ValueError: if ``eps_h <= 0`` or the admissible interval
            ``(m b, A - m b]`` is empty.
    """
    if not eps_h > 0:
        raise ValueError("eps_h must be positive")
    d, g = grid.dimension, grid.edge
    m = interaction_parameter(d, spec.range, spec.delta)
    A, b = spec.repulsion_A, spec.lower_bound_b
    lo, hi = m * b, A - m * b
    if not hi > lo:
        raise ValueError(f"(RC)-margin: admissible interval ({lo}, {hi}] is empty")
    gd = g ** d
    C_phi = theta * gd * spec.sup_norm
    upsilon = C_phi * (4 * theta * gd + m / eps_h)
    B = (b + eps_h * C_phi) * m
    K = cubes_meeting(window, grid) if window is not None else frozenset()
    C_Delta = 2 * theta * len(K) * gd
    ok = B < hi
    if delta_fraction is None:
        delta_fraction = 0.5 * (B / hi + 1.0) if ok else 1.0
    if ok and not B / hi < delta_fraction < 1:
        raise ValueError(f"delta_fraction must lie in ({B / hi}, 1)")
    log_c = upsilon / (1 - delta_fraction) if ok else math.inf
    C_lam = math.exp(log_c) if log_c < 709.0 else math.inf
    out = BoundConstants(m_phi=m, edge=g, C_Delta=C_Delta, C_phi=C_phi, Upsilon_eps=upsilon,
                         B_eps=B, lambda0=hi, lambda0_zero_bc=A - 2 * m * b, eps_h=eps_h,
                         delta_fraction=delta_fraction, vartheta=spec.range / g + math.sqrt(d),
                         admissible_interval=(lo, hi), eps_admissible=ok, C_lambda=C_lam,
                         dimension=d, log_C_lambda=log_c)
    return out
