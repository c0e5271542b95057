"""Cube partition of R^d, windows and tempered norms.

The partition is built from the repulsion radius ``delta``: cubes have edge
``g = delta / sqrt(d)`` so that every cube has diameter exactly ``delta``.
Cube ``k`` is the half-open box ``[-g/2, g/2)^d + g*k``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.special import gamma as gamma_fn

CubeIndex = tuple  # tuple[int, ...] of length d


def interaction_parameter(d: int, R: float, delta: float) -> float:
    """Rough bound on the number of neighbour cubes, ``nu_d d^{d/2} (R/delta + 1)^d``."""
    if d < 1 or R <= 0 or delta <= 0:
        raise ValueError("need d >= 1, R > 0, delta > 0")
    nu_d = math.pi ** (d / 2) / gamma_fn(d / 2 + 1)
    return float(nu_d * d ** (d / 2) * (R / delta + 1.0) ** d)


@dataclass(frozen=True)
class CubeGrid:
    dimension: int
    delta: float
    range: float

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if not (self.range > 0 and math.isfinite(self.range)):
            raise ValueError(f"range must be positive and finite, got {self.range}")

    @property
    def edge(self) -> float:
        return self.delta / math.sqrt(self.dimension)

    @property
    def cube_volume(self) -> float:
        return self.edge ** self.dimension

    @property
    def m_phi(self) -> float:
        return interaction_parameter(self.dimension, self.range, self.delta)

    def indices(self, points) -> np.ndarray:
        """Integer cube indices of an ``(n, d)`` array of points."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinate")
        g = self.edge
        return np.floor((pts + g / 2) / g).astype(np.int64)

    def cube_bounds(self, k) -> tuple[np.ndarray, np.ndarray]:
        k = np.asarray(k, dtype=float)
        g = self.edge
        return g * k - g / 2, g * k + g / 2

    def box_distance(self, j, k) -> float:
        """Minimum Euclidean distance between the closures of cubes ``j`` and ``k``."""
        gap = np.maximum(np.abs(np.asarray(j) - np.asarray(k)) - 1, 0) * self.edge
        return float(np.sqrt(np.sum(gap ** 2)))

    def neighbor_offsets(self) -> list[CubeIndex]:
        """Offsets ``j - k`` of all neighbour cubes (cube distance <= range), excluding 0."""
        return list(_neighbor_offsets(self.dimension, self.edge, self.range))


_offset_cache: dict = {}


def _neighbor_offsets(d: int, g: float, R: float) -> tuple:
    key = (d, g, R)
    if key not in _offset_cache:
        reach = int(math.floor(R / g)) + 1
        out = []
        for off in itertools.product(range(-reach, reach + 1), repeat=d):
            if not any(off):
                continue
            gap = np.maximum(np.abs(np.array(off)) - 1, 0) * g
            if math.sqrt(float(np.sum(gap ** 2))) <= R:
                out.append(tuple(int(o) for o in off))
        _offset_cache[key] = tuple(out)
    return _offset_cache[key]


def cube_index(x, grid: CubeGrid) -> CubeIndex:
    x = np.asarray(x, dtype=float).reshape(grid.dimension)
    return tuple(int(v) for v in grid.indices(x)[0])


def neighbor_indices(k, grid: CubeGrid) -> frozenset:
    """Geometric neighbour set: all ``j != k`` with box distance to ``Q_k`` at most ``R``.

    This is a superset of the potential-dependent neighbour set and is valid for
    any potential of range ``R``.
    """
    k = tuple(int(v) for v in k)
    return frozenset(tuple(a + b for a, b in zip(k, off))
                     for off in _neighbor_offsets(grid.dimension, grid.edge, grid.range))


@dataclass(frozen=True, eq=False)
class Window:
    """Bounded region of R^d: a half-open box, a union of grid cubes, or either minus another window.

    Exactly one of ``(lower, upper)`` and ``cubes`` is set.
    """

    dimension: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    cubes: Optional[frozenset] = None
    grid: Optional[CubeGrid] = None
    exclude: Optional["Window"] = None
    _cube_array: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def box(cls, lower, upper) -> "Window":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("window bounds must be finite")
        if np.any(hi < lo):
            raise ValueError("upper must be >= lower")
        lo.setflags(write=False)
        hi.setflags(write=False)
        return cls(dimension=lo.size, lower=lo, upper=hi)

    @classmethod
    def from_cubes(cls, indices: Iterable, grid: CubeGrid) -> "Window":
        cubes = frozenset(tuple(int(v) for v in np.atleast_1d(k)) for k in indices)
        for k in cubes:
            if len(k) != grid.dimension:
                raise ValueError(f"cube index {k} does not match dimension {grid.dimension}")
        arr = np.array(sorted(cubes), dtype=np.int64).reshape(-1, grid.dimension)
        arr.setflags(write=False)
        return cls(dimension=grid.dimension, cubes=cubes, grid=grid, _cube_array=arr)

    def without(self, other: "Window") -> "Window":
        if self.exclude is not None:
            raise ValueError("nested exclusions are not supported")
        return Window(self.dimension, self.lower, self.upper, self.cubes, self.grid,
                      other, self._cube_array)

    @property
    def is_cube_aligned(self) -> bool:
        return self.cubes is not None and self.exclude is None

    @property
    def is_empty(self) -> bool:
        return self.volume == 0.0

    @property
    def volume(self) -> float:
        v = self._base_volume()
        if self.exclude is not None:
            v -= _intersection_volume(self._base(), self.exclude)
        return max(v, 0.0)

    def _base(self) -> "Window":
        if self.exclude is None:
            return self
        return Window(self.dimension, self.lower, self.upper, self.cubes, self.grid,
                      None, self._cube_array)

    def _base_volume(self) -> float:
        if self.cubes is not None:
            return len(self.cubes) * self.grid.cube_volume
        return float(np.prod(self.upper - self.lower))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.cubes is None:
            return self.lower, self.upper
        if not self.cubes:
            z = np.zeros(self.dimension)
            return z, z
        g = self.grid.edge
        return (self._cube_array.min(axis=0) * g - g / 2,
                self._cube_array.max(axis=0) * g + g / 2)

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        if self.cubes is not None:
            if not self.cubes:
                inside = np.zeros(len(pts), dtype=bool)
            else:
                inside = _in_cube_set(self.grid.indices(pts), self._cube_array)
        else:
            inside = np.all((pts >= self.lower) & (pts < self.upper), axis=1)
        if self.exclude is not None:
            inside &= ~self.exclude.contains(pts)
        return inside

    def distance_to(self, points) -> np.ndarray:
        """Euclidean distance from each point to the closure of the (base) window."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        if self.cubes is not None:
            if not self.cubes:
                return np.full(len(pts), np.inf)
            g = self.grid.edge
            lo = self._cube_array * g - g / 2
            hi = lo + g
            best = np.full(len(pts), np.inf)
            for a, b in zip(lo, hi):
                gap = np.maximum(np.maximum(a - pts, pts - b), 0.0)
                best = np.minimum(best, np.sqrt(np.sum(gap ** 2, axis=1)))
            return best
        gap = np.maximum(np.maximum(self.lower - pts, pts - self.upper), 0.0)
        return np.sqrt(np.sum(gap ** 2, axis=1))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` i.i.d. uniform points; cube windows pick a cube first, then a point in it."""
        if n and self.volume == 0:
            raise ValueError("cannot sample from an empty window")
        if self.exclude is not None:
            # rejection from the base window
            out = np.empty((0, self.dimension))
            base = self._base()
            while len(out) < n:
                cand = base.sample_uniform(max(2 * (n - len(out)), 16), rng)
                out = np.vstack([out, cand[self.contains(cand)]])
            return out[:n]
        u = rng.random((n, self.dimension))
        if self.cubes is not None:
            pick = rng.integers(0, len(self._cube_array), size=n)
            g = self.grid.edge
            return (self._cube_array[pick] - 0.5 + u) * g
        return self.lower + u * (self.upper - self.lower)

    def to_dict(self) -> dict:
        if self.exclude is not None:
            raise ValueError("windows with exclusions are not serialisable")
        if self.cubes is not None:
            return {"cubes": [list(k) for k in sorted(self.cubes)]}
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __eq__(self, other):
        if not isinstance(other, Window):
            return NotImplemented
        if self.cubes is not None or other.cubes is not None:
            same = self.cubes == other.cubes and self.grid == other.grid
        else:
            same = (np.array_equal(self.lower, other.lower)
                    and np.array_equal(self.upper, other.upper))
        return same and self.exclude == other.exclude

    def __hash__(self):
        if self.cubes is not None:
            return hash((self.cubes, self.grid))
        return hash((tuple(self.lower), tuple(self.upper)))

    def __repr__(self):
        if self.cubes is not None:
            body = f"cubes={sorted(self.cubes)}"
        else:
            body = f"lower={self.lower.tolist()}, upper={self.upper.tolist()}"
        if self.exclude is not None:
            body += f", exclude={self.exclude!r}"
        return f"Window({body})"


def _in_cube_set(idx: np.ndarray, cubes: np.ndarray) -> np.ndarray:
    """Membership of integer index rows in a sorted set of cube rows."""
    lo = cubes.min(axis=0)
    shape = cubes.max(axis=0) - lo + 1
    if np.prod(shape.astype(float)) <= 1e7:
        occupied = np.zeros(tuple(shape), dtype=bool)
        occupied[tuple((cubes - lo).T)] = True
        rel = idx - lo
        ok = np.all((rel >= 0) & (rel < shape), axis=1)
        out = np.zeros(len(idx), dtype=bool)
        out[ok] = occupied[tuple(rel[ok].T)]
        return out
    keys = {tuple(r) for r in cubes.tolist()}
    return np.fromiter((tuple(r) in keys for r in idx.tolist()), dtype=bool, count=len(idx))


def _box_overlap(lo1, hi1, lo2, hi2) -> float:
    return float(np.prod(np.maximum(np.minimum(hi1, hi2) - np.maximum(lo1, lo2), 0.0)))


def _intersection_volume(a: Window, b: Window) -> float:
    if b.exclude is not None:
        raise ValueError("nested exclusions are not supported")
    if a.cubes is not None and b.cubes is not None and a.grid == b.grid:
        return len(a.cubes & b.cubes) * a.grid.cube_volume
    if a.cubes is None and b.cubes is None:
        return _box_overlap(a.lower, a.upper, b.lower, b.upper)
    cube_w, box_w = (a, b) if a.cubes is not None else (b, a)
    if box_w.cubes is not None:
        raise ValueError("intersection of cube windows on different grids is not supported")
    total = 0.0
    for k in cube_w.cubes:
        lo, hi = cube_w.grid.cube_bounds(k)
        total += _box_overlap(lo, hi, box_w.lower, box_w.upper)
    return total


def cubes_meeting(window: Window, grid: CubeGrid) -> frozenset:
    """``K_Delta``: indices of grid cubes with non-empty intersection with the window."""
    if window.exclude is not None:
        base = cubes_meeting(window._base(), grid)
        return frozenset(k for k in base if _cube_minus_nonempty(k, grid, window))
    if window.cubes is not None:
        if window.grid == grid:
            return window.cubes
        raise ValueError("cube window on a different grid")
    if window.volume == 0:
        return frozenset()
    g = grid.edge
    # Q_k meets [lo, hi) iff g*k - g/2 < hi and g*k + g/2 > lo
    kmin = np.floor(window.lower / g - 0.5).astype(np.int64) + 1
    kmax = np.ceil(window.upper / g + 0.5).astype(np.int64) - 1
    ranges = [range(a, b + 1) for a, b in zip(kmin.tolist(), kmax.tolist())]
    return frozenset(itertools.product(*ranges))


def _cube_minus_nonempty(k, grid: CubeGrid, window: Window) -> bool:
    lo, hi = grid.cube_bounds(k)
    cube = Window.box(lo, hi)
    return _intersection_volume(cube, window.exclude) < grid.cube_volume * (1 - 1e-12)


def index_hull(window: Window, grid: CubeGrid) -> tuple[frozenset, Window]:
    """``(K_Delta, U_Delta)``.

    ``U_Delta`` is the union of the cubes whose neighbour set meets ``K_Delta``,
    with the window itself removed.  Atoms outside ``Delta`` and ``U_Delta``
    cannot interact with atoms inside ``Delta`` for any range-``R`` potential.
    """
    K = cubes_meeting(window, grid)
    if not K:
        return K, Window.from_cubes([], grid)
    shell = set()
    for k in K:
        shell |= neighbor_indices(k, grid)
    if window.is_cube_aligned:
        shell -= K
        return K, Window.from_cubes(shell, grid)
    shell |= K
    U = Window.from_cubes(shell, grid).without(window)
    return K, U


def shell_cubes(window: Window, grid: CubeGrid) -> frozenset:
    """``K_{U_Delta}``: cubes that meet ``U_Delta``."""
    _, U = index_hull(window, grid)
    if U.exclude is None:
        return U.cubes
    return frozenset(k for k in U.cubes if _cube_minus_nonempty(k, grid, U))


def cube_masses(positions, marks, grid: CubeGrid) -> dict:
    """Map cube index -> total mark mass of the atoms in that cube."""
    marks = np.asarray(marks, dtype=float)
    if marks.size == 0:
        return {}
    idx = grid.indices(positions)
    uniq, inv = np.unique(idx, axis=0, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=marks, minlength=len(uniq))
    return {tuple(int(v) for v in k): float(s) for k, s in zip(uniq, sums)}


def tempered_norm(eta, alpha: float, grid: CubeGrid) -> float:
    """``M_alpha(eta) = (sum_k eta(Q_k)^2 exp(-alpha |k|))^(1/2)`` with Euclidean ``|k|``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    masses = cube_masses(eta.positions, eta.marks, grid)
    if not masses:
        return 0.0
    ks = np.array(list(masses.keys()), dtype=float)
    m = np.array(list(masses.values()))
    return float(np.sqrt(np.sum(m ** 2 * np.exp(-alpha * np.linalg.norm(ks, axis=1)))))
