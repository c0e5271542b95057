"""Discrete measures ``eta = sum_i s_i delta_{x_i}`` and marked configurations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import CubeGrid, Window, cube_masses


class PinpointingError(ValueError):
    """Two atoms share a position but carry different marks."""


def _canonical_order(positions: np.ndarray) -> np.ndarray:
    if len(positions) == 0:
        return np.arange(0)
    # lexicographic by coordinate 0, then 1, ...
    return np.lexsort(positions.T[::-1])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite atomic measure living in ``window``.

    Atoms are stored in canonical (lexicographic by position) order, so two
    measures with the same atoms compare equal bit for bit.
    """

    positions: np.ndarray
    marks: np.ndarray
    window: Optional[Window] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        marks = np.asarray(self.marks, dtype=float).reshape(-1)
        if pos.ndim == 1:
            d = self.window.dimension if self.window is not None else 1
            pos = pos.reshape(-1, d)
        if len(pos) != len(marks):
            raise ValueError("positions and marks differ in length")
        if np.any(marks <= 0) or not np.all(np.isfinite(marks)):
            raise ValueError("marks must be positive and finite")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        order = _canonical_order(pos)
        object.__setattr__(self, "positions", _frozen(pos[order]))
        object.__setattr__(self, "marks", _frozen(marks[order]))

    @classmethod
    def empty(cls, dimension: int, window: Optional[Window] = None) -> "DiscreteMeasure":
        return cls(np.zeros((0, dimension)), np.zeros(0), window)

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def __len__(self) -> int:
        return len(self.marks)

    def total_mass(self) -> float:
        return float(self.marks.sum())

    def mass_in(self, window: Window) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.marks[window.contains(self.positions)].sum())

    def restrict(self, window: Window) -> "DiscreteMeasure":
        keep = window.contains(self.positions) if len(self) else np.zeros(0, bool)
        return DiscreteMeasure(self.positions[keep], self.marks[keep], window)

    def outside(self, window: Window) -> "DiscreteMeasure":
        keep = ~window.contains(self.positions) if len(self) else np.zeros(0, bool)
        return DiscreteMeasure(self.positions[keep], self.marks[keep], None)

    def cube_masses(self, grid: CubeGrid) -> dict:
        return cube_masses(self.positions, self.marks, grid)

    def pair(self, phi) -> float:
        """``<phi, eta>`` for a vectorised function ``phi`` of positions."""
        if len(self) == 0:
            return 0.0
        return float(np.dot(np.asarray(phi(self.positions), dtype=float), self.marks))

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return DiscreteMeasure(np.vstack([self.positions, other.positions]),
                               np.concatenate([self.marks, other.marks]), None)

    def add_atom(self, x, s: float) -> "DiscreteMeasure":
        x = np.asarray(x, dtype=float).reshape(1, self.dimension)
        return DiscreteMeasure(np.vstack([self.positions, x]),
                               np.append(self.marks, s), self.window)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions, self.marks * factor, self.window)

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (self.positions.shape == other.positions.shape
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.marks, other.marks))

    __hash__ = None

    def __repr__(self):
        return f"DiscreteMeasure(n_atoms={len(self)}, mass={self.total_mass():.6g})"


@dataclass(frozen=True, eq=False)
class MarkedConfiguration:
    """Finite set of ``(mark, position)`` pairs."""

    marks: np.ndarray
    positions: np.ndarray

    def __len__(self):
        return len(self.marks)

    def __eq__(self, other):
        if not isinstance(other, MarkedConfiguration):
            return NotImplemented
        return (np.array_equal(self.marks, other.marks)
                and np.array_equal(self.positions, other.positions))

    __hash__ = None


def to_marked(eta: DiscreteMeasure) -> MarkedConfiguration:
    """Inverse of ``T``: the marked configuration ``{(s_x, x)}`` of a discrete measure."""
    return MarkedConfiguration(_frozen(eta.marks), _frozen(eta.positions))


def from_marked(gamma: MarkedConfiguration, window: Optional[Window] = None) -> DiscreteMeasure:
    """The map ``T``: ``{(s_x, x)} -> sum s_x delta_x``.

    Raises:
        PinpointingError: two points share a position with different marks.
    """
    pos = np.asarray(gamma.positions, dtype=float)
    marks = np.asarray(gamma.marks, dtype=float)
    if len(marks):
        pos = pos.reshape(len(marks), -1)
        order = _canonical_order(pos)
        pos, marks = pos[order], marks[order]
        dup = np.all(pos[1:] == pos[:-1], axis=1)
        if np.any(dup):
            bad = np.flatnonzero(dup & (marks[1:] != marks[:-1]))
            if bad.size:
                i = int(bad[0])
                raise PinpointingError(
                    f"position {pos[i].tolist()} carries marks {marks[i]} and {marks[i + 1]}")
            # identical points of a configuration are one point
            keep = np.concatenate([[True], ~dup])
            pos, marks = pos[keep], marks[keep]
    else:
        d = window.dimension if window is not None else (pos.shape[1] if pos.ndim == 2 else 1)
        pos = np.zeros((0, d))
    return DiscreteMeasure(pos, marks, window)
