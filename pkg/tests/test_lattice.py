import math

import numpy as np
import pytest

from gammagibbs import CubeGrid, DiscreteMeasure, Window, cube_index, index_hull
from gammagibbs.lattice import (cube_masses, cubes_meeting, interaction_parameter,
                                neighbor_indices, shell_cubes, tempered_norm)


def test_cube_index_examples():
    g1 = CubeGrid(1, 1.0, 1.0)
    assert cube_index(0.3, g1) == (0,)
    assert cube_index(0.5, g1) == (1,)      # half-open: right edge belongs to the next cube
    assert cube_index(-0.5, g1) == (0,)
    g2 = CubeGrid(2, 0.5 * math.sqrt(2), 1.0)   # edge 0.5
    assert g2.edge == pytest.approx(0.5)
    assert cube_index((0.74, -0.26), g2) == (1, -1)


def test_cube_index_rejects_nan():
    with pytest.raises(ValueError):
        cube_index(float("nan"), CubeGrid(1, 1.0, 1.0))


def test_cube_diameter_is_delta():
    for d in (1, 2, 3):
        g = CubeGrid(d, 0.7, 1.0)
        assert g.edge * math.sqrt(d) == pytest.approx(0.7)


def test_interaction_parameter_examples():
    assert interaction_parameter(1, 1.0, 1.0) == pytest.approx(4.0)
    assert interaction_parameter(1, 2.0, 1.0) == pytest.approx(6.0)
    assert interaction_parameter(2, 1.0, 1.0) == pytest.approx(8 * math.pi)
    with pytest.raises(ValueError):
        interaction_parameter(0, 1.0, 1.0)


def test_neighbors_d1():
    g = CubeGrid(1, 1.0, 1.0)
    assert neighbor_indices((0,), g) == {(-2,), (-1,), (1,), (2,)}
    assert (0,) not in neighbor_indices((0,), g)


def test_neighbors_contain_touching_cubes_and_are_symmetric(rng):
    for d in (1, 2, 3):
        g = CubeGrid(d, 1.0, 0.3)
        nb = neighbor_indices((0,) * d, g)
        assert len(nb) >= 3 ** d - 1
        for _ in range(100):
            k = tuple(rng.integers(-3, 4, size=d).tolist())
            j = tuple(rng.integers(-3, 4, size=d).tolist())
            assert (j in neighbor_indices(k, g)) == (k in neighbor_indices(j, g))


def test_index_hull_examples():
    g = CubeGrid(1, 1.0, 1.0)
    K, U = index_hull(Window.from_cubes([(0,)], g), g)
    assert K == {(0,)}
    assert U.cubes == {(-2,), (-1,), (1,), (2,)}
    K, U = index_hull(Window.from_cubes([(0,), (1,)], g), g)
    assert K == {(0,), (1,)}
    assert U.cubes == {(-2,), (-1,), (2,), (3,)}
    K, U = index_hull(Window.from_cubes([], g), g)
    assert K == frozenset() and U.is_empty


def test_box_window_hull_covers_range(rng):
    g = CubeGrid(2, 1.0, 1.3)
    w = Window.box([-0.2, 0.1], [0.9, 0.6])
    K, U = index_hull(w, g)
    pts = rng.uniform(-4, 4, size=(4000, 2))
    near = (w.distance_to(pts) <= g.range) & ~w.contains(pts)
    assert np.all(U.contains(pts[near]))
    assert shell_cubes(w, g) <= U.cubes


def test_cubes_meeting_box():
    g = CubeGrid(1, 1.0, 1.0)
    assert cubes_meeting(Window.box([0.0], [1.0]), g) == {(0,), (1,)}
    assert cubes_meeting(Window.box([-0.5], [0.5]), g) == {(0,)}


def test_window_volume_and_contains():
    g = CubeGrid(1, 1.0, 1.0)
    w = Window.from_cubes([(0,), (1,), (3,)], g)
    assert w.volume == pytest.approx(3.0)
    assert list(w.contains(np.array([[0.0], [0.6], [2.0], [3.2]]))) == [True, True, False, True]
    diff = Window.box([-2.0], [2.0]).without(w)
    assert diff.volume == pytest.approx(4.0 - 2.0)


def test_tempered_norm_examples():
    g = CubeGrid(1, 1.0, 1.0)
    assert tempered_norm(DiscreteMeasure.empty(1), 1.0, g) == 0.0
    one = DiscreteMeasure([[0.1]], [2.5])
    assert tempered_norm(one, 0.3, g) == pytest.approx(2.5)
    two = DiscreteMeasure([[0.0], [1.0]], [1.0, 2.0])
    # sqrt(1 + 4/e) = 1.572106...
    assert tempered_norm(two, 1.0, g) == pytest.approx(1.5721062, abs=1e-7)
    assert tempered_norm(two, 1.0, g) == pytest.approx(math.sqrt(1 + 4 * math.exp(-1)))


def test_cube_masses():
    g = CubeGrid(1, 1.0, 1.0)
    assert cube_masses(np.array([[0.1], [0.2], [1.1]]), [1.0, 2.0, 4.0], g) == {(0,): 3.0, (1,): 4.0}
