import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammagibbs import (CertificationError, CubeGrid, DiscreteMeasure, PotentialSpec, Window,
                        bound_constants, certify, energy_increment, gnz_weight, hamiltonian,
                        stability_lower_bound)
from gammagibbs.interaction import Birth, Death, Resize, max_admissible_eps_h

G1 = CubeGrid(1, 1.0, 1.0)
STEP1 = PotentialSpec.step(1.0, 1.0)
CS = certify(PotentialSpec.core_shell(10.0, 1.0, 1.0, 1.0), G1)
CS_WIDE = certify(PotentialSpec.core_shell(30.0, 1.0, 1.0, 2.0), CubeGrid(1, 1.0, 2.0))
BIG = Window.box([-50.0], [50.0])


def brute_energy(eta, xi, window, spec):
    """Double loop over atoms (independent of the vectorised code)."""
    inside = [(x, s) for x, s in zip(eta.positions, eta.marks) if window.contains(x[None])[0]]
    out = [] if xi is None else [(y, t) for y, t in zip(xi.positions, xi.marks)
                                 if not window.contains(y[None])[0]]
    edges, values = spec.radial

    def phi(a, b):
        r = float(np.linalg.norm(a - b))
        for e, v in zip(edges, values):
            if r <= e:
                return float(v)
        return 0.0

    H = 0.0
    for i, (x, s) in enumerate(inside):
        for j, (y, t) in enumerate(inside):
            if i != j or spec.self_interaction:
                H += phi(x, y) * s * t
        for y, t in out:
            H += 2 * phi(x, y) * s * t
    return H


def test_certify_examples():
    st_ = certify(PotentialSpec.step(3.0, 1.0), G1)
    assert st_.repulsion_A == 3.0 and st_.lower_bound_b == 0.0
    assert CS.certified and CS.repulsion_A == 10.0 and CS.lower_bound_b == 1.0
    with pytest.raises(CertificationError) as err:
        certify(PotentialSpec.zero(1.0), G1)
    assert err.value.clause == "repulsion_condition"
    with pytest.raises(CertificationError) as err:
        certify(PotentialSpec.core_shell(8.0, 1.0, 1.0, 1.0), G1)   # 8 > 2*4*1 fails
    assert err.value.clause == "repulsion_condition"


def test_certify_callable():
    phi = lambda x, y: np.where(np.linalg.norm(x - y, axis=-1) <= 1.0, 5.0, 0.0)
    spec = certify(phi, G1)
    assert spec.repulsion_A == pytest.approx(5.0)
    assert spec.lower_bound_b == 0.0
    with pytest.raises(CertificationError):
        certify(lambda x, y: -np.ones(x.shape[:-1]), G1)


def test_hamiltonian_examples():
    w = Window.box([-1.0], [1.0])
    assert hamiltonian(DiscreteMeasure.empty(1), None, w, STEP1) == 0.0
    assert hamiltonian(DiscreteMeasure([[0.0]], [2.0]), None, w, STEP1) == pytest.approx(4.0)
    two = DiscreteMeasure([[0.0], [0.5]], [1.0, 1.0])
    assert hamiltonian(two, None, w, STEP1) == pytest.approx(4.0)


def test_self_interaction_flag():
    w = Window.box([-1.0], [1.0])
    two = DiscreteMeasure([[0.0], [0.5]], [1.0, 1.0])
    off = PotentialSpec.step(1.0, 1.0, self_interaction=False)
    assert hamiltonian(two, None, w, off) == pytest.approx(2.0)


def test_boundary_outside_range_is_ignored():
    w = Window.box([0.0], [1.0])
    eta = DiscreteMeasure([[0.5]], [1.0])
    far = DiscreteMeasure([[5.0]], [3.0])
    near = DiscreteMeasure([[1.5]], [3.0])
    assert hamiltonian(eta, far, w, STEP1) == hamiltonian(eta, None, w, STEP1)
    assert hamiltonian(eta, near, w, STEP1) == pytest.approx(1.0 + 2 * 3.0)


def test_gnz_weight_examples():
    eta = DiscreteMeasure([[0.0]], [1.0])
    assert gnz_weight(2.0, [0.5], DiscreteMeasure.empty(1), STEP1) == 0.0
    assert gnz_weight(2.0, [0.5], eta, STEP1) == pytest.approx(4.0)
    assert gnz_weight(2.0, [0.5], eta, STEP1, literal=True) == pytest.approx(8.0)


def test_birth_into_empty():
    inc = energy_increment(DiscreteMeasure.empty(1), None, BIG, CS, Birth((0.3,), 1.5))
    assert inc == pytest.approx(10.0 * 1.5 ** 2)


def test_bound_constant_examples():
    c = bound_constants(CS, G1, 1.0, 1.0)
    assert c.m_phi == pytest.approx(4.0)
    assert c.lambda0 == pytest.approx(6.0)
    assert c.lambda0_zero_bc == pytest.approx(2.0)
    assert c.C_phi == pytest.approx(10.0)
    assert c.Upsilon_eps == pytest.approx(10.0 * (4.0 + 4.0))
    assert c.B_eps == pytest.approx(44.0)
    assert not c.eps_admissible
    eps = max_admissible_eps_h(CS, G1, 1.0)
    assert eps == pytest.approx(0.05)
    ok = bound_constants(CS, G1, 1.0, eps / 2)
    assert ok.eps_admissible and ok.B_eps < ok.lambda0
    assert ok.log_C_lambda == pytest.approx(ok.Upsilon_eps / (1 - ok.delta_fraction))


def test_bound_constants_b_zero():
    step = certify(PotentialSpec.step(5.0, 1.0), G1)
    c = bound_constants(step, G1, 1.0, 0.01)
    assert c.admissible_interval == (0.0, 5.0)
    assert c.B_eps == pytest.approx(0.01 * c.C_phi * c.m_phi)


def test_stability_single_cube_zero_bc():
    cube = Window.from_cubes([(0,)], G1)
    eta = DiscreteMeasure([[0.1], [-0.2]], [0.7, 0.4])
    bound = stability_lower_bound(eta, None, cube, CS, G1, variant="single_cube")
    assert bound == pytest.approx((10 - 4) * 1.1 ** 2)
    assert stability_lower_bound(DiscreteMeasure.empty(1), None, cube, CS, G1) == 0.0


# property tests -------------------------------------------------------------

coords = st.floats(-3.0, 3.0, allow_nan=False)
marks = st.floats(0.01, 3.0, allow_nan=False)


@st.composite
def measures(draw, max_atoms=12):
    n = draw(st.integers(0, max_atoms))
    xs = draw(st.lists(coords, min_size=n, max_size=n, unique=True))
    ss = draw(st.lists(marks, min_size=n, max_size=n))
    return DiscreteMeasure(np.array(xs).reshape(-1, 1), np.array(ss))


WIN = Window.box([-1.5], [1.5])


@settings(max_examples=60, deadline=None)
@given(measures(), measures(), st.sampled_from([CS, CS_WIDE, STEP1]))
def test_hamiltonian_matches_brute_force(eta, xi, spec):
    H = hamiltonian(eta, xi, WIN, spec)
    assert H == pytest.approx(brute_energy(eta, xi, WIN, spec), rel=1e-10, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(measures(), measures(), st.data())
def test_increment_equals_recomputation(eta, xi, data):
    spec = data.draw(st.sampled_from([CS, CS_WIDE]))
    inside = eta.restrict(WIN)
    H0 = hamiltonian(inside, xi, WIN, spec)
    kind = data.draw(st.sampled_from(["birth", "death", "resize"] if len(inside) else ["birth"]))
    if kind == "birth":
        x = data.draw(st.floats(-1.4, 1.4))
        s = data.draw(marks)
        after = inside.add_atom([x], s)
        move = Birth((x,), s)
    else:
        i = data.draw(st.integers(0, len(inside) - 1))
        keep = np.arange(len(inside)) != i
        if kind == "death":
            after = DiscreteMeasure(inside.positions[keep], inside.marks[keep])
            move = Death(i)
        else:
            s_new = data.draw(marks)
            m = inside.marks.copy()
            m[i] = s_new
            after = DiscreteMeasure(inside.positions, m)
            move = Resize(i, s_new)
    inc = energy_increment(inside, xi, WIN, spec, move)
    H1 = hamiltonian(after, xi, WIN, spec)
    assert inc == pytest.approx(H1 - H0, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(measures(), st.floats(-1.4, 1.4), marks)
def test_death_then_birth_cancels(eta, x, s):
    inside = eta.restrict(WIN)
    born = inside.add_atom([x], s)
    i = int(np.flatnonzero((born.positions[:, 0] == x) & (born.marks == s))[0])
    a = energy_increment(inside, None, WIN, CS, Birth((x,), s))
    b = energy_increment(born, None, WIN, CS, Death(i))
    assert a + b == pytest.approx(0.0, abs=1e-9 * max(1.0, abs(a)))


@settings(max_examples=40, deadline=None)
@given(measures(), measures())
def test_doubling_marks_quadruples_energy(eta, xi):
    H = hamiltonian(eta, xi, WIN, CS_WIDE)
    assert hamiltonian(eta.scaled(2.0), xi.scaled(2.0), WIN, CS_WIDE) == pytest.approx(
        4 * H, rel=1e-10, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(measures(), measures())
def test_locality(eta, xi):
    # moving boundary atoms beyond range R of the window does not change H
    far = DiscreteMeasure(xi.positions + 100.0, xi.marks) if len(xi) else xi
    assert hamiltonian(eta, far, WIN, CS_WIDE) == hamiltonian(eta, None, WIN, CS_WIDE)


@settings(max_examples=40, deadline=None)
@given(st.lists(coords, min_size=2, max_size=2), st.lists(coords, min_size=2, max_size=2))
def test_potential_symmetric(a, b):
    X, Y = np.array([a]).T, np.array([b]).T
    for spec in (CS, CS_WIDE, STEP1):
        assert np.array_equal(spec.matrix(X, Y), spec.matrix(Y, X).T)


@settings(max_examples=40, deadline=None)
@given(measures(), st.floats(-2.0, 2.0), marks)
def test_gnz_weight_linear_in_mark(eta, x, s):
    assert gnz_weight(2 * s, [x], eta, CS) == pytest.approx(2 * gnz_weight(s, [x], eta, CS),
                                                            rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(measures(), measures())
def test_stability_bound_holds(eta, xi):
    w = Window.from_cubes([(-1,), (0,), (1,)], G1)
    H = hamiltonian(eta, xi, w, CS)
    assert H >= stability_lower_bound(eta, xi, w, CS, G1) - 1e-9 * max(1.0, abs(H))
    cube = Window.from_cubes([(0,)], G1)
    Hc = hamiltonian(eta, xi, cube, CS)
    assert Hc >= stability_lower_bound(eta, xi, cube, CS, G1, "single_cube") - 1e-9 * max(1, abs(Hc))
