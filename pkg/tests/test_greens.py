from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from vortexlab.core import FULL_PLANE, UNIT_DISK
from vortexlab.errors import DomainError, SingularityError
from vortexlab.greens import (PointVortexState, gamma_reflection, grad_gamma, grad_green,
                              grad_intrinsic_distance, grad_relative_streamfunction, green, hamiltonian,
                              intrinsic_distance, perp, pvs_self_velocities, pvs_self_velocity, pvs_velocity,
                              relative_streamfunction)

TWO_PI = 2 * math.pi
interior = st.tuples(st.floats(0, 0.95), st.floats(0, 2 * math.pi)).map(
    lambda rt: np.array([rt[0] * math.cos(rt[1]), rt[0] * math.sin(rt[1])]))
plane = st.tuples(st.floats(-3, 3), st.floats(-3, 3)).map(np.array)


def test_green_values():
    assert gamma_reflection(UNIT_DISK, [0.5, 0], [0.5, 0]) == pytest.approx(math.log(0.75) / TWO_PI, abs=1e-15)
    assert green(UNIT_DISK, [0.5, 0], [0, 0]) == pytest.approx(-math.log(0.5) / TWO_PI, abs=1e-15)
    assert green(FULL_PLANE, [1, 0], [0, 0]) == 0.0
    assert gamma_reflection(FULL_PLANE, [0.3, 0.1], [0.2, 0.4]) == 0.0


def test_green_disk_centre_source():
    # with the source at the centre the reflection term vanishes identically
    for r in (0.2, 0.5, 0.9):
        assert green(UNIT_DISK, [r, 0], [0, 0]) == pytest.approx(-math.log(r) / TWO_PI, rel=1e-14)


@given(interior, interior)
def test_green_symmetry(x, y):
    assume(np.hypot(*(x - y)) > 1e-6)
    for dom in (FULL_PLANE, UNIT_DISK):
        assert green(dom, x, y) == pytest.approx(green(dom, y, x), abs=1e-12)


@given(st.floats(0, 2 * math.pi), interior)
def test_green_vanishes_on_boundary(theta, y):
    x = (1 - 1e-12) * np.array([math.cos(theta), math.sin(theta)])
    assert abs(green(UNIT_DISK, x, y)) <= 1e-10


def test_gamma_is_harmonic_under_refinement():
    y = np.array([0.3, -0.2])
    x = np.array([-0.4, 0.1])
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        pts = [x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]]
        lap = (sum(gamma_reflection(UNIT_DISK, p, y) for p in pts) - 4 * gamma_reflection(UNIT_DISK, x, y)) / h**2
        errs.append(abs(lap))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


@given(interior, interior)
def test_gradients_match_finite_differences(x, y):
    assume(np.hypot(*(x - y)) > 0.05 and np.hypot(*x) < 0.9)
    h = 1e-6
    for dom in (FULL_PLANE, UNIT_DISK):
        fd = np.array([(green(dom, x + e, y) - green(dom, x - e, y)) / (2 * h) for e in np.eye(2) * h])
        assert np.allclose(grad_green(dom, x, y), fd, atol=1e-6 * (1 + np.abs(fd).max()))
        fg = np.array([(gamma_reflection(dom, x + e, y) - gamma_reflection(dom, x - e, y)) / (2 * h)
                       for e in np.eye(2) * h])
        assert np.allclose(grad_gamma(dom, x, y), fg, atol=1e-7)


def test_errors():
    with pytest.raises(SingularityError):
        green(FULL_PLANE, [0.1, 0.1], [0.1, 0.1])
    with pytest.raises(DomainError):
        green(UNIT_DISK, [1.5, 0], [0, 0])
    with pytest.raises(DomainError):
        PointVortexState([[1.2, 0]], [1.0], UNIT_DISK)
    with pytest.raises(ValueError):
        PointVortexState([[0, 0]], [0.0])


def test_velocity_examples():
    s = PointVortexState([[0, 0]], [TWO_PI])
    assert np.allclose(pvs_velocity(s, [[1, 0]]), [[0, 1]], atol=1e-15)
    pair = PointVortexState([[-0.5, 0], [0.5, 0]], [TWO_PI, TWO_PI])
    u = pvs_self_velocities(pair)
    assert np.allclose(u, [[0, -1], [0, 1]], atol=1e-15)
    # angular frequency (a1 + a2) / (2 pi d^2) = 2
    assert np.hypot(*u[1]) / 0.5 == pytest.approx(2.0)


def test_disk_single_vortex_speed():
    for r in (0.1, 0.5, 0.8):
        a = 1.7
        s = PointVortexState([[r, 0]], [a], UNIT_DISK)
        u = pvs_self_velocity(s, 0)
        assert u[0] == pytest.approx(0, abs=1e-15)
        assert abs(u[1]) == pytest.approx(a * r / (TWO_PI * (1 - r * r)), rel=1e-13)


def test_disk_velocity_is_curl_of_streamfunction():
    s = PointVortexState([[0, 0]], [1.0], UNIT_DISK)
    x = np.array([0.5, 0.0])
    h = 1e-6
    psi = lambda p: green(UNIT_DISK, p, [0, 0])  # noqa: E731
    grad = np.array([(psi(x + e) - psi(x - e)) / (2 * h) for e in np.eye(2) * h])
    assert np.allclose(pvs_velocity(s, x[None])[0], -perp(grad), atol=1e-8)


@given(st.integers(0, 10_000))
def test_vectorized_self_velocities_match_loop(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    X = rng.uniform(-0.6, 0.6, (n, 2))
    a = rng.uniform(0.2, 2, n) * rng.choice([-1, 1], n)
    for dom in (FULL_PLANE, UNIT_DISK):
        s = PointVortexState(X, a, dom)
        loop = np.array([pvs_self_velocity(s, i) for i in range(n)])
        assert np.allclose(pvs_self_velocities(s), loop, rtol=1e-12, atol=1e-12)


def test_hamiltonian_pair():
    s = PointVortexState([[0, 0], [1, 0]], [2.0, 3.0])
    assert hamiltonian(s) == 0.0
    s = PointVortexState([[0, 0], [2, 0]], [2.0, 3.0])
    assert hamiltonian(s) == pytest.approx(-6 * math.log(2) / TWO_PI)


def test_relative_streamfunction_examples():
    s = PointVortexState([[0.2, 0.1]], [1.0])
    x = np.array([0.5, -0.3])
    assert relative_streamfunction(s, 0, x) == pytest.approx(-math.log(0.5) / TWO_PI)
    d = PointVortexState([[0.2, 0.1]], [1.3], UNIT_DISK)
    X = d.positions[0]
    expect = 1.3 * (green(UNIT_DISK, x, X) - gamma_reflection(UNIT_DISK, X, X)
                    - grad_gamma(UNIT_DISK, X, X) @ (x - X))
    assert relative_streamfunction(d, 0, x) == pytest.approx(expect, rel=1e-13)


def test_streamfunction_regular_part_has_no_linear_term():
    s = PointVortexState([[0, 0], [1, 0.3], [-0.4, 0.9]], [1.0, -0.5, 2.0])
    X = s.positions[0]
    for h in (1e-2, 1e-3):
        for e in np.eye(2):
            x = X + h * e
            reg = relative_streamfunction(s, 0, x) + math.log(h) / TWO_PI
            assert abs(reg) <= 10 * h * h


def test_intrinsic_distance_single_vortex_is_euclidean():
    s = PointVortexState([[0.3, -0.2]], [0.7])
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, (20, 2))
    assert np.allclose(intrinsic_distance(s, 0, x), np.hypot(*(x - s.positions[0]).T), rtol=1e-14)
    assert intrinsic_distance(s, 0, s.positions[0]) == 0.0


def test_intrinsic_distance_gradient_matches_finite_difference():
    s = PointVortexState([[0, 0], [1, 0]], [1.0, 0.6])
    x = np.array([0.05, 0.03])
    h = 1e-7
    fd = np.array([(intrinsic_distance(s, 0, x + e) - intrinsic_distance(s, 0, x - e)) / (2 * h)
                   for e in np.eye(2) * h])
    assert np.allclose(grad_intrinsic_distance(s, 0, x), fd, atol=1e-7)


@given(st.integers(0, 10_000), st.floats(1e-3, 0.2), st.floats(0, 2 * math.pi))
def test_orthogonality_identity(seed, r, theta):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    dom = UNIT_DISK if seed % 2 else FULL_PLANE
    X = rng.uniform(-0.5, 0.5, (n, 2))
    assume(n == 1 or np.min([np.hypot(*(X[i] - X[j])) for i in range(n) for j in range(i)]) > 0.3)
    s = PointVortexState(X, rng.uniform(0.3, 2, n) * rng.choice([-1, 1], n), dom)
    x = X[0] + r * np.array([math.cos(theta), math.sin(theta)])
    gd = grad_intrinsic_distance(s, 0, x)
    du = pvs_velocity(s, x[None])[0] - pvs_self_velocity(s, 0)
    assert abs(gd @ du) <= 1e-6 * np.hypot(*gd) * np.hypot(*du)


def test_streamfunction_gradient_is_velocity_difference():
    s = PointVortexState([[0, 0], [0.8, 0.1]], [1.0, -0.4], UNIT_DISK)
    x = np.array([0.1, -0.05])
    du = pvs_velocity(s, x[None])[0] - pvs_self_velocity(s, 0)
    assert np.allclose(-perp(grad_relative_streamfunction(s, 0, x)), du, atol=1e-13)
