from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortexlab import corpus
from vortexlab.core import GriddedDensity
from vortexlab.errors import ConvergenceError
from vortexlab.transport import (WeightedPointCloud, quantize, wasserstein_bruteforce, wasserstein_entropic,
                                 wasserstein_exact)


def cloud(rng, n, uniform=False, total=1.0, spread=1.0):
    w = np.ones(n) if uniform else rng.uniform(0.1, 1.0, n)
    return WeightedPointCloud(spread * rng.standard_normal((n, 2)), total * w / w.sum())


def test_dirac_pair():
    mu = WeightedPointCloud([[0, 0]], [1.0])
    nu = WeightedPointCloud([[3, 4]], [1.0])
    assert wasserstein_exact(mu, nu, 1) == pytest.approx(5.0, abs=1e-12)
    assert wasserstein_exact(mu, nu, 2) == pytest.approx(5.0, abs=1e-12)
    assert wasserstein_entropic(mu, nu, 2, reg=1e-3) == pytest.approx(5.0, abs=1e-2)


def test_two_point_swap():
    mu = WeightedPointCloud([[0, 0], [1, 0]], [0.5, 0.5])
    nu = WeightedPointCloud([[0, 1], [1, 1]], [0.5, 0.5])
    assert wasserstein_exact(mu, nu) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.integers(1, 6), st.sampled_from([1, 2]))
def test_exact_matches_assignment_enumeration(seed, n, p):
    rng = np.random.default_rng(seed)
    mu, nu = cloud(rng, n, True), cloud(rng, n, True)
    assert wasserstein_exact(mu, nu, p) == pytest.approx(wasserstein_bruteforce(mu, nu, p), abs=1e-10)


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 6))
def test_exact_matches_linear_program(seed, n, m):
    rng = np.random.default_rng(seed)
    mu, nu = cloud(rng, n, total=2.5), cloud(rng, m, total=2.5)
    assert wasserstein_exact(mu, nu) == pytest.approx(wasserstein_bruteforce(mu, nu), abs=1e-8)


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (cloud(rng, int(rng.integers(1, 12))) for _ in range(3))
    for p in (1, 2):
        ab = wasserstein_exact(a, b, p)
        assert wasserstein_exact(a, a, p) <= 1e-7
        assert ab == pytest.approx(wasserstein_exact(b, a, p), abs=1e-10)
        assert ab <= wasserstein_exact(a, c, p) + wasserstein_exact(c, b, p) + 1e-10


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(0.1, 10))
def test_translation_and_dilation(x, y, c):
    rng = np.random.default_rng(0)
    mu, nu = cloud(rng, 7), cloud(rng, 5)
    w = wasserstein_exact(mu, nu)
    assert wasserstein_exact(mu.translated((x, y)), nu.translated((x, y))) == pytest.approx(w, rel=1e-6)
    assert wasserstein_exact(mu.dilated(c), nu.dilated(c)) == pytest.approx(c * w, rel=1e-8)


def test_translation_by_vector_is_its_length():
    rng = np.random.default_rng(1)
    mu = cloud(rng, 20)
    assert wasserstein_exact(mu, mu.translated((0.3, -0.4))) == pytest.approx(0.5, abs=1e-9)


def test_mass_mismatch_and_bad_p():
    mu = WeightedPointCloud([[0, 0]], [1.0])
    with pytest.raises(ValueError):
        wasserstein_exact(mu, WeightedPointCloud([[0, 0]], [2.0]))
    with pytest.raises(ValueError):
        wasserstein_exact(mu, mu, 3)
    with pytest.raises(ValueError):
        WeightedPointCloud([[0, 0]], [0.0])


def test_entropic_approaches_exact():
    rng = np.random.default_rng(5)
    mu, nu = cloud(rng, 100), cloud(rng, 100, spread=1.5)
    exact = wasserstein_exact(mu, nu) ** 2
    regs = [0.1, 0.03, 0.01, 0.003]
    plain = [wasserstein_entropic(mu, nu, reg=r, debias=False) ** 2 for r in regs]
    debiased = [abs(wasserstein_entropic(mu, nu, reg=r) ** 2 - exact) for r in regs]
    # the plain plan cost is an upper bound that decreases with reg
    assert all(v >= exact - 1e-9 for v in plain)
    assert all(x >= y for x, y in zip(plain, plain[1:]))
    assert all(x > y for x, y in zip(debiased, debiased[1:]))
    assert debiased[-1] <= 0.01 * exact


def test_entropic_iteration_limit():
    rng = np.random.default_rng(2)
    mu, nu = cloud(rng, 30), cloud(rng, 30)
    with pytest.raises(ConvergenceError):
        wasserstein_entropic(mu, nu, reg=1e-3, max_iter=5)


def test_quantize_preserves_mass_and_centroid():
    d = corpus.sample("bumps", 2, 0.02)
    full = quantize(d, 10**9)
    assert full.resolution == d.spacing
    q = quantize(d, 300)
    assert len(q) <= 300 and q.resolution > d.spacing
    assert q.total == pytest.approx(d.mass, rel=1e-12)
    assert np.allclose(q.weights @ q.points / q.total, full.weights @ full.points / full.total, atol=1e-12)
    # each merge moves mass by at most one block diagonal
    assert wasserstein_exact(quantize(d, 1500), q) <= q.resolution
    with pytest.raises(ValueError):
        quantize(GriddedDensity((0, 0), 1.0, np.zeros((2, 2))), 10)
