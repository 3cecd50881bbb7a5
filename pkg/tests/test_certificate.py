from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortexlab import certificate, corpus
from vortexlab.core import Cells, GriddedDensity, SparseDensity, VortexPatchSpec, rasterize_auto


def disk(r=0.5, h=0.02, center=(0.0, 0.0)):
    return rasterize_auto([VortexPatchSpec(center, math.pi * r * r, r)], h)


def test_frozen_constants_are_positive():
    c = certificate.load_constants()
    assert c.c22 > 0 and c.c24 > 0 and c.source


def test_radial_density_certificate():
    c = certificate.certify(disk())
    assert np.allclose(c.x0, (0.0, 0.0), atol=0.02)
    assert np.allclose(c.y0, (0.0, 0.0), atol=1e-9)
    assert c.x0_mass_fraction == pytest.approx(1.0)
    assert c.mass_far == 0.0 and c.far_log_moment == 0.0
    assert c.supp_radius_ratio == pytest.approx(0.5, abs=0.03)
    assert abs(c.defect) <= c.quadrature_bound
    assert c.w2_sq_close <= c.w2_floor
    k = certificate.load_constants()
    assert c.in_regime and c.satisfies_t21() and c.satisfies_t22(k.c22) and c.satisfies_t24(k.c24)


def test_far_log_moment_single_cell():
    far = Cells(np.zeros(2), 0.5, np.array([[3, 0]]), np.array([2.0]))
    off = np.array([[7.0, 0.0]])
    assert certificate.far_log_moment(far, off, 2.0) == pytest.approx(0.25 * 2.0 * math.log(3.5))
    assert certificate.far_log_moment(Cells(np.zeros(2), 0.5, np.zeros((0, 2), int), np.zeros(0)), off, 2) == 0
    with pytest.raises(ValueError):
        certificate.far_log_moment(far, off, 0.0)


def test_two_ball_far_moment_matches_cell_sum():
    for s in (0.05, 0.1, 0.2):
        c = certificate.certify(corpus.two_ball(s, 0.02))
        expect = math.pi * s * s * 10 * abs(math.log(s))
        assert 0.5 <= c.far_log_moment / expect <= 2.0
        assert c.mass_far == pytest.approx(math.pi * s * s, rel=1e-6)


def test_two_ball_defect_to_far_moment_ratio_is_bounded():
    ratios = [certificate.certify(corpus.two_ball(s, 0.02)).ratio_T24 * math.pi for s in (0.05, 0.1, 0.2)]
    assert max(ratios) / min(ratios) <= 1.2


def test_split_support_radius():
    d = corpus.sample("two_component", 4, 0.035)
    sp = certificate.split(d)
    assert sp.close.mass + sp.far.mass == pytest.approx(d.mass, rel=1e-12)
    off = (sp.close.idx - sp.x0_index) * sp.close.spacing
    assert np.max(np.hypot(*off.T)) <= certificate.SPLIT_FACTOR * sp.d_star + 1e-12


@settings(max_examples=10)
@given(st.integers(-10**11, 10**11), st.integers(-10**11, 10**11))
def test_certificate_is_translation_invariant_at_large_offsets(i, j):
    d = corpus.sample("two_component", 1, 0.035)
    c0 = certificate.certify(d)
    cells = d.cells()
    shifted = SparseDensity(cells.anchor, cells.spacing, cells.idx + np.array([i, j]), cells.values)
    c1 = certificate.certify(shifted)
    for name in ("defect", "w2_sq_close", "far_log_moment", "supp_radius_ratio", "x0_mass_fraction"):
        assert getattr(c1, name) == pytest.approx(getattr(c0, name), rel=1e-9, abs=1e-12)


def test_pigeonhole_is_deterministic_for_ties():
    g = GriddedDensity((0, 0), 1.0, np.ones((4, 4)))
    x0, frac, k = certificate.pigeonhole_center(g)
    assert certificate.pigeonhole_center(g)[2] == k
    assert frac == pytest.approx(1.0)
    assert np.allclose(x0, (1.5, 1.5))


def test_to_dict_maps_nonfinite_to_none():
    c = certificate.certify(disk(h=0.05))
    d = c.to_dict()
    assert d["ratio_T24"] is None and isinstance(d["x0"], list)


def test_fit_and_validate_constants():
    cal = [certificate.certify(x[2]) for x in corpus.certificate_corpus(range(6))]
    val = [certificate.certify(x[2]) for x in corpus.certificate_corpus(range(500, 504))]
    c22, c24 = certificate.fit_constants(cal, safety=0.5)
    assert c22 > 0 and c24 > 0
    assert all(c.satisfies_t22(c22) and c.satisfies_t24(c24) for c in cal if c.in_regime)
    fit = certificate.validate_constants(c22, c24, cal, val, 0.5)
    assert fit.n_calibration == 6 and fit.n_validation == 4
