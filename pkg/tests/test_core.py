from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexlab.core import (FULL_PLANE, UNIT_DISK, GriddedDensity, InitialDataSpec, ParticleField, Profile,
                            SparseDensity, VortexPatchSpec, deposit_auto, discretize, ensure_valid,
                            initial_data_from_dict, initial_data_to_dict, load_initial_data, rasterize_auto,
                            validate)
from vortexlab.errors import GridError, ValidationError


def pair(eps=0.05, a=(1.0, 1.0), d=1.0, domain=FULL_PLANE, profile=Profile()):
    return InitialDataSpec(domain, (VortexPatchSpec((-d / 2, 0.0), a[0], eps, profile),
                                    VortexPatchSpec((d / 2, 0.0), a[1], eps, profile)), separation_b=d)


def assumptions(spec):
    return sorted({v.assumption for v in validate(spec)})


def test_compliant_data_has_no_violations():
    assert validate(pair()) == []
    ensure_valid(pair())


def test_violations_are_reported_not_raised():
    spec = pair(d=0.3)
    spec = InitialDataSpec(FULL_PLANE, spec.patches, separation_b=0.5)
    assert assumptions(spec) == ["A7"]
    with pytest.raises(ValidationError) as exc:
        ensure_valid(spec)
    assert exc.value.violations


def test_sign_mismatch_and_zero_intensity():
    bad_sign = VortexPatchSpec((0.0, 0.0), 1.0, 0.05, Profile(sign=-1))
    zero = VortexPatchSpec((2.0, 0.0), 0.0, 0.05)
    spec = InitialDataSpec(FULL_PLANE, (bad_sign, zero), 1.0)
    assert [v.assumption for v in validate(spec)] == ["A5", "A5"]


def test_support_and_peak_density_limits():
    wide = VortexPatchSpec((0.0, 0.0), 1.0, 0.05, support_radius_factor=2.0)
    assert "A2" in assumptions(InitialDataSpec(FULL_PLANE, (wide,), 1.0))
    # a uniform disk of radius eps has peak a/(pi eps^2); N2 = 0.1 is below that
    spec = InitialDataSpec(FULL_PLANE, (VortexPatchSpec((0.0, 0.0), 1.0, 0.05),), 1.0, n2=0.1)
    assert assumptions(spec) == ["A4"]


def test_beta_and_disk_boundary():
    assert "A6" in assumptions(InitialDataSpec(FULL_PLANE, pair().patches, 1.0, beta=0.5))
    near_wall = InitialDataSpec(UNIT_DISK, (VortexPatchSpec((0.8, 0.0), 1.0, 0.05),), 0.3)
    assert assumptions(near_wall) == ["A7"]


@pytest.mark.parametrize("kind", ["UniformDisk", "SmoothBump", "PerturbedDisk"])
def test_discretize_conserves_patch_circulation(kind):
    prof = Profile(kind, amplitude=0.2 if kind == "PerturbedDisk" else 0.0, mode=3)
    spec = pair(a=(1.3, -0.7), profile=prof)
    f = discretize(spec, 512)
    assert f.n_patches == 2
    assert f.patch_circulation(0) == pytest.approx(1.3, abs=1e-13)
    assert f.patch_circulation(1) == pytest.approx(-0.7, abs=1e-13)
    assert np.all(np.sign(f.circulations[f.labels == 1]) == -1)
    n0 = np.count_nonzero(f.labels == 0)
    assert 400 < n0 < 700


def test_discretize_is_centred_and_symmetric():
    f = discretize(pair(), 256)
    for k in (0, 1):
        m = f.labels == k
        c = f.circulations[m] @ f.positions[m] / f.circulations[m].sum()
        assert np.allclose(c, [(-0.5, 0.5)[k], 0.0], atol=1e-14)


def test_discretize_rejects_bad_input():
    crowded = InitialDataSpec(FULL_PLANE, pair(d=0.3).patches, separation_b=0.5)
    with pytest.raises(ValidationError):
        discretize(crowded, 256)
    with pytest.raises(ValueError):
        discretize(pair(), 4)


def test_rasterize_mass_matches_intensity():
    spec = pair(eps=0.1, a=(1.0, -2.0), profile=Profile("SmoothBump"))
    g = rasterize_auto(spec.patches, 0.01)
    assert g.mass == pytest.approx(3.0, rel=1e-7)
    assert np.all(g.values >= 0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.003, 0.05))
def test_deposit_conserves_mass(x0, y0, h):
    rng = np.random.default_rng(0)
    pos = np.array([x0, y0]) + 0.1 * rng.standard_normal((50, 2))
    f = ParticleField(pos, rng.uniform(-1, 1, 50), np.zeros(50, int), 0.01)
    g = deposit_auto(f, None, h)
    assert g.mass == pytest.approx(np.abs(f.circulations).sum(), rel=1e-12)


def test_deposit_requires_margin():
    from vortexlab.core import deposit
    f = ParticleField(np.array([[0.0, 0.0]]), np.array([1.0]), np.array([0]), 0.01)
    with pytest.raises(GridError):
        deposit(f, None, (-0.02, -0.02), 0.01, (4, 4))


def test_density_types_validate():
    with pytest.raises(ValueError):
        GriddedDensity((0, 0), 0.1, -np.ones((2, 2)))
    with pytest.raises(ValueError):
        SparseDensity((0, 0), 0.1, [[0, 0]], [1.0, 2.0])
    g = GriddedDensity((0, 0), 0.5, np.ones((2, 2)))
    assert g.mass == 1.0
    assert np.allclose(g.dilated(2.0).origin, 0) and g.dilated(2.0).mass == 4.0


def test_config_roundtrip(tmp_path):
    spec = pair(profile=Profile("PerturbedDisk", 0.1, 4))
    d = initial_data_to_dict(spec)
    assert initial_data_from_dict(json.loads(json.dumps(d))) == spec
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"initial_data": d}))
    assert load_initial_data(p) == spec


def test_malformed_config_is_a_validation_error():
    with pytest.raises(ValidationError):
        initial_data_from_dict({"patches": [{"center": [0, 0]}], "separation_b": 1})
    with pytest.raises(ValidationError):
        initial_data_from_dict({"patches": [], "separation_b": 1, "domain": "Torus"})


def test_peak_density_formulas():
    p = VortexPatchSpec((0, 0), 2.0, 0.1)
    assert p.peak_density() == pytest.approx(2.0 / (math.pi * 0.01))
    b = VortexPatchSpec((0, 0), 2.0, 0.1, Profile("SmoothBump"))
    assert b.peak_density() == pytest.approx(4 * 2.0 / (math.pi * 0.01))
