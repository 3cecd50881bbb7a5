from __future__ import annotations

import math

import numpy as np
import pytest

from vortexlab import euler
from vortexlab.core import (FULL_PLANE, UNIT_DISK, InitialDataSpec, ParticleField, VortexPatchSpec,
                            discretize)
from vortexlab.errors import DomainError
from vortexlab.treecode import treecode_far_velocity

TWO_PI = 2 * math.pi


def random_field(n, seed=0, spread=1.0):
    rng = np.random.default_rng(seed)
    return ParticleField(spread * rng.uniform(-0.5, 0.5, (n, 2)), rng.uniform(-1, 1, n) / n,
                         np.zeros(n, int), 0.02)


def test_single_blob_far_field_is_point_vortex():
    f = ParticleField(np.zeros((1, 2)), np.array([TWO_PI]), np.zeros(1, int), 0.01)
    u = euler.blob_velocity(f, euler.BlobKernelSpec(0.01), [[1.0, 0.0], [0.0, 2.0]])
    assert np.allclose(u, [[0, 1], [-0.5, 0]], atol=1e-14)


@pytest.mark.parametrize("method", ["fast", "treecode"])
def test_fast_paths_match_direct_sum(method):
    f = random_field(3000)
    k = euler.BlobKernelSpec(0.02)
    x = np.random.default_rng(1).uniform(-0.6, 0.6, (200, 2))
    ref = euler.blob_velocity(f, k, x, method="direct")
    got = euler.blob_velocity(f, k, x, method=method)
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(got - ref)) <= (1e-12 if method == "fast" else 1e-5) * scale


def test_particle_velocities_match_direct_including_disk():
    f = random_field(500, spread=0.8)
    k = euler.BlobKernelSpec(0.03)
    for dom in (FULL_PLANE, UNIT_DISK):
        ref = euler.blob_velocity(f, k, f.positions, dom, method="direct")
        assert np.allclose(euler.particle_velocities(f, k, dom), ref, rtol=1e-10, atol=1e-12)


def test_treecode_accuracy_on_ten_thousand_blobs():
    rng = np.random.default_rng(3)
    n = 10_000
    x, y = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    g = rng.uniform(0.5, 1.5, n)
    ux, uy = np.zeros(n), np.zeros(n)
    treecode_far_velocity(x[:500], y[:500], x, y, g, 0.5, ux[:500], uy[:500], order=0)
    f = ParticleField(np.column_stack([x, y]), g, np.zeros(n, int), 1e-9)
    ref = euler.blob_velocity(f, euler.BlobKernelSpec(1e-9), np.column_stack([x, y])[:500], method="direct")
    err = np.hypot(ux[:500] - ref[:, 0], uy[:500] - ref[:, 1]) / np.hypot(*ref.T)
    assert np.max(err) <= 1e-2
    ux8, uy8 = np.zeros(500), np.zeros(500)
    treecode_far_velocity(x[:500], y[:500], x, y, g, 0.5, ux8, uy8)
    assert np.max(np.hypot(ux8 - ref[:, 0], uy8 - ref[:, 1]) / np.hypot(*ref.T)) <= 1e-3


def test_disk_wall_is_impermeable():
    f = random_field(300, spread=0.6)
    k = euler.BlobKernelSpec(0.02)
    th = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    wall = 0.999999 * np.column_stack([np.cos(th), np.sin(th)])
    u = euler.blob_velocity(f, k, wall, UNIT_DISK, method="direct")
    normal = np.einsum("ij,ij->i", u, wall)
    assert np.max(np.abs(normal)) <= 1e-4 * np.max(np.abs(u))
    with pytest.raises(DomainError):
        euler.blob_velocity(f, k, [[1.0, 0.0]], UNIT_DISK)


def test_choose_dt_reports_both_limits():
    f = discretize(InitialDataSpec(FULL_PLANE, (VortexPatchSpec((0, 0), 1.0, 0.1),), 1.0), 256)
    meta = euler.choose_dt(f, euler.BlobKernelSpec(f.blob_radius))
    assert meta["dt"] == pytest.approx(euler.DT_SAFETY * min(meta["dt_cfl"], meta["dt_strain"]))
    assert meta["max_speed"] > 0 and meta["max_vorticity"] > 0


def test_run_is_deterministic_and_conservative():
    spec = InitialDataSpec(FULL_PLANE, (VortexPatchSpec((-0.5, 0), 1.0, 0.05),
                                        VortexPatchSpec((0.5, 0), 0.6, 0.05)), 1.0)
    f = discretize(spec, 128)
    k = euler.BlobKernelSpec(f.blob_radius)
    dt = euler.choose_dt(f, k)["dt"]
    t_end = 9.5 * dt
    snaps = []
    r1 = euler.run(f, k, dt, t_end, 3, snaps.append)
    r2 = euler.run(f, k, dt, t_end, 3)
    assert np.array_equal(r1.field.positions, r2.field.positions)
    assert [s.step for s in snaps] == [0, 3, 6, 9, 10]
    assert [s.window_index for s in snaps] == [0, 1, 1, 1, 2]
    g = f.circulations
    assert np.allclose(g @ r1.field.positions, g @ f.positions, atol=1e-13)
    I0 = g @ np.einsum("ij,ij->i", f.positions, f.positions)
    I1 = g @ np.einsum("ij,ij->i", r1.field.positions, r1.field.positions)
    assert abs(I1 - I0) <= 1e-10 * abs(I0)


def test_run_stop_callback():
    spec = InitialDataSpec(FULL_PLANE, (VortexPatchSpec((0, 0), 1.0, 0.05),), 1.0)
    f = discretize(spec, 64)
    k = euler.BlobKernelSpec(f.blob_radius)
    dt = euler.choose_dt(f, k)["dt"]
    r = euler.run(f, k, dt, 100 * dt, 5, stop=lambda s: s.step >= 10)
    assert r.steps == 10 and r.metadata["stopped_early"]


def test_snapshot_roundtrip(tmp_path):
    f = random_field(40)
    euler.write_snapshot(tmp_path / "s.bin", f, 7, 0.25)
    g, step, t = euler.read_snapshot(tmp_path / "s.bin", f.blob_radius)
    assert (step, t) == (7, 0.25)
    assert np.array_equal(g.positions, f.positions) and np.array_equal(g.labels, f.labels)
    (tmp_path / "bad.bin").write_bytes(b"x" * 64)
    with pytest.raises(ValueError):
        euler.read_snapshot(tmp_path / "bad.bin")


def test_step_size_guard():
    from vortexlab.errors import StepSizeError
    f = discretize(InitialDataSpec(FULL_PLANE, (VortexPatchSpec((0, 0), 1.0, 0.05),), 1.0), 64)
    k = euler.BlobKernelSpec(f.blob_radius)
    with pytest.raises(StepSizeError):
        euler.run(f, k, 100 * euler.choose_dt(f, k)["dt_cfl"], 1.0, 1)


def test_invalid_kernel():
    with pytest.raises(ValueError):
        euler.BlobKernelSpec(0.0)
    with pytest.raises(ValueError):
        euler.BlobKernelSpec(0.1, "Algebraic")
