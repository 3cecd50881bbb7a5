"""End-to-end acceptance criteria; each test records one line in the terminal summary.

Runtimes are printed next to their budgets; the machine this was developed on
has a single core, so budgets are reported rather than asserted.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from conftest import record
from scipy import stats

from vortexlab import certificate, corpus, diagnostics, energy, euler, harness, pvs
from vortexlab.core import FULL_PLANE, UNIT_DISK, InitialDataSpec, Profile, VortexPatchSpec, discretize
from vortexlab.greens import (PointVortexState, grad_intrinsic_distance, intrinsic_distance, pvs_self_velocity,
                              pvs_velocity)
from vortexlab.transport import WeightedPointCloud, wasserstein_bruteforce, wasserstein_exact

pytestmark = pytest.mark.acceptance
TWO_PI = 2 * math.pi


def timing(t0: float, budget_s: float) -> str:
    return f"{time.perf_counter() - t0:.1f}s (budget {budget_s:g}s)"


def test_1_rearrangement_inequality():
    t0 = time.perf_counter()
    worst = math.inf
    fails = 0
    for seed in range(100):
        rep = energy.defect(corpus.sample("bumps", seed))
        margin = (rep.defect + rep.quadrature_error_bound) / rep.mass**2
        worst = min(worst, margin)
        fails += margin < 0
    ok = fails == 0
    record("1", ok, f"100 bump mixtures, {fails} below -bound, min (defect+bound)/M^2={worst:.3g}, "
           + timing(t0, 120))
    assert ok


def _angle_rate(t, X1, X2):
    d = X1 - X2
    ang = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    return stats.linregress(t, ang).slope


def test_2a_two_point_vortex_period():
    t0 = time.perf_counter()
    s = PointVortexState([[-0.5, 0.0], [0.5, 0.0]], [TWO_PI, TWO_PI])
    omega = 2 * TWO_PI / (TWO_PI * 1.0**2)
    traj = pvs.integrate(s, math.pi, 1e-3, sample_every=50)
    P = traj.positions
    rate = _angle_rate(traj.times, P[:, 0], P[:, 1])
    period = TWO_PI / rate
    rel = abs(period - TWO_PI / omega) / (TWO_PI / omega)
    ok = rel <= 1e-6
    record("2", ok, f"point vortex period rel err {rel:.2e} (tol 1e-6), " + timing(t0, 300))
    assert ok


def test_2b_two_blob_patch_rotation():
    t0 = time.perf_counter()
    d, eps, a = 0.2, 0.02, 1.0
    spec = InitialDataSpec(FULL_PLANE, (VortexPatchSpec((-d / 2, 0.0), a, eps),
                                        VortexPatchSpec((d / 2, 0.0), a, eps)), d)
    f = discretize(spec, 2048)
    k = euler.BlobKernelSpec(f.blob_radius)
    dt = euler.choose_dt(f, k)["dt"]
    omega = 2 * a / (TWO_PI * d * d)
    t_end = 1.0 / omega
    ts, X = [], []

    def sink(snap):
        ts.append(snap.t)
        X.append(snap.center_window[snap.window_index])

    euler.run(f, k, dt, t_end, max(1, int(t_end / dt) // 40), sink)
    X = np.array(X)
    rate = _angle_rate(np.array(ts), X[:, 0], X[:, 1])
    rel = abs(rate - omega) / omega
    ok = rel <= 0.02
    record("2", ok, f"blob pair eps=0.02 N={len(f)}: Omega={rate:.5g} vs {omega:.5g} rel {rel:.2e} (tol 0.02), "
           + timing(t0, 300))
    assert ok


def test_3_intrinsic_distance():
    t0 = time.perf_counter()
    s = PointVortexState([[0.0, 0.0], [1.0, 0.0]], [1.0, 0.7])
    radii = np.geomspace(1e-3, 1e-1, 15)
    slopes = []
    for theta in np.linspace(0.1, TWO_PI, 7, endpoint=False):
        e = np.array([math.cos(theta), math.sin(theta)])
        err = np.array([abs(intrinsic_distance(s, 0, r * e) - r) for r in radii])
        slopes.append(stats.linregress(np.log(radii), np.log(err)).slope)
    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(200):
        n = int(rng.integers(1, 5))
        dom = UNIT_DISK if trial % 2 else FULL_PLANE
        while True:
            Xs = rng.uniform(-0.5, 0.5, (n, 2))
            if n == 1 or min(np.hypot(*(Xs[i] - Xs[j])) for i in range(n) for j in range(i)) > 0.3:
                break
        st_ = PointVortexState(Xs, rng.uniform(0.3, 2, n) * rng.choice([-1, 1], n), dom)
        x = Xs[0] + rng.uniform(1e-3, 0.1) * np.array([math.cos(a := rng.uniform(0, TWO_PI)), math.sin(a)])
        g = grad_intrinsic_distance(st_, 0, x)
        du = pvs_velocity(st_, x[None])[0] - pvs_self_velocity(st_, 0)
        worst = max(worst, abs(g @ du) / (np.hypot(*g) * np.hypot(*du)))
    ok = min(slopes) >= 2.9 and worst <= 1e-6
    record("3", ok, f"cubic slope min {min(slopes):.3f} (>= 2.9), orthogonality max rel {worst:.1e} (<= 1e-6), "
           + timing(t0, 60))
    assert ok


def test_4a_certificate_constants_on_held_out_set():
    t0 = time.perf_counter()
    k = certificate.load_constants()
    cal = [certificate.certify(d) for _, _, d in corpus.certificate_corpus(range(0, 200))]
    val = [certificate.certify(d) for _, _, d in corpus.certificate_corpus(range(1000, 1200))]
    fit = certificate.validate_constants(k.c22, k.c24, cal, val, 0.5)
    val_in = [c for c in val if c.in_regime]
    t22 = sum(c.satisfies_t22(k.c22) for c in val_in)
    t24 = sum(c.satisfies_t24(k.c24) for c in val_in)
    t21 = sum(c.satisfies_t21() for c in cal + val)
    ok = k.c22 > 0 and k.c24 > 0 and t22 == len(val_in) == t24 and t21 == len(cal) + len(val) and val_in
    record("4", bool(ok), f"frozen c22={k.c22:.4g} c24={k.c24:.4g}: validation T22 {t22}/{len(val_in)}, "
           f"T24 {t24}/{len(val_in)} in regime, T21 {t21}/{len(cal) + len(val)} "
           f"(calibration in regime {fit.n_calibration_in_regime}/200), " + timing(t0, 900))
    assert ok


def test_4b_two_ball_defect_scale():
    t0 = time.perf_counter()
    ratios = {}
    for s in (0.05, 0.1, 0.2):
        rep = energy.defect(corpus.two_ball(s, 0.01))
        ratios[s] = rep.defect / (s * s * abs(math.log(s)))
    ok = all(1 / 3 <= r <= 3 for r in ratios.values())
    shown = ", ".join(f"s={s}: {r:.2f}" for s, r in ratios.items())
    record("4", ok, f"two-ball defect/(s^2|log s|) {shown} (factor 3 window), " + timing(t0, 900))
    assert ok


def test_5_optimal_transport_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 7))
        mu = WeightedPointCloud(rng.standard_normal((n, 2)), np.full(n, 1.0 / n))
        nu = WeightedPointCloud(rng.standard_normal((n, 2)), np.full(n, 1.0 / n))
        for p in (1, 2):
            worst = max(worst, abs(wasserstein_exact(mu, nu, p) - wasserstein_bruteforce(mu, nu, p)))
    violations = 0
    for _ in range(100):
        a, b, c = (WeightedPointCloud(rng.standard_normal((m, 2)), (w := rng.uniform(0.1, 1, m)) / w.sum())
                   for m in rng.integers(1, 10, 3))
        for p in (1, 2):
            ab, ba = wasserstein_exact(a, b, p), wasserstein_exact(b, a, p)
            violations += wasserstein_exact(a, a, p) > 1e-7
            violations += abs(ab - ba) > 1e-10
            violations += ab > wasserstein_exact(a, c, p) + wasserstein_exact(c, b, p) + 1e-10
            violations += ab < 0
    ok = worst <= 1e-10 and violations == 0
    record("5", ok, f"max |exact - brute force| {worst:.1e} over 50 instances, {violations} metric violations "
           f"over 100, " + timing(t0, 60))
    assert ok


def test_6_moment_and_spread_bookkeeping():
    t0 = time.perf_counter()
    bad = 0
    configs = [
        InitialDataSpec(FULL_PLANE, (VortexPatchSpec((-0.5, 0), 1.0, 0.05),
                                     VortexPatchSpec((0.5, 0), -0.4, 0.05, Profile("SmoothBump"))), 1.0),
        InitialDataSpec(UNIT_DISK, (VortexPatchSpec((0.1, 0), 1.0, 0.02, Profile("PerturbedDisk", 0.2, 3)),),
                        0.5, n1=1.5, n2=10.0),
    ]
    for spec in configs:
        f = discretize(spec, 256)
        st_ = diagnostics.point_vortex_state(f, spec.domain)
        eps = max(p.epsilon for p in spec.patches)
        mk = diagnostics.moments(f, st_, diagnostics.default_moment_orders(eps), eps, spec.n1)
        bad += any(v != 0.0 for v in mk.values())
        bad += diagnostics.spread(f, st_, eps, spec.n1) != 40 * spec.n1 * eps
        a, b = 40 * spec.n1 * eps, 80 * spec.n1 * eps
        bad += diagnostics.cutoff_eta(a, eps, spec.n1) != 0.0
        bad += diagnostics.cutoff_eta(b, eps, spec.n1) != 1.0
    elapsed = time.perf_counter() - t0
    ok = bad == 0
    record("6", ok, f"M_k(0)=0, S(0)=40 N1 eps, eta endpoints: {bad} mismatches, {elapsed:.2f}s (budget 1s)")
    assert ok


def test_7_defect_surrogate_equivalence():
    t0 = time.perf_counter()
    K = harness.load_equivalence_constant()
    worst, fails, n = 0.0, 0, 0
    for seed in range(100, 120):
        spec = harness.random_patch_config(seed)
        budget = harness.equivalence_budget(spec)
        for r in harness.equivalence_run(seed):
            n += 1
            allowed = K * r.scale + budget
            worst = max(worst, r.gap / allowed)
            fails += r.gap > allowed
    ok = fails == 0
    record("7", ok, f"frozen K={K:.4g}: {fails}/{n} samples over K(eps^2 sqrt(D)+M2)+budget, "
           f"max gap/allowed {worst:.3f}, " + timing(t0, 600))
    assert ok


def test_8_confinement_scaling(tmp_path):
    t0 = time.perf_counter()
    res = harness.scaling_study({"scaling": {}}, tmp_path, figures=False)
    exps = [c["fit"]["slope"] for c in res.confinement_exponent if c["fit"] is not None]
    slope = res.residual_exponent["slope"] if res.residual_exponent else math.nan
    ctrl = res.control
    flat = ctrl is not None and ctrl["max_abs_change"] <= 2 * ctrl["lattice_spacing"]
    ok = (len(exps) == 4 and max(exps) <= 0.6 and slope >= 1.5 and flat and not res.failures)
    record("8", ok, f"diam time exponents {', '.join(f'{e:.3f}' for e in exps)} (<= 0.6), residual eps-slope "
           f"{slope:.3f} (>= 1.5), control change {ctrl['max_abs_change'] if ctrl else math.nan:.2e} "
           f"(<= 2h={2 * ctrl['lattice_spacing'] if ctrl else math.nan:.2e}, trend "
           f"{ctrl['trend_slope'] if ctrl else math.nan:.1e}/unit t), horizons "
           f"{', '.join(f'{t:.3g}' for t in res.horizon_reached)}, " + timing(t0, 3600))
    assert ok


def test_9_conservation(tmp_path):
    t0 = time.perf_counter()
    cfg = {"initial_data": {"domain": "FullPlane", "separation_b": 1.0,
                            "patches": [{"center": [-0.5, 0.0], "intensity": 1.0, "epsilon": 0.1},
                                        {"center": [0.5, 0.0], "intensity": 1.0, "epsilon": 0.1}]},
           "particles_per_patch": 2048, "t_end": 10.0, "sample_every": 250,
           "diagnostics": {"defect": False}}
    s = harness.run_simulation(cfg, tmp_path, figures=False)
    table = harness.read_table(tmp_path / "timeseries.csv")
    circ_exact = bool(np.all(table["circulation"] == table["circulation"][0]))
    ok = circ_exact and s["angular_momentum_drift"] <= 1e-4 and s["energy_drift"] <= 5e-3
    record("9", ok, f"t=10 N={s['n_particles']}: circulation constant={circ_exact}, angular momentum drift "
           f"{s['angular_momentum_drift']:.1e} (<= 1e-4), energy drift {s['energy_drift']:.1e} (<= 5e-3), "
           + timing(t0, 600))
    assert ok
