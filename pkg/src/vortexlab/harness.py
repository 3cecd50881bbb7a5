"""Experiment orchestration: config ingestion, runs, sweeps and persisted outputs.

Every entry point takes a parsed JSON config (a dict) and an output directory
and writes plain files there: ``config.json`` (normalized echo),
``metadata.json``, CSV tables with a fixed column order, a JSON summary and
PNG figures. Nothing in the CSV or summary depends on wall-clock time, so a
rerun of the same config reproduces them byte for byte.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy.stats
from numpy.typing import NDArray

from . import __version__, certificate, corpus, diagnostics, energy, euler, plotting
from .core import (
    FULL_PLANE,
    DomainSpec,
    GriddedDensity,
    InitialDataSpec,
    Profile,
    VortexPatchSpec,
    discretize,
    ensure_valid,
    initial_data_from_dict,
    initial_data_to_dict,
    rasterize_auto,
)
from .errors import ValidationError, VortexLabError
from .greens import PointVortexState
from .pvs import integrate as pvs_integrate

FloatArray = NDArray[np.float64]


# ---------------------------------------------------------------------------
# config handling


class ConfigError(ValidationError):
    """The configuration file is malformed or has invalid fields."""


def load_config(path: str | Path) -> dict:
    """Parse a JSON config; syntax errors report line and column."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return d


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def _get(d: dict, key: str, default, kind: Callable, where: str):
    if key not in d or d[key] is None:
        return default
    try:
        return kind(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from exc


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def _metadata(extra: dict) -> dict:
    import numba
    import scipy

    return {
        "vortexlab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        **extra,
    }


def _clean(v):
    """JSON-friendly copy: numpy scalars and arrays to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# simulations


SIMULATION_KEYS = {"initial_data", "particles_per_patch", "t_end", "dt", "sample_every", "delta",
                   "diagnostics", "snapshot_every", "stop_spread_fraction", "seed", "command"}
DIAGNOSTIC_KEYS = {"moment_orders", "epsilon", "grid_spacing", "defect"}


@dataclass(frozen=True)
class SimulationConfig:
    initial_data: InitialDataSpec
    t_end: float
    particles_per_patch: int = 2048
    dt: float | None = None
    sample_every: int = 10
    delta: float | None = None
    moment_orders: tuple[float, ...] | None = None
    epsilon: float | None = None
    grid_spacing: float | None = None
    defect: bool = True
    snapshot_every: int = 0
    stop_spread_fraction: float | None = None

    @property
    def diag_epsilon(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return max(p.epsilon for p in self.initial_data.patches)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial_data"] = initial_data_to_dict(self.initial_data)
        return d


def parse_simulation_config(d: dict) -> SimulationConfig:
    _check_keys(d, SIMULATION_KEYS, "config")
    if "initial_data" not in d:
        raise ConfigError("config: missing field initial_data")
    if "t_end" not in d:
        raise ConfigError("config: missing field t_end")
    spec = initial_data_from_dict(d["initial_data"])
    diag = d.get("diagnostics") or {}
    _check_keys(diag, DIAGNOSTIC_KEYS, "config.diagnostics")
    ks = diag.get("moment_orders")
    cfg = SimulationConfig(
        initial_data=spec,
        t_end=_get(d, "t_end", 0.0, float, "config"),
        particles_per_patch=_get(d, "particles_per_patch", 2048, int, "config"),
        dt=_get(d, "dt", None, float, "config"),
        sample_every=_get(d, "sample_every", 10, int, "config"),
        delta=_get(d, "delta", None, float, "config"),
        moment_orders=None if ks is None else tuple(float(k) for k in ks),
        epsilon=_get(diag, "epsilon", None, float, "config.diagnostics"),
        grid_spacing=_get(diag, "grid_spacing", None, float, "config.diagnostics"),
        defect=_get(diag, "defect", True, bool, "config.diagnostics"),
        snapshot_every=_get(d, "snapshot_every", 0, int, "config"),
        stop_spread_fraction=_get(d, "stop_spread_fraction", None, float, "config"),
    )
    if cfg.t_end < 0:
        raise ConfigError("config.t_end: must be nonnegative")
    if cfg.particles_per_patch < 1:
        raise ConfigError("config.particles_per_patch: must be positive")
    if cfg.sample_every < 1:
        raise ConfigError("config.sample_every: must be >= 1")
    return cfg


class DiagnosticsCollector:
    """Simulation sink computing a :class:`DiagnosticsSample` per snapshot."""

    def __init__(self, domain: DomainSpec, epsilon: float, n1: float, ks, *, defect: bool = True,
                 grid_spacing: float | None = None, csv_sink: diagnostics.CsvSink | None = None,
                 snapshot_dir: Path | None = None, snapshot_every: int = 0):
        self.domain = domain
        self.epsilon = epsilon
        self.n1 = n1
        self.ks = [float(k) for k in ks]
        self.defect = defect
        self.grid_spacing = grid_spacing
        self.csv_sink = csv_sink
        self.snapshot_dir = snapshot_dir
        self.snapshot_every = snapshot_every
        self.samples: list[diagnostics.DiagnosticsSample] = []

    def __call__(self, snap: euler.Snapshot) -> None:
        f = snap.field
        n = f.n_patches
        a = diagnostics.intensities(f, n)
        X = snap.center_window[snap.window_index]
        state = PointVortexState(X, a, self.domain)
        dist = diagnostics.particle_distances(f, state)
        mk = diagnostics.moments(f, state, self.ks, self.epsilon, self.n1, distances=dist)
        S = diagnostics.spread(f, state, self.epsilon, self.n1, distances=dist)
        if snap.center_window.shape[0] >= 3:
            r = diagnostics.velocity_residual(snap.center_window, snap.window_index, snap.dt, state, f,
                                              snap.velocities)
            res, err, avg = r.finite_difference, r.error_estimate, r.averaged
        else:
            nan = np.full(n, np.nan)
            r = diagnostics.velocity_residual(np.stack([X, X, X]), 1, 1.0, state, f, snap.velocities)
            res, err, avg = nan, nan, r.averaged
        if self.defect:
            dm = diagnostics.measure_defect(f, self.domain, self.grid_spacing, X)
            dval, dbound, sur = dm.defect, dm.quadrature_bound, dm.surrogate
        else:
            dval = dbound = sur = math.nan
        cons = diagnostics.conservation(f, self.domain)
        sample = diagnostics.DiagnosticsSample(
            t=snap.t, step=snap.step, centers=X.copy(), diam=diagnostics.support_diameters(f, n), m_k=mk,
            spread=S, defect=dval, defect_bound=dbound, surrogate=sur, velocity_residual=res,
            residual_error=err, residual_averaged=avg, circulation=cons.circulation,
            angular_momentum=cons.angular_momentum, impulse=cons.linear_impulse, pv_energy=cons.pv_energy,
            total_energy=cons.total_energy)
        self.samples.append(sample)
        if self.csv_sink is not None:
            self.csv_sink.write(sample)
        if self.snapshot_dir is not None and self.snapshot_every > 0 \
                and (len(self.samples) - 1) % self.snapshot_every == 0:
            euler.write_snapshot(self.snapshot_dir / f"snap_{snap.step:09d}.bin", f, snap.step, snap.t)


def spread_exceeded(spread: float, threshold: float, floor: float) -> bool:
    """Horizon rule: the spread has left its floor 40 N1 eps and reached the threshold.

    At desk-scale epsilon the floor can exceed b/4, in which case only growth
    beyond the floor can trigger the stop.
    """
    return spread > floor and spread >= threshold


def read_table(path: str | Path) -> dict[str, FloatArray]:
    """Read a CSV written by the harness into float columns (empty cells become NaN)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[k]) if r[k] != "" else math.nan for r in body]) for k, h in enumerate(header)}
    return cols


def _relative_drift(values: list[float]) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0 or not np.isfinite(v[0]):
        return math.nan
    scale = abs(v[0]) if v[0] != 0 else 1.0
    return float(np.max(np.abs(v - v[0])) / scale)


def run_simulation(config: dict | SimulationConfig, out_dir: str | Path, figures: bool = True,
                   progress: Callable[[str], None] | None = None) -> dict:
    """Run one blob simulation with diagnostics; returns the summary dict."""
    cfg = config if isinstance(config, SimulationConfig) else parse_simulation_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.initial_data
    ensure_valid(spec)
    field_ = discretize(spec, cfg.particles_per_patch)
    kernel = euler.BlobKernelSpec(cfg.delta if cfg.delta is not None else field_.blob_radius)
    policy = euler.choose_dt(field_, kernel, spec.domain)
    dt = cfg.dt if cfg.dt is not None else policy["dt"]
    ks = list(cfg.moment_orders) if cfg.moment_orders is not None else \
        diagnostics.default_moment_orders(cfg.diag_epsilon)
    _write_json(out / "config.json", _clean(cfg.to_dict()))
    snap_dir = None
    if cfg.snapshot_every > 0:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
    n = len(spec.patches)
    t0 = time.perf_counter()
    with open(out / "timeseries.csv", "w", newline="", encoding="utf-8") as fh:
        sink = diagnostics.CsvSink(fh, n, ks)
        collector = DiagnosticsCollector(spec.domain, cfg.diag_epsilon, spec.n1, ks, defect=cfg.defect,
                                         grid_spacing=cfg.grid_spacing, csv_sink=sink, snapshot_dir=snap_dir,
                                         snapshot_every=cfg.snapshot_every)
        stop = None
        if cfg.stop_spread_fraction is not None:
            threshold = cfg.stop_spread_fraction * spec.separation_b

            floor = diagnostics.CUTOFF_INNER * spec.n1 * cfg.diag_epsilon

            def stop(_snap, threshold=threshold, floor=floor):
                return spread_exceeded(collector.samples[-1].spread, threshold, floor)

        def tracked(snap):
            collector(snap)
            if progress is not None:
                progress(f"t={snap.t:.6g} step={snap.step}")

        result = euler.run(field_, kernel, dt, cfg.t_end, cfg.sample_every, tracked, spec.domain, stop)
    elapsed = time.perf_counter() - t0
    s = collector.samples
    summary = {
        "t_final": result.t_end,
        "steps": result.steps,
        "dt": result.dt,
        "n_particles": len(field_),
        "delta": kernel.delta,
        "stopped_early": result.metadata.get("stopped_early", False),
        "n_samples": len(s),
        "circulation_drift": _relative_drift([x.circulation for x in s]),
        "angular_momentum_drift": _relative_drift([x.angular_momentum for x in s]),
        "energy_drift": _relative_drift([x.total_energy for x in s]),
        "max_spread": max(x.spread for x in s),
        "max_diam": float(max(np.max(x.diam) for x in s)),
        "final_defect": s[-1].defect,
        "final_surrogate": s[-1].surrogate,
        "max_velocity_residual": float(np.nanmax([np.nanmax(x.residual_averaged) for x in s])),
        "tolerances": {"defect_quadrature_bound": s[-1].defect_bound,
                       "cfl_number": euler.CFL_NUMBER, "strain_number": euler.STRAIN_NUMBER},
    }
    _write_json(out / "summary.json", _clean(summary))
    _write_json(out / "metadata.json", _clean(_metadata({
        "dt": result.dt, "dt_policy": policy, "delta": kernel.delta, "n_particles": len(field_),
        "particles_per_patch": cfg.particles_per_patch, "moment_orders": ks,
        "cutoff": {"inner": diagnostics.CUTOFF_INNER, "outer": diagnostics.CUTOFF_OUTER, "shape": "quintic"},
        "elapsed_seconds": elapsed})))
    if figures:
        plotting.simulation_figures(read_table(out / "timeseries.csv"), n, out)
    return _clean(summary)


# ---------------------------------------------------------------------------
# point vortex runs


PVS_KEYS = {"positions", "intensities", "domain", "t_end", "dt", "sample_every", "initial_data", "command",
            "seed"}


def run_pvs(config: dict, out_dir: str | Path, figures: bool = True) -> dict:
    """Integrate the point vortex system; writes trajectory.csv and summary.json."""
    _check_keys(config, PVS_KEYS, "config")
    if "initial_data" in config:
        spec = initial_data_from_dict(config["initial_data"])
        ensure_valid(spec)
        X = np.array([p.center for p in spec.patches], dtype=float)
        a = np.array([p.intensity for p in spec.patches], dtype=float)
        domain = spec.domain
    else:
        try:
            X = np.asarray(config["positions"], dtype=float).reshape(-1, 2)
            a = np.asarray(config["intensities"], dtype=float).reshape(-1)
        except KeyError as exc:
            raise ConfigError(f"config: missing field {exc}") from exc
        domain = DomainSpec.parse(config.get("domain", "FullPlane"))
    if "t_end" not in config or "dt" not in config:
        raise ConfigError("config: pvs runs need t_end and dt")
    t_end = _get(config, "t_end", 0.0, float, "config")
    dt = _get(config, "dt", 0.0, float, "config")
    every = _get(config, "sample_every", 1, int, "config")
    state = PointVortexState(X, a, domain)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", _clean(config))
    traj = pvs_integrate(state, t_end, dt, every)
    n = state.n
    cols = ["t"] + [c for i in range(n) for c in (f"x_{i}", f"y_{i}")] + \
        ["hamiltonian", "impulse_x", "impulse_y", "angular_impulse"]
    with open(out / "trajectory.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in traj.samples:
            inv = s.invariants
            lin = inv.linear_impulse if inv.linear_impulse is not None else (math.nan, math.nan)
            row = [s.t, *s.state.positions.ravel(), inv.hamiltonian, lin[0], lin[1], inv.angular_impulse]
            w.writerow(["" if not math.isfinite(v) else repr(float(v)) for v in row])
    H = np.array([s.invariants.hamiltonian for s in traj.samples])
    A = np.array([s.invariants.angular_impulse for s in traj.samples])
    summary = {
        "t_final": traj.samples[-1].t, "dt": traj.dt, "n_samples": len(traj.samples),
        "stopped_at": traj.stopped_at, "stop_reason": traj.stop_reason,
        "hamiltonian_drift": float(np.max(np.abs(H - H[0]))),
        "angular_impulse_drift": float(np.max(np.abs(A - A[0]))),
    }
    _write_json(out / "summary.json", _clean(summary))
    _write_json(out / "metadata.json", _clean(_metadata({"integrator": "RK4", "dt": traj.dt})))
    if figures:
        plotting.pvs_figure(traj.times, traj.positions, H, out)
    return _clean(summary)


# ---------------------------------------------------------------------------
# densities


def density_from_config(d: dict):
    """Build a density from one of the supported descriptions.

    ``{"patches": [...], "spacing": h}`` rasterizes patch specs;
    ``{"family": name, "seed": k, "spacing": h}`` draws from the random corpus;
    ``{"two_ball": s, "spacing": h}`` is the unit ball plus a ball of radius s
    at distance s^-10; ``{"npz": path}`` loads ``origin``, ``spacing``, ``values``.
    """
    if not isinstance(d, dict):
        raise ConfigError("density: must be an object")
    if "npz" in d:
        with np.load(d["npz"]) as z:
            return GriddedDensity(z["origin"], float(z["spacing"]), z["values"])
    h = _get(d, "spacing", None, float, "density")
    if h is None or not h > 0:
        raise ConfigError("density.spacing: a positive grid spacing is required")
    if "patches" in d:
        spec = initial_data_from_dict({"patches": d["patches"], "separation_b": 1.0})
        return rasterize_auto(list(spec.patches), h)
    if "family" in d:
        fam = str(d["family"])
        if fam not in corpus.FAMILIES:
            raise ConfigError(f"density.family: unknown family {fam!r} (choose from {', '.join(corpus.FAMILIES)})")
        return corpus.sample(fam, _get(d, "seed", 0, int, "density"), h)
    if "two_ball" in d:
        return corpus.two_ball(_get(d, "two_ball", 0.1, float, "density"), h)
    raise ConfigError("density: expected one of patches, family, two_ball, npz")


def run_rearrange(config: dict, out_dir: str | Path, figures: bool = True) -> dict:
    """Energy defect report and rearranged grid for one density."""
    _check_keys(config, {"density", "alphas", "command", "seed"}, "config")
    if "density" not in config:
        raise ConfigError("config: missing field density")
    dens = density_from_config(config["density"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", _clean(config))
    rep = energy.defect(dens)
    star = energy.rearrange_density(dens)
    summary = rep.to_dict()
    powers = {}
    for alpha in config.get("alphas", []) or []:
        dfa, bound = energy.power_defect(dens, float(alpha))
        powers[repr(float(alpha))] = {"defect": dfa, "bound": bound}
    summary["power_defects"] = powers
    np.savez(out / "rearranged.npz", origin=star.origin, spacing=star.spacing, values=star.values)
    _write_json(out / "summary.json", _clean(summary))
    _write_json(out / "metadata.json", _clean(_metadata({"quadrature_k": energy.QUADRATURE_K})))
    if figures and isinstance(dens, GriddedDensity):
        plotting.density_figure(dens, star, out)
    return _clean(summary)


# ---------------------------------------------------------------------------
# stability certificates


STABILITY_KEYS = {"calibration_seeds", "validation_seeds", "spacing", "fit", "safety", "max_points", "two_ball",
                  "two_ball_spacing", "densities"}

CERT_COLUMNS = ["set", "family", "seed", "defect", "quadrature_bound", "mass", "r0", "d_star", "x0_x", "x0_y",
                "y0_x", "y0_y", "w2_sq_close", "w2_floor", "far_log_moment", "ratio_T22", "ratio_T24",
                "supp_radius_ratio", "x0_mass_fraction", "in_regime", "t21", "t22", "t24"]


def _cert_row(set_name: str, family: str, seed, c: certificate.StabilityCertificate, c22, c24) -> list:
    return [set_name, family, seed, c.defect, c.quadrature_bound, c.mass, c.r0, c.d_star, c.x0[0], c.x0[1],
            c.y0[0], c.y0[1], c.w2_sq_close, c.w2_floor, c.far_log_moment, c.ratio_T22, c.ratio_T24,
            c.supp_radius_ratio, c.x0_mass_fraction, int(c.in_regime), int(c.satisfies_t21()),
            int(c.satisfies_t22(c22)), int(c.satisfies_t24(c24))]


def _fmt_cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int, np.integer)):
        return str(int(v))
    f = float(v)
    return repr(f) if math.isfinite(f) else ""


@dataclass
class StabilityBatchResult:
    constants: dict
    calibration: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    extra: list = field(default_factory=list)
    report: dict = field(default_factory=dict)


def _seed_range(v, where: str) -> list[int]:
    if v is None:
        return []
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) for x in v):
        return list(range(v[0], v[1]))
    raise ConfigError(f"{where}: expected [start, stop)")


def stability_batch(config: dict, out_dir: str | Path, figures: bool = True) -> StabilityBatchResult:
    """Certify a corpus; optionally refit the constants; report pass rates."""
    cfg = config.get("stability", config)
    _check_keys({k: v for k, v in cfg.items() if k not in ("command", "seed", "stability")}, STABILITY_KEYS,
                "config.stability")
    h = _get(cfg, "spacing", 0.035, float, "config.stability")
    mp = _get(cfg, "max_points", certificate.DEFAULT_MAX_POINTS, int, "config.stability")
    safety = _get(cfg, "safety", 0.5, float, "config.stability")
    cal_seeds = _seed_range(cfg.get("calibration_seeds"), "config.stability.calibration_seeds")
    val_seeds = _seed_range(cfg.get("validation_seeds"), "config.stability.validation_seeds")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", _clean(config))

    cal = [(f, s, certificate.certify(d, mp)) for f, s, d in corpus.certificate_corpus(cal_seeds, h)]
    val = [(f, s, certificate.certify(d, mp)) for f, s, d in corpus.certificate_corpus(val_seeds, h)]
    extra = []
    for k, dd in enumerate(cfg.get("densities", []) or []):
        extra.append((str(dd.get("family", dd.get("name", "custom"))), k, certificate.certify(density_from_config(dd), mp)))
    two_ball = []
    for s in cfg.get("two_ball", []) or []:
        hs = _get(cfg, "two_ball_spacing", 0.005, float, "config.stability")
        c = certificate.certify(corpus.two_ball(float(s), hs), mp)
        extra.append(("two_ball", float(s), c))
        two_ball.append({"s": float(s), "defect": c.defect, "s2_log_s": s * s * abs(math.log(s)),
                         "defect_over_s2_log_s": c.defect / (s * s * abs(math.log(s))),
                         "far_log_moment": c.far_log_moment, "mass_far": c.mass_far,
                         "far_over_defect": c.far_log_moment / c.defect if c.defect > 0 else None})

    frozen = certificate.load_constants()
    if cfg.get("fit") and cal:
        c22, c24 = certificate.fit_constants([c for _, _, c in cal], safety)
        source = "fitted in this run"
    else:
        c22, c24, source = frozen.c22, frozen.c24, "frozen"
    fit = certificate.validate_constants(c22, c24, [c for _, _, c in cal], [c for _, _, c in val], safety) \
        if val else None
    report = {"c22": c22, "c24": c24, "source": source, "validation": fit.to_dict() if fit else None,
              "two_ball": two_ball,
              "calibration_pass": {
                  "t21": sum(c.satisfies_t21() for _, _, c in cal if c.in_regime),
                  "t22": sum(c.satisfies_t22(c22) for _, _, c in cal if c.in_regime),
                  "t24": sum(c.satisfies_t24(c24) for _, _, c in cal if c.in_regime),
                  "in_regime": sum(c.in_regime for _, _, c in cal)}}
    with open(out / "certificates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CERT_COLUMNS)
        for name, rows in (("calibration", cal), ("validation", val), ("extra", extra)):
            for fam, seed, c in rows:
                w.writerow([_fmt_cell(v) for v in _cert_row(name, fam, seed, c, c22, c24)])
    _write_json(out / "certificates.json", _clean([
        {"set": name, "family": fam, "seed": seed, **c.to_dict()}
        for name, rows in (("calibration", cal), ("validation", val), ("extra", extra)) for fam, seed, c in rows]))
    _write_json(out / "constants_report.json", _clean(report))
    _write_json(out / "metadata.json", _clean(_metadata({"spacing": h, "max_points": mp, "safety": safety,
                                                         "regime_threshold": certificate.REGIME_THRESHOLD})))
    if figures and (cal or val or extra):
        rows = [{"defect_normalized": c.defect_normalized,
                 "w2_excess_normalized": c.w2_normalized - c.w2_floor_normalized,
                 "far_normalized": c.far_normalized} for _, _, c in cal + val + extra]
        plotting.certificate_figure(rows, c22, c24, out)
    return StabilityBatchResult({"c22": c22, "c24": c24}, cal, val, extra, _clean(report))


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_loglog(x, y, confidence: float = 0.95) -> LinearFit:
    """Least-squares slope of log y against log x with a t-based confidence interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    lx, ly = np.log(x[m]), np.log(y[m])
    n = int(lx.size)
    if n < 2:
        raise ValueError("need at least two positive points to fit")
    if n == 2 or np.ptp(lx) == 0:
        slope = float((ly[-1] - ly[0]) / (lx[-1] - lx[0])) if n == 2 else math.nan
        return LinearFit(slope, float(ly[0] - slope * lx[0]), math.nan, math.nan, math.nan, n)
    r = scipy.stats.linregress(lx, ly)
    q = scipy.stats.t.ppf(0.5 + confidence / 2, n - 2)
    return LinearFit(float(r.slope), float(r.intercept), float(r.stderr), float(r.slope - q * r.stderr),
                     float(r.slope + q * r.stderr), n)


# ---------------------------------------------------------------------------
# perturbation amplitude calibration


def calibrate_amplitude(target_defect: float, mode: int = 3, intensity: float = 1.0, points: int = 12,
                        spacing_fraction: float = 0.02) -> tuple[float, list[tuple[float, float]]]:
    """PerturbedDisk amplitude whose grid defect matches ``target_defect``.

    The defect of a perturbed disk is independent of its radius (the log
    energy defect is dilation invariant), so the curve is computed once on a
    unit-radius patch over amplitudes in (0, 0.5] and inverted by monotone
    interpolation in log-log coordinates. Returns ``(amplitude, curve)``.
    """
    amps = np.geomspace(1e-3, 0.5, points)
    curve = []
    for A in amps:
        p = VortexPatchSpec((0.0, 0.0), intensity, 1.0, Profile("PerturbedDisk", float(A), mode))
        curve.append((float(A), energy.defect(rasterize_auto([p], spacing_fraction)).defect))
    a = np.array([c[0] for c in curve])
    d = np.array([c[1] for c in curve])
    ok = d > 0
    if target_defect <= d[ok][0]:
        # below the resolved range the defect is quadratic in the amplitude
        return float(a[ok][0] * math.sqrt(target_defect / d[ok][0])), curve
    if target_defect >= d[ok][-1]:
        raise ValueError("target defect exceeds the calibrated amplitude range")
    amp = math.exp(float(np.interp(math.log(target_defect), np.log(d[ok]), np.log(a[ok]))))
    return amp, curve


# ---------------------------------------------------------------------------
# scaling study


SCALING_KEYS = {"epsilons", "layout", "particles_per_patch", "horizon", "samples_per_run", "control", "beta",
                "perturbation", "workers", "n1", "n2", "n3", "command", "seed", "fit_window"}


@dataclass
class ScalingStudyResult:
    epsilons: list[float]
    confinement_exponent: list[dict]
    residual_exponent: dict | None
    horizon_reached: list[float]
    theory_exponents: dict
    runs: list[dict] = field(default_factory=list)
    control: dict | None = None
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def _scaling_spec(cfg: dict, eps: float, patches_override=None) -> InitialDataSpec:
    layout = cfg.get("layout") or {"patches": [{"center": [0.5, 0.0], "intensity": 1.0},
                                               {"center": [-0.5, 0.0], "intensity": 1.0}],
                                   "separation_b": 1.0, "domain": "FullPlane"}
    pert = cfg.get("perturbation") or {}
    amp = float(pert.get("amplitude", 0.0))
    mode = int(pert.get("mode", 3))
    patches = []
    for p in (patches_override or layout["patches"]):
        prof = {"kind": "PerturbedDisk", "amplitude": amp, "mode": mode} if amp > 0 else {"kind": "UniformDisk"}
        patches.append({"center": p["center"], "intensity": p["intensity"], "epsilon": eps, "profile": prof})
    return initial_data_from_dict({
        "domain": layout.get("domain", "FullPlane"), "separation_b": layout.get("separation_b", 1.0),
        "beta": cfg.get("beta", 4.0), "n1": cfg.get("n1", 1.0), "n2": cfg.get("n2", 10.0),
        "n3": cfg.get("n3", 1.0), "patches": patches})


def _scaling_member(args) -> dict:
    spec_dict, eps, ppp, horizon, samples, spread_frac = args
    spec = initial_data_from_dict(spec_dict)
    field_ = discretize(spec, ppp)
    kernel = euler.BlobKernelSpec(field_.blob_radius)
    dt = euler.choose_dt(field_, kernel, spec.domain)["dt"]
    n_steps = max(1, int(math.ceil(horizon / dt)))
    every = max(1, n_steps // samples)
    ks = [2.0]
    col = DiagnosticsCollector(spec.domain, eps, spec.n1, ks, defect=False)
    threshold = spread_frac * spec.separation_b

    floor = diagnostics.CUTOFF_INNER * spec.n1 * eps

    def stop(_snap):
        return spread_exceeded(col.samples[-1].spread, threshold, floor)

    t0 = time.perf_counter()
    res = euler.run(field_, kernel, dt, horizon, every, col, spec.domain, stop)
    s = col.samples
    return {
        "epsilon": eps,
        "t": [x.t for x in s],
        "diam": [float(np.max(x.diam)) for x in s],
        "spread": [x.spread for x in s],
        "m2": [x.m_k[2.0] for x in s],
        "residual_series": [float(np.max(x.residual_averaged)) for x in s],
        "angular_momentum": [x.angular_momentum for x in s],
        "t_final": res.t_end,
        "stopped_early": bool(res.metadata.get("stopped_early")),
        "dt": res.dt,
        "steps": res.steps,
        "n_particles": len(field_),
        "lattice_spacing": field_.blob_radius / 2.0,
        "elapsed_seconds": time.perf_counter() - t0,
    }


def _final_decade(t, y) -> tuple[FloatArray, FloatArray]:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (t >= 0.1 * t[-1]) & (t > 0)
    return t[m], y[m]


def scaling_study(config: dict, out_dir: str | Path, figures: bool = True,
                  progress: Callable[[str], None] | None = None) -> ScalingStudyResult:
    """Sweep epsilon; fit diameter-growth time exponents and the residual epsilon slope.

    Each member runs to ``min(horizon.factor * eps^horizon.power, stop)`` where
    the stop rule ends the run once the spread reaches ``spread_fraction * b``.
    The time exponent is the log-log slope of the largest patch diameter
    against t over the final decade of samples (t >= t_final / 10). The
    residual of a member is the median over samples of the largest per-patch
    averaged velocity residual.
    """
    cfg = dict(config.get("scaling", config))
    _check_keys({k: v for k, v in cfg.items() if k != "scaling"}, SCALING_KEYS, "config.scaling")
    eps_list = [float(e) for e in cfg.get("epsilons", [0.1, 0.07, 0.05, 0.035])]
    if len(eps_list) < 2:
        raise ConfigError("config.scaling.epsilons: need at least two values")
    ppp = _get(cfg, "particles_per_patch", 256, int, "config.scaling")
    hz = cfg.get("horizon") or {}
    factor = float(hz.get("factor", 5.0))
    power = float(hz.get("power", -0.5))
    spread_frac = float(hz.get("spread_fraction", 0.25))
    samples = _get(cfg, "samples_per_run", 60, int, "config.scaling")
    workers = _get(cfg, "workers", 1, int, "config.scaling")
    beta = float(cfg.get("beta", 4.0))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", _clean(config))

    jobs = []
    for eps in eps_list:
        spec = _scaling_spec(cfg, eps)
        ensure_valid(spec)
        jobs.append((initial_data_to_dict(spec), eps, ppp, factor * eps**power, samples, spread_frac))
    control_job = None
    if cfg.get("control", True):
        eps_c = eps_list[len(eps_list) // 2]
        cspec = _scaling_spec(cfg, eps_c, [{"center": [0.0, 0.0], "intensity": 1.0}])
        control_job = (initial_data_to_dict(cspec), eps_c, ppp, factor * eps_c**power, samples, spread_frac)

    runs, failures = [], []
    all_jobs = jobs + ([control_job] if control_job else [])
    results: list[dict | None] = [None] * len(all_jobs)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            futs = {ex.submit(_scaling_member, j): k for k, j in enumerate(all_jobs)}
            for fut in concurrent.futures.as_completed(futs):
                k = futs[fut]
                try:
                    results[k] = fut.result()
                except Exception as exc:  # a failed member is recorded, the sweep continues
                    failures.append({"epsilon": all_jobs[k][1], "error": f"{type(exc).__name__}: {exc}"})
    else:
        for k, j in enumerate(all_jobs):
            try:
                results[k] = _scaling_member(j)
                if progress is not None:
                    progress(f"eps={j[1]:g} done in {results[k]['elapsed_seconds']:.1f}s")
            except VortexLabError as exc:
                failures.append({"epsilon": j[1], "error": f"{type(exc).__name__}: {exc}"})
    runs = [r for r in results[:len(jobs)] if r is not None]
    control = results[len(jobs)] if control_job else None

    conf = []
    for r in runs:
        t, d = _final_decade(r["t"], r["diam"])
        try:
            fit = fit_loglog(t, d).to_dict()
        except ValueError:
            fit = None
        conf.append({"epsilon": r["epsilon"], "fit": fit, "t_final": r["t_final"]})
    for r in runs:
        r["residual"] = float(np.median(r["residual_series"]))
    res_fit = None
    if len(runs) >= 2:
        try:
            res_fit = fit_loglog([r["epsilon"] for r in runs], [r["residual"] for r in runs]).to_dict()
        except ValueError:
            res_fit = None
    control_summary = None
    if control is not None:
        d = np.asarray(control["diam"])
        control_summary = {"epsilon": control["epsilon"], "diam_initial": float(d[0]),
                           "max_abs_change": float(np.max(np.abs(d - d[0]))),
                           "trend_slope": float(np.polyfit(np.asarray(control["t"]), d, 1)[0]),
                           "lattice_spacing": control["lattice_spacing"], "t_final": control["t_final"]}
    theory = {
        "diam_time_exponent": 0.5,
        "diam_terms": {"leading": f"eps^{min(1.0, beta / 2):g} (1+t)^(1/2)",
                       "secondary": f"eps^{0.5 + beta / 8:g} (1+t)^(1/4)"},
        "residual_eps_exponent": min(min(4.0, 2 * beta), 2 + beta / 2),
        "beta": beta,
    }
    result = ScalingStudyResult(
        epsilons=[r["epsilon"] for r in runs], confinement_exponent=conf, residual_exponent=res_fit,
        horizon_reached=[r["t_final"] for r in runs], theory_exponents=theory, runs=runs,
        control=control_summary, failures=failures)
    with open(out / "scaling.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "t", "diam", "spread", "m2", "residual", "angular_momentum"])
        for r in runs + ([control] if control else []):
            for k in range(len(r["t"])):
                w.writerow([repr(r["epsilon"]), repr(r["t"][k]), repr(r["diam"][k]), repr(r["spread"][k]),
                            repr(r["m2"][k]), repr(r["residual_series"][k]), repr(r["angular_momentum"][k])])
    summary = result.to_dict()
    for r in summary["runs"]:
        for key in ("t", "diam", "spread", "m2", "residual_series", "angular_momentum", "elapsed_seconds"):
            r.pop(key, None)
    _write_json(out / "summary.json", summary)
    _write_json(out / "metadata.json", _clean(_metadata({
        "particles_per_patch": ppp, "horizon": {"factor": factor, "power": power, "spread_fraction": spread_frac},
        "fit_window": "t >= t_final / 10", "elapsed_seconds": [r["elapsed_seconds"] for r in runs]})))
    if figures and runs:
        plotting.scaling_figure(runs, res_fit, out)
    return result


# ---------------------------------------------------------------------------
# defect / surrogate equivalence suite


def random_patch_config(seed: int) -> InitialDataSpec:
    """2-3 perturbed patches of random size, sign and shape, pairwise at least b = 0.5 apart."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    b = 0.5
    centers: list[np.ndarray] = []
    while len(centers) < n:
        c = rng.uniform(-0.8, 0.8, size=2)
        if all(np.hypot(*(c - q)) >= b for q in centers):
            centers.append(c)
    patches = []
    for c in centers:
        eps = float(rng.uniform(0.03, 0.08))
        a = float(rng.uniform(0.5, 1.5)) * (1.0 if rng.random() < 0.75 else -1.0)
        amp = float(rng.uniform(0.0, 0.3))
        mode = int(rng.integers(2, 5))
        patches.append(VortexPatchSpec((float(c[0]), float(c[1])), a, eps, Profile("PerturbedDisk", amp, mode)))
    return InitialDataSpec(FULL_PLANE, tuple(patches), b)


@dataclass(frozen=True)
class EquivalenceRecord:
    seed: int
    t: float
    epsilon: float
    defect: float
    surrogate: float
    defect_bound: float
    m2: float

    @property
    def gap(self) -> float:
        return abs(self.defect - self.surrogate)

    @property
    def scale(self) -> float:
        return self.epsilon**2 * math.sqrt(max(self.defect, 0.0)) + self.m2


def equivalence_run(seed: int, particles_per_patch: int = 256, t_end: float = 0.25,
                    samples: int = 4) -> list[EquivalenceRecord]:
    spec = random_patch_config(seed)
    field_ = discretize(spec, particles_per_patch)
    kernel = euler.BlobKernelSpec(field_.blob_radius)
    dt = euler.choose_dt(field_, kernel, spec.domain)["dt"]
    n_steps = max(1, int(math.ceil(t_end / dt)))
    eps = max(p.epsilon for p in spec.patches)
    col = DiagnosticsCollector(spec.domain, eps, spec.n1, [2.0], defect=True)
    euler.run(field_, kernel, dt, t_end, max(1, n_steps // samples), col, spec.domain)
    return [EquivalenceRecord(seed, s.t, eps, s.defect, s.surrogate, s.defect_bound, s.m_k[2.0]) for s in col.samples]


#: absolute slack for roundoff in |D - D~| (relative to (sum |a_i|)^2)
EQUIVALENCE_BUDGET = 1e-9


def equivalence_budget(spec: InitialDataSpec) -> float:
    return EQUIVALENCE_BUDGET * sum(abs(p.intensity) for p in spec.patches) ** 2


def fit_equivalence_constant(records: list[EquivalenceRecord], safety: float = 2.0) -> float:
    ratios = [r.gap / r.scale for r in records if r.scale > 0]
    if not ratios:
        raise ValueError("no records with a positive scale")
    return safety * max(ratios)


def load_equivalence_constant() -> float:
    from importlib import resources

    d = json.loads(resources.files("vortexlab").joinpath("data/constants.json").read_text())
    return float(d["surrogate"]["K"])
