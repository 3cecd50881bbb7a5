"""Quantitative stability certificate for the Riesz inequality of the log energy.

For a nonnegative density rho with small energy defect E(rho*) - E(rho), the
density splits into a close part rho_c, concentrated near a point y0 and
W2-close to its own rearrangement, and a far part rho_f whose logarithmic
distance from y0 is controlled by the defect:

    defect >= c22 * W2^2(rho_c, rho_c*) / R0^2,
    defect >= c24 * int rho_f |log(|x - y0| / D)|,

where D is the diameter of supp rho* and R0 = sqrt(mass / sup rho).
:func:`certify` computes every quantity in these inequalities. Ratios and
checks are evaluated after reducing rho to unit mass and unit sup norm
(``x -> x / R0``, ``rho -> rho / sup``), so they are invariant under
translations, dilations and rescaling of the density; the certificate fields
themselves are in original units.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numba
import numpy as np
import scipy.signal
from numpy.typing import NDArray

from . import energy
from .core import Cells, GriddedDensity, SparseDensity, to_cells
from .errors import GridError
from .transport import quantize, wasserstein_exact

FloatArray = NDArray[np.float64]

#: defect / mass^2 above which the certificate is flagged out of regime
REGIME_THRESHOLD = 0.1
#: the close part is rho restricted to the ball of radius SPLIT_FACTOR * D about x0
SPLIT_FACTOR = 3.0
#: pigeonhole ball radius is D + PIGEONHOLE_SLACK * R0
PIGEONHOLE_SLACK = 0.01
#: bound on max |x - y0| / D over the close part
SUPPORT_RADIUS_LIMIT = 10.0
DEFAULT_MAX_POINTS = 2000


@dataclass(frozen=True)
class StabilityCertificate:
    defect: float
    d_star: float
    r0: float
    x0: tuple[float, float]
    y0: tuple[float, float]
    w2_sq_close: float
    far_log_moment: float
    ratio_T22: float
    ratio_T24: float
    supp_radius_ratio: float
    mass: float
    sup: float
    spacing: float
    mass_close: float
    mass_far: float
    x0_mass_fraction: float
    quadrature_bound: float
    w2_floor: float
    in_regime: bool

    # quantities after reduction to unit mass and unit sup norm
    @property
    def defect_normalized(self) -> float:
        return self.defect / self.mass**2

    @property
    def bound_normalized(self) -> float:
        return self.quadrature_bound / self.mass**2

    @property
    def w2_normalized(self) -> float:
        return self.w2_sq_close / (self.mass * self.r0**2)

    @property
    def w2_floor_normalized(self) -> float:
        return self.w2_floor / (self.mass * self.r0**2)

    @property
    def far_normalized(self) -> float:
        return self.far_log_moment / self.mass

    def satisfies_t21(self) -> bool:
        return self.supp_radius_ratio <= SUPPORT_RADIUS_LIMIT

    def satisfies_t22(self, c22: float) -> bool:
        """defect >= c22 W2^2 / R0^2 up to the quadrature bound and the W2 resolution floor."""
        excess = max(self.w2_normalized - self.w2_floor_normalized, 0.0)
        return self.defect_normalized + self.bound_normalized >= c22 * excess

    def satisfies_t24(self, c24: float) -> bool:
        """defect >= c24 * far log moment up to the quadrature bound."""
        return self.defect_normalized + self.bound_normalized >= c24 * self.far_normalized

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        d["x0"] = list(self.x0)
        d["y0"] = list(self.y0)
        return d


@dataclass(frozen=True)
class CertificateConstants:
    c22: float
    c24: float
    source: str = ""


def load_constants() -> CertificateConstants:
    """The frozen constants shipped in ``vortexlab/data/constants.json``."""
    text = resources.files("vortexlab").joinpath("data/constants.json").read_text()
    d = json.loads(text)["certificate"]
    return CertificateConstants(float(d["c22"]), float(d["c24"]), str(d.get("source", "")))


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else math.nan


def _row_major(cells: Cells) -> Cells:
    order = np.lexsort((cells.idx[:, 1], cells.idx[:, 0]))
    return Cells(cells.anchor, cells.spacing, cells.idx[order], cells.values[order])


@numba.njit(cache=True)
def _ball_sums_cross(ti, tj, si, sj, sv, r2, out):
    for a in range(ti.size):
        acc = 0.0
        for b in range(si.size):
            di = ti[a] - si[b]
            dj = tj[a] - sj[b]
            if di * di + dj * dj <= r2:
                acc += sv[b]
        out[a] += acc


def _ball_sums(cells: Cells, r2: float) -> FloatArray:
    """For each cell, sum of values of cells whose index offset satisfies |d|^2 <= r2."""
    idx, vals = cells.idx, cells.values
    out = np.zeros(vals.size)
    groups = energy._clusters(idx)
    rk = int(math.floor(math.sqrt(r2)))
    off = np.arange(-rk, rk + 1)
    stencil = ((off[:, None] ** 2 + off[None, :] ** 2) <= r2).astype(float)
    boxes = []
    for g in groups:
        sub = idx[g]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        boxes.append((lo, hi))
        dense = energy._dense(sub, vals[g])
        conv = scipy.signal.fftconvolve(dense, stencil, mode="same")
        out[g] += conv[sub[:, 0] - lo[0], sub[:, 1] - lo[1]]
    for a, ga in enumerate(groups):
        for b, gb in enumerate(groups):
            if a == b:
                continue
            gap = np.maximum(0, np.maximum(boxes[b][0] - boxes[a][1], boxes[a][0] - boxes[b][1]))
            if float(np.sum(gap.astype(float) ** 2)) > r2:
                continue
            tmp = np.zeros(ga.size)
            _ball_sums_cross(idx[ga, 0].copy(), idx[ga, 1].copy(), idx[gb, 0].copy(), idx[gb, 1].copy(),
                             vals[gb].copy(), float(r2), tmp)
            out[ga] += tmp
    return out


def support_diameter_of_rearrangement(density: "GriddedDensity | SparseDensity | Cells") -> float:
    """Diameter of the disk whose area equals the area of the positive cells."""
    cells = to_cells(density)
    n = int(np.count_nonzero(cells.values))
    return 2.0 * math.sqrt(n * cells.spacing**2 / math.pi)


def pigeonhole_center(density: "GriddedDensity | SparseDensity | Cells") -> tuple[FloatArray, float, int]:
    """Cell centre x0 maximizing the mass within distance D + R0/100.

    Returns ``(x0, fraction of total mass in that ball, row-major cell position)``.
    Only cells with positive density are candidates. Masses are compared after
    rounding to 1e-12 of the total (absorbing FFT rounding). Ties, which are
    common because a ball of radius D swallows a compact bump from many
    centres, are broken first by the larger mass within D/2 (the radius of
    supp rho*) and then by the smallest row-major index.
    """
    cells = _row_major(to_cells(density))
    if len(cells) == 0:
        raise GridError("density has zero mass")
    m, _, r0 = energy.density_scale(cells)
    d = support_diameter_of_rearrangement(cells)
    h = cells.spacing
    radius = (d + PIGEONHOLE_SLACK * r0) / h
    total = float(np.sum(cells.values))
    sums = _ball_sums(cells, radius * radius)
    inner = _ball_sums(cells, (0.5 * d / h) ** 2)
    q1 = np.round(sums / (total * 1e-12))
    q2 = np.round(inner / (total * 1e-12))
    k = int(np.lexsort((np.arange(q1.size), -q2, -q1))[0])
    x0 = cells.anchor + (cells.idx[k] + 0.5) * h
    return x0, float(min(sums[k] / total, 1.0)), k


@dataclass(frozen=True)
class Split:
    close: Cells
    far: Cells
    x0: FloatArray
    x0_index: NDArray[np.int64]
    y0_offset: FloatArray  # y0 - x0, accurate even for huge coordinates
    d_star: float
    x0_mass_fraction: float

    @property
    def y0(self) -> FloatArray:
        return self.x0 + self.y0_offset


def split(density: "GriddedDensity | SparseDensity | Cells") -> Split:
    """rho_c = rho on the ball B(x0, 3D) (cell centres), rho_f = the rest."""
    cells = _row_major(to_cells(density))
    x0, frac, k = pigeonhole_center(cells)
    h = cells.spacing
    d_star = support_diameter_of_rearrangement(cells)
    i0 = cells.idx[k]
    rel = (cells.idx - i0).astype(float)
    r2 = np.sum(rel * rel, axis=1)
    inside = r2 * h * h <= (SPLIT_FACTOR * d_star) ** 2
    close = Cells(cells.anchor, h, cells.idx[inside], cells.values[inside])
    far = Cells(cells.anchor, h, cells.idx[~inside], cells.values[~inside])
    w = close.values
    y_off = h * (rel[inside].T @ w) / float(np.sum(w))
    return Split(close, far, x0, i0.copy(), y_off, d_star, frac)


def _offsets_from_y0(cells: Cells, sp: Split) -> FloatArray:
    """x_c - y0 for every cell, formed from integer index differences."""
    return (cells.idx - sp.x0_index).astype(float) * cells.spacing - sp.y0_offset


def far_log_moment(far: Cells, y0_offsets: FloatArray, d_star: float) -> float:
    """sum_c h^2 rho_f(c) |log(|x_c - y0| / d_star)| (y0_offsets are x_c - y0)."""
    if not d_star > 0:
        raise ValueError("d_star must be positive")
    if len(far) == 0:
        return 0.0
    r = np.hypot(y0_offsets[:, 0], y0_offsets[:, 1])
    return float(far.spacing**2 * np.sum(far.values * np.abs(np.log(r / d_star))))


def certify(density: "GriddedDensity | SparseDensity | Cells", max_points: int = DEFAULT_MAX_POINTS,
            report: energy.EnergyReport | None = None) -> StabilityCertificate:
    """Assemble the stability certificate of ``density``.

    ``w2_sq_close`` is the exact squared W2 distance between the quantized
    close part and the quantized rearrangement of the close part centred at
    y0. Since both clouds live on lattices of block size b, it carries a
    resolution floor, reported as ``w2_floor = mass_close * b^2 / 2``
    (off-lattice radial densities measure up to 0.43 mass * b^2).
    """
    cells = to_cells(density)
    rep = report if report is not None else energy.defect(density)
    m, sup, r0 = energy.density_scale(cells)
    sp = split(cells)
    h = cells.spacing

    close_cloud = quantize(sp.close, max_points)
    star = energy.rearrange_about(sp.close, sp.y0)
    star_cloud = quantize(star, max_points)
    w2 = wasserstein_exact(close_cloud, star_cloud, p=2) ** 2
    block = max(close_cloud.resolution, star_cloud.resolution)
    mass_close = sp.close.mass
    w2_floor = 0.5 * mass_close * block * block

    off_close = _offsets_from_y0(sp.close, sp)
    supp = float(np.max(np.hypot(off_close[:, 0], off_close[:, 1]))) / sp.d_star
    flm = far_log_moment(sp.far, _offsets_from_y0(sp.far, sp), sp.d_star)

    d_n = rep.defect / m**2
    return StabilityCertificate(
        defect=rep.defect,
        d_star=sp.d_star,
        r0=r0,
        x0=(float(sp.x0[0]), float(sp.x0[1])),
        y0=(float(sp.y0[0]), float(sp.y0[1])),
        w2_sq_close=w2,
        far_log_moment=flm,
        ratio_T22=_ratio(d_n, w2 / (m * r0 * r0)),
        ratio_T24=_ratio(d_n, flm / m),
        supp_radius_ratio=supp,
        mass=m,
        sup=sup,
        spacing=h,
        mass_close=mass_close,
        mass_far=sp.far.mass,
        x0_mass_fraction=sp.x0_mass_fraction,
        quadrature_bound=rep.quadrature_error_bound,
        w2_floor=w2_floor,
        in_regime=bool(d_n <= REGIME_THRESHOLD),
    )


@dataclass(frozen=True)
class ConstantFit:
    c22: float
    c24: float
    safety: float
    n_calibration: int
    n_calibration_in_regime: int
    n_validation: int
    n_validation_in_regime: int
    t21_pass: int
    t22_pass: int
    t24_pass: int

    @property
    def all_pass(self) -> bool:
        n = self.n_validation_in_regime
        return self.t21_pass == n and self.t22_pass == n and self.t24_pass == n

    def to_dict(self) -> dict:
        return asdict(self) | {"all_pass": self.all_pass}


def fit_constants(calibration: list[StabilityCertificate], safety: float = 0.5) -> tuple[float, float]:
    """Largest constants valid on the in-regime calibration inputs, times ``safety``.

    c22 is the minimum over inputs with W2 above the resolution floor of
    (defect + bound) / (W2 - floor) in normalized units; c24 likewise with the
    far log moment.
    """
    r22, r24 = [], []
    for c in calibration:
        if not c.in_regime:
            continue
        num = c.defect_normalized + c.bound_normalized
        excess = c.w2_normalized - c.w2_floor_normalized
        if excess > 0:
            r22.append(num / excess)
        if c.far_normalized > 0:
            r24.append(num / c.far_normalized)
    if not r22 or not r24:
        raise ValueError("calibration set does not constrain both constants")
    return safety * min(r22), safety * min(r24)


def validate_constants(c22: float, c24: float, calibration: list[StabilityCertificate],
                       validation: list[StabilityCertificate], safety: float = 0.5) -> ConstantFit:
    ok = [c for c in validation if c.in_regime]
    return ConstantFit(
        c22=c22, c24=c24, safety=safety,
        n_calibration=len(calibration),
        n_calibration_in_regime=sum(c.in_regime for c in calibration),
        n_validation=len(validation),
        n_validation_in_regime=len(ok),
        t21_pass=sum(c.satisfies_t21() for c in ok),
        t22_pass=sum(c.satisfies_t22(c22) for c in ok),
        t24_pass=sum(c.satisfies_t24(c24) for c in ok),
    )
