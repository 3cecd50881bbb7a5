"""Domain and initial-data types, assumption checks, and particle/grid discretization.

Initial data is a superposition of concentrated vortex patches. Each patch has a
centre, a signed circulation ``intensity`` and a concentration scale
``epsilon``; its vorticity is supported in a disk of radius
``support_radius_factor * epsilon``.

Grids use a cell-centred convention: ``GriddedDensity.values[ix, iy]`` is the
average over the square cell whose centre is ``origin + (ix + 1/2, iy + 1/2) * h``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import numpy as np
import shapely
from numpy.typing import NDArray

from .errors import GridError, ValidationError

FloatArray = NDArray[np.float64]

#: vertices used to polygonize disk-like patch boundaries for exact cell coverage
BOUNDARY_VERTICES = 4096


class DomainKind(str, Enum):
    FULL_PLANE = "FullPlane"
    UNIT_DISK = "UnitDisk"


@dataclass(frozen=True)
class DomainSpec:
    kind: DomainKind = DomainKind.FULL_PLANE

    @property
    def is_disk(self) -> bool:
        return self.kind is DomainKind.UNIT_DISK

    @classmethod
    def parse(cls, value: "str | DomainSpec | DomainKind") -> "DomainSpec":
        if isinstance(value, DomainSpec):
            return value
        return cls(DomainKind(value))


FULL_PLANE = DomainSpec(DomainKind.FULL_PLANE)
UNIT_DISK = DomainSpec(DomainKind.UNIT_DISK)


ProfileKind = Literal["UniformDisk", "SmoothBump", "PerturbedDisk"]


@dataclass(frozen=True)
class Profile:
    """Shape of a single patch.

    ``sign`` is the sign of the vorticity values; ``None`` means "same as the
    intensity", anything else is taken literally so that inconsistent data can be
    represented (and rejected by :func:`validate`).
    """

    kind: ProfileKind = "UniformDisk"
    amplitude: float = 0.0
    mode: int = 2
    sign: int | None = None

    def __post_init__(self):
        if self.kind not in ("UniformDisk", "SmoothBump", "PerturbedDisk"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "PerturbedDisk" and not (0.0 <= abs(self.amplitude) < 1.0):
            raise ValueError("PerturbedDisk amplitude must satisfy |amplitude| < 1")
        if self.sign not in (None, 1, -1):
            raise ValueError("profile sign must be +1, -1 or None")


@dataclass(frozen=True)
class VortexPatchSpec:
    center: tuple[float, float]
    intensity: float
    epsilon: float
    profile: Profile = field(default_factory=Profile)
    support_radius_factor: float = 1.0

    @property
    def support_radius(self) -> float:
        return self.support_radius_factor * self.epsilon

    @property
    def profile_sign(self) -> int:
        if self.profile.sign is not None:
            return self.profile.sign
        return 1 if self.intensity >= 0 else -1

    def peak_density(self) -> float:
        """Supremum of |vorticity| for this patch."""
        r = self.support_radius
        a = abs(self.intensity)
        if self.profile.kind == "SmoothBump":
            return 4.0 * a / (math.pi * r * r)
        if self.profile.kind == "PerturbedDisk":
            r0 = _perturbed_base_radius(self)
            return a / (math.pi * r0 * r0 * (1.0 + 0.5 * self.profile.amplitude**2))
        return a / (math.pi * r * r)


@dataclass(frozen=True)
class InitialDataSpec:
    domain: DomainSpec
    patches: tuple[VortexPatchSpec, ...]
    separation_b: float
    beta: float = 4.0
    n3: float = 1.0
    n1: float = 1.0
    n2: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(self, "domain", DomainSpec.parse(self.domain))


@dataclass(frozen=True)
class Violation:
    assumption: str
    message: str

    def __str__(self) -> str:
        return f"({self.assumption}) {self.message}"


def validate(spec: InitialDataSpec) -> list[Violation]:
    """Check the structural assumptions on initial data.

    Returns an empty list when everything holds; otherwise one entry per failed
    assumption instance. Violations are data, never exceptions.
    """
    out: list[Violation] = []
    if not spec.patches:
        out.append(Violation("A1", "at least one patch is required"))
    if not spec.beta > 2.0 / 3.0:
        out.append(Violation("A6", f"beta={spec.beta} must exceed 2/3"))
    if not spec.separation_b > 0:
        out.append(Violation("A7", "separation b must be positive"))

    for k, p in enumerate(spec.patches):
        if not p.epsilon > 0:
            out.append(Violation("A2", f"patch {k}: epsilon must be positive"))
            continue
        if p.support_radius_factor <= 0 or p.support_radius_factor > spec.n1 * (1 + 1e-12):
            out.append(Violation(
                "A2", f"patch {k}: support radius {p.support_radius:.3g} exceeds N1*eps={spec.n1 * p.epsilon:.3g}"))
        if p.intensity == 0:
            out.append(Violation("A5", f"patch {k}: intensity must be nonzero"))
        elif p.profile_sign != (1 if p.intensity > 0 else -1):
            out.append(Violation("A5", f"patch {k}: profile sign disagrees with intensity sign"))
        if p.peak_density() > spec.n2 * p.epsilon**-2 * (1 + 1e-12):
            out.append(Violation(
                "A4", f"patch {k}: sup|omega|={p.peak_density():.4g} exceeds N2*eps^-2={spec.n2 * p.epsilon**-2:.4g}"))
        c = np.asarray(p.center, dtype=float)
        if not np.all(np.isfinite(c)):
            out.append(Violation("A2", f"patch {k}: center is not finite"))
            continue
        if spec.domain.is_disk:
            rc = float(np.hypot(*c))
            if rc >= 1.0:
                out.append(Violation("A7", f"patch {k}: center outside the unit disk"))
            elif 1.0 - rc < spec.separation_b:
                out.append(Violation("A7", f"patch {k}: distance to boundary {1 - rc:.4g} < b={spec.separation_b}"))
            elif rc + p.support_radius >= 1.0:
                out.append(Violation("A2", f"patch {k}: support leaves the unit disk"))

    centers = [np.asarray(p.center, dtype=float) for p in spec.patches]
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            d = float(np.hypot(*(centers[i] - centers[j])))
            if d < spec.separation_b:
                out.append(Violation("A7", f"patches {i},{j}: distance {d:.4g} < b={spec.separation_b}"))
    return out


def ensure_valid(spec: InitialDataSpec) -> None:
    problems = validate(spec)
    if problems:
        raise ValidationError("invalid initial data: " + "; ".join(map(str, problems)), problems)


# ---------------------------------------------------------------------------
# cell integration of patch profiles


def _perturbed_base_radius(p: VortexPatchSpec) -> float:
    amp = abs(p.profile.amplitude) if p.profile.kind == "PerturbedDisk" else 0.0
    return p.support_radius / (1.0 + amp)


def _boundary_polygon(p: VortexPatchSpec) -> shapely.Polygon:
    r0 = _perturbed_base_radius(p)
    amp = p.profile.amplitude if p.profile.kind == "PerturbedDisk" else 0.0
    theta = np.arange(BOUNDARY_VERTICES) * (2.0 * np.pi / BOUNDARY_VERTICES)
    r = r0 * (1.0 + amp * np.cos(p.profile.mode * theta))
    # polygon in patch-local coordinates keeps the symmetry exact
    return shapely.Polygon(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))


def _disk_cell_areas(p: VortexPatchSpec, cx: FloatArray, cy: FloatArray, h: float) -> FloatArray:
    """Exact area of (cell ∩ patch) for cells centred at local coordinates (cx, cy)."""
    poly = _boundary_polygon(p)
    amp = abs(p.profile.amplitude) if p.profile.kind == "PerturbedDisk" else 0.0
    r0 = _perturbed_base_radius(p)
    # inscribed polygon radius is slightly smaller than r0(1-amp)
    r_in = r0 * (1.0 - amp) * math.cos(math.pi / BOUNDARY_VERTICES) * (1 - 1e-12)
    r_out = r0 * (1.0 + amp) * (1 + 1e-12)
    half = 0.5 * h
    far_corner = np.hypot(np.abs(cx) + half, np.abs(cy) + half)
    near_pt = np.hypot(np.maximum(np.abs(cx) - half, 0.0), np.maximum(np.abs(cy) - half, 0.0))
    areas = np.zeros(cx.shape)
    inside = far_corner <= r_in
    areas[inside] = h * h
    edge = ~inside & (near_pt < r_out)
    if np.any(edge):
        boxes = shapely.box(cx[edge] - half, cy[edge] - half, cx[edge] + half, cy[edge] + half)
        areas[edge] = shapely.area(shapely.intersection(boxes, poly))
    return areas


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


def _bump_cell_integrals(p: VortexPatchSpec, cx: FloatArray, cy: FloatArray, h: float) -> FloatArray:
    """Integral of the unnormalized bump (1 - (r/R)^2)^3 over each cell."""
    R = p.support_radius
    nodes = 0.5 * h * _GL_NODES
    w = 0.25 * h * h * np.outer(_GL_WEIGHTS, _GL_WEIGHTS)
    x = cx[:, None, None] + nodes[None, :, None]
    y = cy[:, None, None] + nodes[None, None, :]
    s2 = (x * x + y * y) / (R * R)
    f = np.where(s2 < 1.0, (1.0 - s2) ** 3, 0.0)
    return np.einsum("kij,ij->k", f, w)


def patch_cell_integrals(p: VortexPatchSpec, centers: FloatArray, h: float) -> FloatArray:
    """Signed vorticity integrated over square cells of side ``h``.

    ``centers`` are absolute cell-centre coordinates, shape (K, 2). The result is
    normalized with the analytic total so that an exhaustive tiling sums to the
    intensity up to the polygonization error of the boundary.
    """
    centers = np.asarray(centers, dtype=float)
    cx = centers[:, 0] - p.center[0]
    cy = centers[:, 1] - p.center[1]
    sign = p.profile_sign
    a = abs(p.intensity)
    if p.profile.kind == "SmoothBump":
        R = p.support_radius
        raw = _bump_cell_integrals(p, cx, cy, h)
        return sign * a * raw / (math.pi * R * R / 4.0)
    areas = _disk_cell_areas(p, cx, cy, h)
    r0 = _perturbed_base_radius(p)
    amp = p.profile.amplitude if p.profile.kind == "PerturbedDisk" else 0.0
    return sign * a * areas / (math.pi * r0 * r0 * (1.0 + 0.5 * amp * amp))


# ---------------------------------------------------------------------------
# particle field


@dataclass(frozen=True)
class ParticleField:
    """Lagrangian blob discretization of the vorticity.

    ``labels`` are 0-based patch indices.
    """

    positions: FloatArray
    circulations: FloatArray
    labels: NDArray[np.int64]
    blob_radius: float

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        circ = np.ascontiguousarray(self.circulations, dtype=np.float64)
        lab = np.ascontiguousarray(self.labels, dtype=np.int64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (N, 2)")
        if circ.shape != (pos.shape[0],) or lab.shape != (pos.shape[0],):
            raise ValueError("positions, circulations and labels must have equal length")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(circ)):
            raise ValueError("particle data must be finite")
        if not self.blob_radius > 0:
            raise ValueError("blob_radius must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "circulations", circ)
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def n_patches(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def label_mask(self, label: int) -> NDArray[np.bool_]:
        return self.labels == label

    def patch_circulation(self, label: int) -> float:
        return float(np.sum(self.circulations[self.labels == label]))

    def with_positions(self, positions: FloatArray) -> "ParticleField":
        return replace(self, positions=positions)

    def select(self, label: int) -> "ParticleField":
        m = self.labels == label
        return ParticleField(self.positions[m], self.circulations[m], self.labels[m], self.blob_radius)


def lattice_spacing(p: VortexPatchSpec, particles_per_patch: int) -> float:
    """Sub-lattice spacing giving about ``particles_per_patch`` cells on the support."""
    return p.support_radius * math.sqrt(math.pi / particles_per_patch)


def discretize(spec: InitialDataSpec, particles_per_patch: int) -> ParticleField:
    """Tile each patch with particles on a regular lattice centred on the patch.

    Each particle carries the vorticity integrated over its lattice cell; the
    circulations of a patch are then rescaled to sum to its intensity. The blob
    radius is twice the coarsest lattice spacing.
    """
    ensure_valid(spec)
    if particles_per_patch < 16:
        raise ValueError("particles_per_patch must be at least 16")
    pos, circ, lab = [], [], []
    h_max = 0.0
    for k, p in enumerate(spec.patches):
        h = lattice_spacing(p, particles_per_patch)
        h_max = max(h_max, h)
        m = int(math.ceil(p.support_radius / h)) + 1
        idx = np.arange(-m, m + 1, dtype=float)
        gx, gy = np.meshgrid(idx * h, idx * h, indexing="ij")
        centers = np.column_stack([gx.ravel() + p.center[0], gy.ravel() + p.center[1]])
        w = patch_cell_integrals(p, centers, h)
        keep = w != 0.0
        w = w[keep]
        w *= p.intensity / np.sum(w)
        pos.append(centers[keep])
        circ.append(w)
        lab.append(np.full(w.size, k, dtype=np.int64))
    field_ = ParticleField(np.concatenate(pos), np.concatenate(circ), np.concatenate(lab), 2.0 * h_max)
    if spec.domain.is_disk and np.any(np.hypot(*field_.positions.T) >= 1.0):
        raise ValidationError("discretized particles leave the unit disk")
    return field_


# ---------------------------------------------------------------------------
# gridded densities


@dataclass(frozen=True)
class Cells:
    """Sparse cell list on the lattice ``anchor + (idx + 1/2) * spacing``."""

    anchor: FloatArray
    spacing: float
    idx: NDArray[np.int64]
    values: FloatArray

    @property
    def centers(self) -> FloatArray:
        return self.anchor + (self.idx + 0.5) * self.spacing

    @property
    def mass(self) -> float:
        return float(self.spacing**2 * np.sum(self.values))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class GriddedDensity:
    """Nonnegative cell averages on a uniform grid (origin is the lower-left corner)."""

    origin: FloatArray
    spacing: float
    values: FloatArray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("values must be a 2D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(2))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def mass(self) -> float:
        return float(self.spacing**2 * np.sum(self.values))

    @property
    def center(self) -> FloatArray:
        return self.origin + 0.5 * self.spacing * np.asarray(self.values.shape, dtype=float)

    def cell_centers(self) -> tuple[FloatArray, FloatArray]:
        nx, ny = self.values.shape
        h = self.spacing
        x = self.origin[0] + (np.arange(nx) + 0.5) * h
        y = self.origin[1] + (np.arange(ny) + 0.5) * h
        return np.meshgrid(x, y, indexing="ij")

    def cells(self) -> Cells:
        ix, iy = np.nonzero(self.values)
        idx = np.column_stack([ix, iy]).astype(np.int64)
        return Cells(self.origin.copy(), self.spacing, idx, self.values[ix, iy].copy())

    def translated(self, shift) -> "GriddedDensity":
        return GriddedDensity(self.origin + np.asarray(shift, dtype=float), self.spacing, self.values)

    def scaled(self, factor: float) -> "GriddedDensity":
        return GriddedDensity(self.origin, self.spacing, self.values * factor)

    def dilated(self, c: float) -> "GriddedDensity":
        """Density x -> rho(x / c) (values unchanged, lengths times c)."""
        return GriddedDensity(self.origin * c, self.spacing * c, self.values)


@dataclass(frozen=True)
class SparseDensity:
    """Nonnegative cell averages stored only where nonzero.

    Used for densities whose pieces are far apart (a dense array spanning them
    would be impractically large). Displacements between cells are always formed
    from integer index differences, so huge separations stay accurate.
    """

    anchor: FloatArray
    spacing: float
    idx: NDArray[np.int64]
    values: FloatArray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        idx = np.ascontiguousarray(self.idx, dtype=np.int64).reshape(-1, 2)
        if idx.shape[0] != v.size:
            raise ValueError("idx and values must have equal length")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=np.float64).reshape(2))

    @property
    def mass(self) -> float:
        return float(self.spacing**2 * np.sum(self.values))

    def cells(self) -> Cells:
        keep = self.values > 0
        return Cells(self.anchor.copy(), self.spacing, self.idx[keep], self.values[keep])

    @classmethod
    def from_grids(cls, grids: Sequence[tuple[GriddedDensity, tuple[int, int]]], spacing: float,
                   anchor=(0.0, 0.0)) -> "SparseDensity":
        """Assemble pieces; each piece is placed with its lower-left cell at the given lattice index."""
        idx, vals = [], []
        for g, (i0, j0) in grids:
            if not math.isclose(g.spacing, spacing, rel_tol=1e-12):
                raise ValueError("all pieces must share the lattice spacing")
            c = g.cells()
            idx.append(c.idx + np.array([i0, j0], dtype=np.int64))
            vals.append(c.values)
        return cls(np.asarray(anchor, float), spacing, np.concatenate(idx), np.concatenate(vals))


Density = GriddedDensity | SparseDensity


def to_cells(density: "Density | Cells") -> Cells:
    if isinstance(density, Cells):
        return density
    return density.cells()


def cells_to_grid(cells: Cells, margin: int = 0) -> GriddedDensity:
    """Densify a cell list onto its bounding box (plus ``margin`` empty cells)."""
    if len(cells) == 0:
        raise GridError("cannot densify an empty cell list")
    lo = cells.idx.min(axis=0) - margin
    hi = cells.idx.max(axis=0) + margin
    shape = tuple((hi - lo + 1).tolist())
    if shape[0] * shape[1] > 50_000_000:
        raise GridError(f"bounding box {shape} too large to densify")
    v = np.zeros(shape)
    rel = cells.idx - lo
    v[rel[:, 0], rel[:, 1]] = cells.values
    return GriddedDensity(cells.anchor + lo * cells.spacing, cells.spacing, v)


def aligned_grid(points: FloatArray, spacing: float, margin_cells: int = 6) -> tuple[FloatArray, tuple[int, int]]:
    """Origin/shape of a grid aligned to multiples of ``spacing`` covering ``points``."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    lo = np.floor(points.min(axis=0) / spacing).astype(np.int64) - margin_cells
    hi = np.floor(points.max(axis=0) / spacing).astype(np.int64) + margin_cells + 1
    return lo * spacing, (int(hi[0] - lo[0]), int(hi[1] - lo[1]))


def deposit(field_: ParticleField, label: int | None, origin, spacing: float,
            shape: tuple[int, int]) -> GriddedDensity:
    """Bilinear (cloud-in-cell) deposition of |circulation| onto a grid.

    ``label=None`` deposits every particle. Mass is conserved exactly up to
    rounding; the grid must cover the particles with a margin of four cells.
    """
    origin = np.asarray(origin, dtype=float)
    h = float(spacing)
    mask = np.ones(len(field_), bool) if label is None else field_.labels == label
    pts = field_.positions[mask]
    w = np.abs(field_.circulations[mask])
    if pts.shape[0] == 0:
        raise GridError(f"no particles carry label {label}")
    nx, ny = shape
    lo = origin + 4 * h
    hi = origin + np.array([nx, ny], dtype=float) * h - 4 * h
    if np.any(pts.min(axis=0) < lo) or np.any(pts.max(axis=0) > hi):
        raise GridError("grid does not cover the particles with a margin of 4 cells")
    s = (pts - origin) / h - 0.5
    i0 = np.floor(s).astype(np.int64)
    f = s - i0
    vals = np.zeros(nx * ny)
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        wy = f[:, 1] if dy else 1.0 - f[:, 1]
        flat = (i0[:, 0] + dx) * ny + (i0[:, 1] + dy)
        vals += np.bincount(flat, weights=w * wx * wy, minlength=nx * ny)
    return GriddedDensity(origin, h, vals.reshape(nx, ny) / (h * h))


def deposit_auto(field_: ParticleField, label: int | None, spacing: float, margin_cells: int = 6) -> GriddedDensity:
    mask = np.ones(len(field_), bool) if label is None else field_.labels == label
    origin, shape = aligned_grid(field_.positions[mask], spacing, margin_cells)
    return deposit(field_, label, origin, spacing, shape)


def rasterize(patches: Iterable[VortexPatchSpec], origin, spacing: float, shape: tuple[int, int]) -> GriddedDensity:
    """Cell averages of sum_k |omega_k| for analytic patch profiles."""
    g = GriddedDensity(np.asarray(origin, float), spacing, np.zeros(shape))
    cx, cy = g.cell_centers()
    centers = np.column_stack([cx.ravel(), cy.ravel()])
    vals = np.zeros(centers.shape[0])
    for p in patches:
        R = p.support_radius + spacing
        near = (np.abs(centers[:, 0] - p.center[0]) <= R) & (np.abs(centers[:, 1] - p.center[1]) <= R)
        vals[near] += np.abs(patch_cell_integrals(p, centers[near], spacing))
    return GriddedDensity(g.origin, spacing, vals.reshape(shape) / spacing**2)


def rasterize_auto(patches: Sequence[VortexPatchSpec], spacing: float, margin_cells: int = 4) -> GriddedDensity:
    pts = []
    for p in patches:
        r = p.support_radius
        pts += [(p.center[0] - r, p.center[1] - r), (p.center[0] + r, p.center[1] + r)]
    origin, shape = aligned_grid(np.array(pts), spacing, margin_cells)
    return rasterize(patches, origin, spacing, shape)


# ---------------------------------------------------------------------------
# JSON config


def _profile_from_dict(d: dict[str, Any] | str | None) -> Profile:
    if d is None:
        return Profile()
    if isinstance(d, str):
        return Profile(kind=d)
    return Profile(kind=d.get("kind", "UniformDisk"), amplitude=float(d.get("amplitude", 0.0)),
                   mode=int(d.get("mode", 2)), sign=d.get("sign"))


def initial_data_from_dict(d: dict[str, Any]) -> InitialDataSpec:
    try:
        patches = tuple(
            VortexPatchSpec(
                center=(float(p["center"][0]), float(p["center"][1])),
                intensity=float(p["intensity"]),
                epsilon=float(p["epsilon"]),
                profile=_profile_from_dict(p.get("profile")),
                support_radius_factor=float(p.get("support_radius_factor", 1.0)),
            )
            for p in d["patches"]
        )
        return InitialDataSpec(
            domain=DomainSpec.parse(d.get("domain", "FullPlane")),
            patches=patches,
            separation_b=float(d["separation_b"]),
            beta=float(d.get("beta", 4.0)),
            n3=float(d.get("n3", 1.0)),
            n1=float(d.get("n1", 1.0)),
            n2=float(d.get("n2", 10.0)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed initial data: missing or invalid field {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"malformed initial data: {exc}") from exc


def initial_data_to_dict(spec: InitialDataSpec) -> dict[str, Any]:
    return {
        "domain": spec.domain.kind.value,
        "separation_b": spec.separation_b,
        "beta": spec.beta,
        "n3": spec.n3,
        "n1": spec.n1,
        "n2": spec.n2,
        "patches": [
            {
                "center": list(p.center),
                "intensity": p.intensity,
                "epsilon": p.epsilon,
                "support_radius_factor": p.support_radius_factor,
                "profile": {"kind": p.profile.kind, "amplitude": p.profile.amplitude,
                            "mode": p.profile.mode, "sign": p.profile.sign},
            }
            for p in spec.patches
        ],
    }


def load_initial_data(path: str | Path) -> InitialDataSpec:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return initial_data_from_dict(d.get("initial_data", d))
