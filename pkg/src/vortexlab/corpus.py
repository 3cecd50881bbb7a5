"""Seeded random density families used by the Riesz and certificate studies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GriddedDensity, SparseDensity, aligned_grid

FAMILIES = ("bumps", "near_radial", "two_component")


@dataclass(frozen=True)
class Bump:
    center: tuple[float, float]
    radius: float
    height: float
    power: int  # 0 = indicator, k >= 1 = (1 - r^2/R^2)^k
    aspect: float = 1.0
    angle: float = 0.0
    mode: int = 0
    amplitude: float = 0.0


def _bump_values(b: Bump, X: np.ndarray, Y: np.ndarray, h: float) -> np.ndarray:
    """Cell averages of a bump, 3x3 midpoint sub-sampling per cell."""
    out = np.zeros(X.shape)
    offs = (np.arange(3) - 1.0) * h / 3.0
    ca, sa = math.cos(b.angle), math.sin(b.angle)
    for ox in offs:
        for oy in offs:
            dx = X + ox - b.center[0]
            dy = Y + oy - b.center[1]
            u = (ca * dx + sa * dy) / b.aspect
            v = (-sa * dx + ca * dy) * b.aspect
            r = np.hypot(u, v)
            R = b.radius
            if b.mode:
                R = b.radius * (1.0 + b.amplitude * np.cos(b.mode * np.arctan2(v, u)))
            s2 = (r / R) ** 2
            if b.power == 0:
                out += np.where(s2 < 1.0, b.height, 0.0)
            else:
                out += np.where(s2 < 1.0, b.height * np.clip(1.0 - s2, 0.0, None) ** b.power, 0.0)
    return out / 9.0


def render(bumps: list[Bump], h: float, margin_cells: int = 3) -> GriddedDensity:
    pts = []
    for b in bumps:
        r = b.radius * (1.0 + abs(b.amplitude)) * max(b.aspect, 1.0 / b.aspect)
        pts += [(b.center[0] - r, b.center[1] - r), (b.center[0] + r, b.center[1] + r)]
    origin, shape = aligned_grid(np.array(pts), h, margin_cells)
    g = GriddedDensity(origin, h, np.zeros(shape))
    X, Y = g.cell_centers()
    vals = sum(_bump_values(b, X, Y, h) for b in bumps)
    return GriddedDensity(origin, h, vals)


def random_bumps(rng: np.random.Generator, h: float = 0.025) -> GriddedDensity:
    """Mixture of 1-4 bumps with random centres, radii, heights and profiles."""
    k = int(rng.integers(1, 5))
    bumps = [
        Bump(center=(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))),
             radius=float(rng.uniform(0.2, 0.6)), height=float(rng.uniform(0.3, 1.0)),
             power=int(rng.integers(0, 4)), aspect=float(rng.uniform(0.7, 1.4)),
             angle=float(rng.uniform(0, math.pi)))
        for _ in range(k)
    ]
    return render(bumps, h)


def random_near_radial(rng: np.random.Generator, h: float = 0.025) -> GriddedDensity:
    """One bump with a small boundary perturbation or mild ellipticity."""
    b = Bump(center=(float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5))), radius=float(rng.uniform(0.5, 0.8)),
             height=1.0, power=int(rng.integers(0, 4)), aspect=float(rng.uniform(0.85, 1.2)),
             angle=float(rng.uniform(0, math.pi)), mode=int(rng.integers(2, 6)),
             amplitude=float(rng.uniform(0.0, 0.25)))
    return render([b], h)


def random_two_component(rng: np.random.Generator, h: float = 0.025) -> GriddedDensity | SparseDensity:
    """A main bump plus a small satellite at distance 3-40 main radii."""
    R = float(rng.uniform(0.5, 0.8))
    main = Bump((0.0, 0.0), R, 1.0, int(rng.integers(0, 3)))
    r_small = float(rng.uniform(0.08, 0.25)) * R
    dist = float(np.exp(rng.uniform(math.log(3.0), math.log(40.0)))) * R
    ang = float(rng.uniform(0, 2 * math.pi))
    sat = Bump((0.0, 0.0), r_small, float(rng.uniform(0.3, 1.0)), int(rng.integers(0, 3)))
    g_main = render([main], h)
    g_sat = render([sat], h)
    shift = np.round(np.array([math.cos(ang), math.sin(ang)]) * dist / h).astype(np.int64)
    i_main = np.round(g_main.origin / h).astype(np.int64)
    i_sat = np.round(g_sat.origin / h).astype(np.int64) + shift
    return SparseDensity.from_grids([(g_main, tuple(i_main)), (g_sat, tuple(i_sat))], h)


def two_ball(s: float, h: float) -> SparseDensity:
    """rho = 1 on B_1(0) union B_s(s^-10 e_1), exact cell coverage."""
    from .core import VortexPatchSpec, rasterize_auto

    big = rasterize_auto([VortexPatchSpec((0.0, 0.0), math.pi, 1.0)], h)
    small = rasterize_auto([VortexPatchSpec((0.0, 0.0), math.pi * s * s, s)], h)
    k = int(round(s**-10 / h))
    ib = np.round(big.origin / h).astype(np.int64)
    i_s = np.round(small.origin / h).astype(np.int64)
    return SparseDensity.from_grids([(big, tuple(ib)), (small, (int(i_s[0]) + k, int(i_s[1])))], h)


def sample(family: str, seed: int, h: float = 0.025):
    rng = np.random.default_rng(seed)
    if family == "bumps":
        return random_bumps(rng, h)
    if family == "near_radial":
        return random_near_radial(rng, h)
    if family == "two_component":
        return random_two_component(rng, h)
    raise ValueError(f"unknown family {family!r}")


def certificate_corpus(seeds: range | list[int], h: float = 0.035) -> list[tuple[str, int, object]]:
    """Alternating near-radial and two-component densities for the given seeds."""
    out = []
    for k, seed in enumerate(seeds):
        fam = "near_radial" if k % 2 == 0 else "two_component"
        out.append((fam, int(seed), sample(fam, int(seed), h)))
    return out
