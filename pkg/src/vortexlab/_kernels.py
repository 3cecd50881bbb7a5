"""Compiled pair-sum kernels (numba).

Every kernel accumulates per target in a fixed source order, so results do not
depend on the thread count.
"""

from __future__ import annotations

import math
import warnings

import numba
import numpy as np

# the bundled TBB is too old; numba falls back to another threading layer anyway
warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)

INV_TWO_PI = 1.0 / (2.0 * math.pi)
#: Gaussian corrections are dropped beyond this many core radii (exp(-6.1^2) < 1e-16)
NEAR_CUTOFF = 6.1
#: E1(rho) < 1e-17 for rho > 36
ENERGY_RHO_CUTOFF = 36.0


@numba.njit(parallel=True, fastmath=True, cache=True)
def far_velocity(tx, ty, sx, sy, g, ux, uy):
    """Add the singular point-vortex velocity sum_j g_j perp(t - s_j)/(2pi|t - s_j|^2).

    Coincident pairs contribute exactly zero (the numerator vanishes).
    """
    n = tx.size
    m = sx.size
    for i in numba.prange(n):
        ax = 0.0
        ay = 0.0
        xi = tx[i]
        yi = ty[i]
        for j in range(m):
            dx = xi - sx[j]
            dy = yi - sy[j]
            f = g[j] / (dx * dx + dy * dy + 1e-300)
            ax -= f * dy
            ay += f * dx
        ux[i] += ax * INV_TWO_PI
        uy[i] += ay * INV_TWO_PI


@numba.njit(cache=True)
def _bin_sources(sx, sy, cell, max_cells):
    x0 = sx.min()
    y0 = sy.min()
    span = max(sx.max() - x0, sy.max() - y0)
    # coarsen bins when sources are spread thinly so memory stays O(m)
    while (int(span / cell) + 1) ** 2 > max_cells:
        cell *= 2.0
    nbx = int((sx.max() - x0) / cell) + 1
    nby = int((sy.max() - y0) / cell) + 1
    m = sx.size
    b = np.empty(m, np.int64)
    for j in range(m):
        bx = min(int((sx[j] - x0) / cell), nbx - 1)
        by = min(int((sy[j] - y0) / cell), nby - 1)
        b[j] = by * nbx + bx
    order = np.argsort(b, kind="mergesort")
    start = np.zeros(nbx * nby + 1, np.int64)
    for j in range(m):
        start[b[j] + 1] += 1
    for k in range(nbx * nby):
        start[k + 1] += start[k]
    return x0, y0, cell, nbx, nby, order, start


@numba.njit(parallel=True, cache=True)
def near_correction(tx, ty, sx, sy, g, delta, ux, uy):
    """Add the Gaussian core correction -sum_j g_j perp(d) exp(-|d|^2/delta^2)/(2pi|d|^2).

    Together with :func:`far_velocity` this yields the regularized kernel
    perp(d)/(2pi|d|^2) * (1 - exp(-|d|^2/delta^2)).
    """
    cut = NEAR_CUTOFF * delta
    x0, y0, cell, nbx, nby, order, start = _bin_sources(sx, sy, cut, 4 * sx.size + 1024)
    ssx = sx[order]
    ssy = sy[order]
    sg = g[order]
    inv = 1.0 / (delta * delta)
    cut2 = cut * cut
    for i in numba.prange(tx.size):
        xi = tx[i]
        yi = ty[i]
        bx = int(math.floor((xi - x0) / cell))
        by = int(math.floor((yi - y0) / cell))
        ax = 0.0
        ay = 0.0
        for yy in range(max(by - 1, 0), min(by + 2, nby)):
            lo = max(bx - 1, 0)
            hi = min(bx + 2, nbx)
            if lo >= hi:
                continue
            for j in range(start[yy * nbx + lo], start[yy * nbx + hi]):
                dx = xi - ssx[j]
                dy = yi - ssy[j]
                r2 = dx * dx + dy * dy
                if r2 < cut2 and r2 > 0.0:
                    f = sg[j] * math.exp(-r2 * inv) / r2
                    ax += f * dy
                    ay -= f * dx
        ux[i] += ax * INV_TWO_PI
        uy[i] += ay * INV_TWO_PI


@numba.njit(cache=True)
def near_correction_self(x, y, g, delta, ux, uy):
    """:func:`near_correction` for targets == sources, visiting each pair once.

    Bins are swept in row-major order and each pair is found from its lower
    bin, so the accumulation order is fixed.
    """
    cut = NEAR_CUTOFF * delta
    x0, y0, cell, nbx, nby, order, start = _bin_sources(x, y, cut, 4 * x.size + 1024)
    sx = x[order]
    sy = y[order]
    sg = g[order]
    n = x.size
    vx = np.zeros(n)
    vy = np.zeros(n)
    inv = 1.0 / (delta * delta)
    cut2 = cut * cut
    for by in range(nby):
        for bx in range(nbx):
            b = by * nbx + bx
            for i in range(start[b], start[b + 1]):
                xi = sx[i]
                yi = sy[i]
                gi = sg[i]
                ax = 0.0
                ay = 0.0
                for part in range(3):
                    if part == 0:
                        # rest of the own bin
                        lo = i + 1
                        hi = start[b + 1]
                    elif part == 1:
                        if bx + 1 >= nbx:
                            continue
                        lo = start[b + 1]
                        hi = start[b + 2]
                    else:
                        if by + 1 >= nby:
                            continue
                        lo = start[(by + 1) * nbx + max(bx - 1, 0)]
                        hi = start[(by + 1) * nbx + min(bx + 2, nbx)]
                    for j in range(lo, hi):
                        dx = xi - sx[j]
                        dy = yi - sy[j]
                        r2 = dx * dx + dy * dy
                        if r2 < cut2 and r2 > 0.0:
                            f = math.exp(-r2 * inv) / r2
                            ax += sg[j] * f * dy
                            ay -= sg[j] * f * dx
                            vx[j] -= gi * f * dy
                            vy[j] += gi * f * dx
                vx[i] += ax
                vy[i] += ay
    for i in range(n):
        ux[order[i]] += vx[i] * INV_TWO_PI
        uy[order[i]] += vy[i] * INV_TWO_PI


@numba.njit(parallel=True, cache=True)
def near_vorticity(tx, ty, sx, sy, g, delta, out):
    """Regularized vorticity sum_j g_j exp(-|d|^2/delta^2)/(pi delta^2) at the targets."""
    cut = NEAR_CUTOFF * delta
    x0, y0, cell, nbx, nby, order, start = _bin_sources(sx, sy, cut, 4 * sx.size + 1024)
    ssx = sx[order]
    ssy = sy[order]
    sg = g[order]
    inv = 1.0 / (delta * delta)
    for i in numba.prange(tx.size):
        bx = int(math.floor((tx[i] - x0) / cell))
        by = int(math.floor((ty[i] - y0) / cell))
        acc = 0.0
        for yy in range(max(by - 1, 0), min(by + 2, nby)):
            lo = max(bx - 1, 0)
            hi = min(bx + 2, nbx)
            if lo >= hi:
                continue
            for j in range(start[yy * nbx + lo], start[yy * nbx + hi]):
                dx = tx[i] - ssx[j]
                dy = ty[i] - ssy[j]
                acc += sg[j] * math.exp(-(dx * dx + dy * dy) * inv)
        out[i] = acc * inv / math.pi


@numba.njit(parallel=True, cache=True)
def direct_blob_velocity(tx, ty, sx, sy, g, delta, ux, uy):
    """Reference O(nm) sum with the regularized kernel evaluated in one piece."""
    inv = 1.0 / (delta * delta)
    for i in numba.prange(tx.size):
        ax = 0.0
        ay = 0.0
        for j in range(sx.size):
            dx = tx[i] - sx[j]
            dy = ty[i] - sy[j]
            r2 = dx * dx + dy * dy
            if r2 > 0.0:
                f = g[j] * (-math.expm1(-r2 * inv)) / r2
                ax -= f * dy
                ay += f * dx
        ux[i] += ax * INV_TWO_PI
        uy[i] += ay * INV_TWO_PI


@numba.njit(parallel=True, fastmath=True, cache=True)
def log_pair_rows(x, y, g):
    """Row sums s_p = g_p * sum_{q != p} g_q log|x_p - x_q|^2."""
    n = x.size
    out = np.empty(n)
    for p in numba.prange(n):
        acc = 0.0
        for q in range(n):
            dx = x[p] - x[q]
            dy = y[p] - y[q]
            r2 = dx * dx + dy * dy
            # the q == p term is log(1) = 0
            acc += g[q] * math.log(r2 + (1.0 if q == p else 0.0))
        out[p] = g[p] * acc
    return out


@numba.njit(parallel=True, fastmath=True, cache=True)
def log_cross_rows(x1, y1, g1, x2, y2, g2):
    """Row sums s_p = g1_p * sum_q g2_q log|x1_p - x2_q|^2 (sets assumed disjoint)."""
    n = x1.size
    out = np.empty(n)
    for p in numba.prange(n):
        acc = 0.0
        for q in range(x2.size):
            dx = x1[p] - x2[q]
            dy = y1[p] - y2[q]
            acc += g2[q] * math.log(dx * dx + dy * dy)
        out[p] = g1[p] * acc
    return out


@numba.njit(parallel=True, fastmath=True, cache=True)
def image_pair_rows(x, y, g):
    """Row sums s_p = g_p * sum_q g_q log(|x_p|^2|x_q|^2 - 2 x_p.x_q + 1) (disk reflection)."""
    n = x.size
    out = np.empty(n)
    for p in numba.prange(n):
        acc = 0.0
        rp = x[p] * x[p] + y[p] * y[p]
        for q in range(n):
            rq = x[q] * x[q] + y[q] * y[q]
            acc += g[q] * math.log(rp * rq - 2.0 * (x[p] * x[q] + y[p] * y[q]) + 1.0)
        out[p] = g[p] * acc
    return out


@numba.njit(cache=True)
def near_pairs_rho(x, y, g, delta):
    """All pairs p < q with |x_p - x_q|^2/delta^2 < ENERGY_RHO_CUTOFF.

    Returns (rho, g_p*g_q) arrays for evaluating the exponential-integral part
    of the Gaussian blob interaction energy.
    """
    cut = math.sqrt(ENERGY_RHO_CUTOFF) * delta
    x0, y0, cell, nbx, nby, order, start = _bin_sources(x, y, cut, 4 * x.size + 1024)
    inv = 1.0 / (delta * delta)
    cap = 1024
    rho = np.empty(cap)
    w = np.empty(cap)
    k = 0
    for p in range(x.size):
        bx = int(math.floor((x[p] - x0) / cell))
        by = int(math.floor((y[p] - y0) / cell))
        for yy in range(max(by - 1, 0), min(by + 2, nby)):
            lo = max(bx - 1, 0)
            hi = min(bx + 2, nbx)
            if lo >= hi:
                continue
            for jj in range(start[yy * nbx + lo], start[yy * nbx + hi]):
                q = order[jj]
                if q <= p:
                    continue
                dx = x[p] - x[q]
                dy = y[p] - y[q]
                r = (dx * dx + dy * dy) * inv
                if r < ENERGY_RHO_CUTOFF:
                    if k == cap:
                        cap *= 2
                        rho2 = np.empty(cap)
                        w2 = np.empty(cap)
                        rho2[:k] = rho[:k]
                        w2[:k] = w[:k]
                        rho = rho2
                        w = w2
                    rho[k] = r
                    w[k] = g[p] * g[q]
                    k += 1
    return rho[:k], w[:k]


@numba.njit(parallel=True, fastmath=True, cache=True)
def lattice_cross_sum(i1, j1, v1, i2, j2, v2):
    """sum_{a,b} v1_a v2_b log|idx1_a - idx2_b| in lattice units, index differences exact."""
    n = v1.size
    out = np.empty(n)
    for a in numba.prange(n):
        acc = 0.0
        for b in range(v2.size):
            di = float(i1[a] - i2[b])
            dj = float(j1[a] - j2[b])
            acc += v2[b] * math.log(di * di + dj * dj)
        out[a] = v1[a] * acc
    return 0.5 * np.sum(out)


@numba.njit(parallel=True, fastmath=True, cache=True)
def lattice_cross_power(i1, j1, v1, i2, j2, v2, alpha):
    """sum_{a,b} v1_a v2_b |idx1_a - idx2_b|^alpha in lattice units."""
    n = v1.size
    out = np.empty(n)
    half = 0.5 * alpha
    for a in numba.prange(n):
        acc = 0.0
        for b in range(v2.size):
            di = float(i1[a] - i2[b])
            dj = float(j1[a] - j2[b])
            acc += v2[b] * (di * di + dj * dj) ** half
        out[a] = v1[a] * acc
    return np.sum(out)


def set_threads(n: int | None) -> None:
    if n is not None and n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
