"""Barnes-Hut treecode for the singular part of the blob velocity.

The tree is a quadtree over the sources with leaves of at most ``LEAF_SIZE``
points. A cell of side ``s`` whose |circulation|-weighted centroid ``c`` lies at
distance ``r`` from the target is accepted when ``s / r < theta`` and replaced
by its complex multipole expansion about ``c`` truncated at ``order``
(``order=0`` is the classical monopole approximation); otherwise its children
(or, for a leaf, its points) are visited. The Gaussian core correction is
short-ranged and stays direct.
"""

from __future__ import annotations

import numba
import numpy as np

from ._kernels import INV_TWO_PI

LEAF_SIZE = 8
#: multipole order of the far-cell expansion (0 = monopole)
DEFAULT_ORDER = 8


@numba.njit(cache=True)
def build_tree(x, y, g):
    n = x.size
    perm = np.arange(n)
    max_nodes = 4 * n + 16
    start = np.zeros(max_nodes, np.int64)
    end = np.zeros(max_nodes, np.int64)
    cxs = np.zeros(max_nodes)
    cys = np.zeros(max_nodes)
    half = np.zeros(max_nodes)
    child = -np.ones((max_nodes, 4), np.int64)
    gsum = np.zeros(max_nodes)
    mx = np.zeros(max_nodes)
    my = np.zeros(max_nodes)
    x0 = x.min()
    x1 = x.max()
    y0 = y.min()
    y1 = y.max()
    cxs[0] = 0.5 * (x0 + x1)
    cys[0] = 0.5 * (y0 + y1)
    half[0] = 0.5 * max(x1 - x0, y1 - y0) * (1.0 + 1e-12) + 1e-300
    start[0] = 0
    end[0] = n
    n_nodes = 1
    stack = np.empty(max_nodes, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    tmp = np.empty(n, np.int64)
    while sp > 0:
        sp -= 1
        k = stack[sp]
        s, e = start[k], end[k]
        if e - s <= LEAF_SIZE or half[k] < 1e-14 * (abs(cxs[k]) + abs(cys[k]) + 1e-300):
            continue
        counts = np.zeros(4, np.int64)
        for t in range(s, e):
            p = perm[t]
            q = (1 if x[p] >= cxs[k] else 0) + (2 if y[p] >= cys[k] else 0)
            counts[q] += 1
        offs = np.zeros(5, np.int64)
        for q in range(4):
            offs[q + 1] = offs[q] + counts[q]
        fill = offs[:4].copy()
        for t in range(s, e):
            p = perm[t]
            q = (1 if x[p] >= cxs[k] else 0) + (2 if y[p] >= cys[k] else 0)
            tmp[s + fill[q]] = p
            fill[q] += 1
        for t in range(s, e):
            perm[t] = tmp[t]
        h2 = 0.5 * half[k]
        for q in range(4):
            if counts[q] == 0:
                continue
            c = n_nodes
            n_nodes += 1
            start[c] = s + offs[q]
            end[c] = s + offs[q + 1]
            cxs[c] = cxs[k] + (h2 if q & 1 else -h2)
            cys[c] = cys[k] + (h2 if q & 2 else -h2)
            half[c] = h2
            child[k, q] = c
            stack[sp] = c
            sp += 1
    for k in range(n_nodes):
        a = 0.0
        w = 0.0
        sx = 0.0
        sy = 0.0
        for t in range(start[k], end[k]):
            p = perm[t]
            a += g[p]
            w += abs(g[p])
            sx += abs(g[p]) * x[p]
            sy += abs(g[p]) * y[p]
        gsum[k] = a
        if w > 0:
            mx[k] = sx / w
            my[k] = sy / w
        else:
            mx[k] = cxs[k]
            my[k] = cys[k]
    return perm, start[:n_nodes], end[:n_nodes], half[:n_nodes], child[:n_nodes], gsum[:n_nodes], \
        mx[:n_nodes], my[:n_nodes]


@numba.njit(cache=True)
def multipole_moments(x, y, g, perm, start, end, mx, my, order):
    """a_k = sum_j g_j (z_j - c)^k for k = 0..order about each node centroid c."""
    n_nodes = start.size
    re = np.zeros((n_nodes, order + 1))
    im = np.zeros((n_nodes, order + 1))
    for k in range(n_nodes):
        for t in range(start[k], end[k]):
            p = perm[t]
            dx = x[p] - mx[k]
            dy = y[p] - my[k]
            pr = g[p]
            pi_ = 0.0
            for m in range(order + 1):
                re[k, m] += pr
                im[k, m] += pi_
                pr, pi_ = pr * dx - pi_ * dy, pr * dy + pi_ * dx
    return re, im


@numba.njit(parallel=True, cache=True)
def _evaluate(tx, ty, x, y, g, perm, start, end, half, child, gsum, mx, my, re, im, theta, ux, uy):
    for i in numba.prange(tx.size):
        stack = np.empty(64 * 4, np.int64)
        sp = 0
        stack[0] = 0
        sp = 1
        ax = 0.0
        ay = 0.0
        xi = tx[i]
        yi = ty[i]
        while sp > 0:
            sp -= 1
            k = stack[sp]
            dx = xi - mx[k]
            dy = yi - my[k]
            r2 = dx * dx + dy * dy
            size = 2.0 * half[k]
            if size * size < theta * theta * r2:
                # u_x - i u_y = (1/2pi i) sum_m a_m / w^(m+1), w = z - c
                wr = dx / r2
                wi = -dy / r2
                pr = wr
                pi_ = wi
                sr = 0.0
                si = 0.0
                for m in range(re.shape[1]):
                    sr += re[k, m] * pr - im[k, m] * pi_
                    si += re[k, m] * pi_ + im[k, m] * pr
                    pr, pi_ = pr * wr - pi_ * wi, pr * wi + pi_ * wr
                # divide by i: (sr + i si)/i = si - i sr, so u_x = si, u_y = sr
                ax += si
                ay += sr
                continue
            if child[k, 0] < 0 and child[k, 1] < 0 and child[k, 2] < 0 and child[k, 3] < 0:
                for t in range(start[k], end[k]):
                    p = perm[t]
                    ex = xi - x[p]
                    ey = yi - y[p]
                    f = g[p] / (ex * ex + ey * ey + 1e-300)
                    ax -= f * ey
                    ay += f * ex
                continue
            for q in range(4):
                c = child[k, q]
                if c >= 0:
                    stack[sp] = c
                    sp += 1
        ux[i] += ax * INV_TWO_PI
        uy[i] += ay * INV_TWO_PI


def treecode_far_velocity(tx, ty, sx, sy, g, theta, ux, uy, order: int = DEFAULT_ORDER) -> None:
    """Add the Barnes-Hut approximation of the singular velocity sum.

    ``order=0`` is the classical monopole treecode.
    """
    if not 0 < theta < 1.5:
        raise ValueError("theta must lie in (0, 1.5)")
    if order < 0:
        raise ValueError("order must be nonnegative")
    sx, sy, g = np.ascontiguousarray(sx), np.ascontiguousarray(sy), np.ascontiguousarray(g)
    tree = build_tree(sx, sy, g)
    perm, start, end, half, child, gsum, mx, my = tree
    re, im = multipole_moments(sx, sy, g, perm, start, end, mx, my, int(order))
    _evaluate(tx, ty, sx, sy, g, *tree, re, im, float(theta), ux, uy)
