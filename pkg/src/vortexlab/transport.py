"""Discrete Wasserstein distances between weighted point clouds.

``wasserstein_exact`` solves the transportation problem to optimality with a
network-simplex solver; ``wasserstein_entropic`` is a log-domain Sinkhorn
approximation for larger clouds. Both equalize total masses by rescaling the
second cloud, and both report ``W_p`` for the common total mass (so ``W_p^p``
is the optimal cost of moving that mass, not a probability cost).
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.special
from numpy.typing import ArrayLike, NDArray

from .core import Cells, GriddedDensity, SparseDensity, to_cells
from .errors import ConvergenceError

for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402  (backend switches must be set first)

FloatArray = NDArray[np.float64]

MAX_EXACT_POINTS = 4000
MASS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class WeightedPointCloud:
    points: FloatArray
    weights: FloatArray
    #: edge length of the lattice blocks the points represent (0 when not from a grid)
    resolution: float = 0.0

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 2)
        w = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        if pts.shape[0] != w.size:
            raise ValueError("points and weights must have equal length")
        if w.size == 0 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return self.weights.size

    def translated(self, v) -> "WeightedPointCloud":
        return WeightedPointCloud(self.points + np.asarray(v, dtype=float), self.weights, self.resolution)

    def dilated(self, c: float) -> "WeightedPointCloud":
        return WeightedPointCloud(self.points * c, self.weights, self.resolution * abs(c))


def quantize(density: "GriddedDensity | SparseDensity | Cells", max_points: int) -> WeightedPointCloud:
    """Point cloud with one point per positive cell, coarsened by 2x2 blocks if needed.

    Each coarsening pass groups cells by ``index // 2`` and replaces every group
    by its mass-weighted centroid; passes repeat until at most ``max_points``
    remain. Total weight is preserved exactly (up to summation rounding).
    """
    if max_points < 1:
        raise ValueError("max_points must be positive")
    cells = to_cells(density)
    keep = cells.values > 0
    if not np.any(keep):
        raise ValueError("density has zero mass")
    h = cells.spacing
    idx = cells.idx[keep]
    w = cells.values[keep] * h * h
    pts = cells.anchor + (idx + 0.5) * h
    block = h
    while w.size > max_points:
        block *= 2.0
        idx = idx // 2
        key, inv = np.unique(idx, axis=0, return_inverse=True)
        inv = inv.ravel()
        nw = np.bincount(inv, weights=w)
        px = np.bincount(inv, weights=w * pts[:, 0]) / nw
        py = np.bincount(inv, weights=w * pts[:, 1]) / nw
        idx, w, pts = key, nw, np.column_stack([px, py])
    return WeightedPointCloud(pts, w, block)


def _cost(mu: WeightedPointCloud, nu: WeightedPointCloud, p: int) -> FloatArray:
    d = np.sqrt(np.sum((mu.points[:, None, :] - nu.points[None, :, :]) ** 2, axis=-1))
    return d if p == 1 else d**p


def _check(mu: WeightedPointCloud, nu: WeightedPointCloud, p) -> float:
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    t_mu, t_nu = mu.total, nu.total
    if abs(t_mu - t_nu) > MASS_TOLERANCE * max(t_mu, t_nu):
        raise ValueError(f"total masses differ: {t_mu!r} vs {t_nu!r}")
    return t_mu


def wasserstein_exact(mu: WeightedPointCloud, nu: WeightedPointCloud, p: int = 2) -> float:
    """Exact W_p by network simplex; weights are rescaled to the total of ``mu``."""
    total = _check(mu, nu, p)
    if len(mu) > MAX_EXACT_POINTS or len(nu) > MAX_EXACT_POINTS:
        raise ValueError(f"exact solver limited to {MAX_EXACT_POINTS} points per cloud; "
                         "use wasserstein_entropic for larger clouds")
    a = mu.weights / mu.total
    b = nu.weights / nu.total
    M = _cost(mu, nu, p)
    cost, log = ot.emd2(a, b, M, numItermax=10_000_000, log=True, check_marginals=False)
    if log.get("warning"):
        raise ConvergenceError(f"network simplex did not reach optimality: {log['warning']}", float("nan"))
    return float(max(cost, 0.0) * total) ** (1.0 / p)


def wasserstein_bruteforce(mu: WeightedPointCloud, nu: WeightedPointCloud, p: int = 2) -> float:
    """Reference solver independent of the network simplex.

    Equal-size clouds with uniform weights: minimum over all assignments (n <= 8).
    Otherwise the transportation linear program is solved with HiGHS.
    """
    total = _check(mu, nu, p)
    M = _cost(mu, nu, p)
    n, m = M.shape
    uniform = n == m and np.allclose(mu.weights, mu.weights[0], rtol=1e-14) and \
        np.allclose(nu.weights, nu.weights[0], rtol=1e-14)
    if uniform:
        if n > 8:
            raise ValueError("assignment enumeration limited to 8 points")
        rows = np.arange(n)
        best = min(float(M[rows, list(perm)].sum()) for perm in itertools.permutations(range(n)))
        return (best * total / n) ** (1.0 / p)
    a = mu.weights / mu.total
    b = nu.weights / nu.total
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = scipy.optimize.linprog(M.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
                                 method="highs")
    if res.status != 0:
        raise ConvergenceError(f"linear program failed: {res.message}", float("nan"))
    return float(max(res.fun, 0.0) * total) ** (1.0 / p)


def _anneal(M: FloatArray, reg: float) -> list[float]:
    top = max(float(M.max()), reg)
    n_stages = max(1, int(math.ceil(math.log(top / reg) / math.log(2.0))))
    return [top / 2.0**k for k in range(n_stages)] + [reg]


def _sinkhorn_cost(a: FloatArray, b: FloatArray, M: FloatArray, reg: float, tol: float,
                   max_iter: int) -> float:
    """Transport cost <pi, M> of the entropic plan.

    Log-domain alternating scaling warm-started through a geometric sequence
    of regularizations ending at ``reg`` (annealing keeps the iteration count
    moderate for small ``reg``). Converged when the L1 marginal error of the
    plan is below ``tol``.
    """
    la, lb = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    err = math.inf
    used = 0
    for r in _anneal(M, reg):
        K = -M / r
        last = r == reg
        for it in range(max_iter - used):
            f = r * (la - scipy.special.logsumexp(K + g[None, :] / r, axis=1))
            g = r * (lb - scipy.special.logsumexp(K + f[:, None] / r, axis=0))
            if not last or it % 10 == 9:
                logpi = K + f[:, None] / r + g[None, :] / r
                err = float(np.sum(np.abs(np.exp(scipy.special.logsumexp(logpi, axis=1)) - a)))
                if err < (tol if last else 1e-2):
                    used += it + 1
                    break
        else:
            raise ConvergenceError(
                f"Sinkhorn did not converge in {max_iter} iterations (residual {err:.3e})", err)
    pi = np.exp(-M / reg + f[:, None] / reg + g[None, :] / reg)
    return float(np.sum(pi * M))


def _sinkhorn_self_cost(a: FloatArray, M: FloatArray, reg: float, tol: float, max_iter: int) -> float:
    """<pi, M> for the entropic self-transport of ``a`` (symmetric averaged iteration)."""
    la = np.log(a)
    f = np.zeros(a.size)
    err = math.inf
    for r in _anneal(M, reg):
        K = -M / r
        last = r == reg
        for _ in range(max_iter):
            f_new = 0.5 * (f + r * (la - scipy.special.logsumexp(K + f[None, :] / r, axis=1)))
            err = float(np.max(np.abs(f_new - f))) / r
            f = f_new
            if err < (tol if last else 1e-2):
                break
        else:
            raise ConvergenceError(
                f"symmetric Sinkhorn did not converge in {max_iter} iterations (residual {err:.3e})", err)
    pi = np.exp(-M / reg + f[:, None] / reg + f[None, :] / reg)
    return float(np.sum(pi * M))


def wasserstein_entropic(mu: WeightedPointCloud, nu: WeightedPointCloud, p: int = 2, reg: float = 1e-2,
                         debias: bool = True, tol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Entropic approximation of W_p.

    Returns ``(T * S)^(1/p)`` where ``T`` is the common mass and ``S`` the
    transport cost of the entropic plan between the normalized clouds; with
    ``debias`` the self-transport costs are subtracted,
    ``S = C(mu,nu) - (C(mu,mu) + C(nu,nu))/2``, which vanishes for ``mu = nu``.
    The plain plan cost overestimates the exact W_p^p by O(reg log(support
    size)); the debiased value has an error of the same order but no fixed
    sign (it usually approaches the exact value from below).
    """
    if not reg > 0:
        raise ValueError("reg must be positive")
    total = _check(mu, nu, p)
    a = mu.weights / mu.total
    b = nu.weights / nu.total
    c = _sinkhorn_cost(a, b, _cost(mu, nu, p), reg, tol, max_iter)
    if debias:
        c -= 0.5 * (_sinkhorn_self_cost(a, _cost(mu, mu, p), reg, tol, max_iter)
                    + _sinkhorn_self_cost(b, _cost(nu, nu, p), reg, tol, max_iter))
    return float(max(c, 0.0) * total) ** (1.0 / p)
