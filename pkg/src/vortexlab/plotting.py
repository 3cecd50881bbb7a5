"""Figures for the CLI report path (PNG, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # no timestamps in the file, so reruns write identical bytes
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _positive(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.where(v > 0, v, np.nan)


def simulation_figures(table: dict[str, np.ndarray], n_patches: int, out_dir: str | Path) -> list[Path]:
    """Centre tracks, patch diameters/spread, defect vs surrogate, velocity residuals."""
    out = Path(out_dir)
    paths = []
    t = table["t"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for i in range(n_patches):
            ax.plot(table[f"x_{i}"], table[f"y_{i}"], lw=1, label=f"patch {i}")
            ax.plot(table[f"x_{i}"][:1], table[f"y_{i}"][:1], "ko", ms=3)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title("patch centres")
        if n_patches <= 8:
            ax.legend()
        paths.append(_save(fig, out / "centers.png"))

        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        for i in range(n_patches):
            ax.plot(t, table[f"diam_{i}"], lw=1, label=f"diam {i}")
        ax.plot(t, table["spread"], "k--", lw=1, label="spread S")
        ax.set_xlabel("t")
        ax.set_yscale("log")
        ax.set_title("support diameters and spread")
        ax.legend()
        paths.append(_save(fig, out / "confinement.png"))

        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        ax.plot(t, table["defect"], lw=1, label="defect")
        ax.plot(t, table["surrogate"], lw=1, ls="--", label="surrogate")
        ax.fill_between(t, -table["defect_bound"], table["defect_bound"], color="0.85", label="quadrature bound")
        ax.set_xlabel("t")
        ax.set_title("energy defect")
        ax.legend()
        paths.append(_save(fig, out / "defect.png"))

        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        for i in range(n_patches):
            ax.plot(t, _positive(table[f"residual_avg_{i}"]), lw=1, label=f"averaged {i}")
            ax.plot(t, _positive(table[f"residual_{i}"]), lw=0.8, ls=":", label=f"finite diff {i}")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_title("|dX/dt - u^p(X)|")
        if n_patches <= 4:
            ax.legend()
        paths.append(_save(fig, out / "velocity_residual.png"))
    return paths


def pvs_figure(times: np.ndarray, positions: np.ndarray, hamiltonian: np.ndarray, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
        for i in range(positions.shape[1]):
            a1.plot(positions[:, i, 0], positions[:, i, 1], lw=1)
        a1.set_aspect("equal", adjustable="datalim")
        a1.set_title("point vortex tracks")
        h0 = hamiltonian[0]
        a2.plot(times, hamiltonian - h0, lw=1)
        a2.set_xlabel("t")
        a2.set_title("H(t) - H(0)")
        return [_save(fig, out / "pvs.png")]


def density_figure(before, after, out_dir: str | Path, name: str = "rearrangement.png") -> list[Path]:
    """Side-by-side images of a gridded density and its rearrangement."""
    out = Path(out_dir)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.8))
        for ax, g, title in zip(axes, (before, after), ("density", "rearrangement")):
            nx, ny = g.values.shape
            ext = (g.origin[0], g.origin[0] + nx * g.spacing, g.origin[1], g.origin[1] + ny * g.spacing)
            im = ax.imshow(g.values.T, origin="lower", extent=ext, cmap="viridis")
            ax.set_title(title)
            fig.colorbar(im, ax=ax, shrink=0.8)
        return [_save(fig, out / name)]


def certificate_figure(rows: Sequence[dict], c22: float | None, c24: float | None, out_dir: str | Path) -> list[Path]:
    """Normalized defect against the W2 and far-moment terms, with the constant lines."""
    out = Path(out_dir)
    d = np.array([r["defect_normalized"] for r in rows])
    w = np.array([r["w2_excess_normalized"] for r in rows])
    f = np.array([r["far_normalized"] for r in rows])
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
        a1.loglog(_positive(w), _positive(d), ".", ms=3)
        a2.loglog(_positive(f), _positive(d), ".", ms=3)
        for ax, c, x in ((a1, c22, w), (a2, c24, f)):
            xs = x[x > 0]
            if c is not None and xs.size:
                g = np.geomspace(xs.min(), xs.max(), 20)
                ax.loglog(g, c * g, "k--", lw=1, label=f"c = {c:.3g}")
                ax.legend()
        a1.set_xlabel("(W2^2 - floor) / (M R0^2)")
        a2.set_xlabel("far log moment / M")
        a1.set_ylabel("defect / M^2")
        return [_save(fig, out / "certificates.png")]


def scaling_figure(per_eps: Sequence[dict], residual_fit: dict | None, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.5, 3.5))
        for r in per_eps:
            t = np.asarray(r["t"])
            m = t > 0
            a1.loglog(t[m], np.asarray(r["diam"])[m], lw=1, label=f"eps={r['epsilon']:g}")
        a1.set_xlabel("t")
        a1.set_title("max patch diameter")
        a1.legend()
        eps = np.array([r["epsilon"] for r in per_eps])
        res = np.array([r["residual"] for r in per_eps])
        a2.loglog(eps, _positive(res), "o")
        if residual_fit is not None and np.all(res > 0):
            g = np.geomspace(eps.min(), eps.max(), 20)
            a2.loglog(g, np.exp(residual_fit["intercept"]) * g ** residual_fit["slope"], "k--", lw=1,
                      label=f"slope {residual_fit['slope']:.2f}")
            a2.legend()
        a2.set_xlabel("epsilon")
        a2.set_title("velocity residual")
        return [_save(fig, out / "scaling.png")]
