"""Figures written next to the delimited outputs (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import cell_velocity  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_fields(state, path) -> Path:
    """Concentration with the cell velocity overlaid."""
    f = state.fields
    g = f.grid
    x, y = g.cell_coords()
    uc, vc = cell_velocity(f.v)
    fig, ax = plt.subplots(1, 2, figsize=(9, 4))
    im = ax[0].pcolormesh(x, y, f.c, shading="auto", cmap="RdBu_r", vmin=-1, vmax=1)
    fig.colorbar(im, ax=ax[0])
    ax[0].set_title(f"c at t={state.t:.4g}")
    speed = np.hypot(uc, vc)
    im = ax[1].pcolormesh(x, y, speed, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax[1])
    stride = max(1, g.nx // 16)
    ax[1].quiver(x[::stride, ::stride], y[::stride, ::stride], uc[::stride, ::stride], vc[::stride, ::stride],
                 color="w")
    ax[1].set_title("|v|")
    for a in ax:
        a.set_aspect("equal")
    return _save(fig, Path(path))


def plot_ledger(ledger, path) -> Path:
    t = ledger.column("t")
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.6))
    for name in ("kinetic", "e_mix", "cum_visc", "cum_mu"):
        ax[0].plot(t, ledger.column(name), label=name)
    ax[0].axhline(ledger.e0, color="k", lw=0.8, ls="--", label="E0")
    ax[0].set_xlabel("t")
    ax[0].legend(fontsize=8)
    ax[1].semilogy(t[1:], np.maximum(ledger.relative_residual()[1:], 1e-18))
    ax[1].set_xlabel("t")
    ax[1].set_title("energy residual / E0")
    return _save(fig, Path(path))


def plot_run(state, out) -> list[Path]:
    out = Path(out)
    return [plot_fields(state, out / "fields.png"), plot_ledger(state.ledger, out / "ledger.png")]


def plot_eps_study(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.6))
    mids = [np.sqrt(a * b) for a, b in zip(report.eps, report.eps[1:])]
    ax.loglog(mids, report.v_distances, "o-", label="v")
    ax.loglog(mids, report.c_distances, "s-", label="c")
    ax.loglog(report.eps, np.maximum(report.psi_distances, 1e-18), "^--", label="Psi v0 - v0")
    ax.set_xlabel("eps")
    ax.set_ylabel("distance")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_levelsets(reports, path, labels=None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for i, r in enumerate(reports):
        lab = labels[i] if labels else f"member {i}"
        m = np.asarray(r.measures)
        ax.semilogy(r.k, np.where(m > 0, m, np.nan), "o-", label=lab)
    ax.set_xlabel("k")
    ax.set_ylabel("|O_k|")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))
