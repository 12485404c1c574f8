"""Convective Cahn-Hilliard step with convex splitting.

One step solves, for ``c1 = c0 + d``,

    d/dt + div(avg(c0) w) = m L mu1,
    mu1 = (phi(c1) + S d) / W - W L c1,

with ``w = Psi_eps v`` solenoidal, ``L`` the Neumann/periodic 5-point
Laplacian, ``S >= alpha`` and interface width ``W``.  The concave part
``-S c^2/2`` is explicit, so the mixing energy cannot grow for ``w = 0``.

The nonlinear system is solved by a constant-coefficient Picard iteration,
each sweep a single spectral solve.  The zero mode of ``d`` is exactly zero,
so the total concentration is conserved to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import FreeEnergy
from .grid import Grid, VectorField, cell_to_faces, divergence, gradient, laplacian_neumann
from .mollify import MollifierKernel, psi_eps
from .spectral import cell_spectral


class CHStepError(RuntimeError):
    """Raised when a CH step has to be rejected."""


@dataclass(frozen=True)
class CHStepParams:
    m: float = 1.0
    dt: float = 1e-4
    splitting_const: float | None = None  # None -> alpha of the potential
    max_picard: int = 200
    tol: float = 1e-10
    interface_width: float = 1.0
    cfl_max: float = 0.5

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mobility m must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_picard < 1:
            raise ValueError("max_picard must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.interface_width > 0:
            raise ValueError("interface_width must be positive")

    def splitting(self, energy: FreeEnergy) -> float:
        s = energy.alpha if self.splitting_const is None else self.splitting_const
        if s < energy.alpha:
            raise ValueError(f"splitting_const {s} below alpha = {energy.alpha}")
        return float(s)


@dataclass
class CHStepResult:
    c: np.ndarray
    mu: np.ndarray
    picard_iterations: int
    out_of_range: int  # cells outside [a, b] (double well) or clamped (logarithmic)
    diffusion: float  # dt * m * |grad mu|^2


def mixing_energy(c: np.ndarray, grid: Grid, energy: FreeEnergy, width: float = 1.0) -> float:
    """``sum Phi(c)/W |cell| + W/2 |grad c|^2``."""
    gc = gradient(grid, c)
    return float(
        np.sum(energy.Phi(c)) * grid.cell_area / width + 0.5 * width * grid.inner_faces(gc, gc)
    )


def chemical_potential(c: np.ndarray, grid: Grid, energy: FreeEnergy, width: float = 1.0) -> np.ndarray:
    """``mu = phi(c)/W - W L c``."""
    return energy.phi(c) / width - width * laplacian_neumann(grid, c)


def transport_divergence(c: np.ndarray, w: VectorField) -> np.ndarray:
    """Centred conservative flux ``div(avg(c) w)``."""
    g = w.grid
    cf = cell_to_faces(g, c)
    return divergence(VectorField(g, cf.u * w.u, cf.v * w.v))


def advective_work(c: np.ndarray, mu: np.ndarray, w: VectorField) -> VectorField:
    """``avg(mu) grad c``; pairs with ``w`` as ``-<mu, div(avg(c) w)>``."""
    g = w.grid
    mf = cell_to_faces(g, mu)
    gc = gradient(g, c)
    return VectorField(g, mf.u * gc.u, mf.v * gc.v)


def ch_step(
    c: np.ndarray,
    v: VectorField,
    params: CHStepParams,
    energy: FreeEnergy,
    kernel: MollifierKernel | None = None,
    transport: VectorField | None = None,
) -> CHStepResult:
    """Advance ``c`` by one step of length ``params.dt``.

    ``transport`` is the solenoidal advecting field; when omitted it is
    ``Psi_eps v`` built from ``kernel``.
    """
    g = v.grid
    c0 = np.asarray(c, dtype=float)
    if c0.shape != g.cell_shape or not np.isfinite(c0).all():
        raise CHStepError("concentration has wrong shape or non-finite entries")
    if transport is None:
        transport = v if kernel is None else psi_eps(v, kernel)
    w = transport
    dt, m, W = params.dt, params.m, params.interface_width
    S = params.splitting(energy)

    speed = w.max_abs()
    cfl = dt * speed / min(g.hx, g.hy)
    if cfl > params.cfl_max:
        raise CHStepError(f"CFL number {cfl:.3g} exceeds {params.cfl_max}")

    spec = cell_spectral(g)
    lam = spec.lam
    lap_c0 = laplacian_neumann(g, c0)
    adv = -dt * transport_divergence(c0, w) if speed > 0 else np.zeros_like(c0)

    d = np.zeros_like(c0)
    floor = 1e-14 * max(1.0, np.abs(c0).max())
    converged = False
    it = 0
    for it in range(1, params.max_picard + 1):
        c1 = c0 + d
        slope = float(np.max(energy.dphi(c1)))
        beta = max(0.0, 0.5 * (slope - S))
        inner = (energy.phi(c1) - beta * d) / W - W * lap_c0
        rhs = adv + dt * m * laplacian_neumann(g, inner)
        symbol = 1.0 / (1.0 - dt * m * (S + beta) / W * lam + dt * m * W * lam * lam)
        d_new = spec.apply_symbol(rhs, symbol)
        d_new -= d_new.mean()
        change = np.abs(d_new - d).max()
        d = d_new
        if not np.isfinite(change):
            raise CHStepError("non-finite Picard iterate")
        if change <= params.tol * np.abs(d).max() or change <= floor:
            converged = True
            break
    if not converged:
        raise CHStepError(f"Picard iteration did not converge in {params.max_picard} sweeps")

    c1 = c0 + d
    mu1 = (energy.phi(c1) + S * d) / W - W * laplacian_neumann(g, c1)
    if energy.singular:
        out = int(np.count_nonzero(energy.clamp(c1)[1]))
    else:
        out = int(np.count_nonzero((c1 < energy.a) | (c1 > energy.b)))
    gm = gradient(g, mu1)
    return CHStepResult(c1, mu1, it, out, dt * m * g.inner_faces(gm, gm))
