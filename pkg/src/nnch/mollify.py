"""Helmholtz projection, mollification ``Psi_eps = P (psi_eps * .)`` and the
velocity cutoff ``Phi_eps(s) = Phi(eps |s|^2)``.

The projection solves ``L phi = div v`` with the cell spectral solver and
returns ``v - grad phi``.  Because ``grad = -div^T`` on the MAC grid the result
is the orthogonal projection onto discretely solenoidal face fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .grid import Grid, VectorField, cell_velocity, divergence, gradient
from .spectral import cell_spectral

PROJECTION_TOL = 1e-10


class ProjectionError(RuntimeError):
    """The pressure Poisson solve did not reach the divergence tolerance."""


# ---------------------------------------------------------------------------
# projection


def _div_scale(v: VectorField) -> float:
    g = v.grid
    return max(1.0, v.max_abs() / min(g.hx, g.hy))


def helmholtz_project(v: VectorField, tol: float = PROJECTION_TOL, max_iter: int = 4) -> VectorField:
    """Discrete Leray projection of a face field.

    A few rounds of residual correction are allowed; failing to reach
    ``max|div w| <= tol * max(1, max|v|/h)`` raises :class:`ProjectionError`.
    """
    g = v.grid
    if not v.is_finite():
        raise ProjectionError("non-finite velocity passed to the projection")
    spec = cell_spectral(g)
    w = v.copy()
    limit = tol * _div_scale(v)
    for _ in range(max_iter):
        d = divergence(w)
        if np.abs(d).max() <= limit:
            return w
        w = w - gradient(g, spec.solve_poisson(d))
    res = np.abs(divergence(w)).max()
    if res > limit:
        raise ProjectionError(f"projection residual {res:.3e} above {limit:.3e}")
    return w


def pressure_from_gradient(grid: Grid, f: VectorField) -> np.ndarray:
    """Mean-zero ``p`` with ``grad p`` the gradient part of ``f``."""
    return cell_spectral(grid).solve_poisson(divergence(f))


# ---------------------------------------------------------------------------
# kernel


@dataclass(frozen=True)
class MollifierKernel:
    """Discrete bump ``(1 - r^2/eps^2)^4`` on the lattice offsets with ``r < eps``.

    ``eps = 0`` (or ``eps`` below one grid step) gives the identity stencil.
    """

    eps: float
    hx: float
    hy: float

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError("mollification radius must be non-negative")

    @classmethod
    def for_grid(cls, grid: Grid, eps: float) -> "MollifierKernel":
        return cls(float(eps), grid.hx, grid.hy)

    @cached_property
    def weights(self) -> np.ndarray:
        e = self.eps
        rx = int(np.floor(e / self.hx)) if e > 0 else 0
        ry = int(np.floor(e / self.hy)) if e > 0 else 0
        ix = np.arange(-rx, rx + 1)
        iy = np.arange(-ry, ry + 1)
        X, Y = np.meshgrid(ix * self.hx, iy * self.hy, indexing="ij")
        if e > 0:
            r2 = (X * X + Y * Y) / (e * e)
            w = np.where(r2 < 1.0, (1.0 - r2) ** 4, 0.0)
        else:
            w = np.ones((1, 1))
        # symmetrise explicitly so evenness holds bit for bit
        w = 0.25 * (w + w[::-1, :] + w[:, ::-1] + w[::-1, ::-1])
        return w / w.sum()

    @property
    def radius_cells(self) -> tuple[int, int]:
        return self.weights.shape[0] // 2, self.weights.shape[1] // 2

    @property
    def is_identity(self) -> bool:
        return np.count_nonzero(self.weights) == 1


def _smooth(a: np.ndarray, w: np.ndarray, periodic: tuple[bool, bool]) -> np.ndarray:
    rx, ry = w.shape[0] // 2, w.shape[1] // 2
    padded = a
    for axis, (r, per) in enumerate(zip((rx, ry), periodic)):
        if r == 0:
            continue
        widths = [(0, 0), (0, 0)]
        widths[axis] = (r, r)
        if per:
            if r > a.shape[axis]:
                raise ValueError("mollifier wider than the periodic domain")
            padded = np.pad(padded, widths, mode="wrap")
        else:
            padded = np.pad(padded, widths, mode="constant")
    out = ndimage.correlate(padded, w, mode="constant", cval=0.0)
    return out[rx : rx + a.shape[0], ry : ry + a.shape[1]]


def mollify(v: VectorField, k: MollifierKernel) -> VectorField:
    """Componentwise convolution with zero extension (wrap on periodic axes)."""
    g = v.grid
    if k.is_identity:
        return v.copy()
    per = (g.periodic_x, g.periodic_y)
    u = _smooth(v.u, k.weights, per) * g.u_mask
    w = _smooth(v.v, k.weights, per) * g.v_mask
    return VectorField(g, u, w)


def mollify_cells(grid: Grid, f: np.ndarray, k: MollifierKernel) -> np.ndarray:
    if k.is_identity:
        return np.array(f, dtype=float)
    return _smooth(np.asarray(f, dtype=float), k.weights, (grid.periodic_x, grid.periodic_y))


def psi_eps(v: VectorField, k: MollifierKernel) -> VectorField:
    """``Psi_eps v = P(psi_eps * v)``; self-adjoint on solenoidal fields."""
    return helmholtz_project(mollify(v, k))


# ---------------------------------------------------------------------------
# velocity cutoff


def _smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class VelocityCutoff:
    """``Phi_eps(s) = Phi(eps |s|^2)``; ``Phi = 1`` on ``[0, R/2]``, C^2 quintic
    decay to zero at ``R``.  ``eps = 0`` disables the cutoff."""

    eps: float
    support: float = 1.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError("cutoff parameter must be non-negative")
        if not self.support > 0:
            raise ValueError("cutoff support radius must be positive")

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        half = 0.5 * self.support
        return 1.0 - _smoothstep5((s - half) / half)

    def __call__(self, speed2):
        return self.profile(self.eps * np.asarray(speed2, dtype=float))


def velocity_cutoff_factor(v: VectorField, cutoff: VelocityCutoff) -> np.ndarray:
    """``Phi(eps |v|^2)`` at cell centres from the averaged face velocities."""
    uc, vc = cell_velocity(v)
    return cutoff(uc * uc + vc * vc)
