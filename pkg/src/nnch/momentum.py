"""Implicit momentum step with monotone power-law stress.

Each step solves

    (v1 - v0)/dt + C(a) v1 - div S(c, D v1) + grad p = f,    div v1 = 0,

where ``C(a)`` is the skew-symmetric part of the conservative convection
operator for the frozen transport field ``a = Phi_eps(v0) v0`` (hence
``<C v, v> = 0`` exactly).  The stress is handled by a damped Kacanov
iteration: freeze ``eta = nu(c) (|D v_k|^2 + delta^2)^((q-2)/2)``, solve the
linear Stokes-type saddle problem, relax.  Every sub-problem is the
gradient of a strictly convex functional, so it is well posed for any
``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import ConstitutiveLaw
from .grid import Grid, VectorField, cell_to_faces, gradient, strain_rate_squared
from .mollify import (
    MollifierKernel,
    VelocityCutoff,
    helmholtz_project,
    psi_eps,
    velocity_cutoff_factor,
)
from .spectral import cell_spectral


class MomentumStepError(RuntimeError):
    """Raised when the nonlinear momentum iteration has to be abandoned."""


@dataclass(frozen=True)
class MomentumStepParams:
    dt: float = 1e-3
    picard_tol: float = 1e-10
    max_picard: int = 100
    theta_relax: float | None = None  # None -> min(1, 1/(q-1))
    convection: bool = True
    stagnation_window: int = 10
    stagnation_factor: float = 1e-2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.max_picard < 1:
            raise ValueError("max_picard must be >= 1")
        if self.theta_relax is not None and not 0 < self.theta_relax <= 1:
            raise ValueError("theta_relax must lie in (0, 1]")

    def relaxation(self, law: ConstitutiveLaw) -> float:
        if self.theta_relax is not None:
            return self.theta_relax
        return min(1.0, 1.0 / (law.q - 1.0))


@dataclass
class MomentumStepResult:
    v: VectorField
    p: np.ndarray
    picard_iterations: int
    residuals: list
    dissipation: float  # dt * sum S:Dv over cells
    coercivity_ok: bool


# ---------------------------------------------------------------------------
# forces and energies


def kinetic_energy(v: VectorField) -> float:
    return 0.5 * v.grid.inner_faces(v, v)


def strain_power(v: VectorField, c: np.ndarray, law: ConstitutiveLaw) -> tuple[float, float]:
    """Return ``(sum S(c,Dv):Dv, kappa sum |Dv|^q - C1 |Omega|)`` with the cell
    quadrature of the strain rate."""
    g = v.grid
    q2 = strain_rate_squared(v)
    cc = np.clip(c, *law.c_range)
    eta = law.effective_viscosity(cc, q2)
    power = float(np.sum(np.where(q2 > 0, eta * q2, 0.0)) * g.cell_area)
    bound = law.kappa * float(np.sum(q2 ** (law.q / 2.0)) * g.cell_area) - law.coercivity_offset * g.area
    return power, bound


def korteweg_divergence(c: np.ndarray, grid: Grid) -> VectorField:
    """Face values of ``div(grad c (x) grad c)``."""
    o = grid.ops
    gc = gradient(grid, c)
    gx, gy = gc.u.ravel(), gc.v.ravel()
    txx = o.u_to_cell @ (gx * gx)
    tyy = o.v_to_cell @ (gy * gy)
    txy = (o.u_to_corner @ gx) * (o.v_to_corner @ gy)
    fu = o.cell_dx_to_u @ txx + o.corner_dy_to_u @ txy
    fv = o.corner_dx_to_v @ txy + o.cell_dy_to_v @ tyy
    out = VectorField.from_flat(grid, np.concatenate([fu, fv]))
    return VectorField(grid, out.u * grid.u_mask, out.v * grid.v_mask)


def capillary_force(c: np.ndarray, kernel: MollifierKernel, grid: Grid, width: float = 1.0) -> VectorField:
    """``-Psi_eps(W div(grad c (x) grad c))``."""
    return psi_eps(-width * korteweg_divergence(c, grid), kernel)


def capillary_force_potential(
    c: np.ndarray, mu: np.ndarray, kernel: MollifierKernel, grid: Grid
) -> VectorField:
    """``Psi_eps(P(avg(mu) grad c))``, the form that pairs exactly with the
    discrete Cahn-Hilliard transport term."""
    mf = cell_to_faces(grid, mu)
    gc = gradient(grid, c)
    return psi_eps(helmholtz_project(VectorField(grid, mf.u * gc.u, mf.v * gc.v)), kernel)


# ---------------------------------------------------------------------------
# convection


def convection_matrix(a: VectorField) -> sp.csr_matrix:
    """Skew part of ``v -> div(v (x) a)`` on the MAC grid, for a frozen ``a``."""
    g = a.grid
    o = g.ops
    ax_cell = o.u_to_cell @ a.u.ravel()
    ay_cell = o.v_to_cell @ a.v.ravel()
    ax_corner = o.u_to_corner @ a.u.ravel()
    ay_corner = o.v_to_corner @ a.v.ravel()
    nuu = o.cell_dx_to_u @ sp.diags(ax_cell) @ o.u_to_cell + o.corner_dy_to_u @ sp.diags(ay_corner) @ o.u_to_corner
    nvv = o.corner_dx_to_v @ sp.diags(ax_corner) @ o.v_to_corner + o.cell_dy_to_v @ sp.diags(ay_cell) @ o.v_to_cell
    n = sp.block_diag([nuu, nvv], format="csr")
    n = o.face_mask @ n @ o.face_mask
    return (0.5 * (n - n.T)).tocsr()


def transport_field(v: VectorField, cutoff: VelocityCutoff) -> VectorField:
    """``Phi_eps(v) v`` with the factor taken at cells and averaged to faces."""
    g = v.grid
    if cutoff.eps == 0:
        return v.copy()
    phi_f = cell_to_faces(g, velocity_cutoff_factor(v, cutoff))
    return VectorField(g, phi_f.u * v.u, phi_f.v * v.v)


# ---------------------------------------------------------------------------
# saddle point solver


class SaddleSolver:
    """Solve ``[A G; D 0] [v; p] = [b; 0]`` on the non-wall faces.

    The pressure is pinned in cell 0 and shifted to mean zero afterwards.
    The last LU factorisation is reused for iterative refinement (and as a
    GMRES preconditioner); the matrix is refactorised only when that fails
    to reach ``rtol``.  Results depend on the factorisation history, so a
    simulation owns its solver.
    """

    rtol = 1e-10
    max_refine = 6

    def __init__(self, grid: Grid):
        self.grid = grid
        o = grid.ops
        self.idx = np.flatnonzero(grid.face_mask)
        self.nf = self.idx.size
        self.nc = grid.nx * grid.ny
        self.g_f = o.grad[self.idx, :][:, 1:].tocsr()
        self.d_f = o.div[1:, :][:, self.idx].tocsr()
        self._lu = None
        self.factorizations = 0

    def _assemble(self, a_ff):
        return sp.bmat([[a_ff, self.g_f], [self.d_f, None]], format="csc")

    def _factor(self, m):
        self.factorizations += 1
        self._lu = spla.splu(m, permc_spec="COLAMD")
        return self._lu

    def _refine(self, m, rhs, scale):
        """Iterative refinement with the cached factors, then GMRES."""
        lu = self._lu
        x = lu.solve(rhs)
        r = rhs - m @ x
        prev = np.inf
        for _ in range(self.max_refine):
            rn = np.linalg.norm(r)
            if rn <= self.rtol * scale:
                return x
            if rn > 0.5 * prev:
                break
            prev = rn
            x = x + lu.solve(r)
            r = rhs - m @ x
        if np.linalg.norm(r) <= self.rtol * scale:
            return x
        n = rhs.size
        prec = spla.LinearOperator((n, n), matvec=lu.solve)
        x, _ = spla.gmres(m, rhs, x0=x, rtol=0.1 * self.rtol, atol=0.0, restart=15, maxiter=1, M=prec)
        if np.linalg.norm(rhs - m @ x) <= self.rtol * scale:
            return x
        return None

    def solve(self, a: sp.csr_matrix, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a_ff = a[self.idx, :][:, self.idx]
        m = self._assemble(a_ff)
        rhs = np.concatenate([b[self.idx], np.zeros(self.nc - 1)])
        scale = max(np.linalg.norm(rhs), 1e-300)
        x = None
        if self._lu is not None:
            x = self._refine(m, rhs, scale)
        if x is None:
            x = self._factor(m).solve(rhs)
        if not np.isfinite(x).all():
            raise MomentumStepError("non-finite saddle solution")
        v = np.zeros(self.grid.n_faces)
        v[self.idx] = x[: self.nf]
        p = np.concatenate([[0.0], x[self.nf :]])
        return v, p - p.mean()


_SOLVERS: dict = {}


def saddle_solver(grid: Grid) -> SaddleSolver:
    if grid not in _SOLVERS:
        _SOLVERS[grid] = SaddleSolver(grid)
    return _SOLVERS[grid]


# ---------------------------------------------------------------------------
# step


def _eta(law, c, v):
    q2 = strain_rate_squared(v)
    return law.effective_viscosity(c, q2)


def momentum_step(
    v: VectorField,
    c: np.ndarray,
    law: ConstitutiveLaw,
    params: MomentumStepParams,
    kernel: MollifierKernel | None = None,
    cutoff: VelocityCutoff | None = None,
    body_force: VectorField | None = None,
    force: VectorField | None = None,
    solver: SaddleSolver | None = None,
) -> MomentumStepResult:
    """Advance the velocity by one implicit step.

    ``force`` is a precomputed capillary force; if omitted it is
    :func:`capillary_force` of ``c`` (zero when ``kernel`` is ``None``).
    """
    g = v.grid
    o = g.ops
    dt = params.dt
    cc = np.clip(np.asarray(c, dtype=float), *law.c_range)
    solver = solver or saddle_solver(g)

    rhs = v.flat() / dt
    if force is None and kernel is not None:
        force = capillary_force(c, kernel, g)
    if force is not None:
        rhs = rhs + force.flat()
    if body_force is not None:
        rhs = rhs + body_force.flat() * g.face_mask
    rhs = rhs * g.face_mask

    base = sp.identity(g.n_faces, format="csr") / dt
    if params.convection and v.max_abs() > 0:
        base = base + convection_matrix(transport_field(v, cutoff or VelocityCutoff(0.0)))

    # residual measured on the solenoidal part of the equation
    spec = cell_spectral(g)

    def proj_norm(x):
        f = VectorField.from_flat(g, x * g.face_mask)
        f = f - gradient(g, spec.solve_poisson((o.div @ f.flat()).reshape(g.cell_shape)))
        return g.norm_faces(f)

    b_norm = max(proj_norm(rhs), 1e-300)
    theta = params.relaxation(law)
    cur = v.copy()
    if cur.max_abs() == 0 and not law.is_linear:
        eta = law.effective_viscosity(cc, np.ones(g.cell_shape))
    else:
        eta = _eta(law, cc, cur)

    residuals = []
    it = 0
    p = np.zeros(g.cell_shape)
    for it in range(1, params.max_picard + 1):
        a = base + o.viscous_matrix(eta)
        x, p_flat = solver.solve(a, rhs)
        new = VectorField.from_flat(g, x)
        if law.is_linear:
            cur = new
            p = p_flat.reshape(g.cell_shape)
            residuals.append(0.0)
            break
        cur = cur + theta * (new - cur)
        p = p_flat.reshape(g.cell_shape)
        eta = _eta(law, cc, cur)
        r = proj_norm((base + o.viscous_matrix(eta)) @ cur.flat() - rhs) / b_norm
        residuals.append(r)
        if not np.isfinite(r):
            raise MomentumStepError("non-finite residual in the stress iteration")
        if r <= params.picard_tol:
            break
        w = params.stagnation_window
        if len(residuals) > w and residuals[-1] > params.stagnation_factor * residuals[-1 - w]:
            raise MomentumStepError(
                f"stress iteration stagnated at residual {r:.3e}; reduce dt"
            )
    else:
        raise MomentumStepError(f"stress iteration not converged in {params.max_picard} sweeps")

    cur = helmholtz_project(cur)
    power, bound = strain_power(cur, cc, law)
    ok = power >= bound - 1e-12 * (abs(power) + abs(bound))
    return MomentumStepResult(cur, p, it, residuals, dt * power, bool(ok))
