"""Rectangular MAC grid, staggered fields and the discrete differential operators.

Layout (array index ``[i, j]`` with ``i`` along x):

* cell-centred scalars ``c, mu, p`` at ``((i+1/2) hx, (j+1/2) hy)``, shape ``(nx, ny)``
* ``u`` on vertical faces ``(i hx, (j+1/2) hy)``, shape ``(nx+1, ny)`` (``(nx, ny)`` if x is periodic)
* ``v`` on horizontal faces ``((i+1/2) hx, j hy)``, shape ``(nx, ny+1)`` (``(nx, ny)`` if y is periodic)
* corners ``(i hx, j hy)`` carry the shear component of the strain rate

Along a walled axis the boundary faces are stored but always hold zero
(no penetration).  Tangential no-slip is imposed with an antireflected ghost
value, zero normal derivative of scalars with a reflected one.

Every linear operator is a sparse matrix built once per grid.  The scalar
gradient is defined as minus the transpose of the divergence, so summation by
parts holds to rounding and ``laplacian = divergence o gradient`` is the
5-point stencil diagonalised by DCT-II/FFT.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

BC_KINDS = ("box_noslip_neumann", "periodic", "channel")


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid on ``[0, lx] x [0, ly]``.

    ``channel`` is periodic in x with walls at ``y = 0`` and ``y = ly``.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    bc: str = "box_noslip_neumann"

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid needs nx, ny >= 8, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain lengths must be positive")
        if self.bc not in BC_KINDS:
            raise ValueError(f"unknown bc {self.bc!r}; expected one of {BC_KINDS}")

    @property
    def periodic_x(self) -> bool:
        return self.bc in ("periodic", "channel")

    @property
    def periodic_y(self) -> bool:
        return self.bc == "periodic"

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def nfx(self) -> int:
        """Number of face/corner positions along x."""
        return self.nx if self.periodic_x else self.nx + 1

    @property
    def nfy(self) -> int:
        return self.ny if self.periodic_y else self.ny + 1

    @property
    def u_shape(self) -> tuple[int, int]:
        return (self.nfx, self.ny)

    @property
    def v_shape(self) -> tuple[int, int]:
        return (self.nx, self.nfy)

    @property
    def corner_shape(self) -> tuple[int, int]:
        return (self.nfx, self.nfy)

    @property
    def n_faces(self) -> int:
        return self.nfx * self.ny + self.nx * self.nfy

    # coordinates -------------------------------------------------------

    def _centres(self, n, h):
        return (np.arange(n) + 0.5) * h

    def cell_coords(self):
        x = self._centres(self.nx, self.hx)
        y = self._centres(self.ny, self.hy)
        return np.meshgrid(x, y, indexing="ij")

    def u_coords(self):
        x = np.arange(self.nfx) * self.hx
        y = self._centres(self.ny, self.hy)
        return np.meshgrid(x, y, indexing="ij")

    def v_coords(self):
        x = self._centres(self.nx, self.hx)
        y = np.arange(self.nfy) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def corner_coords(self):
        x = np.arange(self.nfx) * self.hx
        y = np.arange(self.nfy) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    # masks -------------------------------------------------------------

    @cached_property
    def u_mask(self) -> np.ndarray:
        m = np.ones(self.u_shape, dtype=bool)
        if not self.periodic_x:
            m[0, :] = m[-1, :] = False
        return m

    @cached_property
    def v_mask(self) -> np.ndarray:
        m = np.ones(self.v_shape, dtype=bool)
        if not self.periodic_y:
            m[:, 0] = m[:, -1] = False
        return m

    @cached_property
    def face_mask(self) -> np.ndarray:
        """Flat mask of the velocity degrees of freedom (non-wall faces)."""
        return np.concatenate([self.u_mask.ravel(), self.v_mask.ravel()])

    @cached_property
    def ops(self) -> "Operators":
        return Operators(self)

    # inner products ----------------------------------------------------

    def inner_cells(self, f, g) -> float:
        return float(np.sum(f * g) * self.cell_area)

    def inner_faces(self, a: "VectorField", b: "VectorField") -> float:
        return float((np.sum(a.u * b.u) + np.sum(a.v * b.v)) * self.cell_area)

    def norm_cells(self, f) -> float:
        return float(np.sqrt(self.inner_cells(f, f)))

    def norm_faces(self, a: "VectorField") -> float:
        return float(np.sqrt(self.inner_faces(a, a)))


# ---------------------------------------------------------------------------
# fields


@dataclass
class VectorField:
    """Face-centred velocity ``(u, v)`` on a MAC grid."""

    grid: Grid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.grid.u_shape or self.v.shape != self.grid.v_shape:
            raise ValueError(
                f"face shapes {self.u.shape}, {self.v.shape} do not match grid "
                f"{self.grid.u_shape}, {self.grid.v_shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.u_shape), np.zeros(grid.v_shape))

    @classmethod
    def from_flat(cls, grid: Grid, x) -> "VectorField":
        nu = grid.nfx * grid.ny
        return cls(grid, x[:nu].reshape(grid.u_shape), x[nu:].reshape(grid.v_shape))

    @classmethod
    def from_functions(cls, grid: Grid, fu, fv) -> "VectorField":
        """Sample ``fu(x, y)``, ``fv(x, y)`` at the faces; wall faces are zeroed."""
        u = fu(*grid.u_coords()) * np.ones(grid.u_shape)
        v = fv(*grid.v_coords()) * np.ones(grid.v_shape)
        return cls(grid, np.where(grid.u_mask, u, 0.0), np.where(grid.v_mask, v, 0.0))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.v.ravel()])

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.u.copy(), self.v.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all())

    def max_abs(self) -> float:
        return float(max(np.abs(self.u).max(), np.abs(self.v).max()))

    def __add__(self, other):
        return VectorField(self.grid, self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return VectorField(self.grid, self.u - other.u, self.v - other.v)

    def __mul__(self, s):
        return VectorField(self.grid, self.u * s, self.v * s)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return VectorField(self.grid, self.u / s, self.v / s)

    def __neg__(self):
        return VectorField(self.grid, -self.u, -self.v)


@dataclass
class TensorField:
    """Cell-centred symmetric 2x2 tensor field."""

    xx: np.ndarray
    xy: np.ndarray
    yy: np.ndarray

    def norm_squared(self) -> np.ndarray:
        return self.xx**2 + self.yy**2 + 2.0 * self.xy**2

    def as_matrices(self) -> np.ndarray:
        """Stack into an array of shape ``(nx, ny, 2, 2)``."""
        return np.stack(
            [np.stack([self.xx, self.xy], -1), np.stack([self.xy, self.yy], -1)], -2
        )


# ---------------------------------------------------------------------------
# 1D building blocks; n cells along the axis, faces are the n (+1) cell edges


def _diff_f2c(n, h, periodic):
    if periodic:
        return (sp.diags([-1.0, 1.0, 1.0], [0, 1, -(n - 1)], shape=(n, n)) / h).tocsr()
    return (sp.diags([-1.0, 1.0], [0, 1], shape=(n, n + 1)) / h).tocsr()


def _avg_f2c(n, periodic):
    if periodic:
        return (sp.diags([0.5, 0.5, 0.5], [0, 1, -(n - 1)], shape=(n, n))).tocsr()
    return sp.diags([0.5, 0.5], [0, 1], shape=(n, n + 1)).tocsr()


def _diff_c2f_dirichlet(n, h, periodic):
    """Cells to faces with a zero wall value of the (tangential) field."""
    if periodic:
        return (-_diff_f2c(n, h, True).T).tocsr()
    m = sp.diags([-1.0, 1.0], [-1, 0], shape=(n + 1, n)).tolil()
    m[0, 0] = 2.0
    m[n, n - 1] = -2.0
    return (m.tocsr() / h).tocsr()


def _avg_c2f_dirichlet(n, periodic):
    """Cells to faces; wall faces get the antireflected value, i.e. zero."""
    if periodic:
        return _avg_f2c(n, True).T.tocsr()
    m = sp.diags([0.5, 0.5], [-1, 0], shape=(n + 1, n)).tolil()
    m[0, 0] = 0.0
    m[n, n - 1] = 0.0
    return m.tocsr()


def _kron_x(op, ny):
    return sp.kron(op, sp.identity(ny), format="csr")


def _kron_y(nx, op):
    return sp.kron(sp.identity(nx), op, format="csr")


class Operators:
    """Sparse MAC operators acting on flattened (C-order) arrays.

    A face vector is ``concat(u.ravel(), v.ravel())`` including wall faces.
    """

    def __init__(self, grid: Grid):
        g = grid
        nx, ny, nfx, nfy = g.nx, g.ny, g.nfx, g.nfy
        px, py = g.periodic_x, g.periodic_y
        self.grid = g
        self.n_u = nfx * ny
        self.n_v = nx * nfy

        dx_f2c = _diff_f2c(nx, g.hx, px)
        dy_f2c = _diff_f2c(ny, g.hy, py)
        ax_f2c = _avg_f2c(nx, px)
        ay_f2c = _avg_f2c(ny, py)
        dx_c2f_dir = _diff_c2f_dirichlet(nx, g.hx, px)
        dy_c2f_dir = _diff_c2f_dirichlet(ny, g.hy, py)
        ax_c2f_dir = _avg_c2f_dirichlet(nx, px)
        ay_c2f_dir = _avg_c2f_dirichlet(ny, py)

        mask = sp.diags(g.face_mask.astype(float)).tocsr()
        self.face_mask = mask

        # divergence, gradient, Laplacian on cells
        self.div_u = _kron_x(dx_f2c, ny)
        self.div_v = _kron_y(nx, dy_f2c)
        self.div = sp.hstack([self.div_u, self.div_v], format="csr")
        self.grad = (mask @ (-self.div.T)).tocsr()
        self.lap = (self.div @ self.grad).tocsr()

        # averaging between cells and faces
        self.u_to_cell = _kron_x(ax_f2c, ny)
        self.v_to_cell = _kron_y(nx, ay_f2c)
        self.cell_to_u = _kron_x(ax_c2f_dir, ny)
        self.cell_to_v = _kron_y(nx, ay_c2f_dir)
        self.cell_to_face = sp.vstack([self.cell_to_u, self.cell_to_v], format="csr")
        # corners -> cells (average of the four corners of a cell)
        self.corner_to_cell = sp.kron(ax_f2c, ay_f2c, format="csr")

        # strain rate components
        self.dxx = sp.hstack([_kron_x(dx_f2c, ny), sp.csr_matrix((nx * ny, self.n_v))], format="csr")
        self.dyy = sp.hstack([sp.csr_matrix((nx * ny, self.n_u)), _kron_y(nx, dy_f2c)], format="csr")
        du_dy = _kron_y(nfx, dy_c2f_dir)  # u -> corners
        dv_dx = _kron_x(dx_c2f_dir, nfy)  # v -> corners
        self.dxy = (0.5 * sp.hstack([du_dy, dv_dx], format="csr")).tocsr()

        # pieces for the convective flux on corners
        self.u_to_corner = _kron_y(nfx, ay_c2f_dir)  # average in y, zero at walls
        self.v_to_corner = _kron_x(ax_c2f_dir, nfy)  # average in x, zero at walls
        self.corner_dy_to_u = _kron_y(nfx, dy_f2c)  # corners -> u faces (d/dy)
        self.corner_dx_to_v = _kron_x(dx_f2c, nfy)  # corners -> v faces (d/dx)
        self.cell_dx_to_u = (mask[: self.n_u, : self.n_u] @ _kron_x(-dx_f2c.T, ny)).tocsr()
        self.cell_dy_to_v = (mask[self.n_u :, self.n_u :] @ _kron_y(nx, -dy_f2c.T)).tocsr()

        # streamfunction (corners) -> velocity
        self.curl = sp.vstack(
            [self.corner_dy_to_u, -self.corner_dx_to_v], format="csr"
        )
        corner_mask = np.ones(g.corner_shape, dtype=bool)
        if not px:
            corner_mask[0, :] = corner_mask[-1, :] = False
        if not py:
            corner_mask[:, 0] = corner_mask[:, -1] = False
        self.corner_mask = corner_mask

    # viscous operator ---------------------------------------------------

    def viscous_matrix(self, eta: np.ndarray) -> sp.csr_matrix:
        """Matrix of ``v -> -div(eta D v)`` from the cell-centred viscosity.

        It is the Hessian of ``1/2 sum_cells eta Q`` with the strain quadrature
        ``Q`` of :func:`strain_rate_squared`, so ``<K v, v> = sum eta Q``.
        """
        e = eta.ravel()
        e_corner = self.corner_to_cell.T @ e
        k = (
            self.dxx.T @ sp.diags(e) @ self.dxx
            + self.dyy.T @ sp.diags(e) @ self.dyy
            + 2.0 * (self.dxy.T @ sp.diags(e_corner) @ self.dxy)
        )
        return k.tocsr()


# ---------------------------------------------------------------------------
# operator front ends


def gradient(grid: Grid, f: np.ndarray) -> VectorField:
    """Face gradient of a cell field with zero normal derivative at walls."""
    return VectorField.from_flat(grid, grid.ops.grad @ np.ravel(f))


def divergence(v: VectorField) -> np.ndarray:
    g = v.grid
    return (g.ops.div @ v.flat()).reshape(g.cell_shape)


def laplacian_neumann(grid: Grid, f: np.ndarray) -> np.ndarray:
    """5-point Laplacian; reflected ghosts on walls, wrap on periodic axes."""
    return (grid.ops.lap @ np.ravel(f)).reshape(grid.cell_shape)


def sym_gradient(v: VectorField) -> TensorField:
    """Cell-centred symmetric velocity gradient; shear averaged from corners."""
    g = v.grid
    o = g.ops
    x = v.flat()
    return TensorField(
        xx=(o.dxx @ x).reshape(g.cell_shape),
        xy=(o.corner_to_cell @ (o.dxy @ x)).reshape(g.cell_shape),
        yy=(o.dyy @ x).reshape(g.cell_shape),
    )


def strain_rate_squared(v: VectorField) -> np.ndarray:
    """Cell quadrature of ``|Dv|^2``: normal parts at the centre, shear as the
    mean of the squared corner values."""
    g = v.grid
    o = g.ops
    x = v.flat()
    dxy2 = (o.dxy @ x) ** 2
    return (
        (o.dxx @ x) ** 2 + (o.dyy @ x) ** 2 + 2.0 * (o.corner_to_cell @ dxy2)
    ).reshape(g.cell_shape)


def curl(grid: Grid, psi: np.ndarray) -> VectorField:
    """Discrete ``(d psi/dy, -d psi/dx)`` of a corner streamfunction.

    Values of ``psi`` on walls are replaced by zero so the result has no
    normal flow through the boundary.
    """
    psi = np.where(grid.ops.corner_mask, psi, 0.0)
    return VectorField.from_flat(grid, grid.ops.curl @ psi.ravel())


def cell_velocity(v: VectorField) -> tuple[np.ndarray, np.ndarray]:
    g = v.grid
    return (
        (g.ops.u_to_cell @ v.u.ravel()).reshape(g.cell_shape),
        (g.ops.v_to_cell @ v.v.ravel()).reshape(g.cell_shape),
    )


def cell_to_faces(grid: Grid, f: np.ndarray) -> VectorField:
    """Arithmetic mean of the two adjacent cells on every interior face."""
    return VectorField.from_flat(grid, grid.ops.cell_to_face @ np.ravel(f))
