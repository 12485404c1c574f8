"""Diagonalisation of the cell-centred 5-point Laplacian.

The Neumann (reflected ghost) stencil is diagonalised exactly by DCT-II, the
periodic one by the FFT; mixed boundary conditions combine them per axis.
Constant-coefficient polynomials in the Laplacian are therefore inverted by a
pair of transforms.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .grid import Grid


def _axis_eigenvalues(n, h, periodic):
    k = np.arange(n)
    if periodic:
        return -(4.0 / h**2) * np.sin(np.pi * k / n) ** 2
    return -(4.0 / h**2) * np.sin(np.pi * k / (2 * n)) ** 2


class CellSpectral:
    def __init__(self, grid: Grid):
        self.grid = grid
        self.periodic = (grid.periodic_x, grid.periodic_y)
        lam_x = _axis_eigenvalues(grid.nx, grid.hx, grid.periodic_x)
        lam_y = _axis_eigenvalues(grid.ny, grid.hy, grid.periodic_y)
        self.lam = lam_x[:, None] + lam_y[None, :]
        self.complex = any(self.periodic)

    def forward(self, f):
        out = np.asarray(f, dtype=float)
        for axis, per in enumerate(self.periodic):
            if per:
                out = sfft.fft(out, axis=axis, norm="ortho")
            else:
                out = sfft.dct(out, type=2, axis=axis, norm="ortho")
        return out

    def inverse(self, fh):
        out = fh
        for axis, per in reversed(list(enumerate(self.periodic))):
            if per:
                out = sfft.ifft(out, axis=axis, norm="ortho")
            else:
                # DCT of a complex array acts on real and imaginary parts alike
                out = sfft.idct(out, type=2, axis=axis, norm="ortho")
        return np.real(out) if self.complex else out

    def apply_symbol(self, f, symbol):
        """Return ``symbol(L) f``; the zero mode of the result is set to 0."""
        fh = self.forward(f) * symbol
        fh[0, 0] = 0.0
        return self.inverse(fh)

    def solve_poisson(self, rhs):
        """Mean-zero solution of ``L phi = rhs`` (rhs mean is discarded)."""
        lam = self.lam.copy()
        lam[0, 0] = 1.0
        return self.apply_symbol(rhs, 1.0 / lam)


@lru_cache(maxsize=32)
def cell_spectral(grid: Grid) -> CellSpectral:
    return CellSpectral(grid)
