import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnch.grid import (
    BC_KINDS,
    Grid,
    VectorField,
    cell_to_faces,
    cell_velocity,
    curl,
    divergence,
    gradient,
    laplacian_neumann,
    strain_rate_squared,
    sym_gradient,
)


def random_faces(g, rng):
    return VectorField(g, rng.standard_normal(g.u_shape) * g.u_mask, rng.standard_normal(g.v_shape) * g.v_mask)


class TestGrid:
    def test_shapes(self):
        g = Grid(16, 8, 2.0, 1.0)
        assert g.u_shape == (17, 8) and g.v_shape == (16, 9)
        assert g.hx == pytest.approx(0.125) and g.hy == pytest.approx(0.125)
        p = Grid(16, 8, bc="periodic")
        assert p.u_shape == (16, 8) and p.v_shape == (16, 8)
        c = Grid(16, 8, bc="channel")
        assert c.u_shape == (16, 8) and c.v_shape == (16, 9)

    def test_rejects_small_or_unknown(self):
        with pytest.raises(ValueError):
            Grid(4, 16)
        with pytest.raises(ValueError):
            Grid(16, 16, bc="slip")
        with pytest.raises(ValueError):
            Grid(16, 16, lx=0.0)

    def test_wall_faces_masked(self):
        g = Grid(8, 8)
        assert not g.u_mask[0].any() and not g.u_mask[-1].any()
        assert not g.v_mask[:, 0].any() and not g.v_mask[:, -1].any()


@pytest.mark.parametrize("bc", BC_KINDS)
class TestOperators:
    def test_integration_by_parts(self, bc, rng):
        g = Grid(24, 16, 1.5, 1.0, bc)
        f = rng.standard_normal(g.cell_shape)
        v = random_faces(g, rng)
        lhs = g.inner_faces(gradient(g, f), v)
        rhs = -g.inner_cells(f, divergence(v))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_laplacian_symmetric_negative(self, bc, rng):
        g = Grid(16, 16, bc=bc)
        f, h = rng.standard_normal((2, *g.cell_shape))
        assert g.inner_cells(laplacian_neumann(g, f), h) == pytest.approx(g.inner_cells(f, laplacian_neumann(g, h)))
        assert g.inner_cells(laplacian_neumann(g, f), f) < 0

    def test_constants_in_kernel(self, bc):
        g = Grid(16, 16, bc=bc)
        assert np.abs(laplacian_neumann(g, np.full(g.cell_shape, 3.0))).max() < 1e-12
        assert gradient(g, np.full(g.cell_shape, 3.0)).max_abs() < 1e-12

    def test_curl_is_solenoidal(self, bc, rng):
        g = Grid(16, 12, bc=bc)
        v = curl(g, rng.standard_normal(g.corner_shape))
        assert np.abs(divergence(v)).max() < 1e-12
        assert np.all(v.u[~g.u_mask] == 0) and np.all(v.v[~g.v_mask] == 0)

    def test_strain_matches_viscous_matrix(self, bc, rng):
        g = Grid(12, 12, bc=bc)
        v = random_faces(g, rng)
        eta = rng.uniform(0.5, 2.0, g.cell_shape)
        k = g.ops.viscous_matrix(eta)
        x = v.flat()
        assert x @ (k @ x) == pytest.approx(np.sum(eta * strain_rate_squared(v)), rel=1e-12)


class TestAccuracy:
    def test_laplacian_second_order(self):
        errs = []
        for n in (16, 32, 64):
            g = Grid(n, n, 1.0, 1.0)
            x, y = g.cell_coords()
            f = np.cos(np.pi * x) * np.cos(2 * np.pi * y)
            exact = -5 * np.pi**2 * f
            errs.append(np.abs(laplacian_neumann(g, f) - exact).max())
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(orders > 1.9)

    def test_strain_of_shear_flow(self):
        g = Grid(16, 16, 1.0, 1.0, bc="periodic")
        v = VectorField.from_functions(g, lambda x, y: np.sin(2 * np.pi * y), lambda x, y: 0 * x)
        d = sym_gradient(v)
        _, y = g.cell_coords()
        k = 2 * np.pi
        discrete = np.sin(k * g.hy / 2) / (g.hy / 2)
        assert np.abs(d.xx).max() < 1e-12 and np.abs(d.yy).max() < 1e-12
        # corner difference quotient, then the four-corner average
        np.testing.assert_allclose(d.xy, 0.5 * discrete * np.cos(k * g.hy / 2) * np.cos(k * y), atol=1e-12)

    def test_uniform_translation_has_no_strain(self):
        g = Grid(16, 16, bc="periodic")
        v = VectorField.from_functions(g, lambda x, y: 1 + 0 * x, lambda x, y: -2 + 0 * x)
        assert np.abs(strain_rate_squared(v)).max() < 1e-24

    def test_cell_face_averages(self):
        g = Grid(8, 8, bc="periodic")
        f = np.full(g.cell_shape, 2.0)
        w = cell_to_faces(g, f)
        assert np.allclose(w.u, 2.0) and np.allclose(w.v, 2.0)
        uc, vc = cell_velocity(w)
        assert np.allclose(uc, 2.0) and np.allclose(vc, 2.0)


@given(st.integers(0, 10_000))
def test_divergence_of_gradient_is_laplacian(seed):
    rng = np.random.default_rng(seed)
    g = Grid(10, 14, 1.0, 1.4)
    f = rng.standard_normal(g.cell_shape)
    np.testing.assert_allclose(divergence(gradient(g, f)), laplacian_neumann(g, f), atol=1e-10)
