import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nnch import truncation as tr
from nnch.config import RunConfig
from nnch.constitutive import ConstitutiveLaw
from nnch.grid import Grid, VectorField
from nnch.stepper import run_simulation


def brute_maximal(f, ladder):
    """Direct box averages, one cylinder at a time."""
    nt, nx, ny = f.shape
    out = np.abs(f).copy()
    for r, tau in ladder:
        for t in range(nt):
            for i in range(nx):
                for j in range(ny):
                    box = np.abs(f[max(t - tau, 0):t + tau + 1, max(i - r, 0):i + r + 1, max(j - r, 0):j + r + 1])
                    out[t, i, j] = max(out[t, i, j], box.mean())
    return out


def random_velocity(grid, rng, scale=1.0):
    v = VectorField(grid, rng.standard_normal(grid.u_shape) * scale, rng.standard_normal(grid.v_shape) * scale)
    return VectorField.from_flat(grid, v.flat() * grid.face_mask.astype(float))


class TestMaximal:
    def test_ladder(self):
        lad = tr.cylinder_ladder((40, 16, 16), 0.5, 0.05)
        assert lad[0] == (0, 0)
        assert [r for r, _ in lad[1:]] == [1, 2, 4]
        assert lad[1][1] == 5 and lad[2][1] == 20 and lad[3][1] == 39

    def test_constant_is_fixed(self):
        f = np.full((10, 12, 9), 2.5)
        np.testing.assert_allclose(tr.maximal_array(f, 0.1, 0.01), 2.5, rtol=1e-13)

    def test_spike_matches_brute_force(self, rng):
        f = np.zeros((8, 8, 8))
        f[3, 4, 2] = 7.0
        f += 0.1 * rng.random(f.shape)
        lad = tr.cylinder_ladder(f.shape, 0.25, 0.0625)
        np.testing.assert_allclose(tr.maximal_array(f, 0.25, 0.0625, lad), brute_maximal(f, lad), rtol=1e-12)

    @given(arrays(float, (8, 6, 6), elements=st.floats(-5, 5)), arrays(float, (8, 6, 6), elements=st.floats(-5, 5)))
    def test_dominates_and_subadditive(self, a, b):
        ma, mb, mab = (tr.maximal_array(x, 0.5, 0.25) for x in (a, b, np.abs(a) + np.abs(b)))
        assert np.all(ma >= np.abs(a) - 1e-12)
        assert np.all(mab <= ma + mb + 1e-12 * (1 + ma + mb))

    def test_window_and_frame_checks(self):
        g = Grid(8, 8, 1.0, 1.0)
        frames = [np.zeros(g.cell_shape)] * 8
        with pytest.raises(ValueError, match="8 time slices"):
            tr.SpaceTimeField(g, 0.1, frames[:7])
        with pytest.raises(ValueError, match="strictly inside"):
            tr.SpaceTimeField(g, 0.1, frames, (0, 8, 1, 7))
        f = tr.SpaceTimeField(g, 0.1, frames)
        assert f.window == (1, 7, 1, 7)
        m = tr.parabolic_maximal(f.with_frames([np.ones(g.cell_shape)] * 8))
        assert m.frames[0][0, 0] == 0.0 and m.frames[0][3, 3] == pytest.approx(1.0)


class TestFluxSplitting:
    @pytest.mark.parametrize("bc", ["box_noslip_neumann", "periodic", "channel"])
    def test_remainder_solves_weak_equation(self, bc, rng):
        g = Grid(16, 16, 2.0, 2.0, bc)
        r = random_velocity(g, rng)
        g2 = tr.remainder_flux(g, r)
        lhs = g2.divergence(g)
        for phi in tr.test_fields(g):
            pr = tr.helmholtz_project(r)
            assert abs(g.inner_faces(lhs + pr, phi)) <= 1e-9 * g.norm_faces(r) * g.norm_faces(phi)

    def test_remainder_symmetric_part_only(self, rng):
        g = Grid(12, 12, 1.0, 1.0)
        g2 = tr.remainder_flux(g, random_velocity(g, rng))
        assert g2.xx.shape == g.cell_shape and g2.xy.shape == g.corner_shape

    def test_difference_fields_residual(self, rng):
        g = Grid(12, 12, 3.0, 3.0)
        law = ConstitutiveLaw(q=1.5)
        va = [random_velocity(g, rng, 0.1) for _ in range(9)]
        vb = [random_velocity(g, rng, 0.1) for _ in range(9)]
        cs = [0.2 * rng.standard_normal(g.cell_shape) for _ in range(9)]
        data = tr.difference_fields(g, 0.1, va, cs, vb, cs, law)
        assert data.u.nt == 8 and data.residual < 1e-10
        with pytest.raises(ValueError, match="same number"):
            tr.difference_fields(g, 0.1, va, cs, vb[:-1], cs, law)


class TestLevelSets:
    def setup_data(self, rng, scale):
        g = Grid(12, 12, 3.0, 3.0)
        law = ConstitutiveLaw(q=2.0)
        base = [random_velocity(g, rng, 0.1) for _ in range(9)]
        pert = [b + random_velocity(g, rng, scale) for b in base]
        cs = [np.zeros(g.cell_shape)] * 9
        return g, law, tr.difference_fields(g, 0.2, pert, cs, base, cs, law)

    def test_zero_difference_gives_empty_sets(self, rng):
        _, _, d = self.setup_data(rng, 0.0)
        rep = tr.levelset_decay(d.u, d.g1, d.g2, 2.0, K=3)
        assert rep.measures == [0.0] * 4 and rep.nested
        assert np.isnan(rep.ratios).all()

    def test_nested_and_csv(self, rng, tmp_path):
        _, _, d = self.setup_data(rng, 1.0)
        lam = tr.auto_lambda_ref(d.u, d.g1, d.g2)
        rep = tr.levelset_decay(d.u, d.g1, d.g2, 2.0, K=4, lambda_ref=lam)
        assert rep.nested and rep.counts[0] > 0
        assert rep.lambda_k == pytest.approx([lam * 2, lam * 4, lam * 16, lam * 256, lam * 65536])
        lines = rep.write_csv(tmp_path / "l.csv").read_text().splitlines()
        assert lines[0] == "k,lambda_k,measure,ratio" and len(lines) == 6

    def test_sets_contain_pointwise_sets(self, rng):
        _, _, d = self.setup_data(rng, 1.0)
        mu_, mg = tr.bad_set_functionals(d.u, d.g1, d.g2)
        grad = d.u.restrict(tr._grad_frames(d.u))
        assert np.all(mu_ >= grad - 1e-13)
        assert mg.min() >= 0.0

    def test_mismatched_cylinders(self, rng):
        _, _, d = self.setup_data(rng, 1.0)
        short = tr.SpaceTimeField(d.g1.grid, d.g1.dt, d.g1.frames, (2, 10, 2, 10))
        with pytest.raises(ValueError, match="same cylinder"):
            tr.levelset_decay(d.u, short, d.g2, 2.0)


class TestDrivers:
    def cfg(self):
        return RunConfig().replace(
            domain={"nx": 12, "ny": 12, "lx": 6.0, "ly": 6.0}, momentum={"dt": 0.05},
            time={"t_end": 0.45, "snapshot_every": 1}, output={"formats": "bin"},
            initial={"kind": "spinodal", "amplitude": 0.3, "velocity": "vortex", "velocity_amplitude": 0.5})

    def test_study_rejects_bad_radii(self):
        with pytest.raises(ValueError, match="decreasing"):
            tr.truncation_study(self.cfg(), [1.0, 2.0])
        with pytest.raises(ValueError, match="below"):
            tr.truncation_study(self.cfg(), [1.0, 0.5], eps_ref=0.5)

    def test_study_shares_thresholds(self):
        h = 0.5
        study = tr.truncation_study(self.cfg(), [4 * h, 2 * h, 1.5 * h], K=3)
        assert len(study.reports) == 3 and study.nested
        assert all(r.lambda_ref == study.lambda_ref for r in study.reports)
        assert all(r.residual < 1e-10 for r in study.reports)

    def test_load_series(self, tmp_path):
        run_simulation(self.cfg(), out_dir=tmp_path)
        cfg, dt, vs, cs = tr.load_series(tmp_path)
        assert dt == pytest.approx(0.05) and len(vs) == len(cs) == 10
        assert cs[0].shape == (12, 12)

    def test_load_series_needs_enough_frames(self, tmp_path):
        run_simulation(self.cfg().replace(time={"t_end": 0.2}), out_dir=tmp_path)
        with pytest.raises(ValueError, match="at least 9"):
            tr.load_series(tmp_path)
