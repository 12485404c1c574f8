import numpy as np
import pytest

from nnch.config import RunConfig
from nnch.grid import Grid
from nnch.stepper import (
    EnergyLedger,
    SimState,
    SimulationError,
    Setup,
    coupled_step,
    eps_convergence_study,
    initial_fields,
    run_simulation,
    smooth_noise,
)


def small_config(**initial):
    ini = {"kind": "spinodal", "amplitude": 0.3, "velocity": "vortex", "velocity_amplitude": 0.5}
    ini.update(initial)
    return RunConfig().replace(
        domain={"nx": 16, "ny": 16, "lx": 8.0, "ly": 8.0},
        momentum={"dt": 0.05},
        time={"t_end": 0.5},
        output={"formats": "bin"},
        initial=ini,
    )


class TestLedger:
    def test_residual_and_roundtrip(self, tmp_path):
        led = EnergyLedger(2.0)
        led.append(0.0, 0.5, 1.5, 0.0, 0.0, 1.0, 0.0)
        led.append(0.1, 0.4, 1.4, 0.1, 0.09, 1.0, 0.0)
        assert led.column("residual")[1] == pytest.approx(0.01)
        path = led.write_csv(tmp_path / "ledger.csv")
        back = EnergyLedger.read_csv(path)
        assert back.rows == led.rows and back.e0 == pytest.approx(2.0)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            EnergyLedger(1.0).append(0.0, np.nan, 0, 0, 0, 0, 0)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            EnergyLedger.read_csv(p)


class TestNoise:
    def test_normalised(self, rng):
        g = Grid(32, 32, 16.0, 16.0)
        f = smooth_noise(g, rng, 1.0)
        assert abs(f.mean()) < 1e-14
        assert np.abs(f).max() == pytest.approx(1.0)

    def test_band_limited(self, rng):
        g = Grid(32, 32, 16.0, 16.0)
        rough = smooth_noise(g, np.random.default_rng(0), 0.0)
        smooth = smooth_noise(g, np.random.default_rng(0), 2.0)
        jump = lambda f: np.abs(np.diff(f, axis=0)).mean()
        assert jump(smooth) < 0.2 * jump(rough)


class TestCoupled:
    def test_rest_state(self):
        cfg = small_config(kind="uniform", c_mean=0.2, velocity="none")
        res = run_simulation(cfg, write=False)
        led = res.state.ledger
        assert res.state.fields.v.max_abs() < 1e-14
        assert led.column("residual").max() < 1e-12
        np.testing.assert_allclose(res.state.fields.c, 0.2, atol=1e-14)

    @pytest.mark.parametrize("mode", ["lagged", "fixed_point"])
    def test_invariants(self, mode):
        res = run_simulation(small_config(c_mean=0.1), write=False, mode=mode)
        led = res.state.ledger
        m = led.column("mass")
        assert np.abs(m - m[0]).max() <= 1e-12 * abs(m[0])
        assert led.column("div_res").max() <= 1e-10
        assert led.relative_residual().max() < 1e-2
        total = led.column("kinetic") + led.column("e_mix")
        assert np.all(total <= led.e0 + led.column("residual") + 1e-12)
        assert len(led) == res.state.step + 1 == 11

    def test_fixed_point_reduces_lag(self):
        lag = run_simulation(small_config(c_mean=0.1), write=False, mode="lagged").state
        fp = run_simulation(small_config(c_mean=0.1), write=False, mode="fixed_point").state
        assert fp.stats["fp_unconverged"] == 0
        assert fp.ledger.relative_residual()[-1] <= lag.ledger.relative_residual()[-1] * 1.5

    def test_deterministic(self):
        a = run_simulation(small_config(), write=False, seed=5).state.ledger.rows
        b = run_simulation(small_config(), write=False, seed=5).state.ledger.rows
        c = run_simulation(small_config(), write=False, seed=6).state.ledger.rows
        assert a == b and a != c

    def test_halving_recovers(self):
        cfg = small_config(velocity_amplitude=4.0).replace(momentum={"dt": 0.4}, time={"t_end": 0.4})
        res = run_simulation(cfg, write=False)
        assert res.state.last_step["halvings"] > 0
        assert res.state.stats["rejections"] > 0

    def test_exhaustion_writes_last_valid(self, tmp_path):
        cfg = small_config(velocity_amplitude=1e5).replace(momentum={"dt": 0.4}, time={"t_end": 0.4})
        with pytest.raises(SimulationError) as err:
            run_simulation(cfg, out_dir=tmp_path)
        assert (tmp_path / "snap_last_valid_c.bin").exists()
        assert (tmp_path / "ledger.csv").exists()
        assert err.value.state.step == 0


class TestDriver:
    def test_initial_only(self, tmp_path):
        cfg = small_config().replace(time={"t_end": 0.0}, output={"formats": "csv,bin"})
        res = run_simulation(cfg, out_dir=tmp_path)
        lines = (tmp_path / "ledger.csv").read_text().splitlines()
        assert len(lines) == 2
        assert (tmp_path / "snap_000000_c.csv").exists() and (tmp_path / "snap_000000_u.bin").exists()
        assert (tmp_path / "config.ini").exists()
        assert res.state.step == 0

    def test_snapshot_cadence_and_figures(self, tmp_path):
        cfg = small_config().replace(time={"t_end": 0.25, "snapshot_every": 2}, output={"formats": "bin,png"})
        run_simulation(cfg, out_dir=tmp_path)
        tags = sorted({p.name.split("_")[1] for p in tmp_path.glob("snap_*_c.bin")})
        assert tags == ["000000", "000002", "000004", "000005"]
        assert (tmp_path / "fields.png").stat().st_size > 0
        assert (tmp_path / "ledger.png").stat().st_size > 0
        diag = (tmp_path / "diagnostics.csv").read_text().splitlines()
        assert diag[0].startswith("step,t,dt_used") and len(diag) == 7

    def test_last_step_lands_on_t_end(self):
        cfg = small_config().replace(time={"t_end": 0.12})
        st = run_simulation(cfg, write=False).state
        assert st.t == pytest.approx(0.12) and st.step == 3

    def test_single_step_api(self):
        cfg = small_config()
        setup = Setup.from_config(cfg)
        f = initial_fields(cfg, setup.grid, np.random.default_rng(0))
        s0 = SimState.initial(f, setup, cfg)
        s1 = coupled_step(s0)
        assert s1.step == 1 and s1.t == pytest.approx(0.05) and len(s1.ledger) == 2


class TestEpsStudy:
    def test_rejects_short_or_increasing(self):
        cfg = small_config()
        with pytest.raises(ValueError, match="at least 3"):
            eps_convergence_study(cfg, [1.0])
        with pytest.raises(ValueError, match="non-increasing"):
            eps_convergence_study(cfg, [0.5, 1.0, 2.0])

    def test_distances_shrink(self):
        cfg = small_config(kind="smooth", amplitude=0.5).replace(time={"t_end": 0.5})
        h = cfg.grid().hx
        rep = eps_convergence_study(cfg, [4 * h, 2 * h, h])
        assert rep.complete and len(rep.v_distances) == 2
        assert rep.psi_decreasing and rep.psi_distances[-1] == 0.0
