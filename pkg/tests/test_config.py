import pytest

from nnch.config import ConfigError, RunConfig, parse_config, parse_config_text, resolve_length
from nnch.grid import Grid


class TestParse:
    def test_defaults_from_minimal_file(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[domain]\n")
        cfg = parse_config(p)
        assert cfg == RunConfig()
        assert cfg.domain.nx == 64 and cfg.fluid.q == 2.0 and cfg.approx.coupling_mode == "lagged"
        assert cfg.mollify_radius() == pytest.approx(2 * cfg.grid().hx)
        assert cfg.cutoff_parameter() == cfg.mollify_radius()

    def test_values_and_auto(self):
        cfg = parse_config_text("[fluid]\nq = 1.5\nkind = carreau\n[ch]\nsplitting_const = auto\n"
                                "[momentum]\ntheta_relax = 0.5\n[approx]\nmollify_eps = 0.25\n")
        assert cfg.fluid.q == 1.5 and cfg.fluid.kind == "carreau"
        assert cfg.ch.splitting_const is None
        assert cfg.momentum.theta_relax == 0.5
        assert cfg.mollify_radius() == 0.25

    def test_small_q_message(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[fluid]\nq = 0.5\n")
        assert any("q must exceed 2d/(d+2) = 1 for d=2" in m for m in err.value.problems)

    def test_negative_viscosity(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[fluid]\nnu0 = -1\n")
        assert any("nu0 must be positive" in m for m in err.value.problems)

    def test_reports_all_violations(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[fluid]\nq = 0.5\nnu0 = -1\n[momentum]\ndt = 0\n[output]\nformats = h5\n")
        assert len(err.value.problems) >= 4

    def test_unknown_key_and_section(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[domain]\nnz = 4\n[solver]\nx = 1\n")
        msgs = " ".join(err.value.problems)
        assert "nz" in msgs and "[solver]" in msgs

    def test_parse_error_line_number(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[domain]\nnx = 8\nthis is not a pair\n")
        assert "line 3" in err.value.problems[0]

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("nx = 8\n")

    def test_type_error(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config_text("[domain]\nnx = many\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.ini")

    def test_splitting_below_alpha(self):
        with pytest.raises(ConfigError, match="alpha"):
            parse_config_text("[ch]\nsplitting_const = 0.5\n")


class TestRoundtrip:
    def test_to_ini(self):
        cfg = RunConfig().replace(domain={"nx": 32, "bc": "channel"}, fluid={"q": 3.0}, seed={"rng_seed": 9})
        back = parse_config_text(cfg.to_ini())
        assert back == cfg

    def test_replace_does_not_mutate(self):
        a = RunConfig()
        b = a.replace(time={"t_end": 0.0})
        assert a.time.t_end == 1.0 and b.time.t_end == 0.0


def test_resolve_length():
    g = Grid(16, 16, 2.0, 2.0)
    assert resolve_length("3h", g) == pytest.approx(0.375)
    assert resolve_length("h", g) == pytest.approx(0.125)
    assert resolve_length("0.3", g) == pytest.approx(0.3)
