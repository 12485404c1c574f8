import pytest

from nnch.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main

SMALL = """[domain]
nx = 12
ny = 12
lx = 6.0
ly = 6.0
[momentum]
dt = 0.05
[time]
t_end = {t_end}
snapshot_every = 1
[output]
formats = bin
[initial]
kind = spinodal
amplitude = 0.3
velocity = vortex
velocity_amplitude = 0.5
"""


def write_cfg(tmp_path, t_end=0.5, name="c.ini"):
    p = tmp_path / name
    p.write_text(SMALL.format(t_end=t_end))
    return str(p)


def kv(line):
    return dict(item.split("=", 1) for item in line.split())


class TestRun:
    def test_zero_length_run(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["run", "--config", write_cfg(tmp_path, 0.0), "--out", str(out), "--quiet"]) == EXIT_OK
        res = kv(capsys.readouterr().out.strip().splitlines()[-1])
        assert res["status"] == "ok" and res["steps"] == "0"
        assert len((out / "ledger.csv").read_text().splitlines()) == 2

    def test_bad_config_lists_every_problem(self, tmp_path, capsys):
        p = tmp_path / "bad.ini"
        p.write_text("[fluid]\nq = 0.5\nnu0 = -1\n")
        assert main(["run", "--config", str(p)]) == EXIT_USAGE
        err = capsys.readouterr().err
        assert "q must exceed" in err and "nu0 must be positive" in err

    def test_overrides(self, tmp_path, capsys):
        args = ["run", "--config", write_cfg(tmp_path, 0.1), "--out", str(tmp_path / "o"),
                "--seed", "3", "--mode", "fixed_point", "--quiet"]
        assert main(args) == EXIT_OK
        assert "seed" in (tmp_path / "o" / "config.ini").read_text()

    def test_unknown_mode_is_argparse_error(self):
        with pytest.raises(SystemExit) as e:
            main(["run", "--mode", "sometimes"])
        assert e.value.code == 2


class TestSweep:
    def test_needs_three_radii(self, tmp_path, capsys):
        assert main(["sweep-eps", "--config", write_cfg(tmp_path), "--eps", "4h,2h"]) == EXIT_USAGE
        assert "at least 3" in capsys.readouterr().err

    def test_study_outputs(self, tmp_path, capsys):
        out = tmp_path / "eps"
        code = main(["sweep-eps", "--config", write_cfg(tmp_path), "--eps", "4h,2h,h", "--out", str(out)])
        res = kv(capsys.readouterr().out.strip().splitlines()[-1])
        assert code in (EXIT_OK, EXIT_FAILED) and res["complete"] == "1"
        assert (out / "eps_study.csv").read_text().startswith("i,eps_a,eps_b,v_distance,c_distance")
        assert (out / "eps_study.png").stat().st_size > 0


class TestTruncationLab:
    def test_from_two_series(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, 0.45)
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--quiet"]) == EXIT_OK
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "5", "--quiet"]) == EXIT_OK
        capsys.readouterr()
        out = tmp_path / "lab"
        code = main(["truncation-lab", "--series-a", str(tmp_path / "a"), "--series-b", str(tmp_path / "b"),
                     "--out", str(out), "--K", "3"])
        res = kv(capsys.readouterr().out.strip().splitlines()[-1])
        assert code == EXIT_OK and res["nested"] == "1"
        assert len((out / "levelsets.csv").read_text().splitlines()) == 5
        assert (out / "levelsets.png").stat().st_size > 0

    def test_one_series_is_usage_error(self, tmp_path):
        assert main(["truncation-lab", "--series-a", str(tmp_path)]) == EXIT_USAGE

    def test_missing_series_dir(self, tmp_path, capsys):
        assert main(["truncation-lab", "--series-a", str(tmp_path / "x"), "--series-b", str(tmp_path / "y")]) \
            == EXIT_USAGE


def test_verify_quick(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert kv(lines[-1])["failed"] == "0"
    assert (tmp_path / "verify.csv").read_text().startswith("check,passed,seconds")
