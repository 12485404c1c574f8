import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnch.snapshots import HEADER, SnapshotError, read_binary, read_csv, write_binary, write_csv


class TestBinary:
    def test_roundtrip(self, tmp_path, rng):
        a = rng.standard_normal((9, 8))
        p = write_binary(tmp_path / "u.bin", a, "u")
        back, kind = read_binary(p)
        assert kind == "u"
        np.testing.assert_array_equal(back, a)
        assert p.stat().st_size == HEADER.size + 8 * a.size

    def test_header_layout(self, tmp_path):
        p = write_binary(tmp_path / "c.bin", np.zeros((8, 10)), "c")
        data = p.read_bytes()
        assert data[:4] == b"NNCH"
        assert int.from_bytes(data[4:8], "little") == 1
        assert int.from_bytes(data[8:12], "little") == 8
        assert int.from_bytes(data[12:16], "little") == 10
        assert data[16] == 0

    def test_bad_files(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(SnapshotError, match="magic"):
            read_binary(p)
        p.write_bytes(b"NN")
        with pytest.raises(SnapshotError, match="truncated"):
            read_binary(p)
        good = write_binary(tmp_path / "g.bin", np.zeros((8, 8)), "p")
        good.write_bytes(good.read_bytes()[:-8])
        with pytest.raises(SnapshotError, match="payload"):
            read_binary(good)

    def test_rejects_non_2d(self, tmp_path):
        with pytest.raises(SnapshotError):
            write_binary(tmp_path / "x.bin", np.zeros(5), "c")


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 1000))
def test_csv_roundtrip_exact(tmp_path_factory, nx, ny, seed):
    a = np.random.default_rng(seed).standard_normal((nx, ny)) * 10.0 ** np.random.default_rng(seed).integers(-8, 8)
    x, y = np.meshgrid(np.arange(nx) * 0.1, np.arange(ny) * 0.2, indexing="ij")
    p = write_csv(tmp_path_factory.mktemp("csv") / "f.csv", a, x, y)
    np.testing.assert_array_equal(read_csv(p), a)
