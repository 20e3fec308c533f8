import numpy as np
import pytest

from vadkit.errors import FormatError, IoError
from vadkit.netpbm import read_pnm, write_pnm


class TestNetpbm:
    def test_pgm_round_trip(self, rng, tmp_path):
        img = rng.integers(0, 256, (37, 21), dtype=np.uint8)
        path = tmp_path / "a.pgm"
        write_pnm(img, path)
        assert np.array_equal(read_pnm(path), img)

    def test_ppm_round_trip(self, rng, tmp_path):
        img = rng.integers(0, 256, (16, 24, 3), dtype=np.uint8)
        path = tmp_path / "a.ppm"
        write_pnm(img, path)
        assert np.array_equal(read_pnm(path), img)

    def test_reader_tolerates_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04")
        assert read_pnm(path).tolist() == [[1, 2], [3, 4]]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.pgm"
        path.write_bytes(b"P3\n1 1\n255\n0")
        with pytest.raises(FormatError):
            read_pnm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(FormatError, match="payload"):
            read_pnm(path)

    def test_16bit_rejected(self, tmp_path):
        path = tmp_path / "w.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(FormatError, match="maxval"):
            read_pnm(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_pnm(tmp_path / "nope.pgm")

    def test_writer_rejects_float(self, tmp_path):
        with pytest.raises(FormatError):
            write_pnm(np.zeros((4, 4)), tmp_path / "f.pgm")
