import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vadkit import FeatureMap, avg_pool, read_fmap, select_channels, write_fmap
from vadkit.errors import FormatError, InvalidArgumentError, IoError


def fm(arr):
    return FeatureMap(np.asarray(arr, dtype=np.float32))


class TestFeatureMap:
    def test_dims_and_layout(self):
        m = fm(np.zeros((4, 5, 3)))
        assert (m.height, m.width, m.channels) == (4, 5, 3)
        assert m.data.flags.c_contiguous and not m.data.flags.writeable

    def test_rejects_nonfinite(self):
        bad = np.zeros((2, 2, 1), dtype=np.float32)
        bad[0, 0, 0] = np.nan
        with pytest.raises(InvalidArgumentError):
            FeatureMap(bad)

    def test_rejects_bad_rank(self):
        with pytest.raises(InvalidArgumentError):
            FeatureMap(np.zeros((2, 2), dtype=np.float32))


class TestAvgPool:
    def test_exact_mean_2x2(self):
        out = avg_pool(fm([[[1], [2]], [[3], [4]]]), 2)
        assert out.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 2.5

    def test_identity_g1(self, rng):
        m = fm(rng.standard_normal((7, 5, 3)))
        out = avg_pool(m, 1)
        assert np.array_equal(out.data, m.data)

    def test_partial_windows_hand_case(self):
        m = fm(np.arange(1, 10, dtype=np.float32).reshape(3, 3, 1))
        out = avg_pool(m, 2)
        assert out.data[:, :, 0].tolist() == [[3.0, 4.5], [7.5, 9.0]]

    @pytest.mark.parametrize("g", [0, -3])
    def test_bad_granularity(self, g):
        with pytest.raises(InvalidArgumentError):
            avg_pool(fm(np.zeros((4, 4, 1))), g)

    def test_granularity_beyond_grid(self):
        with pytest.raises(InvalidArgumentError):
            avg_pool(fm(np.zeros((4, 4, 1))), 5)

    def test_mean_preservation_when_dividing(self, rng):
        m = fm(rng.standard_normal((12, 8, 2)))
        for g in (2, 4):
            out = avg_pool(m, g)
            assert np.isclose(out.data.mean(dtype=np.float64),
                              m.data.mean(dtype=np.float64), rtol=1e-6)

    @pytest.mark.parametrize("g", [1, 2, 3, 5, 7])
    def test_constant_idempotence(self, g):
        m = fm(np.full((7, 7, 2), 0.7))
        out = avg_pool(m, g)
        assert np.all(out.data == np.float32(0.7))

    def test_shape_is_ceil(self, rng):
        m = fm(rng.standard_normal((7, 10, 1)))
        out = avg_pool(m, 4)
        assert out.shape == (2, 3, 1)


class TestSelectChannels:
    def test_identity(self, rng):
        m = fm(rng.standard_normal((3, 3, 4)))
        out = select_channels(m, [0, 1, 2, 3])
        assert np.array_equal(out.data, m.data)

    def test_projection(self, rng):
        m = fm(rng.standard_normal((3, 3, 2)))
        out = select_channels(m, [1])
        assert out.channels == 1
        assert np.array_equal(out.data[:, :, 0], m.data[:, :, 1])

    def test_half_of_384(self, rng):
        m = fm(rng.standard_normal((2, 2, 384)))
        out = select_channels(m, list(range(0, 384, 2)))
        assert out.channels == 192

    def test_out_of_range(self, rng):
        with pytest.raises(InvalidArgumentError):
            select_channels(fm(rng.standard_normal((2, 2, 4))), [0, 4])

    def test_nested_composition(self, rng):
        m = fm(rng.standard_normal((4, 4, 8)))
        outer = [1, 3, 5, 7]
        inner = [0, 2]
        nested = select_channels(select_channels(m, outer), inner)
        composed = select_channels(m, [outer[i] for i in inner])
        assert np.array_equal(nested.data, composed.data)


class TestFmapFile:
    def test_round_trip_random(self, rng, tmp_path):
        m = FeatureMap(rng.standard_normal((35, 35, 384)).astype(np.float32),
                       meta={"backend": "filterbank", "checkpoint": "hook"})
        path = tmp_path / "map.fmap"
        write_fmap(m, path)
        back = read_fmap(path)
        assert np.array_equal(back.data, m.data)
        assert back.shape == m.shape
        assert back.meta == m.meta

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fmap"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FormatError, match="magic"):
            read_fmap(path)

    def test_payload_length_mismatch(self, tmp_path):
        import struct
        path = tmp_path / "short.fmap"
        payload = b"FMAP1\n" + struct.pack("<III", 2, 2, 1) + b"\x00" * 12  # 3 floats, need 4
        path.write_bytes(payload)
        with pytest.raises(FormatError, match="byte offset"):
            read_fmap(path)

    def test_nonfinite_payload(self, tmp_path):
        import struct
        path = tmp_path / "nan.fmap"
        vals = struct.pack("<4f", 1.0, float("nan"), 3.0, 4.0)
        path.write_bytes(b"FMAP1\n" + struct.pack("<III", 2, 2, 1) + vals)
        with pytest.raises(FormatError, match="non-finite"):
            read_fmap(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_fmap(tmp_path / "nope.fmap")

    def test_missing_parent_dir(self, rng, tmp_path):
        m = FeatureMap(rng.standard_normal((2, 2, 1)).astype(np.float32))
        with pytest.raises(IoError):
            write_fmap(m, tmp_path / "sub" / "x.fmap")

    @settings(max_examples=40, deadline=None)
    @given(st.lists(
        st.floats(width=32, allow_nan=False, allow_infinity=False),
        min_size=4, max_size=4,
    ))
    def test_round_trip_bit_exact(self, values):
        import tempfile
        from pathlib import Path
        arr = np.array(values, dtype=np.float32).reshape(2, 2, 1)
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "m.fmap"
            write_fmap(FeatureMap(arr), path)
            back = read_fmap(path)
        assert np.array_equal(back.data.view(np.uint32), arr.view(np.uint32))

    def test_negative_zero_survives(self, tmp_path):
        arr = np.array([[-0.0]], dtype=np.float32).reshape(1, 1, 1)
        path = tmp_path / "z.fmap"
        write_fmap(FeatureMap(arr), path)
        back = read_fmap(path)
        assert back.data.view(np.uint32)[0, 0, 0] == np.float32(-0.0).view(np.uint32)
