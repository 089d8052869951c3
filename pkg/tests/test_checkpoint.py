import numpy as np
import pytest

from dagf.checkpoint import load_bundle, save_bundle
from dagf.errors import DataError


def sample_bundle(rng):
    return {
        "lrnet.stem.kernel": rng.normal(size=(4, 3, 3, 3)).astype(np.float32),
        "lrnet.stem.bias": rng.normal(size=(4,)).astype(np.float32),
        "state/epoch": np.asarray([3.0], dtype=np.float32),
        "meta/scalar": np.asarray(7.0, dtype=np.float32),  # rank 0
    }


class TestCheckpointBundle:
    def test_round_trip_values_and_shapes(self, tmp_path):
        rng = np.random.default_rng(0)
        bundle = sample_bundle(rng)
        path = tmp_path / "ckpt.dagf"
        save_bundle(path, bundle)
        back = load_bundle(path)
        assert set(back) == set(bundle)
        for name in bundle:
            np.testing.assert_array_equal(back[name], np.asarray(bundle[name], np.float32))

    def test_save_load_save_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        a = tmp_path / "a.dagf"
        b = tmp_path / "b.dagf"
        save_bundle(a, sample_bundle(rng))
        save_bundle(b, load_bundle(a))
        assert a.read_bytes() == b.read_bytes()

    def test_magic_prefix(self, tmp_path):
        path = tmp_path / "c.dagf"
        save_bundle(path, {"x": np.zeros(2, np.float32)})
        assert path.read_bytes()[:4] == b"DAGF"

    def test_crc_corruption_detected(self, tmp_path):
        path = tmp_path / "d.dagf"
        save_bundle(path, sample_bundle(np.random.default_rng(2)))
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(DataError, match="CRC"):
            load_bundle(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "e.dagf"
        save_bundle(path, sample_bundle(np.random.default_rng(3)))
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(DataError):
            load_bundle(path)

    def test_bad_magic_detected(self, tmp_path):
        import struct
        import zlib

        body = b"XXXX" + struct.pack("<II", 1, 0)
        path = tmp_path / "f.dagf"
        path.write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))
        with pytest.raises(DataError, match="magic"):
            load_bundle(path)

    def test_little_endian_layout(self, tmp_path):
        path = tmp_path / "g.dagf"
        save_bundle(path, {"v": np.asarray([1.0], dtype=np.float32)})
        data = path.read_bytes()
        # version=1 little-endian immediately after magic
        assert data[4:8] == b"\x01\x00\x00\x00"
