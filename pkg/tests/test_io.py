import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fatsynth.io import (
    ChecksumError,
    ContainerError,
    ContainerWriter,
    config_hash,
    read_array,
    read_sidecar,
    sidecar_path,
    write_array,
    write_sidecar,
)

DTYPES = [np.float32, np.float64, np.complex64, np.complex128]


@pytest.mark.parametrize("dtype", DTYPES)
def test_round_trip_bit_exact(tmp_path, dtype):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4, 5))
    if np.issubdtype(dtype, np.complexfloating):
        a = a + 1j * rng.standard_normal(a.shape)
    a = a.astype(dtype)
    p = tmp_path / "x.csem"
    write_array(p, a)
    b = read_array(p)
    assert b.dtype == a.dtype and b.shape == a.shape
    assert a.tobytes() == b.tobytes()
    m = read_array(p, mmap=True)
    assert np.asarray(m).tobytes() == a.tobytes()


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.lists(st.integers(0, 5), min_size=0, max_size=4).map(tuple),
              elements=st.floats(allow_nan=True, allow_infinity=True)))
def test_round_trip_property(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("rt") / "a.csem"
    write_array(p, a)
    assert read_array(p).tobytes() == a.tobytes()


def test_layout(tmp_path):
    a = np.array([[1.0, 2.0]], dtype=np.float32)
    p = tmp_path / "x.csem"
    write_array(p, a)
    raw = p.read_bytes()
    assert raw[:4] == b"CSEM"
    assert struct.unpack("<HBB", raw[4:8]) == (1, 1, 2)
    assert struct.unpack("<2I", raw[8:16]) == (1, 2)
    payload = raw[16:-4]
    assert payload == a.tobytes()
    assert struct.unpack("<I", raw[-4:])[0] == zlib.crc32(payload)


def test_complex_is_interleaved(tmp_path):
    p = tmp_path / "c.csem"
    write_array(p, np.array([1 + 2j], dtype=np.complex128))
    raw = p.read_bytes()
    assert struct.unpack("<2d", raw[12:28]) == (1.0, 2.0)


def test_corruption_detected(tmp_path):
    p = tmp_path / "x.csem"
    write_array(p, np.arange(10.0))
    raw = bytearray(p.read_bytes())
    raw[20] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        read_array(p)
    with pytest.raises(ChecksumError):
        read_array(p, mmap=True)


def test_malformed_files(tmp_path):
    p = tmp_path / "x.csem"
    p.write_bytes(b"NOPE")
    with pytest.raises(ContainerError):
        read_array(p)
    write_array(p, np.arange(4.0))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(ContainerError, match="payload length"):
        read_array(p)
    with pytest.raises(FileNotFoundError):
        read_array(tmp_path / "missing.csem")
    with pytest.raises(TypeError):
        write_array(p, np.arange(3))


def test_streaming_writer(tmp_path):
    p = tmp_path / "s.csem"
    with ContainerWriter(p, (3, 2), np.float64) as w:
        for i in range(3):
            w.append(np.full((1, 2), i, float))
    np.testing.assert_array_equal(read_array(p), [[0, 0], [1, 1], [2, 2]])
    with pytest.raises(ContainerError):
        with ContainerWriter(tmp_path / "short.csem", (3, 2), np.float64) as w:
            w.append(np.zeros((1, 2)))
    # an incomplete write leaves nothing behind
    assert not (tmp_path / "short.csem").exists()
    assert not (tmp_path / "short.csem.partial").exists()


def test_sidecar(tmp_path):
    p = tmp_path / "x.csem"
    assert sidecar_path(p).endswith("x.json")
    write_sidecar(p, "simulate", "abc", {"noise": 1}, shape=(2, 3), value=np.float64(1.5))
    meta = read_sidecar(p)
    assert meta == {"command": "simulate", "config_hash": "abc", "seeds": {"noise": 1},
                    "shape": [2, 3], "value": 1.5}


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
