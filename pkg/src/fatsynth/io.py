"""Binary array container and JSON sidecars.

Layout (all little-endian)::

    b"CSEM" | version u16 | dtype u8 | ndim u8 | dims u32 * ndim | payload | crc32(payload) u32

The payload is row-major; complex values are interleaved (re, im).
"""

import hashlib
import json
import os
import struct
import zlib

import numpy as np

__all__ = [
    "MAGIC", "VERSION", "DTYPE_CODES",
    "ContainerError", "ChecksumError",
    "write_array", "read_array", "ContainerWriter",
    "write_sidecar", "read_sidecar", "sidecar_path",
    "canonical_json", "config_hash",
]

MAGIC = b"CSEM"
VERSION = 1
DTYPE_CODES = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<c8"),
    4: np.dtype("<c16"),
}
_CODE_OF = {v: k for k, v in DTYPE_CODES.items()}
_CHUNK_BYTES = 1 << 24


class ContainerError(ValueError):
    """Malformed or unreadable container."""


class ChecksumError(ContainerError):
    """Payload does not match the stored CRC-32."""


def _code_for(dtype):
    dt = np.dtype(dtype).newbyteorder("<")
    if dt not in _CODE_OF:
        raise TypeError(f"unsupported container dtype {np.dtype(dtype)}; use float32/64 or complex64/128")
    return _CODE_OF[dt]


def _header(code, shape):
    if len(shape) > 255:
        raise ContainerError("too many dimensions")
    if any(d < 0 or d >= 2 ** 32 for d in shape):
        raise ContainerError(f"dimension out of range in {shape}")
    return MAGIC + struct.pack("<HBB", VERSION, code, len(shape)) + struct.pack(f"<{len(shape)}I", *shape)


class ContainerWriter:
    """Write a container incrementally along the leading axis.

    >>> with ContainerWriter(path, (n, h, w), np.float32) as w:   # doctest: +SKIP
    ...     for item in items:
    ...         w.append(item)
    """

    def __init__(self, path, shape, dtype):
        self.path = os.fspath(path)
        self.shape = tuple(int(d) for d in shape)
        self.code = _code_for(dtype)
        self.dtype = DTYPE_CODES[self.code]
        self._expected = int(np.prod(self.shape)) * self.dtype.itemsize
        self._written = 0
        self._crc = 0
        self._tmp = self.path + ".partial"
        self._fh = open(self._tmp, "wb")
        self._fh.write(_header(self.code, self.shape))

    def append(self, block):
        data = np.ascontiguousarray(block, dtype=self.dtype).tobytes()
        if self._written + len(data) > self._expected:
            raise ContainerError("more data appended than the declared shape holds")
        self._crc = zlib.crc32(data, self._crc)
        self._fh.write(data)
        self._written += len(data)

    def close(self):
        if self._fh is None:
            return
        if self._written != self._expected:
            self.abort()
            raise ContainerError(f"wrote {self._written} payload bytes, expected {self._expected}")
        try:
            self._fh.write(struct.pack("<I", self._crc & 0xFFFFFFFF))
        finally:
            self._fh.close()
            self._fh = None
        os.replace(self._tmp, self.path)

    def abort(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        if os.path.exists(self._tmp):
            os.remove(self._tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()
        return False


def write_array(path, arr, dtype=None):
    """Write ``arr`` as a container; ``dtype`` optionally casts first."""
    arr = np.asarray(arr)
    if dtype is not None:
        arr = arr.astype(dtype)
    with ContainerWriter(path, arr.shape, arr.dtype) as w:
        w.append(arr)


def read_array(path, mmap=False):
    """Read a container, verifying the magic, size and CRC.

    With ``mmap=True`` the checksum is verified in chunks and a read-only
    memory map of the payload is returned.
    """
    path = os.fspath(path)
    try:
        size = os.path.getsize(path)
        fh = open(path, "rb")
    except OSError as e:
        raise FileNotFoundError(f"cannot open container {path}: {e}") from e
    with fh:
        head = fh.read(8)
        if len(head) < 8 or head[:4] != MAGIC:
            raise ContainerError(f"{path}: not a CSEM container")
        version, code, ndim = struct.unpack("<HBB", head[4:])
        if version != VERSION:
            raise ContainerError(f"{path}: unsupported version {version}")
        if code not in DTYPE_CODES:
            raise ContainerError(f"{path}: unknown dtype code {code}")
        raw = fh.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise ContainerError(f"{path}: truncated header")
        shape = struct.unpack(f"<{ndim}I", raw)
        dtype = DTYPE_CODES[code]
        offset = 8 + 4 * ndim
        nbytes = int(np.prod(shape)) * dtype.itemsize
        if size != offset + nbytes + 4:
            raise ContainerError(f"{path}: payload length {size - offset - 4} does not match dims {shape}")
        crc = 0
        if mmap:
            remaining = nbytes
            while remaining:
                chunk = fh.read(min(_CHUNK_BYTES, remaining))
                crc = zlib.crc32(chunk, crc)
                remaining -= len(chunk)
            payload = None
        else:
            payload = fh.read(nbytes)
            crc = zlib.crc32(payload)
        (stored,) = struct.unpack("<I", fh.read(4))
    if (crc & 0xFFFFFFFF) != stored:
        raise ChecksumError(f"{path}: CRC mismatch (stored {stored:08x}, computed {crc & 0xFFFFFFFF:08x})")
    if mmap:
        return np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=shape)
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def sidecar_path(path):
    path = os.fspath(path)
    root, ext = os.path.splitext(path)
    return (root if ext == ".csem" else path) + ".json"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_sidecar(path, command, config_hash_value, seeds, **extra):
    """JSON metadata next to a container: producing command, config hash, seeds."""
    meta = {"command": command, "config_hash": config_hash_value, "seeds": seeds, **extra}
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")
    return meta


def read_sidecar(path):
    p = sidecar_path(path)
    if not os.path.exists(p):
        raise FileNotFoundError(f"missing sidecar {p}")
    with open(p) as fh:
        return json.load(fh)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
