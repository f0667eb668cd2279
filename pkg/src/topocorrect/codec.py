"""Binary file formats.

Field files ("PMSZF\\0"): header (version, dtype code, ndims, extents as
u64) followed by the raw little-endian payload.  dtype 1 is f32, 2 is
f64, 3 is u64 and carries segmentation labels.  2D fields store two
extents; nz = 1 is implied.

Edits files ("PMSZE\\0"): header (version, xi_abs, tau, vertex count,
edit count), vertex ids as delta-encoded LEB128 varints, corrected
values as f64, and a trailing CRC32 of everything before it.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .correction import EditSet
from .grid import ScalarField

FIELD_MAGIC = b"PMSZF\x00"
EDITS_MAGIC = b"PMSZE\x00"
FIELD_VERSION = 1
EDITS_VERSION = 1

DTYPE_F32 = 1
DTYPE_F64 = 2
DTYPE_U64 = 3

_DTYPE_NP = {DTYPE_F32: "<f4", DTYPE_F64: "<f8", DTYPE_U64: "<u8"}


class FormatError(ValueError):
    pass


def _field_header(dtype_code: int, dims: tuple[int, int, int]) -> bytes:
    ndims = 2 if dims[2] == 1 else 3
    head = struct.pack("<6sBBB", FIELD_MAGIC, FIELD_VERSION, dtype_code, ndims)
    return head + struct.pack(f"<{ndims}Q", *dims[:ndims])


def _parse_field_header(data: bytes):
    if len(data) < 9:
        raise FormatError("field file truncated")
    magic, version, dtype_code, ndims = struct.unpack_from("<6sBBB", data, 0)
    if magic != FIELD_MAGIC:
        raise FormatError(f"bad field magic {magic!r}")
    if version != FIELD_VERSION:
        raise FormatError(f"unsupported field version {version}")
    if dtype_code not in _DTYPE_NP:
        raise FormatError(f"unknown dtype code {dtype_code}")
    if ndims not in (2, 3):
        raise FormatError(f"ndims must be 2 or 3, got {ndims}")
    if len(data) < 9 + 8 * ndims:
        raise FormatError("field file truncated")
    dims = struct.unpack_from(f"<{ndims}Q", data, 9)
    dims3 = tuple(int(d) for d in dims) + ((1,) if ndims == 2 else ())
    return dtype_code, dims3, 9 + 8 * ndims


def write_field(field: ScalarField, precision: str = "f64") -> bytes:
    if precision == "f64":
        code, np_dtype = DTYPE_F64, "<f8"
    elif precision == "f32":
        code, np_dtype = DTYPE_F32, "<f4"
    else:
        raise ValueError(f"precision must be 'f32' or 'f64', got {precision!r}")
    return _field_header(code, field.dims) + field.values.astype(np_dtype).tobytes()


def read_field(data: bytes) -> ScalarField:
    """Parse a field file; f32 payloads are promoted to f64."""
    dtype_code, dims, offset = _parse_field_header(data)
    if dtype_code == DTYPE_U64:
        raise FormatError("file holds labels, not scalar values")
    np_dtype = _DTYPE_NP[dtype_code]
    n = dims[0] * dims[1] * dims[2]
    expected = offset + n * np.dtype(np_dtype).itemsize
    if len(data) != expected:
        raise FormatError(f"field payload length {len(data) - offset} does not "
                          f"match dims {dims}")
    values = np.frombuffer(data, dtype=np_dtype, count=n, offset=offset)
    return ScalarField(dims, values.astype(np.float64))


def write_labels(dims: tuple[int, int, int], labels: np.ndarray) -> bytes:
    labels = np.ascontiguousarray(labels, dtype=np.int64).reshape(-1)
    n = dims[0] * dims[1] * dims[2]
    if labels.size != n:
        raise ValueError(f"expected {n} labels for dims {dims}, got {labels.size}")
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ValueError("labels must be vertex ids of the same grid")
    return _field_header(DTYPE_U64, dims) + labels.astype("<u8").tobytes()


def read_labels(data: bytes) -> tuple[tuple[int, int, int], np.ndarray]:
    dtype_code, dims, offset = _parse_field_header(data)
    if dtype_code != DTYPE_U64:
        raise FormatError("file holds scalar values, not labels")
    n = dims[0] * dims[1] * dims[2]
    expected = offset + n * 8
    if len(data) != expected:
        raise FormatError(f"label payload length {len(data) - offset} does not "
                          f"match dims {dims}")
    labels = np.frombuffer(data, dtype="<u8", count=n, offset=offset)
    return dims, labels.astype(np.int64)


def _write_varint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        out.append(byte | (0x80 if value else 0))
        if not value:
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise FormatError("edits file truncated inside a varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise FormatError("varint too long")


def encode_edits(edits: EditSet, xi_abs: float, tau: float) -> bytes:
    out = bytearray(struct.pack("<6sBddQQ", EDITS_MAGIC, EDITS_VERSION,
                                xi_abs, tau, edits.vertex_count, edits.count))
    prev = 0
    first = True
    for vid in edits.ids.tolist():
        _write_varint(out, vid if first else vid - prev)
        prev = vid
        first = False
    out += edits.values.astype("<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def decode_edits_meta(data: bytes) -> tuple[EditSet, float, float]:
    """Parse an edits file; returns (edits, xi_abs, tau)."""
    head_size = struct.calcsize("<6sBddQQ")
    if len(data) < head_size + 4:
        raise FormatError("edits file truncated")
    magic, version, xi_abs, tau, vertex_count, count = struct.unpack_from(
        "<6sBddQQ", data, 0)
    if magic != EDITS_MAGIC:
        raise FormatError(f"bad edits magic {magic!r}")
    if version != EDITS_VERSION:
        raise FormatError(f"unsupported edits version {version}")
    (crc_stored,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc_stored:
        raise FormatError("edits checksum mismatch")
    pos = head_size
    ids = np.empty(count, dtype=np.int64)
    prev = 0
    for i in range(count):
        delta, pos = _read_varint(data, pos)
        prev = delta if i == 0 else prev + delta
        ids[i] = prev
    values_end = pos + 8 * count
    if values_end != len(data) - 4:
        raise FormatError("edits payload length mismatch")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
    try:
        edits = EditSet(ids=ids, values=values.astype(np.float64),
                        vertex_count=int(vertex_count))
    except ValueError as exc:
        raise FormatError(f"invalid edit set: {exc}") from exc
    return edits, float(xi_abs), float(tau)


def decode_edits(data: bytes) -> EditSet:
    return decode_edits_meta(data)[0]


@dataclass(frozen=True)
class CompressionReport:
    """Size accounting: base ratio of the compressor alone and the ratio
    once the edit stream rides along."""

    original_bytes: int
    compressed_bytes: int
    edits_bytes: int
    cr_base: float
    cr_with_edits: float

    def to_dict(self) -> dict:
        return {
            "original_bytes": self.original_bytes,
            "compressed_bytes": self.compressed_bytes,
            "edits_bytes": self.edits_bytes,
            "cr_base": self.cr_base,
            "cr_with_edits": self.cr_with_edits,
        }


def compression_report(original_bytes: int, compressed_bytes: int,
                       edits_bytes: int) -> CompressionReport:
    if original_bytes <= 0 or compressed_bytes <= 0 or edits_bytes < 0:
        raise ValueError("byte sizes must be positive (edits may be zero)")
    return CompressionReport(
        original_bytes=int(original_bytes),
        compressed_bytes=int(compressed_bytes),
        edits_bytes=int(edits_bytes),
        cr_base=original_bytes / compressed_bytes,
        cr_with_edits=original_bytes / (compressed_bytes + edits_bytes))
