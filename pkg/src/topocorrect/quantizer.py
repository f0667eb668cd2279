"""Error-bounded uniform scalar quantizer.

Stands in for a production lossy compressor: every reconstructed value is
within the absolute bound xi of the input, and reconstruction is exactly
reproducible from the payload.  Codes are round((f - origin) / (2 xi))
with origin = min(f), so they are non-negative and the smallest is zero.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField

_MAGIC = b"PMSZQ\x00"
_VERSION = 1


class PayloadFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuantizedPayload:
    """Bit-packed quantizer output plus everything needed to reconstruct."""

    dims: tuple[int, int, int]
    xi_abs: float
    origin: float
    bit_width: int
    codes: np.ndarray
    payload_bytes: int

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint64).reshape(-1)
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def to_bytes(self) -> bytes:
        nx, ny, nz = self.dims
        ndims = 2 if nz == 1 else 3
        head = struct.pack("<6sBBddB", _MAGIC, _VERSION, self.bit_width,
                           self.xi_abs, self.origin, ndims)
        head += struct.pack(f"<{ndims}Q", *self.dims[:ndims])
        packed = _pack_codes(self.codes, self.bit_width)
        body = head + packed
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantizedPayload":
        if len(data) < 25:
            raise PayloadFormatError("payload truncated")
        magic, version, bit_width, xi_abs, origin, ndims = struct.unpack_from(
            "<6sBBddB", data, 0)
        if magic != _MAGIC:
            raise PayloadFormatError(f"bad payload magic {magic!r}")
        if version != _VERSION:
            raise PayloadFormatError(f"unsupported payload version {version}")
        if ndims not in (2, 3):
            raise PayloadFormatError(f"bad ndims {ndims}")
        pos = 25
        if len(data) < pos + 8 * ndims + 4:
            raise PayloadFormatError("payload truncated")
        dims = struct.unpack_from(f"<{ndims}Q", data, pos)
        pos += 8 * ndims
        dims3 = tuple(int(d) for d in dims) + ((1,) if ndims == 2 else ())
        n = dims3[0] * dims3[1] * dims3[2]
        nbytes = (n * bit_width + 7) // 8
        if len(data) != pos + nbytes + 4:
            raise PayloadFormatError("payload length mismatch")
        (crc,) = struct.unpack_from("<I", data, pos + nbytes)
        if zlib.crc32(data[:pos + nbytes]) & 0xFFFFFFFF != crc:
            raise PayloadFormatError("payload checksum mismatch")
        codes = _unpack_codes(data[pos:pos + nbytes], n, bit_width)
        return cls(dims=dims3, xi_abs=xi_abs, origin=origin,
                   bit_width=bit_width, codes=codes, payload_bytes=len(data))


def _pack_codes(codes: np.ndarray, bit_width: int) -> bytes:
    if codes.size == 0:
        return b""
    shifts = np.arange(bit_width, dtype=np.uint64)
    bits = ((codes[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="little").tobytes()


def _unpack_codes(packed: bytes, count: int, bit_width: int) -> np.ndarray:
    raw = np.frombuffer(packed, dtype=np.uint8)
    bits = np.unpackbits(raw, count=count * bit_width, bitorder="little")
    bits = bits.reshape(count, bit_width).astype(np.uint64)
    shifts = np.arange(bit_width, dtype=np.uint64)
    return (bits << shifts).sum(axis=1, dtype=np.uint64)


def relative_to_absolute(field: ScalarField, eb_rel: float) -> float:
    """Absolute bound for a relative one: eb_rel times the value range.

    A constant nonzero field falls back to eb_rel * |value|; a constant
    zero field has no scale to attach a relative bound to and is refused.
    """
    if not (eb_rel > 0 and np.isfinite(eb_rel)):
        raise ValueError(f"relative error bound must be positive, got {eb_rel}")
    lo = float(field.values.min())
    hi = float(field.values.max())
    if hi > lo:
        return eb_rel * (hi - lo)
    if hi != 0.0:
        return eb_rel * abs(hi)
    raise ValueError("relative bound undefined for an all-zero field")


def _decode_values(origin: float, xi_abs: float, codes: np.ndarray) -> np.ndarray:
    # The one reconstruction expression; quantize and reconstruct must both
    # use it so their outputs are bit-identical.
    return origin + codes.astype(np.float64) * (2.0 * xi_abs)


def quantize(field: ScalarField, xi_abs: float) -> tuple[QuantizedPayload, ScalarField]:
    """Quantize to the 2*xi_abs lattice anchored at the field minimum.

    Returns the payload and the reconstructed field.  |f - recon| <= xi_abs
    holds for every vertex; the nearest-lattice rounding guarantees it up
    to floating point, and a snap pass repairs any ulp-level overshoot.
    """
    if not (xi_abs > 0 and np.isfinite(xi_abs)):
        raise ValueError(f"absolute error bound must be positive, got {xi_abs}")
    f = field.values
    origin = float(f.min())
    span = (float(f.max()) - origin) / (2.0 * xi_abs)
    if span > 2.0**53:
        raise ValueError("error bound too small for the field's value range")
    codes = np.rint((f - origin) / (2.0 * xi_abs)).astype(np.int64)
    recon = _decode_values(origin, xi_abs, codes)
    # ulp-level repair: rounding of the quotient may land one bin off
    codes = codes + (f - recon > xi_abs).astype(np.int64)
    codes = codes - (recon - f > xi_abs).astype(np.int64)
    recon = _decode_values(origin, xi_abs, codes)
    if (np.abs(f - recon) > xi_abs).any():
        raise AssertionError("quantizer failed to meet its own bound")
    if codes.min() < 0:
        raise AssertionError("quantizer produced a negative code")
    codes_u = codes.astype(np.uint64)
    bit_width = max(1, int(codes.max()).bit_length())
    ndims = 2 if field.dims[2] == 1 else 3
    n = field.vertex_count
    size = 25 + 8 * ndims + (n * bit_width + 7) // 8 + 4
    payload = QuantizedPayload(
        dims=field.dims, xi_abs=float(xi_abs), origin=origin,
        bit_width=bit_width, codes=codes_u, payload_bytes=size)
    return payload, ScalarField(field.dims, recon)


def reconstruct(payload: QuantizedPayload) -> ScalarField:
    values = _decode_values(payload.origin, payload.xi_abs, payload.codes)
    return ScalarField(payload.dims, values)
