"""Synthetic test fields: seeded Perlin noise, linear ramps, constants.

The Perlin generator is the classic gradient-lattice construction with a
seeded permutation table, so a NoiseSpec pins the field bit for bit.
Octaves stack with lacunarity 2 and persistence 0.5 and the sum is
rescaled by the total amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ScalarField


@dataclass(frozen=True)
class NoiseSpec:
    dims: tuple[int, int, int]
    seed: int
    frequency: float = 4.0
    octaves: int = 3

    def __post_init__(self):
        object.__setattr__(self, "dims", _norm_dims(self.dims))
        if self.octaves < 1:
            raise ValueError("octaves must be >= 1")
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")


def _permutation(seed: int) -> np.ndarray:
    # RandomState keeps its stream frozen across numpy releases, which is
    # what makes NoiseSpec a reproducible field id.
    table = np.random.RandomState(seed & 0xFFFFFFFF).permutation(256)
    return np.concatenate([table, table]).astype(np.int64)


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _grad(h, x, y, z):
    h = h & 15
    u = np.where(h < 8, x, y)
    v = np.where(h < 4, y, np.where((h == 12) | (h == 14), x, z))
    return np.where(h & 1 == 0, u, -u) + np.where(h & 2 == 0, v, -v)


def _lerp(a, b, t):
    return a + t * (b - a)


def _noise3(px, py, pz, perm):
    xi0 = np.floor(px).astype(np.int64)
    yi0 = np.floor(py).astype(np.int64)
    zi0 = np.floor(pz).astype(np.int64)
    xf, yf, zf = px - xi0, py - yi0, pz - zi0
    xi, yi, zi = xi0 & 255, yi0 & 255, zi0 & 255
    u, v, w = _fade(xf), _fade(yf), _fade(zf)

    pa = perm[xi] + yi
    pb = perm[xi + 1] + yi
    paa = perm[pa] + zi
    pab = perm[pa + 1] + zi
    pba = perm[pb] + zi
    pbb = perm[pb + 1] + zi

    x1 = _lerp(_grad(perm[paa], xf, yf, zf),
               _grad(perm[pba], xf - 1, yf, zf), u)
    x2 = _lerp(_grad(perm[pab], xf, yf - 1, zf),
               _grad(perm[pbb], xf - 1, yf - 1, zf), u)
    y1 = _lerp(x1, x2, v)
    x1 = _lerp(_grad(perm[paa + 1], xf, yf, zf - 1),
               _grad(perm[pba + 1], xf - 1, yf, zf - 1), u)
    x2 = _lerp(_grad(perm[pab + 1], xf, yf - 1, zf - 1),
               _grad(perm[pbb + 1], xf - 1, yf - 1, zf - 1), u)
    y2 = _lerp(x1, x2, v)
    return _lerp(y1, y2, w)


def perlin(spec: NoiseSpec) -> ScalarField:
    """Fractal Perlin noise; frequency counts lattice cells per axis."""
    nx, ny, nz = _norm_dims(spec.dims)
    perm = _permutation(spec.seed)
    zz, yy, xx = np.meshgrid(np.arange(nz, dtype=np.float64),
                             np.arange(ny, dtype=np.float64),
                             np.arange(nx, dtype=np.float64), indexing="ij")
    total = np.zeros((nz, ny, nx))
    amp_sum = 0.0
    for o in range(spec.octaves):
        freq = spec.frequency * 2.0**o
        amp = 0.5**o
        px = xx * (freq / nx)
        py = yy * (freq / ny)
        pz = zz * (freq / nz) if nz > 1 else np.zeros_like(zz)
        total += amp * _noise3(px, py, pz, perm)
        amp_sum += amp
    return ScalarField((nx, ny, nz), (total / amp_sum).reshape(-1))


def _norm_dims(dims) -> tuple[int, int, int]:
    d = tuple(int(x) for x in dims)
    return d if len(d) == 3 else (d[0], d[1], 1)


def ramp(dims, coefficients=(1.0, 2.0, 4.0)) -> ScalarField:
    """Linear field c0*x + c1*y + c2*z; no interior extrema."""
    nx, ny, nz = _norm_dims(dims)
    c = tuple(float(v) for v in coefficients) + (0.0, 0.0, 0.0)
    zz, yy, xx = np.meshgrid(np.arange(nz, dtype=np.float64),
                             np.arange(ny, dtype=np.float64),
                             np.arange(nx, dtype=np.float64), indexing="ij")
    vals = c[0] * xx + c[1] * yy + c[2] * zz
    return ScalarField((nx, ny, nz), vals.reshape(-1))


def constant(dims, value: float = 0.0) -> ScalarField:
    nx, ny, nz = _norm_dims(dims)
    return ScalarField((nx, ny, nz), np.full(nx * ny * nz, float(value)))
