"""Detection and bounded repair of steepest-neighbor order distortions.

Error-bounded lossy compression may flip the (value, id) order of nearby
vertices in the decompressed field, which creates or destroys extrema and
reroutes steepest paths, so segmentations computed downstream no longer
match the original field's.  The corrector restores the original order
relations with monotone non-increasing edits that never cross the lower
bound f - xi, so the corrected field still satisfies the compressor's
error bound.

One iteration works Jacobi style on a snapshot: detect every distortion,
derive per-vertex target values, min-merge competing targets, apply all
edits at once.  Merging by minimum makes the iteration independent of
detection order and of how vertices are partitioned across workers.
Every unclamped edit lowers its vertex by at least tau, and a vertex can
fall at most 2*xi in total, which bounds the number of edits per vertex
by ceil(2*xi/tau) + 1 and guarantees termination.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .grid import STENCIL, ScalarField, neighbors
from .topology import (DistortionReport, NeighborScan, compare_plmss,
                       field_scan, scan_neighbors)


class BoundViolationError(ValueError):
    """The decompressed field strays beyond the stated error bound."""

    def __init__(self, index, original, decompressed, xi_abs, offenders):
        self.index = int(index)
        self.original = float(original)
        self.decompressed = float(decompressed)
        self.xi_abs = float(xi_abs)
        self.offenders = int(offenders)
        super().__init__(
            f"error bound violated at vertex {self.index}: "
            f"|{self.original!r} - {self.decompressed!r}| > {self.xi_abs!r} "
            f"(first of {self.offenders} offending vertices)")


class ConvergenceError(RuntimeError):
    """Correction failed to reach a distortion-free state; a defect."""


def validate_error_bound(original: ScalarField, decompressed: ScalarField,
                         xi_abs: float) -> None:
    if original.dims != decompressed.dims:
        raise ValueError(f"dims differ: {original.dims} vs {decompressed.dims}")
    bad = np.flatnonzero(np.abs(original.values - decompressed.values) > xi_abs)
    if bad.size:
        i = int(bad[0])
        raise BoundViolationError(i, original.values[i], decompressed.values[i],
                                  xi_abs, bad.size)


@dataclass(frozen=True)
class CorrectionConfig:
    """Correction parameters.

    xi_abs is the compressor's absolute error bound.  tau is the minimum
    decrement of an unclamped edit and must sit strictly inside (0, 2*xi);
    it defaults to xi_abs / 1024.  max_outer_iterations caps both serial
    iterations and parallel rounds, defaulting to 10 * ceil(2*xi/tau).
    """

    xi_abs: float
    tau: float | None = None
    max_outer_iterations: int | None = None

    def __post_init__(self):
        xi = float(self.xi_abs)
        if not (math.isfinite(xi) and xi > 0):
            raise ValueError(f"xi_abs must be positive and finite, got {self.xi_abs!r}")
        tau = xi / 1024.0 if self.tau is None else float(self.tau)
        if not (math.isfinite(tau) and 0.0 < tau < 2.0 * xi):
            raise ValueError(f"tau must lie in (0, 2*xi_abs), got {tau!r}")
        cap = (10 * math.ceil(2.0 * xi / tau)
               if self.max_outer_iterations is None
               else int(self.max_outer_iterations))
        if cap < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        object.__setattr__(self, "xi_abs", xi)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "max_outer_iterations", cap)

    @property
    def per_vertex_edit_budget(self) -> int:
        """Hard bound on edits any vertex can receive: ceil(2*xi/tau) + 1."""
        return math.ceil(2.0 * self.xi_abs / self.tau) + 1


@dataclass(frozen=True, eq=False)
class BoundsField:
    """Per-vertex admissible interval [f - xi, f + xi], built once from the
    original field and used both for clamping edits and for verifying the
    corrected output."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.ascontiguousarray(self.lower, dtype=np.float64).reshape(-1)
        upper = np.ascontiguousarray(self.upper, dtype=np.float64).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError("lower/upper size mismatch")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_field(cls, field: ScalarField, xi_abs: float) -> "BoundsField":
        if not (math.isfinite(xi_abs) and xi_abs > 0):
            raise ValueError(f"xi_abs must be positive and finite, got {xi_abs!r}")
        return cls(field.values - xi_abs, field.values + xi_abs)

    def admits(self, values: np.ndarray) -> bool:
        return bool(np.all((values >= self.lower) & (values <= self.upper)))


def compute_bounds(field: ScalarField, xi_abs: float) -> BoundsField:
    """Per-vertex admissible interval [f - xi, f + xi] for a field."""
    return BoundsField.from_field(field, xi_abs)


class DistortionKind(enum.Enum):
    FALSE_MAXIMUM = "false_maximum"
    MISSING_MAXIMUM = "missing_maximum"
    FALSE_MINIMUM = "false_minimum"
    MISSING_MINIMUM = "missing_minimum"
    ASC_ORDER = "asc_order"
    DESC_ORDER = "desc_order"


_KIND_RANK = {kind: rank for rank, kind in enumerate(DistortionKind)}


@dataclass(frozen=True)
class Distortion:
    """One detected break of the original order around vertex `center`.

    `anchor` is the vertex whose current value anchors the repair: every
    vertex in `targets` is proposed the value g[anchor] - tau.  For a
    false maximum the anchor is the neighbor that should dominate the
    center; for a missing maximum it is the center itself and the targets
    are the neighbors currently sorting above it; the minimum kinds and
    the order kinds follow the same pattern on the other side.
    """

    kind: DistortionKind
    center: int
    anchor: int
    targets: tuple[int, ...]


def apply_edit(current: float, proposal: float, lower: float) -> float:
    """Clamped monotone edit: move toward the proposal but never upward
    and never below the admissible lower bound."""
    return max(min(current, proposal), lower)


def _kind_masks(f_scan: NeighborScan, g_scan: NeighborScan,
                center_mask: np.ndarray | None = None):
    false_max = g_scan.is_max & ~f_scan.is_max
    missing_max = f_scan.is_max & ~g_scan.is_max
    false_min = g_scan.is_min & ~f_scan.is_min
    missing_min = f_scan.is_min & ~g_scan.is_min
    asc_order = ~f_scan.is_max & (g_scan.nmax != f_scan.nmax)
    desc_order = ~f_scan.is_min & (g_scan.nmin != f_scan.nmin)
    masks = (false_max, missing_max, false_min, missing_min, asc_order, desc_order)
    if center_mask is not None:
        masks = tuple(m & center_mask for m in masks)
    return masks


def _push_above_anchor(prop, dims, g, centers, anchors, tau):
    # For each center c (anchor a): propose g[a] - tau at every neighbor j
    # of c whose (g, id) key exceeds the anchor's key.  j == a never
    # qualifies, the key comparison is strict.
    nx, ny, nz = dims
    cx = centers % nx
    cy = (centers // nx) % ny
    cz = centers // (nx * ny)
    ga = g[anchors]
    val = ga - tau
    for dx, dy, dz in STENCIL:
        px, py, pz = cx + dx, cy + dy, cz + dz
        ok = (px >= 0) & (px < nx) & (py >= 0) & (py < ny) & (pz >= 0) & (pz < nz)
        if not ok.any():
            continue
        j = centers[ok] + (dx + nx * (dy + ny * dz))
        a = anchors[ok]
        gav = ga[ok]
        gj = g[j]
        above = (gj > gav) | ((gj == gav) & (j > a))
        if above.any():
            np.minimum.at(prop, j[above], val[ok][above])


def _proposal_array(dims, f_scan, g, g_scan, tau, masks):
    false_max, missing_max, false_min, missing_min, asc_order, desc_order = masks
    prop = np.full(g.size, np.inf)

    c = np.flatnonzero(false_max)
    if c.size:
        np.minimum.at(prop, c, g[f_scan.nmax[c]] - tau)
    c = np.flatnonzero(missing_max)
    if c.size:
        _push_above_anchor(prop, dims, g, c, c, tau)
    c = np.flatnonzero(false_min)
    if c.size:
        np.minimum.at(prop, f_scan.nmin[c], g[c] - tau)
    c = np.flatnonzero(missing_min)
    if c.size:
        np.minimum.at(prop, c, g[g_scan.nmin[c]] - tau)
    c = np.flatnonzero(asc_order)
    if c.size:
        _push_above_anchor(prop, dims, g, c, f_scan.nmax[c], tau)
    c = np.flatnonzero(desc_order)
    if c.size:
        np.minimum.at(prop, f_scan.nmin[c], g[g_scan.nmin[c]] - tau)
    return prop


def _iterate_array(dims, f_scan, g, lower, tau, center_mask=None):
    """One Jacobi iteration on raw arrays; returns (new g, edited mask)."""
    g_scan = scan_neighbors(g, dims)
    masks = _kind_masks(f_scan, g_scan, center_mask)
    if not any(m.any() for m in masks):
        return g, np.zeros(g.size, dtype=bool)
    prop = _proposal_array(dims, f_scan, g, g_scan, tau, masks)
    new_g = np.maximum(np.minimum(g, prop), lower)
    if (new_g > g).any():
        raise AssertionError("edit raised a value; monotonicity broken")
    return new_g, new_g != g


def detect_distortions(original: ScalarField, distorted: ScalarField) -> list[Distortion]:
    """All order distortions of `distorted` relative to `original`,
    sorted by (center id, kind declaration order)."""
    if original.dims != distorted.dims:
        raise ValueError(f"dims differ: {original.dims} vs {distorted.dims}")
    f_scan = field_scan(original)
    g_scan = field_scan(distorted)
    masks = _kind_masks(f_scan, g_scan)
    g = distorted.values
    dims = original.dims

    def above_anchor_targets(center: int, anchor: int) -> tuple[int, ...]:
        ga = g[anchor]
        out = []
        for j in neighbors(dims, center):
            if g[j] > ga or (g[j] == ga and j > anchor):
                out.append(j)
        return tuple(out)

    records = []
    for kind, mask in zip(DistortionKind, masks):
        for center in np.flatnonzero(mask).tolist():
            if kind is DistortionKind.FALSE_MAXIMUM:
                anchor = int(f_scan.nmax[center])
                targets = (center,)
            elif kind is DistortionKind.MISSING_MAXIMUM:
                anchor = center
                targets = above_anchor_targets(center, center)
            elif kind is DistortionKind.FALSE_MINIMUM:
                anchor = center
                targets = (int(f_scan.nmin[center]),)
            elif kind is DistortionKind.MISSING_MINIMUM:
                anchor = int(g_scan.nmin[center])
                targets = (center,)
            elif kind is DistortionKind.ASC_ORDER:
                anchor = int(f_scan.nmax[center])
                targets = above_anchor_targets(center, anchor)
            else:
                anchor = int(g_scan.nmin[center])
                targets = (int(f_scan.nmin[center]),)
            records.append(Distortion(kind, center, anchor, targets))
    records.sort(key=lambda r: (r.center, _KIND_RANK[r.kind]))
    return records


def propose_corrections(distorted: ScalarField, tau: float,
                        detections: list[Distortion]) -> dict[int, float]:
    """Merge every detection's proposed edits into one target per vertex.

    All detections share the repair shape `target <- g[anchor] - tau`;
    competing proposals for a vertex merge by minimum, which is why the
    result does not depend on detection order.
    """
    g = distorted.values
    merged: dict[int, float] = {}
    for rec in detections:
        val = float(g[rec.anchor]) - tau
        for t in rec.targets:
            cur = merged.get(t)
            if cur is None or val < cur:
                merged[t] = val
    return merged


def correction_iteration(original: ScalarField, current: ScalarField,
                         bounds: BoundsField, tau: float) -> tuple[ScalarField, int]:
    """One detect/propose/apply step via the record-based reference path.

    The array engine used by run_correction must agree with this bit for
    bit; the tests hold the two routes together.
    """
    detections = detect_distortions(original, current)
    proposals = propose_corrections(current, tau, detections)
    values = current.values.copy()
    edits = 0
    for v, p in proposals.items():
        nv = apply_edit(values[v], p, bounds.lower[v])
        if nv != values[v]:
            values[v] = nv
            edits += 1
    return current.with_values(values), edits


@dataclass(frozen=True, eq=False)
class EditSet:
    """Sparse difference between the decompressed field and the corrected
    one: ascending vertex ids and their corrected values."""

    ids: np.ndarray
    values: np.ndarray
    vertex_count: int

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int64).reshape(-1)
        values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if ids.size != values.size:
            raise ValueError("ids/values length mismatch")
        if ids.size:
            if (np.diff(ids) <= 0).any():
                raise ValueError("edit ids must be strictly increasing")
            if ids[0] < 0 or ids[-1] >= self.vertex_count:
                raise ValueError("edit id out of range")
        if not np.isfinite(values).all():
            raise ValueError("edit values must be finite")
        ids.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vertex_count", int(self.vertex_count))

    @property
    def count(self) -> int:
        return int(self.ids.size)

    @property
    def ratio(self) -> float:
        return self.count / self.vertex_count

    @classmethod
    def diff(cls, baseline: ScalarField, edited: ScalarField) -> "EditSet":
        if baseline.dims != edited.dims:
            raise ValueError(f"dims differ: {baseline.dims} vs {edited.dims}")
        ids = np.flatnonzero(baseline.values != edited.values)
        return cls(ids=ids, values=edited.values[ids],
                   vertex_count=baseline.vertex_count)

    def apply_to(self, field: ScalarField) -> ScalarField:
        if field.vertex_count != self.vertex_count:
            raise ValueError(
                f"edit set is for {self.vertex_count} vertices, field has "
                f"{field.vertex_count}")
        values = field.values.copy()
        values[self.ids] = self.values
        return field.with_values(values)


@dataclass(frozen=True, eq=False)
class CorrectionResult:
    corrected: ScalarField
    edits: EditSet
    iterations: int
    edits_per_iteration: tuple[int, ...]
    max_vertex_edits: int
    verification: DistortionReport


def run_correction(original: ScalarField, decompressed: ScalarField,
                   config: CorrectionConfig) -> CorrectionResult:
    """Iterate until an iteration makes no edit, then verify.

    The final zero-edit pass counts as an iteration, so an already clean
    input reports one iteration and an empty edit set.  Raises
    BoundViolationError if the input pair breaks the error bound and
    ConvergenceError if a distortion survives (which would be a defect:
    a zero-edit iteration implies no detections).
    """
    validate_error_bound(original, decompressed, config.xi_abs)
    bounds = BoundsField.from_field(original, config.xi_abs)
    dims = original.dims
    f_scan = field_scan(original)
    g = decompressed.values.copy()
    edit_counts = np.zeros(g.size, dtype=np.int64)
    history: list[int] = []
    converged = False
    for _ in range(config.max_outer_iterations):
        g, edited = _iterate_array(dims, f_scan, g, bounds.lower, config.tau)
        e = int(np.count_nonzero(edited))
        history.append(e)
        if e == 0:
            converged = True
            break
        edit_counts[edited] += 1
    if not converged:
        raise ConvergenceError(
            f"no zero-edit iteration within {config.max_outer_iterations}")

    corrected = decompressed.with_values(g)
    if not bounds.admits(g):
        raise ConvergenceError("corrected field escaped the error bound")
    g_scan = scan_neighbors(g, dims)
    if any(m.any() for m in _kind_masks(f_scan, g_scan)):
        raise ConvergenceError("distortions survived a zero-edit iteration")
    verification = compare_plmss(original, corrected)
    if not verification.is_clean:
        raise ConvergenceError("segmentation still differs after correction")
    return CorrectionResult(
        corrected=corrected,
        edits=EditSet.diff(decompressed, corrected),
        iterations=len(history),
        edits_per_iteration=tuple(history),
        max_vertex_edits=int(edit_counts.max()) if g.size else 0,
        verification=verification)
