"""Steepest-neighbor topology of grid scalar fields.

Every vertex points at its largest and smallest stencil neighbor under the
(value, id) total order.  Following those pointers to their fixpoints
yields the piecewise-linear Morse-Smale segmentation: each vertex is
labeled by the pair (reached minimum, reached maximum).  Comparing two
fields' pointer structure gives a distortion report: false/missing
extrema and ascending/descending order violations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import STENCIL, ScalarField, neighbors, precedes


@dataclass(frozen=True, eq=False)
class NeighborScan:
    """Per-vertex steepest-neighbor data, flat arrays of length n.

    nmax/nmin hold the id of the largest/smallest neighbor under the
    (value, id) order; is_max/is_min flag vertices exceeding all their
    neighbors (resp. below all of them).
    """

    nmax: np.ndarray
    nmin: np.ndarray
    is_max: np.ndarray
    is_min: np.ndarray


def _offset_slices(dims, off):
    """Center and neighbor slab slices (zyx order) for one stencil offset."""
    nx, ny, nz = dims
    ctr = []
    nbr = []
    for n_ax, d in ((nz, off[2]), (ny, off[1]), (nx, off[0])):
        c0, c1 = max(0, -d), n_ax - max(0, d)
        ctr.append(slice(c0, c1))
        nbr.append(slice(c0 + d, c1 + d))
    return tuple(ctr), tuple(nbr)


def scan_neighbors(values: np.ndarray, dims: tuple[int, int, int]) -> NeighborScan:
    """Vectorized steepest-neighbor scan over the whole grid.

    values is the flat x-fastest float64 array for the given dims.  The
    scan keeps running (value, id) maxima and minima over the 14 stencil
    shifts; boundary vertices see only their in-grid neighbors.
    """
    nx, ny, nz = dims
    n = nx * ny * nz
    a = values.reshape(nz, ny, nx)
    ids = np.arange(n, dtype=np.int64).reshape(nz, ny, nx)

    hi_val = np.full((nz, ny, nx), -np.inf)
    hi_id = np.full((nz, ny, nx), -1, dtype=np.int64)
    lo_val = np.full((nz, ny, nx), np.inf)
    lo_id = np.full((nz, ny, nx), n, dtype=np.int64)

    for off in STENCIL:
        ctr, nbr = _offset_slices(dims, off)
        nv = a[nbr]
        nid = ids[nbr]

        bv, bi = hi_val[ctr], hi_id[ctr]
        take = (nv > bv) | ((nv == bv) & (nid > bi))
        hi_val[ctr] = np.where(take, nv, bv)
        hi_id[ctr] = np.where(take, nid, bi)

        bv, bi = lo_val[ctr], lo_id[ctr]
        take = (nv < bv) | ((nv == bv) & (nid < bi))
        lo_val[ctr] = np.where(take, nv, bv)
        lo_id[ctr] = np.where(take, nid, bi)

    is_max = (hi_val < a) | ((hi_val == a) & (hi_id < ids))
    is_min = (lo_val > a) | ((lo_val == a) & (lo_id > ids))
    return NeighborScan(
        nmax=hi_id.reshape(-1),
        nmin=lo_id.reshape(-1),
        is_max=is_max.reshape(-1),
        is_min=is_min.reshape(-1),
    )


def field_scan(field: ScalarField) -> NeighborScan:
    return scan_neighbors(field.values, field.dims)


def extreme_neighbor(field: ScalarField, v: int, direction: str) -> int:
    """Largest ('ascending') or smallest ('descending') neighbor of v.

    Reference implementation: walks the neighbor list with pairwise
    (value, id) comparisons.  The vectorized scan must agree with it
    bit for bit.
    """
    if direction not in ("ascending", "descending"):
        raise ValueError(f"direction must be 'ascending' or 'descending', got {direction!r}")
    best = None
    for j in neighbors(field.dims, v):
        if best is None:
            best = j
        elif direction == "ascending":
            if precedes(field, best, j):
                best = j
        else:
            if precedes(field, j, best):
                best = j
    assert best is not None
    return best


def is_maximum(field: ScalarField, v: int) -> bool:
    return precedes(field, extreme_neighbor(field, v, "ascending"), v)


def is_minimum(field: ScalarField, v: int) -> bool:
    return precedes(field, v, extreme_neighbor(field, v, "descending"))


@dataclass(frozen=True)
class ExtremaSet:
    maxima: frozenset[int]
    minima: frozenset[int]


def find_extrema(field: ScalarField) -> ExtremaSet:
    """All local maxima and minima under the (value, id) order."""
    scan = field_scan(field)
    return ExtremaSet(
        maxima=frozenset(np.flatnonzero(scan.is_max).tolist()),
        minima=frozenset(np.flatnonzero(scan.is_min).tolist()),
    )


@dataclass(frozen=True, eq=False)
class SegmentationLabels:
    """Per-vertex segment labels: the minimum reached by the descending
    path (asc_target) and the maximum reached by the ascending path
    (desc_target).  The segmentation proper is the pair partition."""

    dims: tuple[int, int, int]
    asc_target: np.ndarray
    desc_target: np.ndarray

    def pair_equal(self, other: "SegmentationLabels") -> np.ndarray:
        return np.logical_and(
            self.asc_target == other.asc_target,
            self.desc_target == other.desc_target,
        )


def _pointer_fixpoint(succ: np.ndarray) -> np.ndarray:
    # Pointer jumping: squares path lengths, so log2(longest path) rounds.
    while True:
        nxt = succ[succ]
        if np.array_equal(nxt, succ):
            return succ
        succ = nxt


def compute_segmentation(field: ScalarField) -> SegmentationLabels:
    scan = field_scan(field)
    ids = np.arange(field.vertex_count, dtype=np.int64)
    up = np.where(scan.is_max, ids, scan.nmax)
    down = np.where(scan.is_min, ids, scan.nmin)
    return SegmentationLabels(
        dims=field.dims,
        asc_target=_pointer_fixpoint(down),
        desc_target=_pointer_fixpoint(up),
    )


def compute_segmentation_naive(field: ScalarField) -> SegmentationLabels:
    """Oracle segmentation: follows the steepest pointers one step at a
    time with no memoization or array machinery.  Quadratic; keep it for
    small grids only."""
    n = field.vertex_count
    asc = np.empty(n, dtype=np.int64)
    desc = np.empty(n, dtype=np.int64)
    for v in range(n):
        cur = v
        while not is_maximum(field, cur):
            cur = extreme_neighbor(field, cur, "ascending")
        desc[v] = cur
        cur = v
        while not is_minimum(field, cur):
            cur = extreme_neighbor(field, cur, "descending")
        asc[v] = cur
    return SegmentationLabels(dims=field.dims, asc_target=asc, desc_target=desc)


@dataclass(frozen=True, eq=False)
class DistortionReport:
    """Where a test field's steepest-neighbor structure departs from a
    reference field's.

    fp_max / fn_max: vertices that are maxima of test but not reference,
    resp. the other way around (fp_min / fn_min likewise for minima).
    asc_order_violations: non-maxima of the reference whose largest
    neighbor differs between the fields; desc_order_violations the dual.
    wrong_label_count: vertices whose (reached min, reached max) pair
    differs between the two segmentations.
    """

    fp_max: np.ndarray
    fn_max: np.ndarray
    fp_min: np.ndarray
    fn_min: np.ndarray
    asc_order_violations: np.ndarray
    desc_order_violations: np.ndarray
    wrong_label_count: int

    @property
    def is_clean(self) -> bool:
        return (
            self.fp_max.size == 0
            and self.fn_max.size == 0
            and self.fp_min.size == 0
            and self.fn_min.size == 0
            and self.asc_order_violations.size == 0
            and self.desc_order_violations.size == 0
            and self.wrong_label_count == 0
        )

    def counts(self) -> dict[str, int]:
        return {
            "fp_max": int(self.fp_max.size),
            "fn_max": int(self.fn_max.size),
            "fp_min": int(self.fp_min.size),
            "fn_min": int(self.fn_min.size),
            "asc_order_violations": int(self.asc_order_violations.size),
            "desc_order_violations": int(self.desc_order_violations.size),
            "wrong_label_count": int(self.wrong_label_count),
        }

    def to_dict(self) -> dict:
        d = {
            "fp_max": self.fp_max.tolist(),
            "fn_max": self.fn_max.tolist(),
            "fp_min": self.fp_min.tolist(),
            "fn_min": self.fn_min.tolist(),
            "asc_order_violations": self.asc_order_violations.tolist(),
            "desc_order_violations": self.desc_order_violations.tolist(),
            "wrong_label_count": int(self.wrong_label_count),
            "clean": self.is_clean,
        }
        return d


def compare_plmss(reference: ScalarField, test: ScalarField) -> DistortionReport:
    """Distortion report of test relative to reference.

    Both fields must share dims.  Vertex sets in the report are sorted
    ascending by id.
    """
    if reference.dims != test.dims:
        raise ValueError(f"dims differ: {reference.dims} vs {test.dims}")
    rs = field_scan(reference)
    ts = field_scan(test)
    ref_seg = compute_segmentation(reference)
    test_seg = compute_segmentation(test)
    return DistortionReport(
        fp_max=np.flatnonzero(ts.is_max & ~rs.is_max),
        fn_max=np.flatnonzero(rs.is_max & ~ts.is_max),
        fp_min=np.flatnonzero(ts.is_min & ~rs.is_min),
        fn_min=np.flatnonzero(rs.is_min & ~ts.is_min),
        asc_order_violations=np.flatnonzero(~rs.is_max & (ts.nmax != rs.nmax)),
        desc_order_violations=np.flatnonzero(~rs.is_min & (ts.nmin != rs.nmin)),
        wrong_label_count=int(np.count_nonzero(~ref_seg.pair_equal(test_seg))),
    )
