"""Block-parallel correction.

The domain splits into near-equal core blocks; each block works on its
core dilated by one ghost layer, detects distortions only at core
vertices (their full neighborhood sits inside the extended block), and
edits any vertex of the extended block.  Rounds are bulk-synchronous:
compute, then merge every shared vertex across its replicas by minimum.
Min-merge commutes and is exact in floating point, so results do not
depend on block visit order or worker scheduling.

Lockstep strategy runs one iteration per block per round and exchanges
every round.  Relaxed strategy lets each block iterate to a local
fixpoint before the exchange, and skips any exchange that provably
cannot change a replica: replicas only diverge through edits at
replicated vertices, so when no block has touched a replicated vertex
since the last exchange, every replica pair is still coherent and the
merge would be idle.  A round where, additionally, no block edited
anything at all (or only unreplicated vertices while already at local
fixpoints) is terminal.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .correction import (BoundsField, ConvergenceError, CorrectionConfig,
                         CorrectionResult, EditSet, _iterate_array,
                         _kind_masks, validate_error_bound)
from .grid import ScalarField
from .topology import compare_plmss, field_scan, scan_neighbors


class SyncStrategy(Enum):
    LOCKSTEP = "lockstep"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class Block:
    """One block: core extent owned exclusively, ext extent = core dilated
    by one layer and clipped to the domain.  Extents are half-open
    (start, stop) per axis in x, y, z order."""

    index: tuple[int, int, int]
    core_start: tuple[int, int, int]
    core_stop: tuple[int, int, int]
    ext_start: tuple[int, int, int]
    ext_stop: tuple[int, int, int]

    @property
    def ext_dims(self) -> tuple[int, int, int]:
        return tuple(b - a for a, b in zip(self.ext_start, self.ext_stop))

    def ext_slices_zyx(self):
        return tuple(slice(self.ext_start[ax], self.ext_stop[ax]) for ax in (2, 1, 0))

    def core_slices_zyx(self):
        return tuple(slice(self.core_start[ax], self.core_stop[ax]) for ax in (2, 1, 0))

    def core_in_ext_slices_zyx(self):
        return tuple(
            slice(self.core_start[ax] - self.ext_start[ax],
                  self.core_stop[ax] - self.ext_start[ax])
            for ax in (2, 1, 0))

    def core_mask_flat(self) -> np.ndarray:
        ex, ey, ez = self.ext_dims
        mask = np.zeros((ez, ey, ex), dtype=bool)
        mask[self.core_in_ext_slices_zyx()] = True
        return mask.reshape(-1)


@dataclass(frozen=True)
class BlockDecomposition:
    dims: tuple[int, int, int]
    block_grid: tuple[int, int, int]
    blocks: tuple[Block, ...]


def _axis_splits(extent: int, parts: int) -> list[tuple[int, int]]:
    if parts < 1:
        raise ValueError(f"block count must be >= 1, got {parts}")
    if parts > extent:
        raise ValueError(f"cannot split extent {extent} into {parts} blocks")
    base, rem = divmod(extent, parts)
    spans = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < rem else 0)
        spans.append((start, start + size))
        start += size
    return spans


def decompose(dims: tuple[int, int, int],
              block_grid: tuple[int, int, int]) -> BlockDecomposition:
    """Split the grid into block_grid near-equal cores; axis remainders go
    to the leading blocks.  Ext extents are cores dilated by one, clipped."""
    dims = tuple(int(d) for d in dims)
    block_grid = tuple(int(b) for b in block_grid)
    if len(dims) != 3 or len(block_grid) != 3:
        raise ValueError("dims and block_grid must be 3-tuples")
    splits = [_axis_splits(dims[ax], block_grid[ax]) for ax in range(3)]
    blocks = []
    for bz in range(block_grid[2]):
        for by in range(block_grid[1]):
            for bx in range(block_grid[0]):
                core_start = (splits[0][bx][0], splits[1][by][0], splits[2][bz][0])
                core_stop = (splits[0][bx][1], splits[1][by][1], splits[2][bz][1])
                ext_start = tuple(max(0, s - 1) for s in core_start)
                ext_stop = tuple(min(dims[ax], core_stop[ax] + 1) for ax in range(3))
                blocks.append(Block((bx, by, bz), core_start, core_stop,
                                    ext_start, ext_stop))
    return BlockDecomposition(dims=dims, block_grid=block_grid, blocks=tuple(blocks))


def _merge_min(blocks, arrays, dims) -> bool:
    """Pull every replicated vertex down to the minimum over its replicas.

    arrays are the blocks' flat extended-extent fields, updated in place.
    Returns whether anything changed.
    """
    nx, ny, nz = dims
    acc = np.full((nz, ny, nx), np.inf)
    for block, g in zip(blocks, arrays):
        view = g.reshape(block.ext_dims[2], block.ext_dims[1], block.ext_dims[0])
        sl = block.ext_slices_zyx()
        np.minimum(acc[sl], view, out=acc[sl])
    changed = False
    for block, g in zip(blocks, arrays):
        merged = acc[block.ext_slices_zyx()].reshape(-1)
        if not np.array_equal(merged, g):
            changed = True
            g[:] = merged
    return changed


def sync_ghosts(decomposition: BlockDecomposition, g_exts: list[np.ndarray]) -> bool:
    """Public one-shot ghost exchange over raw per-block arrays."""
    if len(g_exts) != len(decomposition.blocks):
        raise ValueError("one array per block required")
    return _merge_min(decomposition.blocks, g_exts, decomposition.dims)


def local_converge(block: Block, f_ext: np.ndarray, g_ext: np.ndarray,
                   lower_ext: np.ndarray, config: CorrectionConfig,
                   ) -> tuple[np.ndarray, int, int]:
    """Iterate one block to its local fixpoint (ghosts held fixed apart
    from the block's own edits).  Returns (new g_ext, iterations counting
    the final zero-edit pass, total edits)."""
    dims_ext = block.ext_dims
    f_scan = scan_neighbors(f_ext, dims_ext)
    core_mask = block.core_mask_flat()
    g = g_ext.copy()
    iterations = 0
    total = 0
    for _ in range(config.max_outer_iterations):
        g, edited = _iterate_array(dims_ext, f_scan, g, lower_ext,
                                   config.tau, core_mask)
        iterations += 1
        e = int(np.count_nonzero(edited))
        total += e
        if e == 0:
            return g, iterations, total
    raise ConvergenceError(
        f"block {block.index} found no zero-edit iteration within "
        f"{config.max_outer_iterations}")


@dataclass(frozen=True)
class ParallelStats:
    strategy: str
    block_grid: tuple[int, int, int]
    rounds: int
    syncs: int
    per_block_iterations: tuple[int, ...]
    per_block_edit_totals: tuple[int, ...]
    per_block_max_vertex_edits: tuple[int, ...]
    edit_count: int
    edit_ratio: float
    compute_seconds: float
    sync_seconds: float

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "block_grid": list(self.block_grid),
            "rounds": self.rounds,
            "syncs": self.syncs,
            "per_block_iterations": list(self.per_block_iterations),
            "per_block_edit_totals": list(self.per_block_edit_totals),
            "per_block_max_vertex_edits": list(self.per_block_max_vertex_edits),
            "edit_count": self.edit_count,
            "edit_ratio": self.edit_ratio,
            "timings": {
                "compute_seconds": self.compute_seconds,
                "sync_seconds": self.sync_seconds,
            },
        }


class _BlockState:
    __slots__ = ("block", "dims_ext", "f_scan", "g", "lower", "core_mask",
                 "shared_mask", "shared_dirty", "counts", "iterations", "edits")

    def __init__(self, block: Block, f_zyx, fhat_zyx, lower_zyx, shared_zyx):
        self.block = block
        ex, ey, ez = block.ext_dims
        self.dims_ext = (ex, ey, ez)
        sl = block.ext_slices_zyx()
        f_ext = np.ascontiguousarray(f_zyx[sl]).reshape(-1)
        self.f_scan = scan_neighbors(f_ext, self.dims_ext)
        self.g = np.ascontiguousarray(fhat_zyx[sl]).reshape(-1)
        self.lower = np.ascontiguousarray(lower_zyx[sl]).reshape(-1)
        self.core_mask = block.core_mask_flat()
        self.shared_mask = np.ascontiguousarray(shared_zyx[sl]).reshape(-1)
        self.shared_dirty = False
        self.counts = np.zeros(self.g.size, dtype=np.int64)
        self.iterations = 0
        self.edits = 0


def _replicated_mask_zyx(decomp: BlockDecomposition) -> np.ndarray:
    """True at vertices held by more than one extended block."""
    nx, ny, nz = decomp.dims
    multiplicity = np.zeros((nz, ny, nx), dtype=np.int32)
    for block in decomp.blocks:
        multiplicity[block.ext_slices_zyx()] += 1
    return multiplicity > 1


def _block_round(state: _BlockState, config: CorrectionConfig, lockstep: bool) -> int:
    round_edits = 0
    for _ in range(config.max_outer_iterations):
        g, edited = _iterate_array(state.dims_ext, state.f_scan, state.g,
                                   state.lower, config.tau, state.core_mask)
        state.g = g
        state.iterations += 1
        e = int(np.count_nonzero(edited))
        if e:
            state.counts[edited] += 1
            state.edits += e
            round_edits += e
            if not state.shared_dirty and bool(edited[state.shared_mask].any()):
                state.shared_dirty = True
        if lockstep or e == 0:
            return round_edits
    raise ConvergenceError(
        f"block {state.block.index} found no zero-edit iteration within "
        f"{config.max_outer_iterations}")


def run_parallel(original: ScalarField, decompressed: ScalarField,
                 config: CorrectionConfig,
                 block_grid: tuple[int, int, int],
                 strategy: SyncStrategy = SyncStrategy.RELAXED,
                 workers: int = 1) -> tuple[CorrectionResult, ParallelStats]:
    """Correct with the block-parallel scheme; workers only changes how
    block computations are scheduled, never the result."""
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    strategy = SyncStrategy(strategy)
    validate_error_bound(original, decompressed, config.xi_abs)
    bounds = BoundsField.from_field(original, config.xi_abs)
    dims = original.dims
    nx, ny, nz = dims
    decomp = decompose(dims, block_grid)

    f_zyx = original.as_zyx()
    fhat_zyx = decompressed.as_zyx()
    lower_zyx = bounds.lower.reshape(nz, ny, nx)
    shared_zyx = _replicated_mask_zyx(decomp)
    states = [_BlockState(b, f_zyx, fhat_zyx, lower_zyx, shared_zyx)
              for b in decomp.blocks]

    lockstep = strategy is SyncStrategy.LOCKSTEP
    rounds = 0
    syncs = 0
    round_edit_totals: list[int] = []
    compute_seconds = 0.0
    sync_seconds = 0.0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while True:
            if rounds >= config.max_outer_iterations:
                raise ConvergenceError(
                    f"no terminal round within {config.max_outer_iterations}")
            rounds += 1
            t0 = time.perf_counter()
            if pool is None:
                edits = [_block_round(st, config, lockstep) for st in states]
            else:
                edits = list(pool.map(
                    lambda st: _block_round(st, config, lockstep), states))
            compute_seconds += time.perf_counter() - t0
            round_edits = sum(edits)
            round_edit_totals.append(round_edits)

            if not lockstep:
                if round_edits == 0:
                    # nothing moved anywhere: replicas are exactly as the
                    # previous exchange left them, so the state is final
                    break
                if not any(st.shared_dirty for st in states):
                    # every block reached a local fixpoint and no edit since
                    # the last exchange touched a replicated vertex, so the
                    # merge could not change anything and no block would
                    # find new work: the state is final
                    break
            t0 = time.perf_counter()
            changed = _merge_min(decomp.blocks, [st.g for st in states], dims)
            syncs += 1
            sync_seconds += time.perf_counter() - t0
            for st in states:
                st.shared_dirty = False
            if round_edits == 0 and not changed:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    acc = np.empty((nz, ny, nx))
    for st in states:
        view = st.g.reshape(st.dims_ext[2], st.dims_ext[1], st.dims_ext[0])
        acc[st.block.core_slices_zyx()] = view[st.block.core_in_ext_slices_zyx()]
    for st in states:
        if not np.array_equal(acc[st.block.ext_slices_zyx()].reshape(-1), st.g):
            raise ConvergenceError("replicas diverged at termination")
    g = acc.reshape(-1)

    corrected = decompressed.with_values(g)
    if not bounds.admits(corrected.values):
        raise ConvergenceError("corrected field escaped the error bound")
    f_scan = field_scan(original)
    g_scan = scan_neighbors(corrected.values, dims)
    if any(m.any() for m in _kind_masks(f_scan, g_scan)):
        raise ConvergenceError("distortions survived at termination")
    verification = compare_plmss(original, corrected)
    if not verification.is_clean:
        raise ConvergenceError("segmentation still differs after correction")

    edit_set = EditSet.diff(decompressed, corrected)
    result = CorrectionResult(
        corrected=corrected,
        edits=edit_set,
        iterations=max(st.iterations for st in states),
        edits_per_iteration=tuple(round_edit_totals),
        max_vertex_edits=max(int(st.counts.max()) for st in states),
        verification=verification)
    stats = ParallelStats(
        strategy=strategy.value,
        block_grid=tuple(int(b) for b in block_grid),
        rounds=rounds,
        syncs=syncs,
        per_block_iterations=tuple(st.iterations for st in states),
        per_block_edit_totals=tuple(st.edits for st in states),
        per_block_max_vertex_edits=tuple(int(st.counts.max()) for st in states),
        edit_count=edit_set.count,
        edit_ratio=edit_set.ratio,
        compute_seconds=compute_seconds,
        sync_seconds=sync_seconds)
    return result, stats
