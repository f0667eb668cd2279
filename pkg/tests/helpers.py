"""Shared pure-Python oracles for the test suite.

Everything here is written as plain loops over `neighbors`/`precedes`
so the vectorized library paths are checked against an independent,
definition-shaped implementation.
"""

import numpy as np

from topocorrect import ScalarField, neighbors, precedes


def make_field(dims, values):
    return ScalarField(tuple(dims), np.asarray(values, dtype=np.float64).reshape(-1))


def brute_nmax(field, v):
    best = None
    for j in neighbors(field.dims, v):
        if best is None or precedes(field, best, j):
            best = j
    return best


def brute_nmin(field, v):
    best = None
    for j in neighbors(field.dims, v):
        if best is None or precedes(field, j, best):
            best = j
    return best


def brute_is_max(field, v):
    return all(precedes(field, j, v) for j in neighbors(field.dims, v))


def brute_is_min(field, v):
    return all(precedes(field, v, j) for j in neighbors(field.dims, v))


def brute_extrema(field):
    maxima = {v for v in range(field.vertex_count) if brute_is_max(field, v)}
    minima = {v for v in range(field.vertex_count) if brute_is_min(field, v)}
    return maxima, minima


def brute_labels(field):
    """Per-vertex (reached minimum, reached maximum) by literal path following."""
    n = field.vertex_count
    asc = np.empty(n, dtype=np.int64)
    desc = np.empty(n, dtype=np.int64)
    for v in range(n):
        cur = v
        while not brute_is_min(field, cur):
            cur = brute_nmin(field, cur)
        asc[v] = cur
        cur = v
        while not brute_is_max(field, cur):
            cur = brute_nmax(field, cur)
        desc[v] = cur
    return asc, desc


def run_instrumented_parallel(original, decompressed, config, block_grid,
                              lockstep):
    """Mirror of the block-parallel round loop that checks, phase by phase,
    that no value ever rises and none escapes below the admissible floor —
    through block compute passes and through ghost merges alike.

    Returns (assembled flat values, rounds, syncs, max per-vertex edits).
    """
    from topocorrect.correction import BoundsField
    from topocorrect.parallel import (_BlockState, _block_round, _merge_min,
                                      _replicated_mask_zyx, decompose)

    bounds = BoundsField.from_field(original, config.xi_abs)
    nx, ny, nz = original.dims
    decomp = decompose(original.dims, block_grid)
    f_zyx = original.as_zyx()
    fhat_zyx = decompressed.as_zyx()
    lower_zyx = bounds.lower.reshape(nz, ny, nx)
    shared_zyx = _replicated_mask_zyx(decomp)
    states = [_BlockState(b, f_zyx, fhat_zyx, lower_zyx, shared_zyx)
              for b in decomp.blocks]

    rounds = 0
    syncs = 0
    while True:
        assert rounds < config.max_outer_iterations
        rounds += 1
        before = [st.g.copy() for st in states]
        edits = [_block_round(st, config, lockstep) for st in states]
        for prev, st in zip(before, states):
            assert np.all(st.g <= prev), "compute raised a value"
            assert np.all(st.g >= st.lower), "compute broke the floor"
        round_edits = sum(edits)
        if not lockstep:
            if round_edits == 0:
                break
            if not any(st.shared_dirty for st in states):
                break
        before = [st.g.copy() for st in states]
        changed = _merge_min(decomp.blocks, [st.g for st in states],
                             decomp.dims)
        syncs += 1
        for prev, st in zip(before, states):
            assert np.all(st.g <= prev), "merge raised a value"
            assert np.all(st.g >= st.lower), "merge broke the floor"
        for st in states:
            st.shared_dirty = False
        if round_edits == 0 and not changed:
            break

    acc = np.empty((nz, ny, nx))
    for st in states:
        view = st.g.reshape(st.dims_ext[2], st.dims_ext[1], st.dims_ext[0])
        acc[st.block.core_slices_zyx()] = view[st.block.core_in_ext_slices_zyx()]
    max_edits = max(int(st.counts.max()) for st in states)
    return acc.reshape(-1), rounds, syncs, max_edits


def random_field(rng, dims, style="uniform"):
    n = int(np.prod(dims))
    if style == "uniform":
        vals = rng.standard_normal(n)
    elif style == "plateau":
        # few distinct levels so index tie-breaking carries the order
        vals = rng.integers(0, 4, size=n).astype(np.float64)
    elif style == "coarse":
        vals = np.round(rng.standard_normal(n), 1)
    else:
        raise ValueError(style)
    return make_field(dims, vals)
