"""Compiled inner loops: walks, loop erasure, and forest building.

Everything here operates on flat int64 arrays so numba can compile it
once and the results are bit-reproducible.  Vertices are packed into
nonnegative int64 keys with a per-run (offset, bits) window; hash maps
are open-addressing with linear probing and never shrink.  A kernel
that runs out of map or buffer space returns an overflow status and the
Python wrapper retries with larger capacities and the same random
coordinates, which reproduces the identical trajectory.

Wrapper contract: the packing window (poff, pbits) must cover every box
a kernel can test membership against, inflated by two lattice steps, so
the one vertex recorded outside a stop box still packs injectively.
Packed keys are updated incrementally: a unit step on axis a shifts the
key by +-2^(pbits*(d-1-a)), which stays carry-free inside the window.

The forest kernels keep one combined map: key = packed vertex, value
pair = (parent entry | MISSING, stack read depth), stored interleaved
so both land on one cache line.  Randomness is the splitmix64
finalizer on affine counters, mirroring `rng.py` exactly; arrows are
addressed by (vertex, depth), so a sampled forest is a deterministic
function of the stream key alone, whatever the start order.
"""

from __future__ import annotations

import numpy as np
from numba import njit, int64, uint64

# status codes shared with the wrappers
OK = 0
OVERFLOW_MAP = 1
OVERFLOW_BUF = 2
OVERFLOW_QUEUE = 3
OUT_FULL = 3

CAUSE_EXITED = 0
CAUSE_HIT = 1
CAUSE_CAP = 2

EMPTY = int64(-1)
MISSING = int64(-(1 << 62))
ROOT_P = int64((1 << 56) - 1)

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_VERTEX_SALT = uint64(0x1D8E4E27C47D124F)
_IDX_MASK = int64((1 << 24) - 1)


@njit(uint64(uint64), cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(uint64(uint64, int64), cache=True, inline="always")
def _draw(key, position):
    return _mix64(key + uint64(position + 1) * _GOLDEN)


@njit(uint64(uint64, int64), cache=True, inline="always")
def _vertex_key(key, packed):
    return _mix64(key ^ _mix64(uint64(packed) + _VERTEX_SALT))


@njit(int64(uint64, int64, int64, int64), cache=True, inline="always")
def _arrow(key, packed, depth, two_d):
    return int64(_draw(_vertex_key(key, packed), depth) % uint64(two_d))


# ---------------------------------------------------------------------------
# open-addressing int64 -> int64 map on caller-owned arrays (capacity is a
# power of two; EMPTY slots are -1, valid keys are nonnegative)


@njit(int64(int64, int64), cache=True, inline="always")
def _slot(k, mask):
    h = uint64(k) * _GOLDEN
    h ^= h >> uint64(31)
    return int64(h & uint64(mask))


@njit(int64(int64[:], int64[:], int64), cache=True, inline="always")
def map_get(keys, vals, k):
    mask = keys.shape[0] - 1
    i = _slot(k, mask)
    while True:
        kk = keys[i]
        if kk == k:
            return vals[i]
        if kk == EMPTY:
            return MISSING
        i = (i + 1) & mask


@njit(int64(int64[:], int64[:], int64[:], int64, int64), cache=True, inline="always")
def map_put(keys, vals, used, k, v):
    """Insert or update; returns 0 on success, 1 when a grow is needed."""
    mask = keys.shape[0] - 1
    i = _slot(k, mask)
    while True:
        kk = keys[i]
        if kk == k:
            vals[i] = v
            return 0
        if kk == EMPTY:
            if used[0] * 2 >= keys.shape[0]:
                return 1
            keys[i] = k
            vals[i] = v
            used[0] += 1
            return 0
        i = (i + 1) & mask


@njit(cache=True, inline="always")
def _in_boxes(cur, lo, hi):
    for b in range(lo.shape[0]):
        inside = True
        for i in range(cur.shape[0]):
            c = cur[i]
            if c < lo[b, i] or c > hi[b, i]:
                inside = False
                break
        if inside:
            return True
    return False


@njit(int64(int64[:], int64[:], int64), cache=True, inline="always")
def _pack(cur, poff, pbits):
    acc = int64(0)
    for i in range(cur.shape[0]):
        acc = (acc << pbits) | (cur[i] + poff[i])
    return acc


@njit(cache=True)
def _pack_deltas(d, pbits):
    """Per-direction increments of the packed key: directions come in
    (+axis, -axis) pairs ordered by axis."""
    out = np.empty(2 * d, np.int64)
    for a in range(d):
        step = int64(1) << (pbits * (d - 1 - a))
        out[2 * a] = step
        out[2 * a + 1] = -step
    return out


@njit(cache=True, inline="always")
def _step(cur, direction):
    axis = direction >> 1
    if direction & 1:
        cur[axis] -= 1
    else:
        cur[axis] += 1


# ---------------------------------------------------------------------------
# plain walk with a general stop rule


@njit(cache=True, nogil=True)
def walk_kernel(start, dlo, dhi, hkeys, hvals, hit_at_start, step_cap,
                poff, pbits, skey, pos0, record, cap0):
    """Run a walk until a stop clause fires.

    Clauses: leave the box union (when present), land on the hit set
    (when present), or exhaust step_cap (when >= 0).  The returned path
    includes the stopping vertex; with record=0 only the endpoints are
    kept.  Returns (path, n_vertices, cause, new_pos, steps).
    """
    d = start.shape[0]
    cap = cap0 if record else 2
    buf = np.empty((cap, d), np.int64)
    cur = start.copy()
    for i in range(d):
        buf[0, i] = cur[i]
    n = 1
    pos = pos0
    steps = int64(0)
    have_domain = dlo.shape[0] > 0
    have_hits = hkeys.shape[0] > 0
    pd = _pack_deltas(d, pbits)
    k = _pack(cur, poff, pbits)
    if have_hits and hit_at_start:
        if map_get(hkeys, hvals, k) != MISSING:
            return buf, n, CAUSE_HIT, pos, steps
    while True:
        if step_cap >= 0 and steps >= step_cap:
            return buf, n, CAUSE_CAP, pos, steps
        direction = int64(_draw(skey, pos) % uint64(2 * d))
        pos += 1
        _step(cur, direction)
        k += pd[direction]
        steps += 1
        if record:
            if n >= cap:
                cap *= 2
                nbuf = np.empty((cap, d), np.int64)
                nbuf[:n] = buf[:n]
                buf = nbuf
            for i in range(d):
                buf[n, i] = cur[i]
            n += 1
        else:
            for i in range(d):
                buf[1, i] = cur[i]
            n = 2
        if have_domain and not _in_boxes(cur, dlo, dhi):
            return buf, n, CAUSE_EXITED, pos, steps
        if have_hits:
            if map_get(hkeys, hvals, k) != MISSING:
                return buf, n, CAUSE_HIT, pos, steps


# ---------------------------------------------------------------------------
# loop-erased walk to the exit of a box union, with optional single-target
# stop (first visit of one vertex) before the exit


@njit(cache=True, nogil=True)
def lerw_kernel(start, dlo, dhi, poff, pbits, skey, pos0,
                target, use_target, esc_lo, esc_hi, cap0, mcap0):
    """Loop-erase a walk on the fly.

    Without a target: walk until it leaves the box union; the erased
    path ends at the exit vertex.  With use_target=1: walk until it
    first visits `target` (packed) or leaves the escape boxes; the
    erased path then ends at the target.  The visited map holds the
    latest path index per vertex; entries behind a truncation stay and
    are revalidated against pk before use.  Returns
    (path, n, status, hit, new_pos, walk_steps).
    """
    d = start.shape[0]
    cap = cap0
    pc = np.empty((cap, d), np.int64)
    pk = np.empty(cap, np.int64)
    keys = np.full(mcap0, EMPTY, np.int64)
    vals = np.empty(mcap0, np.int64)
    mask = mcap0 - 1
    used = int64(0)
    pd = _pack_deltas(d, pbits)
    cur = start.copy()
    k = _pack(cur, poff, pbits)
    for i in range(d):
        pc[0, i] = cur[i]
    pk[0] = k
    i0 = _slot(k, mask)
    keys[i0] = k
    vals[i0] = 0
    used += 1
    ln = 1
    pos = pos0
    steps = int64(0)
    if use_target and k == target:
        return pc, ln, OK, int64(1), pos, steps
    while True:
        direction = int64(_draw(skey, pos) % uint64(2 * d))
        pos += 1
        _step(cur, direction)
        k += pd[direction]
        steps += 1
        if use_target:
            if k == target:
                if ln >= cap:
                    return pc, ln, OVERFLOW_BUF, int64(0), pos, steps
                for i in range(d):
                    pc[ln, i] = cur[i]
                pk[ln] = k
                ln += 1
                return pc, ln, OK, int64(1), pos, steps
            if not _in_boxes(cur, esc_lo, esc_hi):
                return pc, ln, OK, int64(0), pos, steps
        else:
            if not _in_boxes(cur, dlo, dhi):
                if ln >= cap:
                    return pc, ln, OVERFLOW_BUF, int64(0), pos, steps
                for i in range(d):
                    pc[ln, i] = cur[i]
                pk[ln] = k
                ln += 1
                return pc, ln, OK, int64(0), pos, steps
        i = _slot(k, mask)
        while True:
            kk = keys[i]
            if kk == k:
                idx = vals[i]
                if idx < ln and pk[idx] == k:
                    ln = idx + 1
                else:
                    if ln >= cap:
                        return pc, ln, OVERFLOW_BUF, int64(0), pos, steps
                    vals[i] = ln
                    for j in range(d):
                        pc[ln, j] = cur[j]
                    pk[ln] = k
                    ln += 1
                break
            if kk == EMPTY:
                if used * 2 >= mcap0:
                    return pc, ln, OVERFLOW_MAP, int64(0), pos, steps
                if ln >= cap:
                    return pc, ln, OVERFLOW_BUF, int64(0), pos, steps
                keys[i] = k
                vals[i] = ln
                used += 1
                for j in range(d):
                    pc[ln, j] = cur[j]
                pk[ln] = k
                ln += 1
                break
            i = (i + 1) & mask


@njit(cache=True, nogil=True)
def lerw_batch_kernel(count, start, dlo, dhi, poff, pbits, skey, pos0,
                      esc, cap0, mcap0, out_verts, out_offs):
    """Run lerw_kernel `count` times, packing results into out_verts
    with vertex offsets in out_offs.  Draws continue along one stream
    position, so the s-th result is bit-identical to the s-th serial
    call.  Stops early when a buffer runs out: the returned status and
    sample index tell the caller what to grow, and the position is the
    one the unfinished sample started at, so it can be rerun.
    Returns (done, status, pos)."""
    pos = pos0
    base = int64(0)
    d = start.shape[0]
    out_offs[0] = 0
    for s in range(count):
        pc, n, status, _hit, new_pos, _steps = lerw_kernel(
            start, dlo, dhi, poff, pbits, skey, pos,
            int64(0), 0, esc, esc, cap0, mcap0)
        if status != OK:
            return s, status, pos
        if base + n > out_verts.shape[0]:
            return s, OUT_FULL, pos
        for i in range(n):
            for j in range(d):
                out_verts[base + i, j] = pc[i, j]
        base += n
        out_offs[s + 1] = base
        pos = new_pos
    return count, OK, pos


# ---------------------------------------------------------------------------
# conditioned walk: exit the box union before revisiting the avoid set


@njit(cache=True, nogil=True)
def conditioned_kernel(start, dlo, dhi, akeys, avals, poff, pbits,
                       skey, pos0, trial_cap, cap0):
    """Rejection-sample a walk that leaves the domain before touching
    the avoid set.  The start itself may belong to the avoid set; only
    visits from step 1 on count.  Returns
    (path, n, accepted, trials, new_pos)."""
    d = start.shape[0]
    cap = cap0
    buf = np.empty((cap, d), np.int64)
    pos = pos0
    trials = int64(0)
    pd = _pack_deltas(d, pbits)
    k0 = _pack(start, poff, pbits)
    while trials < trial_cap:
        trials += 1
        cur = start.copy()
        k = k0
        for i in range(d):
            buf[0, i] = cur[i]
        n = 1
        while True:
            direction = int64(_draw(skey, pos) % uint64(2 * d))
            pos += 1
            _step(cur, direction)
            k += pd[direction]
            if n >= cap:
                cap *= 2
                nbuf = np.empty((cap, d), np.int64)
                nbuf[:n] = buf[:n]
                buf = nbuf
            for i in range(d):
                buf[n, i] = cur[i]
            n += 1
            if not _in_boxes(cur, dlo, dhi):
                return buf, n, int64(1), trials, pos
            if map_get(akeys, avals, k) != MISSING:
                break
    return buf, int64(1), int64(0), trials, pos


# ---------------------------------------------------------------------------
# escape-frequency counting for capacity estimation


@njit(cache=True, nogil=True)
def escape_counts_kernel(pts, kkeys, kvals, esc_lo, esc_hi, reps,
                         poff, pbits, skey, pos0):
    """For each vertex of K, count walks that leave the escape box
    before returning to K.  Returns (counts, new_pos, total_steps)."""
    m = pts.shape[0]
    d = pts.shape[1]
    counts = np.zeros(m, np.int64)
    cur = np.empty(d, np.int64)
    pos = pos0
    total = int64(0)
    pd = _pack_deltas(d, pbits)
    for j in range(m):
        kj = _pack(pts[j], poff, pbits)
        for _ in range(reps):
            for i in range(d):
                cur[i] = pts[j, i]
            k = kj
            while True:
                direction = int64(_draw(skey, pos) % uint64(2 * d))
                pos += 1
                _step(cur, direction)
                k += pd[direction]
                total += 1
                if not _in_boxes(cur, esc_lo, esc_hi):
                    counts[j] += 1
                    break
                if map_get(kkeys, kvals, k) != MISSING:
                    break
    return counts, pos, total


# ---------------------------------------------------------------------------
# wired forest building (Wilson's method driven by per-vertex stacks)
#
# One combined map serves the whole build: wkeys[i] = packed vertex,
# wvals[2i] = parent entry or MISSING, wvals[2i+1] = stack read depth.
# A parent entry is (parent_packed << 5) | (direction << 1) | label with
# ROOT_P standing for the wired root.


@njit(cache=True)
def _reinsert_walk(vkeys, vvals, vused, pk, ln, epoch):
    """Rebuild the per-walk visited map after a stale-entry purge."""
    vused[0] = 0
    vkeys.fill(EMPTY)
    bad = 0
    for t in range(ln):
        if map_put(vkeys, vvals, vused, pk[t], (epoch << 24) | t) != 0:
            bad = 1
    return bad


@njit(int64(int64[:], int64[:], int64[:], int64, int64), cache=True, inline="always")
def forest_parent_put(wkeys, wvals, wused, k, entry):
    """Set the parent entry of k, inserting the key if absent.
    Returns 0 on success, 1 when a grow is needed."""
    mask = wkeys.shape[0] - 1
    i = _slot(k, mask)
    while True:
        kk = wkeys[i]
        if kk == k:
            wvals[2 * i] = entry
            return 0
        if kk == EMPTY:
            if wused[0] * 2 >= wkeys.shape[0]:
                return 1
            wkeys[i] = k
            wvals[2 * i] = entry
            wvals[2 * i + 1] = 0
            wused[0] += 1
            return 0
        i = (i + 1) & mask


@njit(int64(int64[:], int64[:], int64), cache=True, inline="always")
def forest_parent_get(wkeys, wvals, k):
    """Parent entry of k, or MISSING when unknown."""
    mask = wkeys.shape[0] - 1
    i = _slot(k, mask)
    while True:
        kk = wkeys[i]
        if kk == k:
            return wvals[2 * i]
        if kk == EMPTY:
            return MISSING
        i = (i + 1) & mask


@njit(cache=True, nogil=True)
def wilson_walks_kernel(starts, dlo, dhi, poff, pbits, skey,
                        wkeys, wvals, wused,
                        vkeys, vvals, vused,
                        pc, pk, epoch0,
                        label_mode, cnt_c, cnt_r):
    """Extend a wired forest by loop-erased walks from each start.

    Arrow `i` of vertex v is a pure function of (skey, packed v, i), so
    the forest is a deterministic function of skey no matter how starts
    are chosen or ordered.  Walks stop on leaving the box union (attach
    to the wired root) or on touching the existing forest.

    vkeys/vvals is per-walk visited scratch holding (epoch << 24) | idx;
    stale entries are overwritten on collision and revalidated via pk.

    With label_mode on, label marks the tree component of starts[0].
    When cnt_r >= 0, labelled vertices inside Q(cnt_c, cnt_r) are
    counted as they are inserted.

    Returns (status, epoch, inserted, total_steps, counted, longest).
    """
    d = starts.shape[1]
    cap = pc.shape[0]
    wmask = wkeys.shape[0] - 1
    vmask = vkeys.shape[0] - 1
    cur = np.empty(d, np.int64)
    pd = _pack_deltas(d, pbits)
    epoch = epoch0
    inserted = int64(0)
    total = int64(0)
    longest = int64(0)
    counted = int64(0)
    first_chain = int64(1) if label_mode else int64(0)
    for s in range(starts.shape[0]):
        for i in range(d):
            cur[i] = starts[s, i]
        k = _pack(cur, poff, pbits)
        if forest_parent_get(wkeys, wvals, k) != MISSING:
            first_chain = int64(0)
            continue
        epoch += 1
        for i in range(d):
            pc[0, i] = cur[i]
        pk[0] = k
        if vused[0] * 2 >= vkeys.shape[0]:
            vused[0] = 0
            vkeys.fill(EMPTY)
        if map_put(vkeys, vvals, vused, k, (epoch << 24) | 0) != 0:
            return OVERFLOW_MAP, epoch, inserted, total, counted, longest
        ln = 1
        walk_steps = int64(0)
        attach_parent = int64(-1)
        attach_dir = int64(-1)
        attach_label = int64(0)
        while True:
            # read-and-bump the stack depth of the current vertex; its
            # parent entry rides on the same probe
            wi = _slot(k, wmask)
            depth = int64(0)
            while True:
                kk = wkeys[wi]
                if kk == k:
                    depth = wvals[2 * wi + 1]
                    wvals[2 * wi + 1] = depth + 1
                    break
                if kk == EMPTY:
                    if wused[0] * 2 >= wkeys.shape[0]:
                        return OVERFLOW_MAP, epoch, inserted, total, counted, longest
                    wkeys[wi] = k
                    wvals[2 * wi] = MISSING
                    wvals[2 * wi + 1] = 1
                    wused[0] += 1
                    break
                wi = (wi + 1) & wmask
            direction = _arrow(skey, k, depth, 2 * d)
            _step(cur, direction)
            k += pd[direction]
            walk_steps += 1
            total += 1
            if not _in_boxes(cur, dlo, dhi):
                attach_parent = ROOT_P
                attach_dir = direction
                attach_label = first_chain
                break
            pv = forest_parent_get(wkeys, wvals, k)
            if pv != MISSING:
                attach_parent = k
                attach_dir = direction
                attach_label = pv & 1
                break
            # self-hit handling on one visited-map probe
            if ln + 1 >= cap or ln + 1 >= (1 << 24) - 2:
                return OVERFLOW_BUF, epoch, inserted, total, counted, longest
            vi = _slot(k, vmask)
            while True:
                vk = vkeys[vi]
                if vk == k:
                    vv = vvals[vi]
                    idx = vv & _IDX_MASK
                    if (vv >> 24) == epoch and idx < ln and pk[idx] == k:
                        ln = idx + 1
                    else:
                        vvals[vi] = (epoch << 24) | ln
                        for j in range(d):
                            pc[ln, j] = cur[j]
                        pk[ln] = k
                        ln += 1
                    break
                if vk == EMPTY:
                    if vused[0] * 2 >= vkeys.shape[0]:
                        if _reinsert_walk(vkeys, vvals, vused, pk, ln, epoch) != 0:
                            return OVERFLOW_MAP, epoch, inserted, total, counted, longest
                        if map_put(vkeys, vvals, vused, k, (epoch << 24) | ln) != 0:
                            return OVERFLOW_MAP, epoch, inserted, total, counted, longest
                    else:
                        vkeys[vi] = k
                        vvals[vi] = (epoch << 24) | ln
                        vused[0] += 1
                    for j in range(d):
                        pc[ln, j] = cur[j]
                    pk[ln] = k
                    ln += 1
                    break
                vi = (vi + 1) & vmask
        if walk_steps > longest:
            longest = walk_steps
        lab = int64(0)
        if label_mode:
            lab = int64(1) if first_chain else attach_label
        for t in range(ln - 1, -1, -1):
            if t == ln - 1:
                par = attach_parent
                dr = attach_dir
            else:
                par = pk[t + 1]
                dr = int64(0)
                for i in range(d):
                    diff = pc[t + 1, i] - pc[t, i]
                    if diff == 1:
                        dr = int64(2 * i)
                        break
                    if diff == -1:
                        dr = int64(2 * i + 1)
                        break
            if forest_parent_put(wkeys, wvals, wused, pk[t],
                                 (par << 5) | (dr << 1) | lab) != 0:
                return OVERFLOW_MAP, epoch, inserted, total, counted, longest
            inserted += 1
            if cnt_r >= 0 and lab == 1:
                inside = True
                for i in range(d):
                    if pc[t, i] < cnt_c[i] - cnt_r or pc[t, i] > cnt_c[i] + cnt_r:
                        inside = False
                        break
                if inside:
                    counted += 1
        first_chain = int64(0)
    return OK, epoch, inserted, total, counted, longest


@njit(cache=True, nogil=True)
def ball_kernel(n, dlo, dhi, poff, pbits, skey,
                wkeys, wvals, wused,
                vkeys, vvals, vused,
                pc, pk,
                mkeys, mvals,
                qc, qdist, out_c, out_dist):
    """Grow the tree ball of radius n around the origin.

    Reveals tree paths on demand: first the walk from the origin, then,
    for every vertex within tree distance < n, walks from each of its
    unrevealed lattice neighbors.  After that every tree edge at the
    vertex is determined, so a breadth-first search computes exact tree
    distances.  Because the forest is a deterministic function of the
    stream key, this reveals exactly what walks from all of Q_n would
    reveal, at a fraction of the work.

    Returns (status, count, epoch, total_steps); out_c/out_dist receive
    the ball's vertices and tree distances, roots of the search first.
    """
    d = dlo.shape[1]
    mused = np.zeros(1, np.int64)
    start = np.zeros((1, d), np.int64)
    st, epoch, ins, total, cnt, lng = wilson_walks_kernel(
        start, dlo, dhi, poff, pbits, skey,
        wkeys, wvals, wused, vkeys, vvals, vused,
        pc, pk, int64(0), int64(0), start[0], int64(-1))
    if st != OK:
        return st, int64(0), epoch, total
    origin = np.zeros(d, np.int64)
    k0 = _pack(origin, poff, pbits)
    qhead = 0
    qtail = 0
    for i in range(d):
        qc[qtail, i] = 0
    qdist[qtail] = 0
    qtail += 1
    if map_put(mkeys, mvals, mused, k0, 0) != 0:
        return OVERFLOW_MAP, int64(0), epoch, total
    count = int64(0)
    cur = np.empty(d, np.int64)
    wstart = np.empty((1, d), np.int64)
    while qhead < qtail:
        for i in range(d):
            cur[i] = qc[qhead, i]
        dist = qdist[qhead]
        qhead += 1
        for i in range(d):
            out_c[count, i] = cur[i]
        out_dist[count] = dist
        count += 1
        if dist >= n:
            continue
        vk = _pack(cur, poff, pbits)
        for direction in range(2 * d):
            axis = direction >> 1
            delta = -1 if (direction & 1) else 1
            cur[axis] += delta
            if _in_boxes(cur, dlo, dhi):
                zk = _pack(cur, poff, pbits)
                if forest_parent_get(wkeys, wvals, zk) == MISSING:
                    for i in range(d):
                        wstart[0, i] = cur[i]
                    st, epoch, ins, tw, cnt, lng = wilson_walks_kernel(
                        wstart, dlo, dhi, poff, pbits, skey,
                        wkeys, wvals, wused, vkeys, vvals, vused,
                        pc, pk, epoch, int64(0), wstart[0], int64(-1))
                    total += tw
                    if st != OK:
                        return st, count, epoch, total
                pv = forest_parent_get(wkeys, wvals, vk)
                zv = forest_parent_get(wkeys, wvals, zk)
                if (pv >> 5) == zk or (zv >> 5) == vk:
                    if map_get(mkeys, mvals, zk) == MISSING:
                        # the queue has its own status: OVERFLOW_BUF from
                        # the walk calls above means the row buffer
                        if qtail >= qc.shape[0] or qtail >= out_c.shape[0]:
                            return OVERFLOW_QUEUE, count, epoch, total
                        if map_put(mkeys, mvals, mused, zk, dist + 1) != 0:
                            return OVERFLOW_MAP, count, epoch, total
                        for i in range(d):
                            qc[qtail, i] = cur[i]
                        qdist[qtail] = dist + 1
                        qtail += 1
            cur[axis] -= delta
    return OK, count, epoch, total


@njit(cache=True, nogil=True)
def separation_kernel(n, poff, pbits, skey, pos0, buf1, buf2,
                      skeys, svals, sused):
    """Two independent walks from the origin, each run to its exit of
    Q_n.  Returns (disjoint, z_value, new_pos): disjoint=1 when the
    walks share no vertex from step 1 on (-1 flags a buffer overflow),
    and z_value is the larger of the two endpoint separations
    d(end_1, walk_2[1:]) and d(end_2, walk_1[0:]), in Euclidean norm.
    """
    d = poff.shape[0]
    pos = pos0
    cur = np.empty(d, np.int64)
    for i in range(d):
        cur[i] = 0
    n1 = 0
    while True:
        if n1 >= buf1.shape[0]:
            return int64(-1), 0.0, pos
        for i in range(d):
            buf1[n1, i] = cur[i]
        n1 += 1
        mx = int64(0)
        for i in range(d):
            a = cur[i] if cur[i] >= 0 else -cur[i]
            if a > mx:
                mx = a
        if mx > n:
            break
        direction = int64(_draw(skey, pos) % uint64(2 * d))
        pos += 1
        _step(cur, direction)
    skeys.fill(EMPTY)
    sused[0] = 0
    for t in range(1, n1):
        if map_put(skeys, svals, sused, _pack(buf1[t], poff, pbits), 1) != 0:
            return int64(-1), 0.0, pos
    for i in range(d):
        cur[i] = 0
    n2 = 0
    disjoint = int64(1)
    while True:
        if n2 >= buf2.shape[0]:
            return int64(-1), 0.0, pos
        for i in range(d):
            buf2[n2, i] = cur[i]
        n2 += 1
        if n2 > 1 and disjoint == 1:
            if map_get(skeys, svals, _pack(cur, poff, pbits)) != MISSING:
                disjoint = int64(0)
        mx = int64(0)
        for i in range(d):
            a = cur[i] if cur[i] >= 0 else -cur[i]
            if a > mx:
                mx = a
        if mx > n:
            break
        direction = int64(_draw(skey, pos) % uint64(2 * d))
        pos += 1
        _step(cur, direction)
    if disjoint == 0:
        return int64(0), 0.0, pos
    best1 = 1e300
    for t in range(1, n2):
        acc = 0.0
        for i in range(d):
            df = float(buf1[n1 - 1, i] - buf2[t, i])
            acc += df * df
        if acc < best1:
            best1 = acc
    best2 = 1e300
    for t in range(0, n1):
        acc = 0.0
        for i in range(d):
            df = float(buf2[n2 - 1, i] - buf1[t, i])
            acc += df * df
        if acc < best2:
            best2 = acc
    z1 = np.sqrt(best1)
    z2 = np.sqrt(best2)
    z = z1 if z1 > z2 else z2
    return int64(1), z, pos
