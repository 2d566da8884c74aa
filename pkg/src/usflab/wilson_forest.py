"""Wired spanning forests grown by loop-erased walks.

The sampler runs Wilson's algorithm on a finite domain whose outside
has been collapsed to a single root vertex: walks from unrevealed
starts are loop-erased against the forest built so far, and every step
leaving the domain attaches to the root.  Randomness is addressed by
(vertex, depth) rather than by draw order, so a forest is a pure
function of its stream key: any choice or ordering of starts reveals a
piece of the same underlying object.  That gives three things at once:
partial runs are exact marginals of the full tree, lazy ball growing is
exact, and the stack-popping construction in this module can be checked
against the sampler edge for edge.

Forests are sparse.  Only visited vertices occupy memory, so domains
far too large to enumerate are fine as long as individual walks stay
bounded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _engine, _kernels
from .lattice import Box, Domain, Point, box, check_point, neighbors
from .rng import RngStream, arrow

_ROOT_KEY = int(_kernels.ROOT_P)
_MISSING = int(_kernels.MISSING)

FOREST_MAP_CAP = 1 << 27
WALK_BUFFER_CAP = 1 << 24
BALL_MEMBER_CAP = 1 << 21
POP_STEP_CAP = 10 ** 9
_DUMP_FORMAT = "forest-v1"
_STARTS_IN_METADATA = 4096


class _Root:
    """The collapsed outside vertex; a single shared instance."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "ROOT"


ROOT = _Root()


@dataclass(frozen=True)
class WiredGraph:
    """A finite domain with its outside collapsed to one root vertex.

    Every lattice edge with at least one endpoint in the domain is an
    edge of the graph; edges leaving the domain all end at the root, so
    each vertex keeps degree 2d and boundary vertices carry parallel
    root edges.  The domain must be a box union; the samplers never
    materialize it.
    """

    domain: Domain

    def __post_init__(self) -> None:
        _engine.domain_arrays(self.domain)  # box-union check

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def root(self) -> _Root:
        return ROOT


def _entry_parent(entry: int) -> int:
    return entry >> 5


def _entry_direction(entry: int) -> int:
    return (entry >> 1) & 0xF


@dataclass(frozen=True, eq=False)
class SpanningForest:
    """An immutable sparse forest: packed vertex -> parent entry.

    `entries` values pack (parent_key << 5) | (direction << 1) | label;
    the root parent is the reserved key _ROOT_KEY.  Vertices absent
    from `entries` are unrevealed: nothing about them is known, and
    queries touching them raise rather than guess.
    """

    window: _engine.PackWindow
    domain: Domain
    entries: Mapping[int, int]
    metadata: Mapping[str, object] = field(default_factory=dict)
    _depths: dict = field(default_factory=dict, repr=False)

    @property
    def revealed_count(self) -> int:
        return len(self.entries)

    def revealed(self, x: Point) -> bool:
        try:
            return self.window.pack(x) in self.entries
        except ValueError:
            return False

    def revealed_vertices(self) -> Iterator[Point]:
        for k in self.entries:
            yield self.window.unpack(k)

    def _entry(self, x: Point) -> int:
        entry = self.entries.get(self.window.pack(x))
        if entry is None:
            raise ValueError(f"unrevealed vertex {x}")
        return entry

    def parent(self, x: Point):
        """The next vertex on the path to the root, or ROOT itself."""
        p = _entry_parent(self._entry(x))
        return ROOT if p == _ROOT_KEY else self.window.unpack(p)

    def direction(self, x: Point) -> int:
        """Direction index of the tree edge out of x, in [0, 2d).

        Matches the neighbor enumeration order (+e1, -e1, +e2, ...).
        For root edges this is the exit direction of the walk; forests
        rebuilt from a dump carry 0 there (the dump stores parents
        only), so rebuild by replay when root directions matter.
        """
        return _entry_direction(self._entry(x))

    def parent_map(self) -> dict[Point, object]:
        return {self.window.unpack(k): (ROOT if _entry_parent(e) == _ROOT_KEY
                                        else self.window.unpack(_entry_parent(e)))
                for k, e in self.entries.items()}

    def arrow_field(self, order: Iterable[Point]) -> tuple[int, ...]:
        """Edge directions of the given vertices, as one tuple.

        With `order` = the sorted domain this is the arrow encoding the
        tiny-instance enumerator uses, so sampled trees can be compared
        against exhaustive tree lists directly.
        """
        return tuple(self.direction(x) for x in order)

    def _depth_packed(self, k: int) -> int:
        depths = self._depths
        chain = []
        base = 0
        while True:
            got = depths.get(k)
            if got is not None:
                base = got
                break
            entry = self.entries.get(k)
            if entry is None:
                raise ValueError(
                    f"unrevealed vertex {self.window.unpack(k)}")
            chain.append(k)
            p = _entry_parent(entry)
            if p == _ROOT_KEY:
                base = 0
                break
            k = p
        for i, v in enumerate(reversed(chain)):
            depths[v] = base + i + 1
        return base + len(chain)

    def depth(self, x: Point) -> int:
        """Edges on the path from x to the root."""
        return self._depth_packed(self.window.pack(x))

    def _root_path(self, k: int) -> list[int]:
        out = []
        while k != _ROOT_KEY:
            entry = self.entries.get(k)
            if entry is None:
                raise ValueError(
                    f"unrevealed vertex {self.window.unpack(k)}")
            out.append(k)
            k = _entry_parent(entry)
        return out

    def validate(self) -> None:
        """Check acyclicity and root reachability of every revealed
        vertex; raises RuntimeError on a defect."""
        state: dict[int, int] = {}  # 1 = on current chase, 2 = cleared
        for start in self.entries:
            k = start
            chain = []
            while k != _ROOT_KEY and state.get(k) != 2:
                if state.get(k) == 1:
                    raise RuntimeError(
                        f"cycle through {self.window.unpack(k)}")
                entry = self.entries.get(k)
                if entry is None:
                    raise RuntimeError(
                        f"parent chain leaves the revealed set at "
                        f"{self.window.unpack(k)}")
                state[k] = 1
                chain.append(k)
                k = _entry_parent(entry)
            for v in chain:
                state[v] = 2


def tree_distance(f: SpanningForest, x: Point, y: Point):
    """Graph distance between x and y inside the forest.

    Computed as depth(x) + depth(y) - 2 depth(meet) from the first
    common vertex of the two root paths; math.inf when the paths only
    meet at the root, i.e. the vertices sit in different components.
    """
    kx = f.window.pack(x)
    ky = f.window.pack(y)
    if kx == ky:
        f._depth_packed(kx)  # raises when unrevealed
        return 0
    xpath = set(f._root_path(kx))
    k = ky
    while k != _ROOT_KEY:
        if k in xpath:
            return (f._depth_packed(kx) + f._depth_packed(ky)
                    - 2 * f._depth_packed(k))
        entry = f.entries.get(k)
        if entry is None:
            raise ValueError(f"unrevealed vertex {f.window.unpack(k)}")
        k = _entry_parent(entry)
    return float("inf")


def component(f: SpanningForest, x: Point, within: Iterable[Point]) -> set[Point]:
    """The vertices of `within` whose tree path to x avoids the root.

    Cutting every root edge splits the forest into finite components;
    this returns the part of `within` that falls in x's component.
    All queried vertices must be revealed ("partial forest" otherwise).
    """
    kx = f.window.pack(x)
    xpath = set(f._root_path(kx))
    reaches: dict[int, bool] = {k: True for k in xpath}
    out = set()
    for y in within:
        try:
            ky = f.window.pack(y)
            entry = f.entries.get(ky)
        except ValueError:
            entry = None
        if entry is None:
            raise ValueError(f"partial forest: {y} is unrevealed")
        chain = []
        k = ky
        verdict = False
        while True:
            got = reaches.get(k)
            if got is not None:
                verdict = got
                break
            if k == _ROOT_KEY:
                verdict = False
                break
            e = f.entries.get(k)
            if e is None:
                raise ValueError(
                    f"partial forest: {f.window.unpack(k)} is unrevealed")
            chain.append(k)
            k = _entry_parent(e)
        for v in chain:
            reaches[v] = verdict
        if verdict:
            out.add(y)
    return out


# ---------------------------------------------------------------------------
# the sampler


def _starts_array(domain: Domain, starts: Sequence[Point]) -> np.ndarray:
    d = domain.d
    arr = np.empty((len(starts), d), dtype=np.int64)
    for i, p in enumerate(starts):
        check_point(p, d)
        for j in range(d):
            arr[i, j] = p[j]
    dlo, dhi = _engine.domain_arrays(domain)
    inside = np.zeros(len(starts), dtype=bool)
    for b in range(dlo.shape[0]):
        inside |= ((arr >= dlo[b]) & (arr <= dhi[b])).all(axis=1)
    if not inside.all():
        bad = arr[int(np.argmin(inside))]
        raise ValueError(f"start {tuple(int(c) for c in bad)} outside domain")
    return arr


class WilsonSampler:
    """Reusable driver for repeated forest draws on one geometry.

    Buffers are allocated once and reset between samples, so tight
    sampling loops pay the kernel cost only.  With a count box the
    sampler also tallies, in the kernel, how many vertices of that box
    land in the tree component of starts[0].
    """

    def __init__(self, graph: WiredGraph, starts: Sequence[Point],
                 count_box: Box | None = None):
        self.graph = graph
        self.starts = _starts_array(graph.domain, starts)
        self.window = _engine.window_for(graph.domain.boxes)
        self.dlo, self.dhi = _engine.domain_arrays(graph.domain)
        self.count_box = count_box
        d = graph.d
        if count_box is None:
            self._cnt_c = np.zeros(d, dtype=np.int64)
            self._cnt_r = -1
        else:
            if count_box.d != d:
                raise ValueError("count box dimension mismatch")
            self._cnt_c = np.array(count_box.center, dtype=np.int64)
            self._cnt_r = count_box.radius
        self._fcap = max(256, _engine._pow2_at_least(
            min(4 * max(1, len(starts)), FOREST_MAP_CAP)))
        self._vcap = max(256, self._fcap // 4)
        self._rows = 1 << 12
        self._alloc()
        self._starts_note: object
        if len(starts) <= _STARTS_IN_METADATA:
            self._starts_note = [list(p) for p in starts]
        else:
            self._starts_note = {"count": len(starts)}

    def _alloc(self) -> None:
        d = self.graph.d
        self._wkeys = np.full(self._fcap, _kernels.EMPTY, dtype=np.int64)
        self._wvals = np.empty(2 * self._fcap, dtype=np.int64)
        self._wused = np.zeros(1, dtype=np.int64)
        self._vkeys = np.full(self._vcap, _kernels.EMPTY, dtype=np.int64)
        self._vvals = np.empty(self._vcap, dtype=np.int64)
        self._vused = np.zeros(1, dtype=np.int64)
        self._pc = np.empty((self._rows, d), dtype=np.int64)
        self._pk = np.empty(self._rows, dtype=np.int64)

    def _reset(self) -> None:
        self._wkeys.fill(_kernels.EMPTY)
        self._wused[0] = 0
        self._vkeys.fill(_kernels.EMPTY)
        self._vused[0] = 0

    def _run(self, rng: RngStream) -> int:
        label_mode = 0 if self.count_box is None else 1
        while True:
            self._reset()
            status, _, _, _, counted, _ = _kernels.wilson_walks_kernel(
                self.starts, self.dlo, self.dhi,
                self.window.poff, self.window.pbits, np.uint64(rng.key),
                self._wkeys, self._wvals, self._wused,
                self._vkeys, self._vvals, self._vused,
                self._pc, self._pk, np.int64(0),
                np.int64(label_mode), self._cnt_c, np.int64(self._cnt_r))
            if status == _kernels.OK:
                return int(counted)
            if status == _kernels.OVERFLOW_BUF:
                self._rows *= 4
            else:
                self._fcap *= 4
                self._vcap *= 4
            if self._fcap > FOREST_MAP_CAP or self._rows > WALK_BUFFER_CAP:
                raise RuntimeError("forest memory cap exceeded")
            self._alloc()

    def _extract(self) -> dict[int, int]:
        live = self._wkeys != _kernels.EMPTY
        keys = self._wkeys[live]
        ents = self._wvals[::2][live]
        real = ents != _kernels.MISSING
        return dict(zip(keys[real].tolist(), ents[real].tolist()))

    def sample(self, rng: RngStream) -> SpanningForest:
        self._run(rng)
        meta = {
            "builder": "wilson",
            "master_seed": rng.master_seed,
            "stream_id": rng.stream_id,
            "stream_key": int(rng.key),
            "starts": self._starts_note,
            "domain": _domain_note(self.graph.domain),
        }
        return SpanningForest(self.window, self.graph.domain,
                              self._extract(), meta)

    def sample_volume(self, rng: RngStream) -> int:
        """Count |count_box ∩ component(starts[0])| without building
        the Python-side forest; for tight estimation loops."""
        if self.count_box is None:
            raise ValueError("sampler was built without a count box")
        return self._run(rng)


def wilson_sample(g: WiredGraph, starts: Sequence[Point],
                  rng: RngStream) -> SpanningForest:
    """One forest draw: loop-erased walks from each start in order.

    With starts covering the domain the result is the uniform spanning
    tree of the wired graph; with fewer starts the revealed paths are
    exact marginals of it.  The forest depends on the stream key only,
    not on the order or choice of starts, and repeated calls with equal
    keys rebuild the identical forest.
    """
    return WilsonSampler(g, starts).sample(rng)


def _domain_note(domain: Domain) -> dict:
    return {"boxes": [{"center": list(b.center), "radius": b.radius}
                      for b in domain.boxes]}


def _domain_from_note(note: Mapping) -> Domain:
    return Domain.from_boxes([box(tuple(b["center"]), b["radius"])
                              for b in note["boxes"]])


def _contains_box(domain: Domain, target: Box) -> bool:
    for b in domain.boxes:
        if all(b.center[i] - b.radius <= target.center[i] - target.radius
               and target.center[i] + target.radius <= b.center[i] + b.radius
               for i in range(domain.d)):
            return True
    if target.size() <= 1 << 21:
        return all(domain.contains(p) for p in target.points())
    return False


def component_box_volume(D: Domain, n: int, rng: RngStream) -> int:
    """|Q_n ∩ (tree component of the origin)| in one forest draw.

    Runs walks from the origin and then every vertex of Q_n, labelling
    the origin's component as the tree grows; the count never builds a
    Python-side structure, so large boxes stay cheap.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    d = D.d
    target = box((0,) * d, n)
    if not _contains_box(D, target):
        raise ValueError(f"domain must contain the box of radius {n}")
    starts = [(0,) * d] + sorted(target.points())
    return WilsonSampler(WiredGraph(D), starts,
                         count_box=target).sample_volume(rng)


# ---------------------------------------------------------------------------
# intrinsic balls


@dataclass(frozen=True)
class BallResult:
    """The tree ball: every vertex within tree distance radius_intrinsic
    of the center, with its distance."""

    center: Point
    radius_intrinsic: int
    members: Mapping[Point, int]
    domain_used: Domain

    def __post_init__(self) -> None:
        r = self.radius_intrinsic
        for p, dist in self.members.items():
            if dist > r:
                raise ValueError(f"member {p} at tree distance {dist} > {r}")
            if max(abs(c - e) for c, e in zip(p, self.center)) > r:
                raise ValueError(f"member {p} outside Q(center, {r})")

    def __len__(self) -> int:
        return len(self.members)


def intrinsic_ball(D: Domain, n: int, rng: RngStream,
                   member_cap: int = BALL_MEMBER_CAP) -> BallResult:
    """Grow B(0, n) = {y : tree distance from 0 is at most n}.

    Reveals the forest lazily: only walks that can influence the ball
    are run, and because the forest is a pure function of the stream
    key the result equals what a full-domain run would give.  The
    domain must contain Q_{4n}, keeping the ball's lattice envelope
    (unit edges force B(0,n) ⊆ Q_n) well inside the wired boundary.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    d = D.d
    if not _contains_box(D, box((0,) * d, 4 * n)):
        raise ValueError(
            f"domain must contain the box of radius {4 * n} around the origin")
    dlo, dhi = _engine.domain_arrays(D)
    window = _engine.window_for(D.boxes)
    fcap = 1 << 14
    rows = 1 << 12
    qcap = 1 << 12
    while True:
        wkeys = np.full(fcap, _kernels.EMPTY, dtype=np.int64)
        wvals = np.empty(2 * fcap, dtype=np.int64)
        wused = np.zeros(1, dtype=np.int64)
        vkeys = np.full(fcap // 4, _kernels.EMPTY, dtype=np.int64)
        vvals = np.empty(fcap // 4, dtype=np.int64)
        vused = np.zeros(1, dtype=np.int64)
        pc = np.empty((rows, d), dtype=np.int64)
        pk = np.empty(rows, dtype=np.int64)
        mkeys = np.full(4 * qcap, _kernels.EMPTY, dtype=np.int64)
        mvals = np.empty(4 * qcap, dtype=np.int64)
        qc = np.empty((qcap, d), dtype=np.int64)
        qdist = np.empty(qcap, dtype=np.int64)
        out_c = np.empty((qcap, d), dtype=np.int64)
        out_dist = np.empty(qcap, dtype=np.int64)
        status, count, _, _ = _kernels.ball_kernel(
            np.int64(n), dlo, dhi, window.poff, window.pbits,
            np.uint64(rng.key),
            wkeys, wvals, wused, vkeys, vvals, vused, pc, pk,
            mkeys, mvals, qc, qdist, out_c, out_dist)
        if status == _kernels.OK:
            members = {tuple(int(c) for c in out_c[i]): int(out_dist[i])
                       for i in range(int(count))}
            return BallResult((0,) * d, n, members, D)
        if status == _kernels.OVERFLOW_QUEUE:
            if qcap >= member_cap:
                raise RuntimeError(
                    f"ball memory cap exceeded with partial count {int(count)}")
            qcap *= 4
        elif status == _kernels.OVERFLOW_BUF:
            # a single reveal walk outgrew the row buffer
            rows *= 4
            if rows > WALK_BUFFER_CAP:
                raise RuntimeError(
                    f"ball walk buffer cap exceeded with partial count {int(count)}")
        else:
            fcap *= 4
            if fcap > FOREST_MAP_CAP:
                raise RuntimeError(
                    f"ball memory cap exceeded with partial count {int(count)}")


# ---------------------------------------------------------------------------
# recorded stacks and cycle popping


class StackSystem:
    """Per-vertex stacks of directions, either stream-backed or recorded.

    Stream-backed stacks draw entry i of vertex v as the same pure
    function of (stream key, packed v, i) the sampler uses, extending
    lazily and immutably; recorded stacks replay a fixed table and
    refuse to invent entries past its end.  `pop_log` fills in popping
    order as cycles are removed.
    """

    def __init__(self, graph: WiredGraph, rng: RngStream | None = None, *,
                 recorded: Mapping[Point, Sequence[int]] | None = None):
        if (rng is None) == (recorded is None):
            raise ValueError("provide exactly one of rng or recorded stacks")
        self.graph = graph
        self.window = _engine.window_for(graph.domain.boxes)
        self._key = None if rng is None else int(rng.key)
        self._seed_note = (None if rng is None
                           else (rng.master_seed, rng.stream_id))
        self._drawn: dict[Point, list[int]] = {}
        self._recorded = None
        if recorded is not None:
            two_d = 2 * graph.d
            table = {}
            for v, seq in recorded.items():
                check_point(v, graph.d)
                entries = tuple(int(e) for e in seq)
                for e in entries:
                    if not 0 <= e < two_d:
                        raise ValueError(f"direction {e} out of range at {v}")
                table[v] = entries
            self._recorded = table
        self.pop_log: list[tuple[Point, ...]] = []

    @property
    def stacks(self) -> dict[Point, tuple[int, ...]]:
        """Entries materialized so far (all of them, for recorded mode)."""
        if self._recorded is not None:
            return dict(self._recorded)
        return {v: tuple(seq) for v, seq in self._drawn.items()}

    def arrow_at(self, v: Point, i: int) -> int:
        if self._recorded is not None:
            seq = self._recorded.get(v)
            if seq is None or i >= len(seq):
                raise RuntimeError(f"recorded stack exhausted at {v}")
            return seq[i]
        seq = self._drawn.setdefault(v, [])
        two_d = 2 * self.graph.d
        packed = self.window.pack(v)
        while len(seq) <= i:
            seq.append(arrow(self._key, packed, len(seq), two_d))
        return seq[i]


def pop_all_cycles(s: StackSystem, g: WiredGraph,
                   scan_order: Sequence[Point] | None = None,
                   step_cap: int = POP_STEP_CAP) -> SpanningForest:
    """Pop cycles off the top arrow configuration until none remain.

    The top arrows (entry depth[v] of each stack) define a pointer
    graph; any cycle in it is removed by advancing every vertex on it
    to its next stack entry.  The final configuration is a forest of
    arrows into the root and does not depend on the popping order; the
    scan order only chooses which cycles get popped first, and the
    result equals the sampler's forest for the same stream key.

    Intended for oracle-scale domains: the whole domain is enumerated.
    """
    domain_pts = sorted(g.domain.points())
    pset = set(domain_pts)
    if scan_order is None:
        order = domain_pts
    else:
        order = list(scan_order)
        if set(order) != pset or len(order) != len(domain_pts):
            raise ValueError("scan order must permute the domain")
    depth = {v: 0 for v in domain_pts}
    arrows = {v: s.arrow_at(v, 0) for v in domain_pts}
    settled: set[Point] = set()
    steps = 0

    def target(v: Point) -> Point | None:
        w = neighbors(v)[arrows[v]]
        return w if w in pset else None

    for start in order:
        if start in settled:
            continue
        path: list[Point] = []
        on_path: dict[Point, int] = {}
        cur: Point | None = start
        while cur is not None and cur not in settled:
            steps += 1
            if steps > step_cap:
                raise RuntimeError(
                    f"cycle popping exceeded the step cap {step_cap}")
            at = on_path.get(cur)
            if at is None:
                on_path[cur] = len(path)
                path.append(cur)
                cur = target(cur)
                continue
            cycle = tuple(path[at:])
            s.pop_log.append(cycle)
            for u in cycle:
                depth[u] += 1
                arrows[u] = s.arrow_at(u, depth[u])
                del on_path[u]
            del path[at:]
            cur = cycle[0]
        settled.update(path)

    entries = {}
    for v in domain_pts:
        w = target(v)
        par = _ROOT_KEY if w is None else s.window.pack(w)
        entries[s.window.pack(v)] = (par << 5) | (arrows[v] << 1)
    meta = {
        "builder": "cycle-popping",
        "stream_key": s._key,
        "seed": s._seed_note,
        "pops": len(s.pop_log),
        "domain": _domain_note(g.domain),
    }
    return SpanningForest(s.window, g.domain, entries, meta)


# ---------------------------------------------------------------------------
# dumps


def dump_forest(f: SpanningForest, fh: IO[str]) -> None:
    """Write a forest as a JSON header line plus one "x parent" edge
    line per revealed vertex, keys in the forest's own packing."""
    header = {
        "format": _DUMP_FORMAT,
        "lo": list(f.window.lo),
        "pbits": f.window.pbits,
        "root_key": _ROOT_KEY,
        "metadata": dict(f.metadata),
    }
    fh.write(json.dumps(header) + "\n")
    for k in sorted(f.entries):
        fh.write(f"{k} {_entry_parent(f.entries[k])}\n")


def load_forest(fh: IO[str]) -> SpanningForest:
    """Rebuild a dumped forest; root edge directions are not in the
    dump, so replay from the recorded stream key when they matter."""
    header = json.loads(fh.readline())
    if header.get("format") != _DUMP_FORMAT:
        raise ValueError("not a forest dump")
    window = _engine.PackWindow(tuple(header["lo"]), int(header["pbits"]))
    meta = dict(header["metadata"])
    domain = _domain_from_note(meta["domain"])
    entries = {}
    for line in fh:
        line = line.strip()
        if not line:
            continue
        k_txt, p_txt = line.split()
        k, p = int(k_txt), int(p_txt)
        entries[k] = (p << 5)
        if p != _ROOT_KEY:
            diff = tuple(a - b for a, b in zip(window.unpack(p),
                                               window.unpack(k)))
            axis = max(range(len(diff)), key=lambda i: abs(diff[i]))
            entries[k] |= (2 * axis + (1 if diff[axis] < 0 else 0)) << 1
    return SpanningForest(window, domain, entries, meta)
