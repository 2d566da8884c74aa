"""Lattice paths and the slicing calculus used throughout the lab.

A Path is a finite sequence of vertices with nearest-neighbor steps;
its length is the number of steps, so a single vertex has length 0.
Slicing against a vertex set A comes in four flavors, named by what
they keep: the piece up to the first or last visit of A, or the piece
from the first or last visit onward.

Paths wrap an int64 array of shape (n_vertices, d).  Set membership is
vectorized for boxes, box shells and domains, and goes through packed
integer keys for explicit sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import lattice
from .lattice import Box, Domain, Point


@dataclass(frozen=True)
class InnerShell:
    """The inner boundary of a box: vertices at sup distance exactly r."""

    box: Box

    def contains(self, x: Point) -> bool:
        return lattice.linf(x, self.box.center) == self.box.radius

    def __contains__(self, x: Point) -> bool:
        return self.contains(x)


SetLike = Box | Domain | InnerShell | Iterable[Point]


class Path:
    """Immutable nearest-neighbor path."""

    __slots__ = ("verts", "_hash")

    def __init__(self, verts: np.ndarray, validate: bool = True):
        arr = np.asarray(verts, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("path needs an (n_vertices, d) array with n >= 1")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "verts", arr)
        object.__setattr__(self, "_hash", None)
        if validate:
            self.validate()

    @classmethod
    def from_vertices(cls, vertices: Sequence[Point], validate: bool = True) -> "Path":
        return cls(np.array([tuple(v) for v in vertices], dtype=np.int64), validate)

    @classmethod
    def single(cls, x: Point) -> "Path":
        return cls(np.array([tuple(x)], dtype=np.int64), validate=False)

    def validate(self) -> None:
        bad = np.abs(self.verts).max(initial=0) >= lattice.COORD_BOUND
        if bad:
            raise ValueError("path coordinate outside packing range")
        if self.verts.shape[0] > 1:
            steps = np.abs(np.diff(self.verts, axis=0)).sum(axis=1)
            if not np.all(steps == 1):
                k = int(np.argmax(steps != 1))
                raise ValueError(f"vertices {k} and {k + 1} are not lattice neighbors")

    @property
    def d(self) -> int:
        return self.verts.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.verts.shape[0]

    def __len__(self) -> int:
        """Number of steps."""
        return self.verts.shape[0] - 1

    def __getitem__(self, i: int) -> Point:
        return tuple(int(c) for c in self.verts[i])

    @property
    def start(self) -> Point:
        return self[0]

    @property
    def end(self) -> Point:
        return self[-1]

    def vertices(self) -> Iterator[Point]:
        for row in self.verts:
            yield tuple(int(c) for c in row)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Path):
            return NotImplemented
        return self.verts.shape == other.verts.shape and bool(
            np.array_equal(self.verts, other.verts)
        )

    def __hash__(self) -> int:
        h = object.__getattribute__(self, "_hash")
        if h is None:
            h = hash((self.verts.shape, self.verts.tobytes()))
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self) -> str:
        if self.n_vertices <= 6:
            inside = " ".join(str(v) for v in self.vertices())
        else:
            inside = f"{self[0]} ... {self[-1]} ({len(self)} steps)"
        return f"Path[{inside}]"

    def is_self_avoiding(self) -> bool:
        return len({v.tobytes() for v in self.verts}) == self.n_vertices


def _mask(path: Path, a: SetLike) -> np.ndarray:
    """Boolean array: which vertices of the path lie in the set."""
    v = path.verts
    if isinstance(a, Box):
        return np.abs(v - np.asarray(a.center)).max(axis=1) <= a.radius
    if isinstance(a, InnerShell):
        return np.abs(v - np.asarray(a.box.center)).max(axis=1) == a.box.radius
    if isinstance(a, Domain):
        m = np.zeros(v.shape[0], dtype=bool)
        for b in a.boxes:
            m |= np.abs(v - np.asarray(b.center)).max(axis=1) <= b.radius
        if a.extra:
            m |= _mask_points(v, a.extra)
        return m
    return _mask_points(v, a)


def _mask_points(v: np.ndarray, pts: Iterable[Point]) -> np.ndarray:
    keyset = {lattice.pack_point(tuple(p)) for p in pts}
    if not keyset:
        return np.zeros(v.shape[0], dtype=bool)
    weights = (1 << (21 * np.arange(v.shape[1] - 1, -1, -1, dtype=object)))
    packed = ((v.astype(object) + lattice.COORD_BOUND) * weights).sum(axis=1)
    return np.fromiter((int(k) in keyset for k in packed), dtype=bool, count=v.shape[0])


def hit_indices(path: Path, a: SetLike) -> np.ndarray:
    return np.flatnonzero(_mask(path, a))


def hit_count(path: Path, a: SetLike) -> int:
    """Number of visits to the set, counted with multiplicity."""
    return int(_mask(path, a).sum())


def _require_hit(path: Path, a: SetLike) -> np.ndarray:
    idx = hit_indices(path, a)
    if idx.size == 0:
        raise ValueError("path does not hit the set")
    return idx


def to_first_hit(path: Path, a: SetLike) -> Path:
    """Initial piece ending at the first visit of the set."""
    k = int(_require_hit(path, a)[0])
    return Path(path.verts[: k + 1], validate=False)


def to_last_hit(path: Path, a: SetLike) -> Path:
    """Initial piece ending at the last visit of the set."""
    k = int(_require_hit(path, a)[-1])
    return Path(path.verts[: k + 1], validate=False)


def from_first_hit(path: Path, a: SetLike) -> Path:
    """Final piece starting at the first visit of the set."""
    k = int(_require_hit(path, a)[0])
    return Path(path.verts[k:], validate=False)


def from_last_hit(path: Path, a: SetLike) -> Path:
    """Final piece starting at the last visit of the set."""
    k = int(_require_hit(path, a)[-1])
    return Path(path.verts[k:], validate=False)


def drop_prefix(path: Path, k: int) -> Path:
    """Forget the first k steps."""
    if not 0 <= k <= len(path):
        raise ValueError(f"k={k} outside 0..{len(path)}")
    return Path(path.verts[k:], validate=False)


def take_prefix(path: Path, k: int) -> Path:
    """Keep only the first k steps."""
    if not 0 <= k <= len(path):
        raise ValueError(f"k={k} outside 0..{len(path)}")
    return Path(path.verts[: k + 1], validate=False)


def reverse(path: Path) -> Path:
    return Path(path.verts[::-1], validate=False)


def concat(a: Path, b: Path) -> Path:
    """Join two paths; b must start where a ends."""
    if a.end != b.start:
        raise ValueError("paths do not share an endpoint")
    return Path(np.vstack([a.verts, b.verts[1:]]), validate=False)


def loop_erase(path: Path) -> Path:
    """Chronological loop erasure.

    Walk forward keeping an index of the current erased path; a revisit
    truncates back to the first occurrence.  Runs in O(length) expected
    time via a hash map on packed vertices.
    """
    v = path.verts
    if v.shape[0] == 1:
        return path
    kept: list[int] = [0]
    where: dict[bytes, int] = {v[0].tobytes(): 0}
    for i in range(1, v.shape[0]):
        key = v[i].tobytes()
        j = where.get(key)
        if j is not None:
            for t in kept[j + 1 :]:
                del where[v[t].tobytes()]
            del kept[j + 1 :]
        else:
            where[key] = len(kept)
            kept.append(i)
    out = Path(v[kept], validate=False)
    assert out.is_self_avoiding()
    return out


def write_path(path: Path, fh) -> None:
    """One vertex per line, comma-separated coordinates."""
    for row in path.verts:
        fh.write(",".join(str(int(c)) for c in row) + "\n")


def read_path(fh) -> Path:
    rows = []
    for line in fh:
        line = line.strip()
        if line:
            rows.append(tuple(int(t) for t in line.split(",")))
    if not rows:
        raise ValueError("no vertices in path file")
    return Path.from_vertices(rows)
