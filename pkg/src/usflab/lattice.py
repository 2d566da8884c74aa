"""Points, boxes and finite domains of the hypercubic lattice.

Vertices are plain tuples of ints so they hash and compare naturally.
The ambient dimension is a runtime value carried by containing
structures (Box, Domain, Path); mixing dimensions raises.

Coordinates are bounded: |c| < 2**20 per axis.  That bound makes the
packed integer encoding reversible, and every simulation in this
package lives comfortably inside it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

Point = tuple[int, ...]

COORD_BOUND = 1 << 20
_PACK_BITS = 21
_MATERIALIZE_CAP = 5_000_000


def check_point(x: Point, d: int | None = None) -> Point:
    if d is not None and len(x) != d:
        raise ValueError(f"point {x} has dimension {len(x)}, expected {d}")
    for c in x:
        if not -COORD_BOUND < c < COORD_BOUND:
            raise ValueError(f"coordinate {c} outside packing range (|c| < 2**20)")
    return x


def add(x: Point, y: Point) -> Point:
    return tuple(a + b for a, b in zip(x, y))


def sub(x: Point, y: Point) -> Point:
    return tuple(a - b for a, b in zip(x, y))


def unit(d: int, axis: int, sign: int = 1) -> Point:
    """Unit vector along `axis` (1-based, following coordinate labels)."""
    if not 1 <= axis <= d:
        raise ValueError(f"axis {axis} out of range 1..{d}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return tuple(sign if i == axis - 1 else 0 for i in range(d))


def linf(x: Point, y: Point | None = None) -> int:
    if y is not None:
        x = sub(x, y)
    return max(abs(c) for c in x) if x else 0


def l2(x: Point, y: Point | None = None) -> float:
    if y is not None:
        x = sub(x, y)
    return math.sqrt(sum(c * c for c in x))


def l1(x: Point, y: Point | None = None) -> int:
    if y is not None:
        x = sub(x, y)
    return sum(abs(c) for c in x)


def neighbors(x: Point) -> list[Point]:
    """The 2d lattice neighbors, ordered (+e1, -e1, +e2, -e2, ...)."""
    out = []
    for i in range(len(x)):
        for s in (1, -1):
            y = list(x)
            y[i] += s
            out.append(tuple(y))
    return out


def pack_point(x: Point) -> int:
    """Reversible integer encoding; 21 bits per axis, offset by 2**20."""
    check_point(x)
    acc = 0
    for c in x:
        acc = (acc << _PACK_BITS) | (c + COORD_BOUND)
    return acc


def unpack_point(packed: int, d: int) -> Point:
    mask = (1 << _PACK_BITS) - 1
    coords = []
    for _ in range(d):
        coords.append((packed & mask) - COORD_BOUND)
        packed >>= _PACK_BITS
    if packed:
        raise ValueError("packed value has more axes than requested")
    return tuple(reversed(coords))


@dataclass(frozen=True)
class Box:
    """Q(center, radius): the closed sup-norm ball, side 2*radius + 1."""

    center: Point
    radius: int

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        check_point(self.center)
        for c in self.center:
            if abs(c) + self.radius >= COORD_BOUND:
                raise ValueError("box exceeds coordinate packing range")

    @property
    def d(self) -> int:
        return len(self.center)

    def size(self) -> int:
        return (2 * self.radius + 1) ** self.d

    def contains(self, x: Point) -> bool:
        return len(x) == self.d and linf(x, self.center) <= self.radius

    def __contains__(self, x: Point) -> bool:
        return self.contains(x)

    def points(self) -> Iterator[Point]:
        if self.size() > _MATERIALIZE_CAP:
            raise ValueError(f"refusing to enumerate {self.size()} lattice points")
        ranges = [range(c - self.radius, c + self.radius + 1) for c in self.center]
        return (tuple(p) for p in itertools.product(*ranges))

    def face(self, axis: int, sign: int) -> set[Point]:
        """The closed face {x in Q : x_axis = center_axis + sign*radius}."""
        if not 1 <= axis <= self.d:
            raise ValueError(f"axis {axis} out of range 1..{self.d}")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        fixed = self.center[axis - 1] + sign * self.radius
        side = 2 * self.radius + 1
        if side ** (self.d - 1) > _MATERIALIZE_CAP:
            raise ValueError("face too large to enumerate")
        ranges = [
            [fixed] if i == axis - 1 else range(c - self.radius, c + self.radius + 1)
            for i, c in enumerate(self.center)
        ]
        return {tuple(p) for p in itertools.product(*ranges)}


def box(center: Point, radius: int) -> Box:
    return Box(tuple(center), radius)


def origin_box(d: int, radius: int) -> Box:
    return Box((0,) * d, radius)


@dataclass(frozen=True)
class Domain:
    """A finite vertex set, stored as a union of boxes or explicitly.

    Box unions stay implicit (no materialization), which is what the
    compiled walkers consume.  Explicit sets are for small exact work.
    """

    boxes: tuple[Box, ...] = ()
    extra: frozenset[Point] = frozenset()

    def __post_init__(self) -> None:
        dims = {b.d for b in self.boxes} | {len(p) for p in self.extra}
        if len(dims) > 1:
            raise ValueError("mixed dimensions in domain")
        if not dims:
            raise ValueError("empty domain")
        for p in self.extra:
            check_point(p)

    @classmethod
    def from_box(cls, b: Box) -> "Domain":
        return cls(boxes=(b,))

    @classmethod
    def from_boxes(cls, bs: Iterable[Box]) -> "Domain":
        return cls(boxes=tuple(bs))

    @classmethod
    def from_points(cls, pts: Iterable[Point]) -> "Domain":
        return cls(extra=frozenset(tuple(p) for p in pts))

    @property
    def d(self) -> int:
        return self.boxes[0].d if self.boxes else len(next(iter(self.extra)))

    def contains(self, x: Point) -> bool:
        return any(b.contains(x) for b in self.boxes) or x in self.extra

    def __contains__(self, x: Point) -> bool:
        return self.contains(x)

    def size(self) -> int:
        if not self.boxes:
            return len(self.extra)
        total = 0
        seen: set[Point] = set()
        for b in self.boxes:
            if len(self.boxes) == 1 and not self.extra:
                return b.size()
            for p in b.points():
                seen.add(p)
        seen |= self.extra
        return len(seen)

    def points(self) -> Iterator[Point]:
        if not self.boxes:
            yield from self.extra
            return
        seen: set[Point] = set()
        for b in self.boxes:
            for p in b.points():
                if p not in seen:
                    seen.add(p)
                    yield p
        for p in self.extra:
            if p not in seen:
                yield p

    def bounding_box(self) -> Box:
        """Smallest origin-symmetric data: returns a Box covering the domain."""
        los = [min(b.center[i] - b.radius for b in self.boxes) if self.boxes else None
               for i in range(self.d)]
        his = [max(b.center[i] + b.radius for b in self.boxes) if self.boxes else None
               for i in range(self.d)]
        for p in self.extra:
            for i, c in enumerate(p):
                los[i] = c if los[i] is None else min(los[i], c)
                his[i] = c if his[i] is None else max(his[i], c)
        center = tuple((lo + hi) // 2 for lo, hi in zip(los, his))
        radius = max(max(hi - c, c - lo) for lo, hi, c in zip(los, his, center))
        return Box(center, radius)


def boundary(a: Box | Domain | Iterable[Point], kind: str = "outer") -> set[Point]:
    """Boundary of a finite vertex set.

    kind="outer":    vertices off the set adjacent to it.
    kind="inner":    vertices of the set adjacent to its complement.
    kind="interior": the set minus its inner boundary.
    """
    if kind not in ("outer", "inner", "interior"):
        raise ValueError(f"unknown boundary kind {kind!r}")
    if isinstance(a, Box):
        pts: set[Point] = set(a.points())
        member = a.contains
    elif isinstance(a, Domain):
        pts = set(a.points())
        member = a.contains
    else:
        pts = {tuple(p) for p in a}
        member = pts.__contains__
    if not pts:
        raise ValueError("boundary of empty vertex set")
    if kind == "outer":
        out: set[Point] = set()
        for x in pts:
            for y in neighbors(x):
                if not member(y):
                    out.add(y)
        return out
    inner = {x for x in pts if any(not member(y) for y in neighbors(x))}
    if kind == "inner":
        return inner
    return pts - inner
