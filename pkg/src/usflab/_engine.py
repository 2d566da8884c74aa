"""Shared glue between the Python API and the compiled kernels.

A PackWindow fixes the injective packing of lattice points into
nonnegative int64 keys for one run: per-axis offsets plus a common bit
width.  Windows must cover every box a kernel consults, inflated by
two steps (kernels may pack the one vertex that falls just outside a
stop box).  The same packing is reimplemented here in Python so the
pure-Python forest mirror and the kernels agree key for key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .lattice import Box, Domain, Point

_MAX_TOTAL_BITS = 55  # parent-map values shift packed keys left by 5


def _pow2_at_least(n: int) -> int:
    c = 1
    while c < n:
        c *= 2
    return c


@dataclass(frozen=True)
class PackWindow:
    lo: tuple[int, ...]
    pbits: int

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def poff(self) -> np.ndarray:
        return np.array([-c for c in self.lo], dtype=np.int64)

    def pack(self, x: Point) -> int:
        acc = 0
        for c, lo in zip(x, self.lo):
            rel = c - lo
            if not 0 <= rel < (1 << self.pbits):
                raise ValueError(f"point {x} outside packing window")
            acc = (acc << self.pbits) | rel
        return acc

    def unpack(self, key: int) -> Point:
        mask = (1 << self.pbits) - 1
        coords = []
        for _ in range(self.d):
            coords.append((key & mask))
            key >>= self.pbits
        return tuple(c + lo for c, lo in zip(reversed(coords), self.lo))

    def pack_array(self, arr: np.ndarray) -> np.ndarray:
        rel = arr - np.array(self.lo, dtype=np.int64)
        acc = np.zeros(arr.shape[0], dtype=np.int64)
        for i in range(self.d):
            acc = (acc << self.pbits) | rel[:, i]
        return acc


def window_for(boxes: Sequence[Box], extra: Iterable[Point] = (), margin: int = 2) -> PackWindow:
    if not boxes and not extra:
        raise ValueError("cannot build a packing window from nothing")
    d = boxes[0].d if boxes else len(next(iter(extra)))
    lo = [None] * d
    hi = [None] * d
    for b in boxes:
        for i in range(d):
            a, z = b.center[i] - b.radius, b.center[i] + b.radius
            lo[i] = a if lo[i] is None else min(lo[i], a)
            hi[i] = z if hi[i] is None else max(hi[i], z)
    for p in extra:
        for i, c in enumerate(p):
            lo[i] = c if lo[i] is None else min(lo[i], c)
            hi[i] = c if hi[i] is None else max(hi[i], c)
    lo = [a - margin for a in lo]
    hi = [z + margin for z in hi]
    extent = max(z - a + 1 for a, z in zip(lo, hi))
    pbits = max(1, int(extent - 1).bit_length())
    if d * pbits > _MAX_TOTAL_BITS:
        raise ValueError(
            f"domain too large to pack: {d} axes at {pbits} bits exceeds "
            f"{_MAX_TOTAL_BITS} bits total")
    return PackWindow(tuple(lo), pbits)


def boxes_arrays(boxes: Sequence[Box], d: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.empty((len(boxes), d), dtype=np.int64)
    hi = np.empty((len(boxes), d), dtype=np.int64)
    for j, b in enumerate(boxes):
        for i in range(d):
            lo[j, i] = b.center[i] - b.radius
            hi[j, i] = b.center[i] + b.radius
    return lo, hi


def domain_arrays(domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    if not domain.boxes:
        raise ValueError("compiled walkers need a box-union domain")
    if domain.extra:
        raise ValueError("compiled walkers do not support extra points in domains")
    return boxes_arrays(domain.boxes, domain.d)


class Int64Map:
    """Caller-owned storage for the kernels' open-addressing maps."""

    __slots__ = ("keys", "vals", "used")

    def __init__(self, capacity: int):
        cap = _pow2_at_least(max(8, capacity))
        self.keys = np.full(cap, _kernels.EMPTY, dtype=np.int64)
        self.vals = np.empty(cap, dtype=np.int64)
        self.used = np.zeros(1, dtype=np.int64)

    @classmethod
    def from_keys(cls, packed: Iterable[int], value: int = 1) -> "Int64Map":
        keys = list(packed)
        m = cls(4 * max(1, len(keys)))
        for k in keys:
            if _kernels.map_put(m.keys, m.vals, m.used, k, value):
                raise RuntimeError("map sizing bug")
        return m

    def get(self, k: int) -> int | None:
        v = _kernels.map_get(self.keys, self.vals, k)
        return None if v == _kernels.MISSING else int(v)

    def put(self, k: int, v: int) -> None:
        if _kernels.map_put(self.keys, self.vals, self.used, k, v):
            raise RuntimeError("map full; caller should have sized it")

    def __contains__(self, k: int) -> bool:
        return self.get(k) is not None

    def __len__(self) -> int:
        return int(self.used[0])

    def items(self):
        for i in range(self.keys.shape[0]):
            if self.keys[i] != _kernels.EMPTY:
                yield int(self.keys[i]), int(self.vals[i])


_EMPTY_SET = Int64Map(8)


def empty_set_arrays() -> tuple[np.ndarray, np.ndarray]:
    return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
