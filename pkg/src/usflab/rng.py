"""Counter-based random number generation.

Every random draw in this package is a pure function of
(master_seed, stream_id, position), so replicated runs are reproducible
and independent of scheduling order.  The generator is the splitmix64
finalizer applied to an affine counter; streams are decorrelated by
hashing the stream id into the key.

The same arithmetic is reimplemented inside the compiled kernels
(`_kernels.py`); `tests/test_walker.py` pins the two implementations to
each other bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_SEED_SALT = 0xA0761D6478BD642F
_STREAM_SALT = 0xE7037ED1A0B428DB
_VERTEX_SALT = 0x1D8E4E27C47D124F


def mix64(z: int) -> int:
    """splitmix64 finalizer; bijective on 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, stream_id: int) -> int:
    """64-bit key identifying one replica stream."""
    a = mix64((master_seed + _SEED_SALT) & MASK64)
    b = mix64((stream_id + _STREAM_SALT) & MASK64)
    return mix64(a ^ b)


def draw_u64(key: int, position: int) -> int:
    """The `position`-th draw of the stream with the given key."""
    return mix64((key + ((position + 1) * GOLDEN)) & MASK64)


def vertex_key(key: int, packed_vertex: int) -> int:
    """Key of the per-vertex arrow stack used by the forest sampler."""
    return mix64(key ^ mix64((packed_vertex + _VERTEX_SALT) & MASK64))


def arrow(key: int, packed_vertex: int, depth: int, two_d: int) -> int:
    """Direction index in [0, 2d) at `depth` in the vertex's stack.

    The modulo bias is at most 12/2**64 and is far below anything a
    statistical test in this package could resolve.
    """
    return draw_u64(vertex_key(key, packed_vertex), depth) % two_d


@dataclass
class RngStream:
    """A named position inside the counter-based generator.

    `position` advances as draws are consumed, which makes replays exact:
    constructing a stream with the same (master_seed, stream_id) and
    running the same calls yields bit-identical results.  The forest
    sampler addresses randomness by (vertex, depth) instead of by
    position; for those calls `position` is not consulted.
    """

    master_seed: int
    stream_id: int = 0
    position: int = 0
    _key: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not (0 <= self.master_seed <= MASK64):
            raise ValueError("master_seed must fit in 64 bits")
        if not (0 <= self.stream_id <= MASK64):
            raise ValueError("stream_id must fit in 64 bits")
        self._key = stream_key(self.master_seed, self.stream_id)

    @property
    def key(self) -> int:
        return self._key

    def draw_u64(self) -> int:
        out = draw_u64(self._key, self.position)
        self.position += 1
        return out

    def draw_mod(self, n: int) -> int:
        if n <= 0:
            raise ValueError("modulus must be positive")
        return self.draw_u64() % n

    def draw_unit(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.draw_u64() >> 11) * (1.0 / (1 << 53))

    def substream(self, offset: int) -> "RngStream":
        """A fresh stream derived by shifting the stream id."""
        return RngStream(self.master_seed, mix64(self.stream_id ^ mix64(offset)))
