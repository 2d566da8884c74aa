"""Simple random walks with stop rules, conditioning, and loop erasure.

All samplers consume a counter-based RngStream, so a run is a pure
function of (master_seed, stream_id, arguments).  The heavy lifting
happens in compiled kernels; wrappers size the scratch buffers, and on
an overflow they retry with more space and the same stream position,
which reproduces the identical trajectory.

Conventions shared with the rest of the package: a walk in a domain D
runs until its first exit and the recorded path includes the exit
vertex; hitting-time clauses may or may not count time 0, controlled by
`hit_at_start` (the "first visit" vs "first return" distinction).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import _engine, _kernels, path_ops
from .lattice import Box, Domain, Point, check_point
from .path_ops import Path
from .rng import RngStream

_CAUSES = {
    _kernels.CAUSE_EXITED: "exited_domain",
    _kernels.CAUSE_HIT: "hit_set",
    _kernels.CAUSE_CAP: "step_cap",
}


@dataclass(frozen=True)
class StopRule:
    """Stop clauses for run_walk; at least one must be present.

    A hit_set clause requires exit_domain too: the compiled walker
    needs a finite window to key its hash sets.
    """

    exit_domain: Domain | None = None
    hit_set: frozenset[Point] | None = None
    hit_at_start: bool = True
    step_cap: int | None = None

    def __post_init__(self) -> None:
        if self.exit_domain is None and self.hit_set is None and self.step_cap is None:
            raise ValueError("stop rule needs at least one clause")
        if self.hit_set is not None and self.exit_domain is None:
            raise ValueError("hit_set requires an exit_domain clause")
        if self.step_cap is not None and self.step_cap < 0:
            raise ValueError("step_cap must be nonnegative")


@dataclass(frozen=True)
class WalkOutcome:
    path: Path
    cause: str
    steps: int
    draws: int


class ConditioningFailed(RuntimeError):
    """Rejection sampling exhausted its trial budget."""

    def __init__(self, trials: int, acceptance_rate: float):
        self.trials = trials
        self.acceptance_rate = acceptance_rate
        super().__init__(
            f"no accepted walk in {trials} trials "
            f"(empirical acceptance rate {acceptance_rate:.2e})")


def _as_start(start: Point, d: int) -> np.ndarray:
    check_point(start, d)
    return np.array(start, dtype=np.int64)


def run_walk(start: Point, rule: StopRule, rng: RngStream, record: bool = True) -> WalkOutcome:
    """Walk from start until the stop rule fires.

    With record=False the returned path keeps only the start and stop
    vertices.  The start must lie inside the exit domain when that
    clause is present.
    """
    if rule.exit_domain is not None:
        d = rule.exit_domain.d
        if start not in rule.exit_domain:
            raise ValueError("start lies outside the exit domain")
        dlo, dhi = _engine.domain_arrays(rule.exit_domain)
        win = _engine.window_for(rule.exit_domain.boxes, extra=[start])
    else:
        d = len(start)
        dlo = np.empty((0, d), dtype=np.int64)
        dhi = np.empty((0, d), dtype=np.int64)
        win = _engine.window_for([], extra=[start], margin=4)
    if rule.hit_set is not None:
        hmap = _engine.Int64Map.from_keys(win.pack(p) for p in rule.hit_set)
        hkeys, hvals = hmap.keys, hmap.vals
    else:
        hkeys, hvals = _engine.empty_set_arrays()
    cap = rule.step_cap if rule.step_cap is not None else -1
    buf, n, cause, pos, steps = _kernels.walk_kernel(
        _as_start(start, d), dlo, dhi, hkeys, hvals,
        1 if rule.hit_at_start else 0,
        cap, win.poff, win.pbits, np.uint64(rng.key), rng.position,
        1 if record else 0, 4096)
    draws = pos - rng.position
    rng.position = pos
    return WalkOutcome(Path(buf[:n].copy(), validate=False), _CAUSES[int(cause)], int(steps), int(draws))


def _domain_radius(domain: Domain) -> int:
    return domain.bounding_box().radius


def sample_lerw(start: Point, domain: Domain, rng: RngStream) -> Path:
    """Loop erasure of a walk from start run to its first exit of the
    domain; the result ends at the exit vertex."""
    path, _ = sample_lerw_with_steps(start, domain, rng)
    return path


def sample_lerw_with_steps(start: Point, domain: Domain, rng: RngStream) -> tuple[Path, int]:
    if start not in domain:
        raise ValueError("start lies outside the domain")
    dlo, dhi = _engine.domain_arrays(domain)
    win = _engine.window_for(domain.boxes, extra=[start])
    r = _domain_radius(domain)
    cap = min(max(4096, 4 * r * r), 1 << 22)
    mcap = _engine._pow2_at_least(2 * cap)
    d = domain.d
    esc = np.empty((0, d), dtype=np.int64)
    while True:
        pc, ln, status, _, pos, steps = _kernels.lerw_kernel(
            _as_start(start, d), dlo, dhi, win.poff, win.pbits,
            np.uint64(rng.key), rng.position, 0, 0, esc, esc, cap, mcap)
        if status == _kernels.OK:
            rng.position = pos
            return Path(pc[:ln].copy(), validate=False), int(steps)
        cap *= 4
        mcap *= 4


def sample_lerw_many(start: Point, domain: Domain, rng: RngStream,
                     count: int, chunk: int = 4096) -> Iterator[Path]:
    """Yield `count` loop-erased walks, batched through the kernel so
    the per-sample dispatch cost is shared.  The i-th path is
    bit-identical to the i-th `sample_lerw` call on the same stream.
    """
    if start not in domain:
        raise ValueError("start lies outside the domain")
    if count < 0:
        raise ValueError("count must be nonnegative")
    dlo, dhi = _engine.domain_arrays(domain)
    win = _engine.window_for(domain.boxes, extra=[start])
    r = _domain_radius(domain)
    cap = min(max(4096, 4 * r * r), 1 << 22)
    size = domain.size()
    if size + 2 < cap:
        # a loop-erased path visits each site at most once
        cap = size + 2
    mcap = _engine._pow2_at_least(4 * cap)
    d = domain.d
    esc = np.empty((0, d), dtype=np.int64)
    start_arr = _as_start(start, d)
    out_cap = max(64 * chunk, 4 * cap)
    out_verts = np.empty((out_cap, d), np.int64)
    out_offs = np.empty(chunk + 1, np.int64)
    left = count
    while left > 0:
        want = min(chunk, left)
        done, status, pos = _kernels.lerw_batch_kernel(
            want, start_arr, dlo, dhi, win.poff, win.pbits,
            np.uint64(rng.key), rng.position, esc, cap, mcap, out_verts, out_offs)
        rng.position = int(pos)
        for s in range(int(done)):
            yield Path(out_verts[out_offs[s]:out_offs[s + 1]].copy(),
                       validate=False)
        left -= int(done)
        if status == _kernels.OUT_FULL and int(done) == 0:
            out_cap *= 4
            out_verts = np.empty((out_cap, d), np.int64)
        elif status in (_kernels.OVERFLOW_BUF, _kernels.OVERFLOW_MAP):
            cap *= 4
            mcap *= 4


@dataclass(frozen=True)
class ConditionedOutcome:
    path: Path
    trials: int
    draws: int


def run_conditioned_walk(start: Point, domain: Domain, avoid: Iterable[Point],
                         rng: RngStream, trial_cap: int = 100_000) -> ConditionedOutcome:
    """A walk from start conditioned to leave the domain before
    visiting the avoid set at any time >= 1, sampled by rejection.

    The start may itself belong to the avoid set; only returns to the
    set count.  `trials` reports how many rejections it took plus one.
    Raises ConditioningFailed (carrying the empirical acceptance rate)
    when trial_cap trials all get rejected.
    """
    if start not in domain:
        raise ValueError("start lies outside the domain")
    dlo, dhi = _engine.domain_arrays(domain)
    win = _engine.window_for(domain.boxes, extra=[start])
    d = domain.d
    amap = _engine.Int64Map.from_keys(win.pack(tuple(p)) for p in avoid)
    buf, n, accepted, trials, pos = _kernels.conditioned_kernel(
        _as_start(start, d), dlo, dhi, amap.keys, amap.vals,
        win.poff, win.pbits, np.uint64(rng.key), rng.position, trial_cap, 4096)
    draws = pos - rng.position
    rng.position = pos
    if not accepted:
        raise ConditioningFailed(int(trials), 0.0)
    return ConditionedOutcome(Path(buf[:n].copy(), validate=False), int(trials), int(draws))


def hits_before_escape(start: Point, target: Iterable[Point], escape_radius: int,
                       rng: RngStream, record: bool = True) -> WalkOutcome:
    """Walk from start until it visits the target set or leaves the box
    of the given radius around the target's bounding-box center.

    cause "hit_set" means the target fired.  A visit at time 0 counts.
    """
    pts = [tuple(p) for p in target]
    if not pts:
        raise ValueError("empty target set")
    d = len(pts[0])
    lo = [min(p[i] for p in pts) for i in range(d)]
    hi = [max(p[i] for p in pts) for i in range(d)]
    center = tuple((a + b) // 2 for a, b in zip(lo, hi))
    diam = max(b - a for a, b in zip(lo, hi))
    if escape_radius <= diam // 2 + max(abs(s - c) for s, c in zip(start, center)):
        raise ValueError("escape radius does not contain target and start")
    esc = Box(center, escape_radius)
    rule = StopRule(exit_domain=Domain.from_box(esc), hit_set=frozenset(pts))
    return run_walk(start, rule, rng, record=record)
