"""Monte Carlo estimators for the geometry of wired spanning forests.

Each public estimator measures one quantitative statement about
loop-erased walks or forest components at fixed lattice scale and
returns an ExperimentResult: typed rows carrying an Estimate (value,
stderr, 95% interval, sample count) plus run metadata.  The statements
themselves involve unspecified constants, so downstream checks compare
scaled statistics across geometries instead of against absolute
numbers.

Sampling is organized as tally/build pairs.  A tally function consumes
one RngStream and returns a flat dict of counters and value lists;
tallies merge associatively, so replicated runs (one stream per replica
index) produce the same result regardless of scheduling.  Build
functions turn a merged tally into rows.  Every estimator is a pure
function of (master_seed, parameters): reruns are bit-identical.

Results serialize to one CSV per run (columns: experiment, statistic,
parameter columns, estimate, stderr, ci_lo, ci_hi, n_samples, seed,
code_version) plus a JSON sidecar holding the full configuration,
truncation radii, acceptance rates, and wall time.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats as _stats

from . import __version__ as CODE_VERSION
from . import _engine, _kernels, harmonic
from .lattice import Box, Domain, Point, box, check_point, linf, origin_box
from .rng import RngStream
from .walker import sample_lerw, sample_lerw_many
from .wilson_forest import WilsonSampler, WiredGraph, intrinsic_ball, tree_distance

# Below this many observed successes the normal interval for a
# frequency is replaced by the exact binomial one.
EXACT_CI_SUCCESS_FLOOR = 10

# Ball experiments refuse radii above this without an explicit opt-in;
# the enclosing domain has (8n+1)^d sites and memory grows accordingly.
BALL_RADIUS_SOFT_CAP = 16

TOPOLOGY_MAX_MARKS = 8

_Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# point estimates


@dataclass(frozen=True)
class Estimate:
    """A scalar estimate with its uncertainty.

    ci95 always contains the value.  For frequencies the interval is
    the normal approximation clipped to [0, 1], switched to the exact
    binomial interval when fewer than EXACT_CI_SUCCESS_FLOOR successes
    were seen.  For quantile rows stderr is the interval width mapped
    back through the normal 95% factor.
    """

    value: float
    stderr: float
    n_samples: int
    ci95: tuple[float, float]

    def __post_init__(self) -> None:
        if not (self.stderr >= 0.0):
            raise ValueError(f"stderr must be nonnegative, got {self.stderr}")
        if self.n_samples < 0:
            raise ValueError("n_samples must be nonnegative")
        lo, hi = self.ci95
        if not (lo <= self.value <= hi):
            raise ValueError(
                f"ci95 {self.ci95} does not contain the value {self.value}")

    def scaled(self, factor: float) -> "Estimate":
        """The estimate of factor * quantity; exact linear rescale."""
        lo, hi = self.ci95[0] * factor, self.ci95[1] * factor
        if lo > hi:
            lo, hi = hi, lo
        return Estimate(self.value * factor, self.stderr * abs(factor),
                        self.n_samples, (lo, hi))

    @property
    def relative_error(self) -> float:
        if self.value == 0.0:
            return math.inf
        return abs(self.stderr / self.value)


def frequency_estimate(hits: int, n: int) -> Estimate:
    """Binomial frequency with a clipped-normal or exact interval."""
    if n <= 0:
        raise ValueError("frequency needs at least one trial")
    if not (0 <= hits <= n):
        raise ValueError(f"hits {hits} outside 0..{n}")
    p = hits / n
    stderr = math.sqrt(p * (1.0 - p) / n)
    if min(hits, n - hits) < EXACT_CI_SUCCESS_FLOOR:
        # normal theory needs both counts large; near either rail use
        # the exact binomial interval instead
        lo = 0.0 if hits == 0 else float(_stats.beta.ppf(0.025, hits, n - hits + 1))
        hi = 1.0 if hits == n else float(_stats.beta.ppf(0.975, hits + 1, n - hits))
    else:
        lo = max(0.0, p - _Z95 * stderr)
        hi = min(1.0, p + _Z95 * stderr)
    return Estimate(p, stderr, n, (min(lo, p), max(hi, p)))


def mean_estimate(values: Sequence[float] | np.ndarray) -> Estimate:
    arr = np.asarray(values, dtype=np.float64)
    n = arr.shape[0]
    if n == 0:
        raise ValueError("mean of an empty sample")
    value = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value, stderr, n,
                    (value - _Z95 * stderr, value + _Z95 * stderr))


def quantile_estimate(values: Sequence[float] | np.ndarray, q: float) -> Estimate:
    """Empirical quantile with an order-statistic interval.

    The interval endpoints are the order statistics whose ranks bound
    the central 95% of Binomial(n, q); with very few samples they can
    sit at the sample extremes.
    """
    if not (0.0 < q < 1.0):
        raise ValueError("quantile must lie strictly inside (0, 1)")
    arr = np.sort(np.asarray(values, dtype=np.float64))
    n = arr.shape[0]
    if n == 0:
        raise ValueError("quantile of an empty sample")
    value = float(np.quantile(arr, q))
    lo_rank = int(_stats.binom.ppf(0.025, n, q))
    hi_rank = int(_stats.binom.ppf(0.975, n, q))
    lo = float(arr[max(0, min(n - 1, lo_rank))])
    hi = float(arr[max(0, min(n - 1, hi_rank))])
    lo, hi = min(lo, value), max(hi, value)
    return Estimate(value, (hi - lo) / (2.0 * _Z95), n, (lo, hi))


# ---------------------------------------------------------------------------
# shell geometry


@dataclass(frozen=True)
class ShellFrame:
    """Derived geometry around one boundary-entry vertex.

    The frame rotates a reference construction onto whichever face of
    the inner box the anchor sits on: `out` is the outward unit vector
    of that face, `side` a lateral unit vector pointing away from the
    anchor's side of the box.  All offsets are in units of the shell
    width m.  forward_box sits half a shell width outward from the
    anchor, probe_point a further shell width to the side, side_box two
    shell widths to the side, and side_slab is the asymmetric envelope
    containing both (an axis-aligned box given by corner points).
    """

    anchor: Point
    out_axis: int
    out_sign: int
    side_axis: int
    side_sign: int
    center: Point
    probe_point: Point
    forward_box: Box
    forward_box_wide: Box
    side_box: Box
    slab_lo: Point
    slab_hi: Point


def _shift(p: Point, axis: int, amount: int) -> Point:
    out = list(p)
    out[axis] += amount
    return tuple(out)


@dataclass(frozen=True)
class ShellGeometry:
    """Scales (n, m, N) for shell statistics: the walk is observed where
    it first reaches box radius n, over a shell of width m, inside the
    sampling domain of radius 4N.

    The standing regime is 16 <= n < n + m <= N with m <= n/8; smaller
    smoke-test geometries must set override_regime.  m must be a
    positive multiple of 4 so the quarter-width offsets of the derived
    boxes are lattice-exact.
    """

    d: int
    n: int
    m: int
    N: int
    override_regime: bool = False

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("shell geometry needs d >= 2")
        if self.m < 4 or self.m % 4 != 0:
            raise ValueError(f"m must be a positive multiple of 4, got {self.m}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.n + self.m > self.N:
            raise ValueError(
                f"need n + m <= N, got n={self.n} m={self.m} N={self.N}")
        in_regime = self.n >= 16 and 8 * self.m <= self.n
        if not in_regime and not self.override_regime:
            raise ValueError(
                "shell regime requires 16 <= n and m <= n/8; "
                "set override_regime=True for a deliberately small run")

    def ring_count(self) -> int:
        """Number of nested shells k with k*m < N - m and k*m >= N/2,
        taking the largest k that fits; 0 when no k satisfies both."""
        k = (self.N - self.m - 1) // self.m
        if k < 1 or 2 * k * self.m < self.N:
            return 0
        return k

    def frame_at(self, anchor: Point, radius: int | None = None) -> ShellFrame:
        """Build the derived boxes around an entry vertex on the inner
        boundary of the box of the given radius (default n)."""
        r = self.n if radius is None else radius
        a = check_point(anchor, self.d)
        if linf(a) != r:
            raise ValueError(
                f"anchor {a} is not on the inner boundary at radius {r}")
        out_axis = next(i for i in range(self.d) if abs(a[i]) == r)
        out_sign = 1 if a[out_axis] > 0 else -1
        side_axis = 0 if out_axis != 0 else 1
        side_sign = 1 if a[side_axis] <= 0 else -1
        m = self.m
        center = _shift(a, out_axis, out_sign * (m // 2))
        probe = _shift(center, side_axis, side_sign * m)
        side_center = _shift(center, side_axis, side_sign * 2 * m)
        lo = list(center)
        hi = list(center)
        for i in range(self.d):
            if i == out_axis:
                lo[i] -= (3 * m) // 8
                hi[i] += (3 * m) // 8
            elif i == side_axis:
                if side_sign > 0:
                    lo[i] -= m
                    hi[i] += 3 * m
                else:
                    lo[i] -= 3 * m
                    hi[i] += m
            else:
                lo[i] -= m
                hi[i] += m
        return ShellFrame(
            anchor=a, out_axis=out_axis, out_sign=out_sign,
            side_axis=side_axis, side_sign=side_sign,
            center=center, probe_point=probe,
            forward_box=box(center, m // 4),
            forward_box_wide=box(center, (3 * m) // 8),
            side_box=box(side_center, m // 4),
            slab_lo=tuple(lo), slab_hi=tuple(hi))


# ---------------------------------------------------------------------------
# attachment topologies

INFINITY_LABEL = "inf"

_JUNCTIONS = tuple(f"j{i}" for i in range(TOPOLOGY_MAX_MARKS + 1))

Label = int | str


def junction_label(i: int) -> str:
    """Label of the i-th degree-3 branch vertex."""
    return _JUNCTIONS[i]


def _label_key(v: Label) -> tuple[int, int]:
    if isinstance(v, int):
        return (0, v)
    if v == INFINITY_LABEL:
        return (2, 0)
    return (1, int(v[1:]))


def _edge(a: Label, b: Label) -> tuple[Label, Label]:
    return (a, b) if _label_key(a) <= _label_key(b) else (b, a)


@dataclass(frozen=True, slots=True)
class TopologyTree:
    """One labelled tree shape for k marked vertices joined to a path
    out to infinity: leaves 0..k and "inf" have degree 1, junctions
    j1..jk degree 3."""

    k: int
    edges: tuple[tuple[Label, Label], ...]

    @property
    def vertices(self) -> tuple[Label, ...]:
        seen: dict[Label, None] = {}
        for a, b in self.edges:
            seen.setdefault(a)
            seen.setdefault(b)
        return tuple(sorted(seen, key=_label_key))

    def degree(self, v: Label) -> int:
        return sum((a == v) + (b == v) for a, b in self.edges)

    def validate(self) -> None:
        verts = self.vertices
        expect = tuple(sorted(
            list(range(self.k + 1)) + [INFINITY_LABEL]
            + [junction_label(i) for i in range(1, self.k + 1)],
            key=_label_key))
        if verts != expect:
            raise ValueError(f"vertex set mismatch: {verts}")
        if len(self.edges) != len(verts) - 1:
            raise ValueError("edge count is not vertices - 1")
        adj: dict[Label, list[Label]] = {v: [] for v in verts}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for i in range(self.k + 1):
            if len(adj[i]) != 1:
                raise ValueError(f"leaf {i} has degree {len(adj[i])}")
        if len(adj[INFINITY_LABEL]) != 1:
            raise ValueError("the infinity vertex must have degree 1")
        for i in range(1, self.k + 1):
            if len(adj[junction_label(i)]) != 3:
                raise ValueError(f"junction {i} has degree != 3")
        stack = [verts[0]]
        reached = {verts[0]}
        while stack:
            for w in adj[stack.pop()]:
                if w not in reached:
                    reached.add(w)
                    stack.append(w)
        if len(reached) != len(verts):
            raise ValueError("edge set is not connected")


def enumerate_topologies(k: int) -> list[TopologyTree]:
    """All labelled attachment trees for k marked vertices.

    Built recursively: starting from the single edge {0, inf}, the i-th
    stage splits one existing edge at a new junction and hangs leaf i
    from it.  Every stage multiplies the count by the current edge
    total, giving 1 * 3 * ... * (2k-1) trees; the list gets large fast,
    so k is capped at TOPOLOGY_MAX_MARKS.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > TOPOLOGY_MAX_MARKS:
        raise ValueError(
            f"k={k} exceeds the supported maximum {TOPOLOGY_MAX_MARKS} "
            f"(the count grows as (2k-1)!!)")
    shapes: list[tuple[tuple[Label, Label], ...]] = [(_edge(0, INFINITY_LABEL),)]
    for i in range(1, k + 1):
        ji = junction_label(i)
        grown: list[tuple[tuple[Label, Label], ...]] = []
        for edges in shapes:
            for at, (a, b) in enumerate(edges):
                rest = edges[:at] + edges[at + 1:]
                grown.append(tuple(sorted(
                    rest + (_edge(a, ji), _edge(ji, b), _edge(i, ji)),
                    key=lambda e: (_label_key(e[0]), _label_key(e[1])))))
        shapes = grown
    return [TopologyTree(k, edges) for edges in shapes]


# ---------------------------------------------------------------------------
# tail fitting


@dataclass(frozen=True)
class FitResult:
    """Weighted least-squares fit of a linearized tail model.

    Models, with y the estimated value at abscissa x:
      power      log y = intercept + lead * log x
      exp        log y = intercept - lead * x
      stretched  log y = intercept - lead * x**(-stretch)
    So lead is the log-log slope for the power model and the (positive
    for a decaying tail) rate for the other two.  Only points with
    relative error below 0.5 enter the fit; they are echoed in
    points_used.  residual is the weighted RMS misfit in linearized
    coordinates.
    """

    model: str
    lead: float
    lead_ci95: tuple[float, float]
    intercept: float
    stretch: float | None
    residual: float
    points_used: tuple[tuple[float, Estimate], ...]


# Relative-error floor that stands in for exact inputs so the weighted
# solve stays finite; at this level the fit is numerically unweighted.
_FIT_SIGMA_FLOOR = 1e-12


def fit_tail(points: Iterable[tuple[float, Estimate]], model: str,
             stretch: float | None = None) -> FitResult:
    """Fit a tail curve; see FitResult for the model forms."""
    if model not in ("power", "exp", "stretched"):
        raise ValueError(f"unknown model {model!r}")
    if model == "stretched":
        if stretch is None or not (stretch > 0):
            raise ValueError("stretched model needs a positive stretch exponent")
    elif stretch is not None:
        raise ValueError("stretch exponent only applies to the stretched model")
    usable = [(float(x), e) for x, e in points
              if e.value > 0.0 and e.stderr < 0.5 * e.value]
    if len(usable) < 3:
        raise ValueError(
            f"need at least 3 usable points (value > 0, relative error "
            f"< 0.5), got {len(usable)}")
    xs = np.array([x for x, _ in usable])
    if model in ("power", "stretched") and np.any(xs <= 0):
        raise ValueError(f"{model} model needs positive abscissae")
    if model == "power":
        design = np.log(xs)
    elif model == "exp":
        design = xs
    else:
        design = xs ** (-stretch)
    if np.ptp(design) == 0.0:
        raise ValueError("degenerate fit design: all abscissae coincide")
    y = np.log(np.array([e.value for _, e in usable]))
    sigma = np.maximum(
        np.array([e.stderr / e.value for _, e in usable]), _FIT_SIGMA_FLOOR)
    w = 1.0 / sigma ** 2
    sw = float(w.sum())
    mx = float((w * design).sum() / sw)
    my = float((w * y).sum() / sw)
    sxx = float((w * (design - mx) ** 2).sum())
    slope = float((w * (design - mx) * (y - my)).sum() / sxx)
    intercept = my - slope * mx
    half = _Z95 * math.sqrt(1.0 / sxx)
    resid = y - (intercept + slope * design)
    residual = math.sqrt(float((w * resid ** 2).sum()) / sw)
    if model == "power":
        lead, lo, hi = slope, slope - half, slope + half
    else:
        lead, lo, hi = -slope, -slope - half, -slope + half
    return FitResult(model, lead, (lo, hi), intercept,
                     stretch if model == "stretched" else None,
                     residual, tuple(usable))


# ---------------------------------------------------------------------------
# result records and serialization


@dataclass(frozen=True)
class ResultRow:
    statistic: str
    params: tuple[tuple[str, int | float | str], ...]
    estimate: Estimate


@dataclass(frozen=True)
class ExperimentResult:
    experiment: str
    config: dict
    rows: tuple[ResultRow, ...]
    metadata: dict

    @property
    def master_seed(self) -> int:
        return int(self.config["master_seed"])

    def row(self, statistic: str, **params) -> ResultRow:
        """The unique row with this statistic and parameter values."""
        found = [r for r in self.rows if r.statistic == statistic
                 and all((k, v) in r.params for k, v in params.items())]
        if len(found) != 1:
            raise KeyError(
                f"{len(found)} rows match statistic={statistic!r} {params}")
        return found[0]

    def series(self, statistic: str, key: str) -> list[tuple[float, Estimate]]:
        """(param value, estimate) pairs for one statistic, in row order."""
        out = []
        for r in self.rows:
            if r.statistic != statistic:
                continue
            values = dict(r.params)
            if key not in values:
                raise KeyError(f"row {r.statistic} lacks parameter {key!r}")
            out.append((float(values[key]), r.estimate))
        if not out:
            raise KeyError(f"no rows with statistic {statistic!r}")
        return out


def _row(statistic: str, params: Sequence[tuple[str, int | float | str]],
         est: Estimate) -> ResultRow:
    return ResultRow(statistic, tuple(params), est)


def fit_to_row(statistic: str, params: Sequence[tuple[str, int | float | str]],
               fit: FitResult) -> ResultRow:
    lo, hi = fit.lead_ci95
    est = Estimate(fit.lead, (hi - lo) / (2.0 * _Z95), len(fit.points_used),
                   (lo, hi))
    return ResultRow(statistic, tuple(params) + (("model", fit.model),), est)


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(result: ExperimentResult, destination) -> None:
    """One row per statistic; parameter columns in first-seen order.

    Output is deterministic byte for byte: floats use shortest-roundtrip
    formatting and the line terminator is a bare newline.
    """
    param_cols: list[str] = []
    for r in result.rows:
        for k, _ in r.params:
            if k not in param_cols:
                param_cols.append(k)
    header = (["experiment", "statistic"] + param_cols
              + ["estimate", "stderr", "ci_lo", "ci_hi", "n_samples",
                 "seed", "code_version"])

    def _emit(fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in result.rows:
            values = dict(r.params)
            e = r.estimate
            writer.writerow(
                [result.experiment, r.statistic]
                + [_format_cell(values[c]) if c in values else ""
                   for c in param_cols]
                + [_format_cell(e.value), _format_cell(e.stderr),
                   _format_cell(e.ci95[0]), _format_cell(e.ci95[1]),
                   str(e.n_samples), str(result.master_seed), CODE_VERSION])

    if hasattr(destination, "write"):
        _emit(destination)
    else:
        with open(destination, "w", newline="") as fh:
            _emit(fh)


def write_sidecar(result: ExperimentResult, destination,
                  wall_time_s: float | None = None) -> None:
    """JSON companion to the CSV: full config and run metadata.  The
    wall time is the only field allowed to differ between reruns."""
    payload = {
        "experiment": result.experiment,
        "code_version": CODE_VERSION,
        "config": result.config,
        "metadata": result.metadata,
        "wall_time_s": wall_time_s,
    }
    text = json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as fh:
            fh.write(text)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not JSON serializable: {type(v)}")


# ---------------------------------------------------------------------------
# tallies and replicas

Tally = dict


def merge_tallies(parts: Sequence[Tally]) -> Tally:
    """Pointwise merge: numbers add, lists concatenate.  Merging is
    associative and done in replica order, so results do not depend on
    which worker finished first."""
    out: Tally = {}
    for part in parts:
        for key, val in part.items():
            if key not in out:
                out[key] = list(val) if isinstance(val, list) else val
            elif isinstance(val, list):
                out[key].extend(val)
            else:
                out[key] = out[key] + val
    return out


@dataclass(frozen=True)
class ExperimentDef:
    """Registry entry: how to tally samples and build rows for one
    named experiment, plus CLI-facing parameter defaults."""

    name: str
    tally: Callable[[dict, int, RngStream], Tally]
    build: Callable[[dict, Tally], ExperimentResult]
    defaults: dict


def _run_replica(name: str, cfg: dict, count: int, master_seed: int,
                 replica: int) -> Tally:
    return EXPERIMENTS[name].tally(cfg, count, RngStream(master_seed, replica))


def run_replicated(name: str, cfg: dict, samples: int, master_seed: int,
                   replicas: int = 4, workers: int | None = None) -> ExperimentResult:
    """Split samples over replica streams, merge their tallies in index
    order, and build the result.

    Replica i runs on stream_id=i, so a run is reproducible from
    (master_seed, parameters, replicas) alone; `workers` only sets how
    many processes execute the replicas and never affects the output.
    """
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}")
    if replicas < 1:
        raise ValueError("need at least one replica")
    if samples < 0:
        raise ValueError("samples must be nonnegative")
    counts = [samples // replicas + (1 if i < samples % replicas else 0)
              for i in range(replicas)]
    if workers is None:
        workers = min(replicas, os.cpu_count() or 1)
    if workers <= 1 or replicas == 1:
        parts = [_run_replica(name, cfg, counts[i], master_seed, i)
                 for i in range(replicas)]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, replicas)) as pool:
            futures = [pool.submit(_run_replica, name, cfg, counts[i],
                                   master_seed, i)
                       for i in range(replicas)]
            parts = [f.result() for f in futures]
    full_cfg = dict(cfg)
    full_cfg.update(samples=samples, master_seed=master_seed, replicas=replicas)
    return EXPERIMENTS[name].build(full_cfg, merge_tallies(parts))


def _single_stream_result(name: str, cfg: dict, samples: int,
                          rng: RngStream) -> ExperimentResult:
    tally = EXPERIMENTS[name].tally(cfg, samples, rng)
    full_cfg = dict(cfg)
    full_cfg.update(samples=samples, master_seed=rng.master_seed,
                    replicas=1, stream_id=rng.stream_id)
    return EXPERIMENTS[name].build(full_cfg, tally)


def _origin(d: int) -> Point:
    return (0,) * d


# ---------------------------------------------------------------------------
# endpoint separation of two independent walks


def _pair_separation(v1: np.ndarray, v2: np.ndarray,
                     swap: bool) -> tuple[bool, float]:
    """Disjointness past the shared start, and the larger of the two
    endpoint-to-path distances.  One endpoint is compared against the
    other walk from step 1 on, the other against the full walk
    including the start; swap exchanges which walk gets which role."""
    body1 = set(map(tuple, v1[1:].tolist()))
    body2 = set(map(tuple, v2[1:].tolist()))
    if not body1.isdisjoint(body2):
        return False, 0.0

    def _min_dist(point: np.ndarray, arr: np.ndarray) -> float:
        delta = arr - point
        return math.sqrt(float((delta * delta).sum(axis=1).min()))

    if swap:
        za = _min_dist(v2[-1], v1[1:])
        zb = _min_dist(v1[-1], v2)
    else:
        za = _min_dist(v1[-1], v2[1:])
        zb = _min_dist(v2[-1], v1)
    return True, max(za, zb)


def _separation_tally(cfg: dict, samples: int, rng: RngStream) -> Tally:
    d, n = cfg["d"], cfg["n"]
    swap = cfg["swap_roles"]
    threshold = n / 2.0
    out: Tally = {"pairs": 0, "disjoint": 0, "separated": 0, "z": []}
    win = _engine.window_for([origin_box(d, n + 1)])
    rows = 1 << 13
    buf1 = np.empty((rows, d), np.int64)
    buf2 = np.empty((rows, d), np.int64)
    msize = _engine._pow2_at_least(4 * rows)
    skeys = np.full(msize, _kernels.EMPTY, np.int64)
    svals = np.empty(msize, np.int64)
    sused = np.zeros(1, np.int64)
    key = np.uint64(rng.key)
    for _ in range(samples):
        pos0 = rng.position
        while True:
            disjoint, z, pos = _kernels.separation_kernel(
                np.int64(n), win.poff, win.pbits, key, pos0,
                buf1, buf2, skeys, svals, sused)
            if disjoint >= 0:
                break
            rows *= 4
            buf1 = np.empty((rows, d), np.int64)
            buf2 = np.empty((rows, d), np.int64)
            msize = _engine._pow2_at_least(4 * rows)
            skeys = np.full(msize, _kernels.EMPTY, np.int64)
            svals = np.empty(msize, np.int64)
            sused = np.zeros(1, np.int64)
        rng.position = int(pos)
        if swap and disjoint:
            # the kernel measured one role assignment; rebuild the
            # swapped statistic from the recorded trajectories (the
            # walk ends at its first vertex past box radius n, which
            # bounds its row count in the reused buffer)
            n1 = 1 + int(np.argmax(np.abs(buf1).max(axis=1) > n))
            n2 = 1 + int(np.argmax(np.abs(buf2).max(axis=1) > n))
            ok, z_val = _pair_separation(buf1[:n1], buf2[:n2], swap=True)
            if not ok:
                raise RuntimeError(
                    "kernel and replay disagree on pair disjointness")
        else:
            ok, z_val = bool(disjoint), float(z)
        out["pairs"] += 1
        if ok:
            out["disjoint"] += 1
            out["z"].append(z_val)
            if z_val >= threshold:
                out["separated"] += 1
        if out["pairs"] >= 4096 and out["disjoint"] < 1e-3 * out["pairs"]:
            raise RuntimeError(
                f"separation conditioning acceptance rate "
                f"{out['disjoint'] / out['pairs']:.2e} fell below 1e-3 after "
                f"{out['pairs']} pairs at d={d}, n={n}; walks in d >= 5 "
                f"should rarely intersect, so this signals a sampler defect")
    return out


def _separation_build(cfg: dict, t: Tally) -> ExperimentResult:
    d, n = cfg["d"], cfg["n"]
    pb = (("d", d), ("n", n))
    pairs, disjoint = int(t["pairs"]), int(t["disjoint"])
    rows = []
    if pairs > 0:
        rows.append(_row("disjoint_freq", pb, frequency_estimate(disjoint, pairs)))
    if disjoint > 0:
        rows.append(_row("separated_given_disjoint", pb,
                         frequency_estimate(int(t["separated"]), disjoint)))
        rows.append(_row("separation_mean", pb, mean_estimate(t["z"])))
        rows.append(_row("separation_median", pb, quantile_estimate(t["z"], 0.5)))
    meta = {"acceptance_rates":
            {"disjoint": disjoint / pairs if pairs else None}}
    return ExperimentResult("separation", cfg, tuple(rows), meta)


def exp_separation(n: int, samples: int, rng: RngStream, *, d: int = 5,
                   swap_roles: bool = False) -> ExperimentResult:
    """Frequency with which two independent walks, run to their exits
    of the box of radius n and conditioned (by rejection) to be
    disjoint after the shared start, end at least n/2 apart.

    The distance statistic takes each exit point's Euclidean distance
    to the other walk and keeps the larger; swap_roles exchanges which
    walk is measured against which, an exact symmetry of the law used
    as a consistency check.  Aborts if the disjointness rate falls
    below 1e-3, which cannot happen for healthy walks in d >= 5.
    """
    if d < 5:
        raise ValueError("separation statistics need d >= 5")
    if n < 8:
        raise ValueError("n must be at least 8")
    cfg = {"d": d, "n": n, "swap_roles": bool(swap_roles)}
    return _single_stream_result("separation", cfg, samples, rng)


# ---------------------------------------------------------------------------
# length of the erased walk to the inner box boundary


def _lerw_length_tally(cfg: dict, samples: int, rng: RngStream) -> Tally:
    d, N = cfg["d"], cfg["N"]
    dom = Domain.from_box(origin_box(d, 4 * N))
    lengths: list[int] = []
    for path in sample_lerw_many(_origin(d), dom, rng, samples):
        profile = np.abs(path.verts).max(axis=1)
        lengths.append(int(np.argmax(profile >= N)))
    return {"n": samples, "length": lengths}


def _lerw_length_build(cfg: dict, t: Tally) -> ExperimentResult:
    d, N = cfg["d"], cfg["N"]
    pb = (("d", d), ("N", N))
    arr = np.asarray(t["length"], dtype=np.float64)
    rows = []
    if arr.size:
        scale = 1.0 / N ** 2
        rows.append(_row("mean_length", pb, mean_estimate(arr)))
        rows.append(_row("mean_length_over_n2", pb,
                         mean_estimate(arr).scaled(scale)))
        rows.append(_row("length_median", pb, quantile_estimate(arr, 0.5)))
        rows.append(_row("second_moment", pb, mean_estimate(arr ** 2)))
        n = arr.size
        for lam in cfg["lambda_grid"]:
            cut = lam * N ** 2
            rows.append(_row("length_lower_tail", pb + (("lam", lam),),
                             frequency_estimate(int((arr < cut).sum()), n)))
            rows.append(_row("length_upper_tail", pb + (("lam", lam),),
                             frequency_estimate(int((arr >= cut).sum()), n)))
    return ExperimentResult("lerw-length", cfg, tuple(rows),
                            {"acceptance_rates": {}})


def exp_lerw_length(N: int, lambda_grid: Sequence[float], samples: int,
                    rng: RngStream, *, d: int = 5) -> ExperimentResult:
    """Steps taken by the loop-erased walk from the origin (run to its
    exit of the box of radius 4N) before it first reaches box radius N:
    mean, second moment, and both tail curves P(len < lam*N^2) and
    P(len >= lam*N^2) over the lambda grid.
    """
    if d < 5:
        raise ValueError("length scaling statistics need d >= 5")
    if N < 1:
        raise ValueError("N must be positive")
    lams = [float(x) for x in lambda_grid]
    if any(x <= 0 for x in lams):
        raise ValueError("lambda grid values must be positive")
    cfg = {"d": d, "N": N, "lambda_grid": lams}
    return _single_stream_result("lerw-length", cfg, samples, rng)


# ---------------------------------------------------------------------------
# two-point connection


def _two_point_tally(cfg: dict, samples: int, rng: RngStream) -> Tally:
    d, N = cfg["d"], cfg["N"]
    r_grid = cfg["r_grid"]
    out: Tally = {}
    graph = None
    for ridx, r in enumerate(r_grid):
        if r == 0:
            hits = samples
        else:
            if graph is None:
                graph = WiredGraph(Domain.from_box(origin_box(d, 4 * N)))
            y = _shift(_origin(d), 0, r)
            sampler = WilsonSampler(graph, [_origin(d), y])
            hits = 0
            for i in range(samples):
                forest = sampler.sample(rng.substream(i * len(r_grid) + ridx))
                if math.isfinite(tree_distance(forest, _origin(d), y)):
                    hits += 1
        out[f"hit[{r}]"] = hits
        out[f"n[{r}]"] = samples
    return out


def _two_point_build(cfg: dict, t: Tally) -> ExperimentResult:
    d, N = cfg["d"], cfg["N"]
    pb = (("d", d), ("N", N))
    rows = []
    points = []
    for r in cfg["r_grid"]:
        if int(t[f"n[{r}]"]) == 0:
            continue
        est = frequency_estimate(int(t[f"hit[{r}]"]), int(t[f"n[{r}]"]))
        rows.append(_row("connect_prob", pb + (("r", r),), est))
        if r > 0:
            points.append((float(r), est))
            rows.append(_row("connect_scaled", pb + (("r", r),),
                             est.scaled(float(r) ** (d - 4))))
    meta: dict = {"acceptance_rates": {}}
    try:
        fit = fit_tail(points, "power")
        rows.append(fit_to_row("fit_power", pb, fit))
        meta["fit"] = {"model": "power", "lead": fit.lead,
                       "lead_ci95": list(fit.lead_ci95),
                       "residual": fit.residual}
    except ValueError as err:
        meta["fit"] = {"skipped": str(err)}
    return ExperimentResult("two-point", cfg, tuple(rows), meta)


def exp_two_point(r_grid: Sequence[int], N: int, samples: int,
                  rng: RngStream, *, d: int = 5) -> ExperimentResult:
    """Probability that the origin and r*e1 land in the same tree
    component of the wired forest on the box of radius 4N, estimated by
    partial runs from just those two vertices, with a log-log power fit
    over the positive radii.
    """
    if d < 5:
        raise ValueError("two-point decay statistics need d >= 5")
    if N < 1:
        raise ValueError("N must be positive")
    grid = [int(r) for r in r_grid]
    if any(r < 0 for r in grid):
        raise ValueError("radii must be nonnegative")
    if grid and 2 * max(grid) > N:
        raise ValueError(
            f"largest radius {max(grid)} exceeds N/2 = {N / 2:g}; connection "
            f"probabilities this close to the wired boundary are distorted")
    cfg = {"d": d, "N": N, "r_grid": grid}
    return _single_stream_result("two-point", cfg, samples, rng)


# ---------------------------------------------------------------------------
# hit the target with a short erased walk


def _path_pair_tally(cfg: dict, samples: int, rng: RngStream) -> Tally:
    d = cfg["d"]
    x = tuple(cfg["x"])
    R = cfg["escape_radius"]
    esc = Domain.from_box(origin_box(d, R))
    dlo, dhi = _engine.domain_arrays(esc)
    win = _engine.window_for(esc.boxes)
    target = np.int64(win.pack(x))
    start = np.array(_origin(d), dtype=np.int64)
    key = np.uint64(rng.key)
    cap = 4096
    mcap = _engine._pow2_at_least(4 * cap)
    lengths: list[int] = []
    for _ in range(samples):
        pos0 = rng.position
        while True:
            pc, ln, status, hit, pos, _steps = _kernels.lerw_kernel(
                start, dlo, dhi, win.poff, win.pbits, key, pos0,
                target, 1, dlo, dhi, cap, mcap)
            if status == _kernels.OK:
                break
            cap *= 4
            mcap *= 4
        rng.position = int(pos)
        if hit:
            lengths.append(int(ln) - 1)
    return {"n": samples, "hit_length": lengths}


def _path_pair_build(cfg: dict, t: Tally) -> ExperimentResult:
    d = cfg["d"]
    x = tuple(cfg["x"])
    xs = ",".join(str(c) for c in x)
    pb = (("d", d), ("x", xs))
    n = int(t["n"])
    arr = np.asarray(t["hit_length"], dtype=np.int64)
    rows = []
    if n > 0:
        hit = frequency_estimate(int(arr.size), n)
        rows.append(_row("hit_prob", pb, hit))
        norm = math.sqrt(sum(c * c for c in x))
        rows.append(_row("hit_prob_scaled", pb,
                         hit.scaled((1.0 + norm) ** (d - 2))))
        g0 = harmonic.green_free(_origin(d))
        gx = harmonic.green_free(x)
        rows.append(_row("hit_prob_vs_green", pb, hit.scaled(g0 / gx)))
        for nval in cfg["n_grid"]:
            rows.append(_row("pair_prob", pb + (("n", nval),),
                             frequency_estimate(int((arr <= nval).sum()), n)))
    meta = {
        "acceptance_rates": {},
        "truncation": {
            "escape_radius": cfg["escape_radius"],
            # a walk at the escape radius still hits the target with
            # probability on the order of (|x|/R)^(d-2) relative to the
            # estimate, which is the bias of treating escape as a miss
            "hit_prob_rel_bias_bound":
                ((1.0 + math.sqrt(sum(c * c for c in x)))
                 / cfg["escape_radius"]) ** (d - 2),
        },
    }
    return ExperimentResult("path-pair", cfg, tuple(rows), meta)


def exp_path_length_pair(x: Point, n_grid: Sequence[int], samples: int,
                         rng: RngStream,
                         escape_radius: int | None = None) -> ExperimentResult:
    """Probability that a walk from the origin reaches x and that its
    loop erasure up to the first visit of x has at most n steps, for
    each n in the grid.

    Walks that leave the escape box before reaching x count as misses;
    the relative bias bound for that truncation lands in the metadata.
    The no-length-constraint limit (n past every observed length) is
    the plain hitting probability, whose row is emitted alongside both
    a (1+|x|)^(d-2) scaling of it and its ratio against the free Green
    function prediction.
    """
    x = tuple(int(c) for c in x)
    d = len(x)
    if d < 5:
        raise ValueError("pair statistics need d >= 5")
    if escape_radius is None:
        escape_radius = max(64, 8 * linf(x))
    if escape_radius < max(8, 4 * linf(x)):
        raise ValueError(
            f"escape radius {escape_radius} is too tight around the target "
            f"(need at least max(8, 4*|x|) = {max(8, 4 * linf(x))}); the "
            f"truncation bias would not be negligible")
    grid = [int(v) for v in n_grid]
    if any(v < 0 for v in grid):
        raise ValueError("length bounds must be nonnegative")
    cfg = {"d": d, "x": list(x), "n_grid": grid,
           "escape_radius": int(escape_radius)}
    return _single_stream_result("path-pair", cfg, samples, rng)


# ---------------------------------------------------------------------------
# intrinsic ball volume


def _ball_tally(cfg: dict, samples: int, rng: RngStream) -> Tally:
    d = cfg["d"]
    n_grid = cfg["n_grid"]
    out: Tally = {}
    for idx, n in enumerate(n_grid):
        dom = Domain.from_box(origin_box(d, max(1, 4 * n)))
        sizes: list[int] = []
        envelopes: list[int] = []
        for i in range(samples):
            ball = intrinsic_ball(dom, n, rng.substream(i * len(n_grid) + idx))
            sizes.append(len(ball))
            # recomputed from the raw members, not trusted from the
            # constructor's own validation
            envelopes.append(max(max(abs(c) for c in p)
                                 for p in ball.members))
        out[f"size[{n}]"] = sizes
        out[f"envelope[{n}]"] = envelopes
    return out


def _ball_build(cfg: dict, t: Tally) -> ExperimentResult:
    d = cfg["d"]
    rows = []
    for n in cfg["n_grid"]:
        pb = (("d", d), ("n", n))
        arr = np.asarray(t[f"size[{n}]"], dtype=np.float64)
        if not arr.size:
            continue
        rows.append(_row("ball_mean", pb, mean_estimate(arr)))
        rows.append(_row("ball_second_moment", pb, mean_estimate(arr ** 2)))
        if n >= 1:
            rows.append(_row("ball_mean_over_n2", pb,
                             mean_estimate(arr).scaled(1.0 / n ** 2)))
            rows.append(_row("ball_second_over_2n4", pb,
                             mean_estimate(arr ** 2).scaled(0.5 / n ** 4)))
            count = arr.size
            env = np.asarray(t[f"envelope[{n}]"], dtype=np.int64)
            rows.append(_row("ball_envelope_viol", pb,
                             frequency_estimate(int((env > n).sum()), count)))
            for lam in cfg["lambda_grid"]:
                cut = lam * n ** 2
                rows.append(_row("ball_upper_tail", pb + (("lam", lam),),
                                 frequency_estimate(int((arr >= cut).sum()), count)))
                rows.append(_row("ball_lower_tail", pb + (("lam", lam),),
                                 frequency_estimate(int((arr <= cut).sum()), count)))
    return ExperimentResult("ball", cfg, tuple(rows),
                            {"acceptance_rates": {}})


def exp_ball(n_grid: Sequence[int], lambda_grid: Sequence[float], samples: int,
             rng: RngStream, *, d: int = 5,
             allow_large: bool = False) -> ExperimentResult:
    """Moments and both tails of the number of vertices within tree
    distance n of the origin, from exact lazily revealed balls in the
    wired forest on the box of radius 4n.

    Radii above BALL_RADIUS_SOFT_CAP need allow_large=True; a memory
    estimate is printed before such a run starts.
    """
    if d < 5:
        raise ValueError("ball volume statistics need d >= 5")
    grid = [int(n) for n in n_grid]
    if any(n < 0 for n in grid):
        raise ValueError("radii must be nonnegative")
    lams = [float(x) for x in lambda_grid]
    if any(x <= 0 for x in lams):
        raise ValueError("lambda grid values must be positive")
    big = [n for n in grid if n > BALL_RADIUS_SOFT_CAP]
    if big:
        if not allow_large:
            raise ValueError(
                f"radii {big} exceed the soft cap {BALL_RADIUS_SOFT_CAP}; "
                f"pass allow_large=True to accept the memory cost")
        worst = max(big)
        print(f"ball radius {worst}: domain has {(8 * worst + 1) ** d:.3e} "
              f"sites; expect several GiB of forest map at full reveal",
              file=sys.stderr)
    cfg = {"d": d, "n_grid": grid, "lambda_grid": lams}
    return _single_stream_result("ball", cfg, samples, rng)


# ---------------------------------------------------------------------------
# component volume inside a box


def _box_volume_tally(cfg: dict, samples: int, rng: RngStream) -> Tally:
    d, N = cfg["d"], cfg["N"]
    dom = Domain.from_box(origin_box(d, 4 * N))
    target = origin_box(d, N)
    sampler = WilsonSampler(WiredGraph(dom),
                            [_origin(d)] + list(target.points()),
                            count_box=target)
    volumes = [sampler.sample_volume(rng.substream(i)) for i in range(samples)]
    return {"n": samples, "volume": volumes}


_VOLUME_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


def _box_volume_build(cfg: dict, t: Tally) -> ExperimentResult:
    d, N = cfg["d"], cfg["N"]
    pb = (("d", d), ("N", N))
    arr = np.asarray(t["volume"], dtype=np.float64)
    rows = []
    if arr.size:
        if arr.min() < 1:
            raise RuntimeError(
                "a component volume below 1 means the origin fell out of "
                "its own component; labeling defect")
        scale = 1.0 / N ** 4
        rows.append(_row("volume_mean", pb, mean_estimate(arr)))
        rows.append(_row("volume_median", pb, quantile_estimate(arr, 0.5)))
        rows.append(_row("volume_median_over_n4", pb,
                         quantile_estimate(arr, 0.5).scaled(scale)))
        for q in _VOLUME_QUANTILES:
            rows.append(_row("volume_quantile", pb + (("q", q),),
                             quantile_estimate(arr, q)))
        n = arr.size
        for lam in cfg["lambda_grid"]:
            rows.append(_row("volume_lower_tail", pb + (("lam", lam),),
                             frequency_estimate(
                                 int((arr <= lam * N ** 4).sum()), n)))
    return ExperimentResult("box-volume", cfg, tuple(rows),
                            {"acceptance_rates": {}})


def exp_box_volume(N: int, lambda_grid: Sequence[float], samples: int,
                   rng: RngStream, *, d: int = 5) -> ExperimentResult:
    """Number of vertices of the box of radius N lying in the origin's
    tree component of the wired forest on the box of radius 4N: summary
    quantiles and the lower tail P(volume <= lam*N^4).
    """
    if d < 5:
        raise ValueError("component volume statistics need d >= 5")
    if N < 1:
        raise ValueError("N must be positive")
    lams = [float(x) for x in lambda_grid]
    if any(x <= 0 for x in lams):
        raise ValueError("lambda grid values must be positive")
    cfg = {"d": d, "N": N, "lambda_grid": lams}
    return _single_stream_result("box-volume", cfg, samples, rng)


# ---------------------------------------------------------------------------
# shell statistics along the erased walk


def _segment_to_shell(verts: np.ndarray, start_idx: int, m: int) -> np.ndarray:
    """The path piece from start_idx to its first vertex at box
    distance m from where it started."""
    anchor = verts[start_idx]
    rel = np.abs(verts[start_idx:] - anchor).max(axis=1)
    stop = int(np.argmax(rel >= m))
    return verts[start_idx:start_idx + stop + 1]


def _hit_probability_far(sites: Sequence[Point], x: Point) -> float:
    """P(free walk from x ever visits `sites`), by the last-exit
    decomposition: sum over the set of the free Green function from x
    against the equilibrium weights.  Exact up to Green evaluation
    tolerance; no escape truncation."""
    if not sites:
        return 0.0
    if tuple(x) in set(map(tuple, sites)):
        return 1.0
    weights = harmonic.equilibrium_measure(sites)
    acc = sum(harmonic.green_free(tuple(a - b for a, b in zip(x, z))) * w
              for z, w in weights.items())
    return min(1.0, acc)


def _hit_fraction(start: Point, sites: list[Point], escape_radius: int,
                  count: int, rng: RngStream) -> float:
    """Fraction of `count` walks from `start` that reach `sites` before
    leaving the escape box around the sites' bounding center."""
    if not sites:
        return 0.0
    d = len(start)
    los = [min(p[i] for p in sites) for i in range(d)]
    his = [max(p[i] for p in sites) for i in range(d)]
    center = tuple((lo + hi) // 2 for lo, hi in zip(los, his))
    esc = Domain.from_box(box(center, escape_radius))
    dlo, dhi = _engine.domain_arrays(esc)
    win = _engine.window_for(esc.boxes, extra=[start])
    hmap = _engine.Int64Map.from_keys(win.pack(p) for p in sites)
    start_arr = np.array(start, dtype=np.int64)
    key = np.uint64(rng.key)
    hits = 0
    for _ in range(count):
        _buf, _n, cause, pos, _steps = _kernels.walk_kernel(
            start_arr, dlo, dhi, hmap.keys, hmap.vals, 1, -1,
            win.poff, win.pbits, key, rng.position, 0, 2)
        rng.position = int(pos)
        if cause == _kernels.CAUSE_HIT:
            hits += 1
    return hits / count


def _shell_tally(cfg: dict, samples: int, rng: RngStream) -> Tally:
    geom = ShellGeometry(cfg["d"], cfg["n"], cfg["m"], cfg["N"],
                         override_regime=cfg["override_regime"])
    d, n, m = geom.d, geom.n, geom.m
    dom = Domain.from_box(origin_box(d, 4 * geom.N))
    k = geom.ring_count()
    nested = cfg["nested"]
    hit_floor = cfg["good_hit_floor"]
    size_cap = cfg["good_size_cap"]
    judge = hit_floor is not None and size_cap is not None
    min_fraction = cfg["good_min_fraction"]
    # the compound event asks for at least this many good rings
    need = max(1, math.ceil(min_fraction * k - 1e-9)) if k else 0
    cap_escape = cfg["cap_escape_factor"] * m
    probe_escape = cfg["probe_escape_factor"] * m
    quarter = m // 4
    out: Tally = {
        "n": samples, "hits": [], "center_hit": 0, "cap": [],
        "probe_phat": [], "probe_within_var": [], "probe_exact": [],
        "ring_phat": [], "ring_size": [], "ring_n": 0,
        "good_fraction": [], "g_event": 0,
    }
    for j in range(1, k + 1):
        out[f"good[{j}]"] = 0
    for _ in range(samples):
        verts = sample_lerw(_origin(d), dom, rng).verts
        profile = np.abs(verts).max(axis=1)

        t0 = int(np.argmax(profile >= n))
        frame = geom.frame_at(tuple(int(c) for c in verts[t0]))
        beta = _segment_to_shell(verts, t0, m)
        center = np.array(frame.center, dtype=np.int64)
        in_forward = np.abs(beta - center).max(axis=1) <= quarter
        out["hits"].append(int(in_forward.sum()))
        if bool((beta == center).all(axis=1).any()):
            out["center_hit"] += 1
        sites = [tuple(int(c) for c in row) for row in beta[in_forward]]
        if sites:
            cap = harmonic.capacity(sites, "mc", escape_radius=cap_escape,
                                    rng=rng, samples=cfg["cap_mc_samples"])
            out["cap"].append(float(cap.value))
        else:
            # an empty crossing still counts: capacity of nothing is 0
            out["cap"].append(0.0)
        phat = _hit_fraction(frame.probe_point, sites, probe_escape,
                             nested, rng)
        out["probe_phat"].append(phat)
        out["probe_within_var"].append(phat * (1.0 - phat) / nested)
        out["probe_exact"].append(_hit_probability_far(sites, frame.probe_point))

        if k:
            good_count = 0
            for j in range(1, k + 1):
                tj = int(np.argmax(profile >= j * m))
                frame_j = geom.frame_at(tuple(int(c) for c in verts[tj]),
                                        radius=j * m)
                beta_j = _segment_to_shell(verts, tj, m)
                size_j = int(beta_j.shape[0])
                center_j = np.array(frame_j.center, dtype=np.int64)
                mask_j = np.abs(beta_j - center_j).max(axis=1) <= quarter
                sites_j = [tuple(int(c) for c in row) for row in beta_j[mask_j]]
                p_j = _hit_probability_far(sites_j, frame_j.probe_point)
                out["ring_phat"].append(p_j)
                out["ring_size"].append(size_j)
                if judge:
                    good = (p_j >= hit_floor * m ** (4 - d)
                            and size_j <= size_cap * m * m)
                    out[f"good[{j}]"] += int(good)
                    good_count += int(good)
            out["ring_n"] += 1
            if judge:
                out["good_fraction"].append(good_count / k)
                out["g_event"] += int(good_count >= need)
    return out


_SHELL_HIT_QUANTILES = (0.25, 0.5, 0.75)
_RING_HIT_QUANTILES = (0.1, 0.25, 0.5)
_RING_SIZE_QUANTILES = (0.5, 0.9, 0.95)


def _shell_build(cfg: dict, t: Tally) -> ExperimentResult:
    d, n, m, N = cfg["d"], cfg["n"], cfg["m"], cfg["N"]
    pb = (("d", d), ("n", n), ("m", m), ("N", N))
    m2 = float(m * m)
    rows = []
    hits = np.asarray(t["hits"], dtype=np.float64)
    count = hits.size
    if count:
        rows.append(_row("hits_mean", pb, mean_estimate(hits)))
        rows.append(_row("hits_mean_over_m2", pb,
                         mean_estimate(hits).scaled(1.0 / m2)))
        rows.append(_row("hits_second_moment", pb, mean_estimate(hits ** 2)))
        rows.append(_row("hits_second_over_m4", pb,
                         mean_estimate(hits ** 2).scaled(1.0 / m2 ** 2)))
        for q in _SHELL_HIT_QUANTILES:
            rows.append(_row("hits_quantile", pb + (("q", q),),
                             quantile_estimate(hits, q)))
        for theta in cfg["theta_grid"]:
            rows.append(_row("hits_threshold_freq", pb + (("theta", theta),),
                             frequency_estimate(
                                 int((hits >= theta * m2).sum()), count)))
        center = frequency_estimate(int(t["center_hit"]), count)
        rows.append(_row("center_hit_freq", pb, center))
        rows.append(_row("center_hit_scaled", pb,
                         center.scaled(float(m) ** (d - 2))))
        caps = np.asarray(t["cap"], dtype=np.float64)
        rows.append(_row("capacity_mean", pb, mean_estimate(caps)))
        rows.append(_row("capacity_mean_over_m2", pb,
                         mean_estimate(caps).scaled(1.0 / m2)))
        rows.append(_row("capacity_median_over_m2", pb,
                         quantile_estimate(caps, 0.5).scaled(1.0 / m2)))
        phat = np.asarray(t["probe_phat"], dtype=np.float64)
        probe = mean_estimate(phat)
        rows.append(_row("probe_hit_mean", pb, probe))
        rows.append(_row("probe_hit_scaled", pb,
                         probe.scaled(float(m) ** (d - 4))))
        exact = mean_estimate(np.asarray(t["probe_exact"], dtype=np.float64))
        rows.append(_row("probe_hit_exact_mean", pb, exact))
        rows.append(_row("probe_hit_exact_scaled", pb,
                         exact.scaled(float(m) ** (d - 4))))
    ring_n = int(t["ring_n"])
    k = ShellGeometry(d, n, m, N, override_regime=True).ring_count()
    if ring_n:
        ring_phat = np.asarray(t["ring_phat"], dtype=np.float64)
        ring_size = np.asarray(t["ring_size"], dtype=np.float64)
        for q in _RING_HIT_QUANTILES:
            rows.append(_row("ring_hit_quantile", pb + (("q", q),),
                             quantile_estimate(ring_phat, q)))
        for q in _RING_SIZE_QUANTILES:
            rows.append(_row("ring_size_quantile", pb + (("q", q),),
                             quantile_estimate(ring_size, q)))
        if t["good_fraction"]:
            for j in range(1, k + 1):
                rows.append(_row("good_ring_freq", pb + (("j", j),),
                                 frequency_estimate(int(t[f"good[{j}]"]),
                                                    ring_n)))
            # stderr comes from the spread of per-sample fractions, so
            # dependence between rings of one walk is already priced in
            rows.append(_row("good_fraction_mean", pb,
                             mean_estimate(t["good_fraction"])))
            rows.append(_row("g_event_freq", pb,
                             frequency_estimate(int(t["g_event"]), ring_n)))
    meta: dict = {
        "ring_count": k,
        "nested": cfg["nested"],
        "good_constants": {"hit_floor": cfg["good_hit_floor"],
                           "size_cap": cfg["good_size_cap"],
                           "min_fraction": cfg["good_min_fraction"]},
        "truncation": {
            "capacity_escape_radius": cfg["cap_escape_factor"] * m,
            "probe_escape_radius": cfg["probe_escape_factor"] * m,
            "capacity_mc_samples": cfg["cap_mc_samples"],
        },
        "acceptance_rates": {},
    }
    if count:
        phat = np.asarray(t["probe_phat"], dtype=np.float64)
        within = float(np.mean(t["probe_within_var"]))
        total = float(phat.var(ddof=1)) if count > 1 else 0.0
        meta["probe_variance"] = {
            "total": total,
            "within_mean": within,
            "between": max(0.0, total - within),
        }
    return ExperimentResult("shell", cfg, tuple(rows), meta)


_THETA_GRID_DEFAULT = (0.05, 0.1, 0.2, 0.4, 0.8)


def exp_shell(geom: ShellGeometry, samples: int, nested: int, rng: RngStream,
              *, theta_grid: Sequence[float] = _THETA_GRID_DEFAULT,
              good_hit_floor: float | None = None,
              good_size_cap: float | None = None,
              good_min_fraction: float = 0.125,
              cap_mc_samples: int = 32,
              cap_escape_factor: int = 4,
              probe_escape_factor: int = 8) -> ExperimentResult:
    """Statistics of the erased walk's crossing of a width-m shell.

    Per sample, one loop-erased walk from the origin (to its exit of
    the box of radius 4N) is split where it first reaches box radius n;
    the crossing piece runs to box distance m from that entry.  Rows
    report how often and how heavily the crossing loads the forward
    box: hit counts against m^2, threshold frequencies over theta_grid,
    the frequency of passing exactly through the box center against
    m^(2-d), Monte Carlo capacity of the hit set against m^2, and the
    chance that a fresh walk from the probe point reaches the hit set,
    against m^(4-d).  That probe probability is measured two ways per
    sample: `nested` inner walks truncated at the probe escape radius,
    and the exact free-walk value from the equilibrium measure of the
    hit set.  The pair is a cross-check; the exact route also resolves
    probabilities far below 1/nested.

    The same walk is reused for a ring sweep at radii m, 2m, ..., km
    (largest k with k*m < N-m and k*m >= N/2).  Ring probe
    probabilities use only the exact route, since typical values are
    out of reach of a per-ring walk budget.  Ring rows feed pilot
    calibration through hit and size quantiles; when good_hit_floor and
    good_size_cap are set, a ring counts as good if its probe
    probability reaches good_hit_floor*m^(4-d) while its crossing stays
    within good_size_cap*m^2 vertices, and per-ring plus per-walk
    fraction rows are emitted.  Fraction stderr uses per-walk
    variation, not ring counts, since rings of one walk are dependent.
    The compound event (at least good_min_fraction of the k rings are
    good, always at least one) gets its own frequency row: a typical
    ring misses the forward box entirely, so demanding a majority of
    good rings would be structurally unreachable while a positive
    fraction is the meaningful statement.
    """
    if geom.d < 5:
        raise ValueError("shell statistics need d >= 5")
    if nested < 1:
        raise ValueError("nested walk count must be positive")
    if not (0.0 < good_min_fraction <= 1.0):
        raise ValueError("good_min_fraction must lie in (0, 1]")
    cfg = {
        "d": geom.d, "n": geom.n, "m": geom.m, "N": geom.N,
        "override_regime": geom.override_regime,
        "nested": int(nested),
        "theta_grid": [float(x) for x in theta_grid],
        "good_hit_floor": good_hit_floor,
        "good_size_cap": good_size_cap,
        "good_min_fraction": float(good_min_fraction),
        "cap_mc_samples": int(cap_mc_samples),
        "cap_escape_factor": int(cap_escape_factor),
        "probe_escape_factor": int(probe_escape_factor),
    }
    return _single_stream_result("shell", cfg, samples, rng)


# ---------------------------------------------------------------------------
# registry


EXPERIMENTS: dict[str, ExperimentDef] = {
    "separation": ExperimentDef(
        "separation", _separation_tally, _separation_build,
        {"d": 5, "n": 8, "swap_roles": False, "samples": 20000}),
    "lerw-length": ExperimentDef(
        "lerw-length", _lerw_length_tally, _lerw_length_build,
        {"d": 5, "N": 8,
         "lambda_grid": [0.05, 0.1, 0.2, 0.4, 1.0, 2.0, 4.0, 6.0],
         "samples": 10000}),
    "two-point": ExperimentDef(
        "two-point", _two_point_tally, _two_point_build,
        {"d": 5, "N": 16, "r_grid": [2, 4, 8], "samples": 20000}),
    "path-pair": ExperimentDef(
        "path-pair", _path_pair_tally, _path_pair_build,
        {"d": 5, "x": [3, 0, 0, 0, 0],
         "n_grid": [2, 4, 8, 16, 32, 64, 128, 256],
         "escape_radius": 64, "samples": 100000}),
    "ball": ExperimentDef(
        "ball", _ball_tally, _ball_build,
        {"d": 5, "n_grid": [4, 8, 16],
         "lambda_grid": [0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0],
         "samples": 500}),
    "box-volume": ExperimentDef(
        "box-volume", _box_volume_tally, _box_volume_build,
        {"d": 5, "N": 6, "lambda_grid": [0.02, 0.05, 0.1, 0.2, 0.5],
         "samples": 2000}),
    "shell": ExperimentDef(
        "shell", _shell_tally, _shell_build,
        {"d": 5, "n": 32, "m": 4, "N": 40, "override_regime": False,
         "nested": 512, "theta_grid": list(_THETA_GRID_DEFAULT),
         "good_hit_floor": None, "good_size_cap": None,
         "good_min_fraction": 0.125, "cap_mc_samples": 32,
         "cap_escape_factor": 4, "probe_escape_factor": 8,
         "samples": 10000}),
}
