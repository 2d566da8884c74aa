"""Exact ground truth on tiny instances.

Spanning-tree enumeration with exact integer determinants, the exact
law of the loop-erased walk via the Green-function product formula,
the same law for walks conditioned to avoid their own first steps, and
the domain-Markov check that holds the production sampler against the
conditioned law.  Everything here is small and deliberate: these are
the values the fast engines are judged by, so clarity beats speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .lattice import Domain, Point, neighbors, origin_box
from .path_ops import Path, drop_prefix, take_prefix
from .rng import RngStream
from . import walker

_EXHAUSTIVE_CAP = 16
_DETERMINANT_CAP = 200
_LAW_DOMAIN_CAP = 500
_ARROW_FIELD_CAP = 1 << 24

ROOT_LABEL = "root"


# ---------------------------------------------------------------------------
# tiny multigraphs and spanning-tree counting


@dataclass(frozen=True)
class TinyGraph:
    """A small connected multigraph; parallel edges are distinct entries.

    `root`, when set, marks the collapsed outside vertex of a wired
    graph; counting always contracts the root row of the Laplacian (or
    the first vertex when no root is given).
    """

    vertices: tuple
    edges: tuple
    root: object = None

    def __post_init__(self) -> None:
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertices")
        if not self.vertices:
            raise ValueError("empty graph")
        vset = set(self.vertices)
        for u, v in self.edges:
            if u == v:
                raise ValueError("self-loops are not allowed")
            if u not in vset or v not in vset:
                raise ValueError(f"edge endpoint {u!r} or {v!r} not a vertex")
        if self.root is not None and self.root not in vset:
            raise ValueError("root is not a vertex")
        if len(self.vertices) > 1:
            idx = {v: i for i, v in enumerate(self.vertices)}
            parent = list(range(len(self.vertices)))

            def find(a: int) -> int:
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                return a

            for u, v in self.edges:
                parent[find(idx[u])] = find(idx[v])
            if len({find(i) for i in range(len(self.vertices))}) != 1:
                raise ValueError("graph is not connected")


def wired_box_graph(d: int, radius: int) -> TinyGraph:
    """The wired graph of Q_radius in Z^d: outside collapsed to one
    root vertex, every lattice edge leaving the box becoming its own
    root edge (so corners carry parallel root edges)."""
    pts = sorted(origin_box(d, radius).points())
    pset = set(pts)
    edges = []
    for x in pts:
        for y in neighbors(x):
            if y in pset:
                if y > x:
                    edges.append((x, y))
            else:
                edges.append((x, ROOT_LABEL))
    return TinyGraph(vertices=tuple(pts) + (ROOT_LABEL,), edges=tuple(edges),
                     root=ROOT_LABEL)


def _bareiss_det(m: list[list[int]]) -> int:
    """Exact integer determinant by fraction-free elimination."""
    n = len(m)
    if n == 0:
        return 1
    m = [row[:] for row in m]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for r in range(k + 1, n):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def spanning_tree_instances(g: TinyGraph) -> Iterator[frozenset[int]]:
    """Yield every spanning tree as a frozenset of edge indices, so
    parallel edges give distinct trees.  Consume eagerly: the generator
    shares mutable scan state."""
    n = len(g.vertices)
    if n > _EXHAUSTIVE_CAP:
        raise ValueError(f"size cap exceeded: {n} > {_EXHAUSTIVE_CAP} vertices")
    idx = {v: i for i, v in enumerate(g.vertices)}
    eidx = [(idx[u], idx[v]) for u, v in g.edges]
    m = len(eidx)
    need = n - 1
    parent = list(range(n))
    size = [1] * n
    undo_log: list[tuple[int, int]] = []
    chosen: list[int] = []

    def find(a: int) -> int:
        while parent[a] != a:
            a = parent[a]
        return a

    def union(a: int, b: int) -> bool:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        undo_log.append((ra, rb))
        return True

    def undo() -> None:
        ra, rb = undo_log.pop()
        parent[rb] = rb
        size[ra] -= size[rb]

    def rec(i: int) -> Iterator[frozenset[int]]:
        if len(chosen) == need:
            yield frozenset(chosen)
            return
        if m - i < need - len(chosen):
            return
        u, v = eidx[i]
        if union(u, v):
            chosen.append(i)
            yield from rec(i + 1)
            chosen.pop()
            undo()
        yield from rec(i + 1)

    yield from rec(0)


def count_spanning_trees(g: TinyGraph, method: str = "determinant") -> int:
    """Number of spanning trees, counting parallel edges separately."""
    n = len(g.vertices)
    if method == "determinant":
        if n > _DETERMINANT_CAP:
            raise ValueError(f"size cap exceeded: {n} > {_DETERMINANT_CAP} vertices")
        drop = g.root if g.root is not None else g.vertices[0]
        kept = [v for v in g.vertices if v != drop]
        idx = {v: i for i, v in enumerate(kept)}
        lap = [[0] * len(kept) for _ in kept]
        for u, v in g.edges:
            if u in idx:
                lap[idx[u]][idx[u]] += 1
            if v in idx:
                lap[idx[v]][idx[v]] += 1
            if u in idx and v in idx:
                lap[idx[u]][idx[v]] -= 1
                lap[idx[v]][idx[u]] -= 1
        return _bareiss_det(lap)
    if method == "exhaustive":
        return sum(1 for _ in spanning_tree_instances(g))
    raise ValueError(f"unknown method {method!r}")


def wired_arrow_trees(d: int, radius: int) -> list[tuple[int, ...]]:
    """All spanning trees of the wired box as arrow fields.

    A tree of the wired graph is exactly an assignment of one outgoing
    direction per box vertex whose pointer graph is cycle-free (arrows
    leaving the box point at the root).  The returned tuples list the
    direction of each vertex in sorted vertex order, the same encoding
    the forest sampler stores, so the two sides compare directly.
    """
    pts = sorted(origin_box(d, radius).points())
    pset = {p: i for i, p in enumerate(pts)}
    n = len(pts)
    two_d = 2 * d
    total = two_d ** n
    if total > _ARROW_FIELD_CAP:
        raise ValueError(f"size cap exceeded: {total} arrow fields")
    # succ[v, dir] = index of the neighbour, or -1 when the arrow exits
    succ = np.full((n, two_d), -1, np.int64)
    for p, i in pset.items():
        for direction, q in enumerate(neighbors(p)):
            if q in pset:
                succ[i, direction] = pset[q]
    codes = np.arange(total, dtype=np.int64)
    assign = np.empty((total, n), np.int64)
    c = codes
    for v in range(n):
        assign[:, v] = c % two_d
        c = c // two_d
    ptr = succ[np.arange(n)[None, :], assign]
    state = ptr.copy()
    for _ in range(n):
        lookup = np.where(state < 0, 0, state)
        state = np.where(state < 0, -1, ptr[np.arange(total)[:, None], lookup])
    good = (state < 0).all(axis=1)
    return [tuple(row) for row in assign[good]]


# ---------------------------------------------------------------------------
# the exact loop-erased walk law


def _normalize_sites(domain) -> frozenset[Point]:
    if isinstance(domain, Domain):
        pts = frozenset(domain.points())
    else:
        pts = frozenset(tuple(int(c) for c in p) for p in domain)
    if not pts:
        raise ValueError("empty domain")
    dims = {len(p) for p in pts}
    if len(dims) != 1:
        raise ValueError("mixed dimensions in domain")
    if len(pts) > _LAW_DOMAIN_CAP:
        raise ValueError(f"size cap exceeded: {len(pts)} > {_LAW_DOMAIN_CAP} sites")
    return pts


class _GreenDiagCache:
    """Diagonal Green values G_A(v,v) for subdomains A of one site set,
    A = sites minus a removed prefix; solved densely and memoized."""

    def __init__(self, sites: frozenset[Point]):
        self.sites = sites
        self.d = len(next(iter(sites)))
        self._memo: dict[tuple[frozenset[Point], Point], float] = {}

    def diag(self, removed: frozenset[Point], v: Point) -> float:
        key = (removed, v)
        got = self._memo.get(key)
        if got is not None:
            return got
        active = sorted(self.sites - removed)
        idx = {p: i for i, p in enumerate(active)}
        m = len(active)
        p_hop = 1.0 / (2 * self.d)
        mat = np.eye(m)
        for p in active:
            i = idx[p]
            for q in neighbors(p):
                j = idx.get(q)
                if j is not None:
                    mat[i, j] -= p_hop
        rhs = np.zeros(m)
        rhs[idx[v]] = 1.0
        val = float(np.linalg.solve(mat, rhs)[idx[v]])
        self._memo[key] = val
        return val


def lerw_path_admissible(domain, gamma: Path) -> tuple[bool, str]:
    """Whether gamma can be an outcome of the loop-erased walk on the
    domain: self-avoiding, interior in the domain, one exit vertex."""
    sites = _normalize_sites(domain)
    if not gamma.is_self_avoiding():
        return False, "path is not self-avoiding"
    verts = [tuple(v) for v in gamma.vertices()]
    if verts[0] not in sites:
        return False, "start is outside the domain"
    for v in verts[:-1]:
        if v not in sites:
            return False, "interior vertex leaves the domain"
    if verts[-1] in sites:
        return False, "path does not end outside the domain"
    return True, ""


def lerw_exact_law(domain, gamma: Path, _cache: _GreenDiagCache | None = None) -> float:
    """Exact probability that the loop-erased walk from gamma's start,
    run to its first exit of the domain, equals gamma.

    The law is the product over the path's interior vertices of
    (2d)^-1 times the Green diagonal on the domain with the earlier
    path vertices removed.  Inadmissible paths have probability 0.
    """
    sites = _normalize_sites(domain)
    ok, _reason = lerw_path_admissible(sites, gamma)
    if not ok:
        return 0.0
    cache = _cache if _cache is not None else _GreenDiagCache(sites)
    d = gamma.d
    p_hop = 1.0 / (2 * d)
    verts = [tuple(v) for v in gamma.vertices()]
    prob = 1.0
    removed: set[Point] = set()
    for v in verts[:-1]:
        prob *= p_hop * cache.diag(frozenset(removed), v)
        removed.add(v)
    return prob


def lerw_law_table(domain, start: Point) -> dict[Path, float]:
    """The full exact law: every possible loop-erased outcome from
    `start` with its probability.  Probabilities sum to 1."""
    sites = _normalize_sites(domain)
    start = tuple(int(c) for c in start)
    if start not in sites:
        raise ValueError("start is outside the domain")
    cache = _GreenDiagCache(sites)
    d = len(start)
    p_hop = 1.0 / (2 * d)
    table: dict[Path, float] = {}
    prefix: list[Point] = [start]

    def rec(acc: float) -> None:
        v = prefix[-1]
        removed = frozenset(prefix[:-1])
        acc *= p_hop * cache.diag(removed, v)
        for y in neighbors(v):
            if y in sites:
                if y not in prefix:
                    prefix.append(y)
                    rec(acc)
                    prefix.pop()
            else:
                table[Path.from_vertices(prefix + [y])] = acc

    rec(1.0)
    return table


# ---------------------------------------------------------------------------
# the conditioned continuation law


def _avoidance_solve(sites: frozenset[Point], avoid: frozenset[Point],
                     d: int) -> dict[Point, float]:
    """P(exit the domain before touching `avoid`), per free site."""
    free = sorted(sites - avoid)
    idx = {p: i for i, p in enumerate(free)}
    m = len(free)
    p_hop = 1.0 / (2 * d)
    mat = np.eye(m)
    rhs = np.zeros(m)
    for p in free:
        i = idx[p]
        for q in neighbors(p):
            if q in idx:
                mat[i, idx[q]] -= p_hop
            elif q not in sites:
                rhs[i] += p_hop
    sol = np.linalg.solve(mat, rhs)
    return {p: float(sol[idx[p]]) for p in free}


class _TiltedGreenDiagCache:
    """Green diagonals of the escape-tilted chain on subdomains of the
    positive-escape sites: kernel q(u,v) = p(u,v) h(v)/h(u)."""

    def __init__(self, sites: list[Point], h: dict[Point, float], d: int):
        self.sites = sites
        self.h = h
        self.d = d
        self._memo: dict[tuple[frozenset[Point], Point], float] = {}

    def diag(self, removed: frozenset[Point], v: Point) -> float:
        key = (removed, v)
        got = self._memo.get(key)
        if got is not None:
            return got
        active = [p for p in self.sites if p not in removed]
        idx = {p: i for i, p in enumerate(active)}
        m = len(active)
        p_hop = 1.0 / (2 * self.d)
        mat = np.eye(m)
        for p in active:
            i = idx[p]
            for q in neighbors(p):
                j = idx.get(q)
                if j is not None:
                    mat[i, j] -= p_hop * self.h[q] / self.h[p]
        rhs = np.zeros(m)
        rhs[idx[v]] = 1.0
        val = float(np.linalg.solve(mat, rhs)[idx[v]])
        self._memo[key] = val
        return val


def conditioned_lerw_law_table(domain, alpha: Path) -> dict[Path, float]:
    """Exact law of the loop erasure of a walk from alpha's endpoint,
    conditioned to exit the domain before returning to any vertex of
    alpha.  This is the predicted conditional law of the walk
    continuation given that the loop-erased walk begins with alpha.
    """
    sites = _normalize_sites(domain)
    averts = [tuple(v) for v in alpha.vertices()]
    if len(set(averts)) != len(averts):
        raise ValueError("prefix is not self-avoiding")
    for v in averts:
        if v not in sites:
            raise ValueError("prefix leaves the domain")
    x0 = averts[-1]
    avoid = frozenset(averts)
    d = len(x0)
    p_hop = 1.0 / (2 * d)
    h = _avoidance_solve(sites, avoid, d)
    positive = {p: v for p, v in h.items() if v > 1e-14}
    hplus = 0.0
    for y in neighbors(x0):
        if y not in sites:
            hplus += p_hop
        else:
            hplus += p_hop * positive.get(y, 0.0)
    if hplus <= 0.0:
        raise ValueError("prefix endpoint cannot reach the boundary")
    cache = _TiltedGreenDiagCache(sorted(positive), positive, d)
    table: dict[Path, float] = {}
    prefix: list[Point] = [x0]

    def rec(acc: float) -> None:
        v = prefix[-1]
        hv = positive[v]
        removed = frozenset(prefix[1:-1])
        acc *= cache.diag(removed, v)
        for y in neighbors(v):
            if y not in sites:
                table[Path.from_vertices(prefix + [y])] = acc * p_hop / hv
            elif y in positive and y not in prefix:
                prefix.append(y)
                rec(acc * p_hop * positive[y] / hv)
                prefix.pop()

    for y in neighbors(x0):
        if y not in sites:
            key = Path.from_vertices([x0, y])
            table[key] = table.get(key, 0.0) + p_hop / hplus
        elif y in positive:
            prefix.append(y)
            rec(p_hop * positive[y] / hplus)
            prefix.pop()
    return table


def conditioned_law_by_telescoping(domain, alpha: Path) -> dict[Path, float]:
    """Same law as `conditioned_lerw_law_table`, derived differently:
    the escape-tilt factors telescope, leaving plain Green diagonals on
    the avoid-free sites and one start normalization.  Used to
    cross-check the tilted-kernel route."""
    sites = _normalize_sites(domain)
    averts = [tuple(v) for v in alpha.vertices()]
    x0 = averts[-1]
    avoid = frozenset(averts)
    d = len(x0)
    p_hop = 1.0 / (2 * d)
    h = _avoidance_solve(sites, avoid, d)
    positive = {p: v for p, v in h.items() if v > 1e-14}
    hplus = 0.0
    for y in neighbors(x0):
        if y not in sites:
            hplus += p_hop
        else:
            hplus += p_hop * positive.get(y, 0.0)
    cache = _GreenDiagCache(frozenset(positive))
    table: dict[Path, float] = {}
    prefix: list[Point] = [x0]

    def rec(acc: float) -> None:
        v = prefix[-1]
        removed = frozenset(prefix[1:-1])
        acc *= p_hop * cache.diag(removed, v)
        for y in neighbors(v):
            if y not in sites:
                table[Path.from_vertices(prefix + [y])] = acc
            elif y in positive and y not in prefix:
                prefix.append(y)
                rec(acc)
                prefix.pop()

    for y in neighbors(x0):
        if y not in sites:
            key = Path.from_vertices([x0, y])
            table[key] = table.get(key, 0.0) + p_hop / hplus
        elif y in positive:
            prefix.append(y)
            rec(p_hop / hplus)
            prefix.pop()
    return table


# ---------------------------------------------------------------------------
# the domain-Markov check


@dataclass(frozen=True)
class DmpReport:
    """Per-prefix comparison of sampled continuations against the
    conditioned-walk law."""

    k: int
    samples: int
    min_conditional_samples: int
    max_tv: float
    prefix_tv: dict
    prefix_counts: dict
    untested: tuple

    def summary(self) -> str:
        tested = len(self.prefix_tv)
        return (f"k={self.k}: {tested} prefixes tested, "
                f"{len(self.untested)} below the sample floor, "
                f"max TV {self.max_tv:.5f}")


def dmp_check(domain, k: int, samples: int, rng: RngStream,
              start: Point | None = None,
              min_conditional_samples: int = 500) -> DmpReport:
    """Sample loop-erased walks, group them by their first k steps, and
    compare each group's empirical continuation law with the exact law
    of the loop-erased conditioned walk.

    Prefixes seen fewer than `min_conditional_samples` times are
    reported untested rather than extrapolated.  Prefixes that already
    contain the exit vertex have a deterministic (empty) continuation
    and are checked for exactly that.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if not isinstance(domain, Domain) or not domain.boxes or domain.extra:
        raise ValueError("dmp_check samples the compiled walker and needs "
                         "a box-union Domain")
    sites = _normalize_sites(domain)
    dom = domain
    if start is None:
        dim = len(next(iter(sites)))
        start = (0,) * dim
        if start not in sites:
            start = min(sites)
    groups: dict[Path, dict[Path, int]] = {}
    for lerw in walker.sample_lerw_many(start, dom, rng, samples):
        kk = min(k, len(lerw))
        pre = take_prefix(lerw, kk)
        rest = drop_prefix(lerw, kk)
        bucket = groups.setdefault(pre, {})
        bucket[rest] = bucket.get(rest, 0) + 1
    prefix_tv: dict[Path, float] = {}
    prefix_counts: dict[Path, int] = {}
    untested: list[Path] = []
    max_tv = 0.0
    for pre, bucket in sorted(groups.items(), key=lambda kv: kv[0].verts.tobytes()):
        n = sum(bucket.values())
        prefix_counts[pre] = n
        if n < min_conditional_samples:
            untested.append(pre)
            continue
        end = pre.end
        if end not in sites or len(pre) < k:
            # the walk already exited inside the prefix: continuation
            # is the single-vertex path, deterministically
            exact = {Path.single(end): 1.0}
        else:
            exact = conditioned_lerw_law_table(sites, pre)
        support = set(exact) | set(bucket)
        tv = 0.5 * sum(abs(bucket.get(p, 0) / n - exact.get(p, 0.0))
                       for p in support)
        prefix_tv[pre] = tv
        max_tv = max(max_tv, tv)
    return DmpReport(k=k, samples=samples,
                     min_conditional_samples=min_conditional_samples,
                     max_tv=max_tv, prefix_tv=prefix_tv,
                     prefix_counts=prefix_counts, untested=tuple(untested))


# ---------------------------------------------------------------------------
# sampling-noise floor for total-variation comparisons


def expected_empirical_tv(law: Mapping[object, float], n: int) -> float:
    """Expected total variation between the exact law and an
    n-sample empirical law, i.e. the noise floor a sampling test
    cannot beat.  Exact binomial mean deviations for rare outcomes,
    the normal limit elsewhere."""
    from scipy import stats

    if n <= 0:
        raise ValueError("need a positive sample count")
    total = 0.0
    for p in law.values():
        if p <= 0.0:
            continue
        mean = n * p
        if mean <= 50.0:
            width = 40.0 * np.sqrt(max(mean, 1.0)) + 50.0
            k_hi = int(min(n, mean + width))
            ks = np.arange(0, k_hi + 1)
            pmf = stats.binom.pmf(ks, n, p)
            total += float(np.sum(pmf * np.abs(ks / n - p)))
        else:
            total += float(np.sqrt(2.0 * p * (1.0 - p) / (np.pi * n)))
    return 0.5 * total


def law_distance(a: Mapping[object, float], b: Mapping[object, float]) -> float:
    """Total variation distance between two finite laws."""
    support = set(a) | set(b)
    return 0.5 * sum(abs(a.get(x, 0.0) - b.get(x, 0.0)) for x in support)
