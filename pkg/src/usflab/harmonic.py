"""Discrete potential theory for the nearest-neighbour walk.

Exact Dirichlet solves on finite site sets, Green tables for killed
walks, the free-space Green function in transient dimension, set
capacities (exact equilibrium measures and escape-frequency Monte
Carlo), and a deterministic convolution-tail sum.

Everything here is either an exact linear solve or a quadrature with a
stated accuracy target; none of it consumes random bits except the
Monte Carlo capacity route, which takes an explicit stream.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import integrate, special
from scipy import fft as sfft
from scipy import sparse
from scipy.sparse.linalg import cg as sparse_cg

from .lattice import Domain, Point, box, check_point, neighbors, origin_box
from .rng import RngStream
from .walker import StopRule, run_walk

# Exact-solver limits.  Dense direct solves below DENSE_SOLVER_LIMIT
# unknowns, conjugate gradients up to DIRICHLET_SITE_CAP; a full Green
# table is quadratic in memory, so it gets the tighter cap.
DENSE_SOLVER_LIMIT = 2000
DIRICHLET_SITE_CAP = 50_000
GREEN_TABLE_CAP = 2000
SPARSE_TOL = 1e-10

# Equilibrium weights may go slightly negative from roundoff; anything
# below this is treated as a genuinely ill-conditioned system.
EQUILIBRIUM_NEGATIVE_TOL = 1e-8

# Free Green function: relative accuracy target, and the radius beyond
# which the power-law asymptotic replaces quadrature.  At the crossover
# the lattice correction to a_d * |x|^(2-d) is below the target.
GREEN_FREE_REL_TOL = 1e-4
GREEN_FREE_CROSSOVER = 512.0

CACHE_ENV = "USF_LAB_CACHE"
_CACHE_FORMAT = "greenfree-v1"
_FIXTURE_NAME = "green_free_fixture.txt"


# ---------------------------------------------------------------------------
# Dirichlet problems


@dataclass(frozen=True)
class DirichletProblem:
    """A finite set of unknown sites plus data on its outer boundary.

    The data map must cover every lattice neighbour of a site that is
    not itself a site; the solve errors out on the first gap it finds.
    """

    sites: tuple[Point, ...]
    boundary_values: Mapping[Point, float]

    def __post_init__(self) -> None:
        if not self.sites:
            raise ValueError("no sites to solve on")
        d = len(self.sites[0])
        for v in self.sites:
            check_point(v, d)
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("duplicate sites")

    @property
    def d(self) -> int:
        return len(self.sites[0])


def _laplace_system(
    sites: tuple[Point, ...],
    data: Callable[[Point], float],
) -> tuple[np.ndarray | sparse.csr_matrix, np.ndarray]:
    """Assemble (I - P) restricted to sites, boundary terms on the rhs."""
    n = len(sites)
    index = {v: i for i, v in enumerate(sites)}
    d = len(sites[0])
    inv = 1.0 / (2 * d)
    rhs = np.zeros(n)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i, v in enumerate(sites):
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        for w in neighbors(v):
            j = index.get(w)
            if j is None:
                rhs[i] += inv * data(w)
            else:
                rows.append(i)
                cols.append(j)
                vals.append(-inv)
    if n < DENSE_SOLVER_LIMIT:
        mat = np.zeros((n, n))
        mat[rows, cols] += vals
        return mat, rhs
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return mat, rhs


def _solve_system(mat: np.ndarray | sparse.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    if isinstance(mat, np.ndarray):
        return np.linalg.solve(mat, rhs)
    # (I - P) is symmetric positive definite on any finite site set, so
    # conjugate gradients applies; the tight tolerance keeps the solve
    # comparable to the dense route.
    sol, info = sparse_cg(mat, rhs, rtol=SPARSE_TOL, atol=0.0)
    if info != 0:
        raise RuntimeError(f"conjugate gradient stalled (info={info})")
    return sol


def solve_dirichlet(problem: DirichletProblem, site_cap: int = DIRICHLET_SITE_CAP) -> dict[Point, float]:
    """Unique bounded extension with the given boundary data.

    The result is discrete-harmonic at every site: the value equals the
    mean over the 2d lattice neighbours.  Sites are capped (the default
    cap can be overridden when a caller knows the solve is affordable);
    past the cap the linear algebra is hopeless and sampling the walk
    is the honest estimator.
    """
    n = len(problem.sites)
    if n > site_cap:
        raise ValueError(
            f"{n} sites exceeds the exact-solver cap {site_cap}; "
            "estimate exit probabilities by Monte Carlo instead")
    data = problem.boundary_values

    def lookup(w: Point) -> float:
        try:
            return data[w]
        except KeyError:
            raise ValueError(f"missing boundary value at {w}") from None

    mat, rhs = _laplace_system(problem.sites, lookup)
    sol = _solve_system(mat, rhs)
    return {v: float(sol[i]) for i, v in enumerate(problem.sites)}


def _solve_on(sites: tuple[Point, ...], data: Callable[[Point], float]) -> dict[Point, float]:
    # internal variant: data given as a function, no coverage pre-scan
    mat, rhs = _laplace_system(sites, data)
    sol = _solve_system(mat, rhs)
    return {v: float(sol[i]) for i, v in enumerate(sites)}


# ---------------------------------------------------------------------------
# Green tables for killed walks


@dataclass(frozen=True)
class GreenTable:
    """Expected visit counts G(x, y) for the walk killed on exiting the
    site set.  Symmetric, nonnegative, with diagonal at least one (the
    walk is at x at time zero)."""

    sites: tuple[Point, ...]
    values: np.ndarray
    _index: dict[Point, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.sites)})
        self.values.setflags(write=False)

    def index(self, x: Point) -> int:
        try:
            return self._index[x]
        except KeyError:
            raise KeyError(f"{x} is not a site of this table") from None

    def value(self, x: Point, y: Point) -> float:
        return float(self.values[self.index(x), self.index(y)])


def green_exact(sites: Iterable[Point]) -> GreenTable:
    """Invert (I - P) on the site set in one factorization."""
    tup = tuple(sites)
    if not tup:
        raise ValueError("empty site set")
    if len(tup) > GREEN_TABLE_CAP:
        raise ValueError(
            f"{len(tup)} sites exceeds the Green-table cap {GREEN_TABLE_CAP}")
    if len(set(tup)) != len(tup):
        raise ValueError("duplicate sites")
    d = len(tup[0])
    for v in tup:
        check_point(v, d)
    index = {v: i for i, v in enumerate(tup)}
    n = len(tup)
    mat = np.eye(n)
    inv = 1.0 / (2 * d)
    for i, v in enumerate(tup):
        for w in neighbors(v):
            j = index.get(w)
            if j is not None:
                mat[i, j] -= inv
    values = np.linalg.inv(mat)
    asym = float(np.max(np.abs(values - values.T)))
    if asym > 1e-10:
        raise RuntimeError(f"Green table asymmetry {asym:.2e}")
    values = 0.5 * (values + values.T)
    return GreenTable(tup, values)


# ---------------------------------------------------------------------------
# Free-space Green function


def asymptotic_constant(d: int) -> float:
    """Coefficient a_d in G(x) ~ a_d |x|^(2-d) for the unit-rate walk."""
    if d < 3:
        raise ValueError("transient behaviour needs d >= 3")
    return (d / 2.0) * special.gamma(d / 2.0 - 1.0) / math.pi ** (d / 2.0)


def _canonical_displacement(x: Point) -> tuple[int, ...]:
    # the lattice symmetry group permutes axes and flips signs
    return tuple(sorted((abs(int(c)) for c in x), reverse=True))


def _green_radial(canon: tuple[int, ...], d: int) -> tuple[float, float]:
    """Radial reduction of the lattice Fourier integral.

    Integrating out the angular variables of
    (2*pi)^(-d) * int cos(theta.x) / (1 - phi(theta)) d theta
    in closed form leaves d * int prod_i ive(|x_i|, u) du over u >= 0,
    with ive the scaled modified Bessel function.  One well-behaved
    one-dimensional quadrature replaces a d-dimensional one.

    The integrand peaks near u = |x|^2 / 5; rescaling by that puts the
    mass at order one whatever the displacement, which the adaptive
    rule needs to keep its error estimate honest.
    """
    orders = [c for c in canon]
    r2 = float(sum(c * c for c in canon))
    scale = max(1.0, r2 / 5.0)

    def g(t: float) -> float:
        u = scale * t
        out = scale
        for c in orders:
            out *= special.ive(c, u)
        return out

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v1, e1 = integrate.quad(g, 0.0, 8.0, limit=400, epsabs=0.0,
                                epsrel=1e-10, points=[0.05, 0.2, 1.0, 4.0])
        v2, e2 = integrate.quad(g, 8.0, np.inf, limit=400, epsabs=0.0,
                                epsrel=1e-10)
    return d * (v1 + v2), d * (e1 + e2)


def green_free_quadrature(
    x: Point,
    corner_nodes: int = 24,
    slab_nodes: int = 20,
) -> tuple[float, float]:
    """Direct tensor quadrature of the lattice Fourier integral.

    The integrand cos(theta . x) / (1 - phi(theta)) on [0, pi]^d has an
    integrable |theta|^(-2) singularity at the origin.  The corner cube
    [0, pi/4]^d is split into d pyramidal sectors whose radial change
    of variables supplies a Jacobian r^(d-1) that cancels it; the
    remainder of the box is covered by d disjoint slabs on which the
    integrand is smooth.  Gauss-Legendre rules apply on every piece.

    Slow but independent of the radial route; the returned error
    estimate compares against a coarser rule.
    """
    d = len(x)
    if d < 3:
        raise ValueError("recurrent lattice: the free Green function needs d >= 3")
    vec = np.asarray([float(c) for c in x])

    def run(nc: int, ns: int) -> float:
        a = math.pi / 4.0

        def integrand(theta: np.ndarray) -> np.ndarray:
            one_minus_phi = np.mean(1.0 - np.cos(theta), axis=-1)
            return np.prod(np.cos(theta * vec), axis=-1) / one_minus_phi

        total = 0.0
        rn, rw = np.polynomial.legendre.leggauss(nc)
        r = 0.5 * a * (rn + 1.0)
        rw = 0.5 * a * rw
        sn, sw = np.polynomial.legendre.leggauss(nc)
        s = 0.5 * (sn + 1.0)
        sw = 0.5 * sw
        grids = np.meshgrid(*([s] * (d - 1)), indexing="ij")
        sect = np.stack([g.ravel() for g in grids], axis=-1)
        wgrid = np.meshgrid(*([sw] * (d - 1)), indexing="ij")
        sect_w = np.prod(np.stack([g.ravel() for g in wgrid], axis=-1), axis=-1)
        cols_all = list(range(d))
        for k in range(d):
            cols = [j for j in cols_all if j != k]
            for ri, rwi in zip(r, rw):
                theta = np.empty((sect.shape[0], d))
                theta[:, cols] = ri * sect
                theta[:, k] = ri
                total += rwi * ri ** (d - 1) * float(np.dot(integrand(theta), sect_w))
        gn, gw = np.polynomial.legendre.leggauss(ns)

        def segment(lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
            return 0.5 * (hi - lo) * (gn + 1.0) + lo, 0.5 * (hi - lo) * gw

        pieces = {"high": segment(a, math.pi), "low": segment(0.0, a),
                  "full": segment(0.0, math.pi)}
        for k in range(d):
            axes = [pieces["high"] if j == k else pieces["low"] if j < k
                    else pieces["full"] for j in range(d)]
            mesh = np.meshgrid(*[ax[0] for ax in axes], indexing="ij")
            theta = np.stack([m.ravel() for m in mesh], axis=-1)
            wmesh = np.meshgrid(*[ax[1] for ax in axes], indexing="ij")
            weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)
            total += float(np.dot(integrand(theta), weights))
        return total / math.pi ** d

    fine = run(corner_nodes, slab_nodes)
    coarse = run(max(corner_nodes - 8, 8), max(slab_nodes - 6, 6))
    return fine, abs(fine - coarse)


_green_cache: dict[tuple[int, tuple[int, ...]], float] = {}
_disk_loaded = False


def _cache_dir() -> str:
    root = os.environ.get(CACHE_ENV)
    if root is None:
        root = os.path.join(os.path.expanduser("~"), ".cache", "usf-lab")
    return root


def _parse_cache_lines(text: str, origin: str) -> None:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {_CACHE_FORMAT}":
        raise ValueError(f"{origin}: unknown green cache format")
    for ln in lines[1:]:
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        d = int(parts[0])
        canon = tuple(int(c) for c in parts[1:1 + d])
        value = float(parts[1 + d])
        _green_cache[(d, canon)] = value


def _load_disk_cache() -> None:
    global _disk_loaded
    if _disk_loaded:
        return
    _disk_loaded = True
    try:
        from importlib import resources

        fixture = resources.files("usflab").joinpath("data").joinpath(_FIXTURE_NAME)
        if fixture.is_file():
            _parse_cache_lines(fixture.read_text(), _FIXTURE_NAME)
    except (OSError, ModuleNotFoundError):
        pass
    path = os.path.join(_cache_dir(), "green_free.txt")
    try:
        with open(path, "r", encoding="ascii") as fh:
            _parse_cache_lines(fh.read(), path)
    except OSError:
        pass


def _append_disk_cache(d: int, canon: tuple[int, ...], value: float, err: float) -> None:
    path = os.path.join(_cache_dir(), "green_free.txt")
    try:
        os.makedirs(_cache_dir(), exist_ok=True)
        fresh = not os.path.exists(path)
        with open(path, "a", encoding="ascii") as fh:
            if fresh:
                fh.write(f"# {_CACHE_FORMAT}\n")
            coords = " ".join(str(c) for c in canon)
            fh.write(f"{d} {coords} {value:.17e} {err:.3e}\n")
    except OSError:
        pass  # persistence is best effort; the in-memory cache still holds it


def green_free(x: Point) -> float:
    """Expected visits to the origin from x for the free walk on Z^d.

    Needs a transient lattice (d >= 3).  Within the crossover radius
    the value comes from quadrature of the lattice Fourier integral and
    is cached on disk keyed by the canonical displacement; beyond it
    the asymptotic a_d |x|^(2-d) is already inside the relative
    tolerance GREEN_FREE_REL_TOL.
    """
    d = len(x)
    if d < 3:
        raise ValueError("recurrent lattice: the free Green function needs d >= 3")
    canon = _canonical_displacement(x)
    r2 = sum(c * c for c in canon)
    if r2 > GREEN_FREE_CROSSOVER ** 2:
        return asymptotic_constant(d) * r2 ** ((2.0 - d) / 2.0)
    key = (d, canon)
    hit = _green_cache.get(key)
    if hit is not None:
        return hit
    _load_disk_cache()
    hit = _green_cache.get(key)
    if hit is not None:
        return hit
    value, err = _green_radial(canon, d)
    _green_cache[key] = value
    _append_disk_cache(d, canon, value, err)
    return value


# ---------------------------------------------------------------------------
# Capacity


@dataclass(frozen=True)
class CapacityResult:
    sites: tuple[Point, ...]
    value: float
    method: str
    stderr: float | None = None
    escape_radius: int | None = None


def equilibrium_measure(sites: Iterable[Point]) -> dict[Point, float]:
    """Weights e with sum_u G(x, u) e(u) = 1 on the set.

    e(u) is the probability the free walk from u never returns to the
    set, and the total mass is the capacity.  Small negative weights
    from roundoff are clipped; anything past the tolerance means the
    Green matrix could not be solved reliably.
    """
    tup = tuple(sites)
    if not tup:
        raise ValueError("empty site set")
    if len(tup) > GREEN_TABLE_CAP:
        raise ValueError(
            f"{len(tup)} sites exceeds the exact-capacity cap {GREEN_TABLE_CAP}")
    if len(set(tup)) != len(tup):
        raise ValueError("duplicate sites")
    n = len(tup)
    mat = np.empty((n, n))
    for i, u in enumerate(tup):
        for j in range(i, n):
            g = green_free(tuple(a - b for a, b in zip(u, tup[j])))
            mat[i, j] = g
            mat[j, i] = g
    weights = np.linalg.solve(mat, np.ones(n))
    low = float(weights.min())
    if low < -EQUILIBRIUM_NEGATIVE_TOL:
        raise ValueError(f"ill-conditioned Green matrix (weight {low:.2e})")
    weights = np.clip(weights, 0.0, None)
    return {u: float(w) for u, w in zip(tup, weights)}


def _bounding_center(tup: tuple[Point, ...]) -> Point:
    d = len(tup[0])
    los = [min(v[i] for v in tup) for i in range(d)]
    his = [max(v[i] for v in tup) for i in range(d)]
    return tuple((lo + hi) // 2 for lo, hi in zip(los, his))


def capacity(
    sites: Iterable[Point],
    method: str = "exact",
    *,
    escape_radius: int | None = None,
    rng: RngStream | None = None,
    samples: int = 1000,
) -> CapacityResult:
    """Capacity of a finite set.

    exact: solve for the equilibrium measure against the free Green
    function and total its mass.

    mc: for each site, estimate the no-return probability as the
    frequency of walks that leave the box of the given radius before
    revisiting the set, and total the frequencies.  Escape declares the
    walk gone for good; the truncation bias decays like the Green
    function at the escape radius.
    """
    tup = tuple(sites)
    if not tup:
        raise ValueError("empty site set")
    if method == "exact":
        measure = equilibrium_measure(tup)
        return CapacityResult(tup, float(sum(measure.values())), "exact")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if len(tup[0]) < 3:
        raise ValueError("recurrent lattice: escape frequencies vanish for d < 3")
    if escape_radius is None:
        raise ValueError("mc capacity needs an escape_radius")
    if rng is None:
        raise ValueError("mc capacity needs an rng stream")
    center = _bounding_center(tup)
    dom = Domain.from_box(box(center, escape_radius))
    for v in tup:
        if v not in dom or any(abs(a - b) >= escape_radius for a, b in zip(v, center)):
            raise ValueError("escape_radius does not enclose the set with margin")
    rule = StopRule(exit_domain=dom, hit_set=frozenset(tup), hit_at_start=False)
    total = 0.0
    var = 0.0
    for start in tup:
        escapes = 0
        for _ in range(samples):
            out = run_walk(start, rule, rng, record=False)
            if out.cause == "exited_domain":
                escapes += 1
        p = escapes / samples
        total += p
        var += p * (1.0 - p) / samples
    return CapacityResult(tup, total, "mc", stderr=math.sqrt(var),
                          escape_radius=escape_radius)


# ---------------------------------------------------------------------------
# Convolution tail sum


def conv_bound_required_radius(n: int, d: int = 5, c: float | None = None) -> int:
    if c is None:
        c = 1.0 / (2 * d)
    return math.ceil(8.0 * math.sqrt(n / c))


def _sigma_table(s_max: int) -> np.ndarray:
    """Divisor sums sigma(k) for k <= s_max, by complementary sieves.

    Divisors up to sqrt(s_max) are stamped onto their multiples; larger
    divisors are reached through their small cofactor, which keeps the
    python-level loop at O(sqrt(s_max)) iterations.
    """
    sigma = np.zeros(s_max + 1)
    root = math.isqrt(s_max)
    for k in range(1, root + 1):
        sigma[k::k] += k
    for j in range(1, root + 1):
        hi = s_max // j
        if hi <= root:
            continue
        sigma[j * (root + 1)::j][:hi - root] += np.arange(root + 1, hi + 1)
    return sigma


def _square_counts(s_max: int, d: int) -> np.ndarray:
    """counts[s] = number of w in Z^d with |w|^2 = s, for s <= s_max.

    Built from the divisor-sum formula for four squares and FFT
    convolution with the one-dimensional counts for each further axis.
    Entries are integers well inside float64's exact range; a failed
    round-trip to integers aborts rather than returning drift.
    """
    if d < 4:
        raise ValueError("counts are assembled from the four-square base")
    sigma = _sigma_table(s_max)
    r4 = 8.0 * sigma
    quarter = s_max // 4
    if quarter >= 1:
        r4[4::4] -= 32.0 * sigma[1:quarter + 1]
    r4[0] = 1.0
    counts = r4
    if d > 4:
        r1 = np.zeros(s_max + 1)
        r1[0] = 1.0
        js = np.arange(1, int(math.isqrt(s_max)) + 1)
        r1[js * js] = 2.0
        length = sfft.next_fast_len(2 * s_max + 1)
        fr1 = sfft.rfft(r1, length)
        for _ in range(d - 4):
            counts = sfft.irfft(sfft.rfft(counts, length) * fr1, length)[:s_max + 1]
        rounded = np.round(counts)
        drift = float(np.max(np.abs(counts - rounded)))
        if drift > 0.25:
            raise RuntimeError(f"fft convolution lost integrality (drift {drift:.2e})")
        counts = rounded
    return counts


def conv_bound_sum(
    n: int,
    d: int = 5,
    truncation_radius: int | None = None,
    c: float | None = None,
) -> float:
    """Deterministic sum of (1+|w|)^(2-d) * exp(-c |w|^2 / n) over Z^d.

    The Gaussian scale defaults to the diffusive c = 1/(2d); pass c to
    probe other scales.  The lattice is grouped by the squared norm, so
    the cost scales with the truncation radius squared rather than its
    d-th power.  The sum runs over the ball |w| <= radius rather than
    the enclosing box: every box point left out has |w| > radius, so
    with the default radius the difference is below exp(-64) relative.
    """
    if d < 5:
        raise ValueError("the tail sum is only summable for d >= 5")
    if n < 1:
        raise ValueError("n must be positive")
    if c is None:
        c = 1.0 / (2 * d)
    if c <= 0:
        raise ValueError("the Gaussian scale c must be positive")
    required = conv_bound_required_radius(n, d, c)
    if truncation_radius is None:
        truncation_radius = required
    elif truncation_radius < required:
        raise ValueError(
            f"truncation radius {truncation_radius} too small for n={n}; "
            f"need at least {required}")
    s_max = truncation_radius * truncation_radius
    counts = _square_counts(s_max, d)
    s = np.arange(s_max + 1, dtype=np.float64)
    weights = (1.0 + np.sqrt(s)) ** (2 - d) * np.exp(-c * s / n)
    return float(np.dot(counts, weights))


# ---------------------------------------------------------------------------
# Conditioned exit probabilities and tilted Green functions


def conditioned_face_exit(
    m: int,
    d: int,
    blocked: frozenset[Point],
    start: Point | None = None,
    axis: int = 1,
    sign: int = 1,
) -> tuple[float, float]:
    """Face-exit probability of the box walk, conditioned to dodge a set.

    The walk runs in the box of radius m-1 until its first exit; the
    conditioning keeps only walks that never touch `blocked` at a
    positive time.  Returns (conditioned probability of exiting through
    the chosen closed face at distance m, unconditioned probability).

    Both numbers come from exact solves.  The start may lie inside the
    blocked set; only returns at positive times count, which the
    first-step average handles.
    """
    if m < 2:
        raise ValueError("need m >= 2 for an interior start")
    b = origin_box(d, m - 1)
    if start is None:
        start = (0,) * d
    check_point(start, d)
    if start not in b:
        raise ValueError("start lies outside the box")
    for v in blocked:
        check_point(v, d)

    def on_face(y: Point) -> bool:
        return y[axis - 1] * sign == m

    free_sites = tuple(v for v in b.points() if v not in blocked)

    def data_face(y: Point) -> float:
        if y in blocked:
            return 0.0
        return 1.0 if on_face(y) else 0.0

    def data_survive(y: Point) -> float:
        return 0.0 if y in blocked else 1.0

    h_face = _solve_on(free_sites, data_face)
    h_surv = _solve_on(free_sites, data_survive)

    def first_step(h: dict[Point, float], data: Callable[[Point], float]) -> float:
        if start not in blocked:
            return h[start]
        acc = 0.0
        for w in neighbors(start):
            if w in blocked:
                continue
            acc += h[w] if w in b else data(w)
        return acc / (2 * d)

    num = first_step(h_face, data_face)
    den = first_step(h_surv, data_survive)
    if den <= 0.0:
        raise ValueError("conditioning event has probability zero")

    all_sites = tuple(b.points())
    plain = _solve_on(all_sites, lambda y: 1.0 if on_face(y) else 0.0)
    return num / den, plain[start]


def harnack_slab_battery(d: int, m: int, trials: int, rng: RngStream) -> list[float]:
    """Conditioned face-exit probabilities against random blocking sets.

    Each trial blocks a random nonempty subset of the slab
    [-m+1, 0] x [-m+1, m-1]^(d-1) and records the exactly computed
    probability of exiting through the opposite face, conditioned on
    dodging the set.  Conditioning on avoiding sites that sit on the
    far side of the start can only push the exit toward the face, so
    every entry should dominate the unconditioned 1/(2d).
    """
    slab: list[Point] = []
    for v in origin_box(d, m - 1).points():
        if -m + 1 <= v[0] <= 0:
            slab.append(v)
    out: list[float] = []
    for _ in range(trials):
        while True:
            chosen = frozenset(v for v in slab if rng.draw_unit() < 0.5)
            if chosen:
                break
        cond, _ = conditioned_face_exit(m, d, chosen)
        out.append(cond)
    return out


def tilted_green(
    sites: Iterable[Point],
    h: Mapping[Point, float],
    x: Point,
    y: Point,
    zero_tol: float = 1e-14,
) -> float:
    """Green function of the walk reweighted by a nonnegative harmonic h.

    The tilt q(u, v) = p(u, v) h(v) / h(u) kills the walk where h
    vanishes, so the tilted Green function equals h(y)/h(x) times the
    plain Green function on the sites where h stays positive.
    """
    tup = tuple(sites)
    hx = h.get(x, 0.0)
    if hx <= zero_tol:
        raise ValueError("h vanishes at the source point")
    hy = h.get(y, 0.0)
    if hy <= zero_tol:
        return 0.0
    alive = tuple(v for v in tup if h.get(v, 0.0) > zero_tol)
    table = green_exact(alive)
    return table.value(x, y) * hy / hx


def hitting_probability_in(
    sites: Iterable[Point],
    targets: Iterable[Point],
    z: Point,
) -> float:
    """P(walk from z hits the target set before leaving the site set).

    Exact solve with the targets absorbing.  z must be a site; a z
    inside the target set hits at time zero, probability one.
    """
    dom = tuple(sites)
    targ = set(targets)
    if z in targ:
        return 1.0
    if z not in set(dom):
        raise ValueError("z must lie in the site set")
    free_sites = tuple(v for v in dom if v not in targ)
    h = _solve_on(free_sites, lambda y: 1.0 if y in targ else 0.0)
    return h[z]


def equilibrium_measure_in(table: GreenTable, targets: Iterable[Point]) -> dict[Point, float]:
    """Equilibrium weights for a subset, measured by a killed-walk table.

    Solves sum_u G_D(x, u) e(u) = 1 over the subset; combined with the
    table it reproduces hitting probabilities from anywhere in the
    domain by the last-exit decomposition.
    """
    targ = tuple(targets)
    if not targ:
        raise ValueError("empty target set")
    idx = [table.index(u) for u in targ]
    sub = table.values[np.ix_(idx, idx)]
    weights = np.linalg.solve(sub, np.ones(len(targ)))
    return {u: float(w) for u, w in zip(targ, weights)}


# ---------------------------------------------------------------------------
# Large box geometries
#
# The extended conditioning checks run on boxes with a few hundred
# thousand sites, where the per-site python assembly above is the
# bottleneck.  This fast path packs coordinates into integers and finds
# neighbours with sorted lookups, so assembly is a handful of
# vectorized passes.


class _BoxSystem:
    """(I - P) on a centered box minus an excluded set."""

    def __init__(self, center: Point, radius: int, excluded: frozenset[Point]):
        dim = len(center)
        self.center = center
        self.radius = radius
        self.dim = dim
        axes = [np.arange(c - radius, c + radius + 1, dtype=np.int64) for c in center]
        grid = np.meshgrid(*axes, indexing="ij")
        sites = np.stack([g.ravel() for g in grid], axis=-1)
        # points beyond the box cannot be sites, and their packs would
        # alias onto in-window values, so drop them before packing
        inside = [p for p in excluded
                  if max(abs(a - b) for a, b in zip(p, center)) <= radius]
        if inside:
            exc = np.array(inside, dtype=np.int64)
            keep = ~np.isin(self._pack(sites), self._pack(exc))
            sites = sites[keep]
        if sites.shape[0] == 0:
            raise ValueError("the excluded set swallows the whole box")
        self.sites = sites
        packed = self._pack(sites)
        order = np.argsort(packed)
        self._sorted = packed[order]
        self._order = order
        n = sites.shape[0]
        rows = [np.arange(n)]
        cols = [np.arange(n)]
        vals = [np.ones(n)]
        outside = np.zeros(n)
        inv = 1.0 / (2 * dim)
        for axis in range(dim):
            for step in (1, -1):
                nb = sites.copy()
                nb[:, axis] += step
                beyond = np.abs(nb[:, axis] - center[axis]) > radius
                idx = self.locate(nb)
                inside = idx >= 0
                rows.append(np.nonzero(inside)[0])
                cols.append(idx[inside])
                vals.append(np.full(int(inside.sum()), -inv))
                outside += beyond
        self.matrix = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n))
        # number of neighbours beyond the box, per site; exits inherit
        # boundary data from it when the data is constant on the shell
        self.outside_count = outside

    def _pack(self, pts: np.ndarray) -> np.ndarray:
        # affine packing valid two steps past the box in every axis
        width = 2 * self.radius + 5
        acc = np.zeros(pts.shape[0], dtype=np.int64)
        for axis in range(self.dim):
            off = pts[:, axis] - (self.center[axis] - self.radius - 2)
            acc = acc * width + off
        return acc

    def locate(self, pts: np.ndarray) -> np.ndarray:
        """Row indices of the given points; -1 where not a site."""
        if pts.ndim == 1:
            pts = pts[None, :]
        lo = np.array(self.center) - self.radius - 2
        hi = np.array(self.center) + self.radius + 2
        valid = np.all((pts >= lo) & (pts <= hi), axis=1)
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        if valid.any():
            packed = self._pack(pts[valid])
            pos = np.searchsorted(self._sorted, packed)
            pos = np.minimum(pos, self._sorted.size - 1)
            hit = self._sorted[pos] == packed
            found = np.full(packed.shape[0], -1, dtype=np.int64)
            found[hit] = self._order[pos[hit]]
            out[valid] = found
        return out

    def row(self, p: Point) -> int:
        idx = int(self.locate(np.array([p], dtype=np.int64))[0])
        if idx < 0:
            raise KeyError(f"{p} is not a site of this system")
        return idx

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return _solve_system(self.matrix, rhs)

    def solve_exit_one(self) -> np.ndarray:
        """Harmonic profile with data one on every exit of the box."""
        inv = 1.0 / (2 * self.dim)
        return self.solve(self.outside_count * inv)


def _first_step_average(
    sys: _BoxSystem,
    values: np.ndarray,
    start: Point,
    skip: frozenset[Point],
    exit_value: Callable[[Point], float],
) -> float:
    """Mean of the profile over the start's neighbours, for starts that
    are themselves excluded from the solve (conditioning counts only
    positive-time visits there)."""
    acc = 0.0
    for w in neighbors(start):
        if w in skip:
            continue
        idx = sys.locate(np.array([w], dtype=np.int64))[0]
        if idx >= 0:
            acc += float(values[idx])
        else:
            acc += exit_value(w)
    return acc / (2 * len(start))


def avoidance_probability_far(
    d_radius: int,
    n: int,
    m: int,
    blocked: frozenset[Point],
    x0: Point,
) -> float:
    """Chance the conditioned walk keeps clear of a box around x0.

    The walk starts at x0 + m*e1, is conditioned to leave the box of
    radius d_radius without touching `blocked` (a set inside the box of
    radius n containing x0, which sits on the face at first coordinate
    n), and the event is that it also never enters Q(x0, m/2).  Both
    probabilities are exact solves; their ratio is returned.
    """
    dim = len(x0)
    if x0 not in blocked or x0[0] != n:
        raise ValueError("x0 must lie in the blocked set on the face at n")
    if any(max(abs(c) for c in p) > n for p in blocked):
        raise ValueError("blocked set must stay inside the box of radius n")
    if m % 2 != 0 or m < 2:
        raise ValueError("m must be even and at least 2")
    if n + m + 1 > d_radius:
        raise ValueError("the outer box cannot hold the start with margin")
    z0 = tuple(c + (m if axis == 0 else 0) for axis, c in enumerate(x0))
    origin = (0,) * dim
    den_sys = _BoxSystem(origin, d_radius, blocked)
    den = float(den_sys.solve_exit_one()[den_sys.row(z0)])
    inner = frozenset(box(x0, m // 2).points())
    num_sys = _BoxSystem(origin, d_radius, blocked | inner)
    num = float(num_sys.solve_exit_one()[num_sys.row(z0)])
    if den <= 0.0:
        raise ValueError("conditioning event has probability zero")
    return num / den


def face_exit_probability_far(
    d_radius: int,
    n: int,
    m: int,
    blocked: frozenset[Point],
    x0: Point,
) -> float:
    """Face-exit chance for the walk conditioned to dodge its own set.

    From x0 (inside `blocked`, on the face at first coordinate n), the
    walk is conditioned never to return to `blocked` before leaving the
    box of radius d_radius.  The event: it exits Q(x0, m) through the
    far face in the first coordinate direction.  Exact solves; walks
    surviving past the small box are continued by the outer profile.
    """
    dim = len(x0)
    if x0 not in blocked or x0[0] != n:
        raise ValueError("x0 must lie in the blocked set on the face at n")
    if any(max(abs(c) for c in p) > n for p in blocked):
        raise ValueError("blocked set must stay inside the box of radius n")
    if n + m + 1 > d_radius:
        raise ValueError("the small box must sit inside the outer box")
    origin = (0,) * dim
    outer = _BoxSystem(origin, d_radius, blocked)
    h_out = outer.solve_exit_one()
    den = _first_step_average(outer, h_out, x0, blocked, lambda w: 1.0)
    if den <= 0.0:
        raise ValueError("conditioning event has probability zero")

    small = _BoxSystem(x0, m, blocked)
    face_coord = x0[0] + m + 1
    inv = 1.0 / (2 * dim)
    rhs = np.zeros(small.sites.shape[0])
    # only a +e1 step can land on the far face
    nb = small.sites.copy()
    nb[:, 0] += 1
    on_face = nb[:, 0] == face_coord
    if on_face.any():
        pts = nb[on_face]
        outer_idx = outer.locate(pts)
        if np.any(outer_idx < 0):
            raise RuntimeError("face exit fell outside the outer system")
        rhs[np.nonzero(on_face)[0]] = inv * h_out[outer_idx]
    h_in = small.solve(rhs)
    num = _first_step_average(small, h_in, x0, blocked, lambda w: 0.0)
    return num / den


def tilted_green_minimum(
    d_radius: int,
    n: int,
    m: int,
    alpha: Iterable[Point],
    x0: Point,
) -> float:
    """Scaled floor of the avoidance-conditioned Green function.

    alpha is a path from deep inside the box of radius d_radius ending
    at x0 on the face at first coordinate n.  The walk from x0 is
    conditioned to leave the big box before returning to alpha.  Its
    Green function against sites z of the offset window
    Q(x0 + (m/2) e1, m/4) follows from the killed Green function and
    the avoidance harmonic profile h:

        G~(x0, z) = h(z) * v(z) / h+(x0),

    with v the killed Green column averaged over the neighbours of x0
    and h+ the first-step normalization.  Returns the minimum of
    G~(x0, z) * m^(d-2) over the window.
    """
    dim = len(x0)
    path = frozenset(alpha)
    if x0 not in path or x0[0] != n:
        raise ValueError("x0 must be the path endpoint on the face at n")
    if m % 4 != 0:
        raise ValueError("m must be divisible by 4")
    if n + (3 * m) // 4 + 1 > d_radius:
        raise ValueError("the offset window must sit inside the box")
    origin = (0,) * dim
    sys = _BoxSystem(origin, d_radius, path)
    h = sys.solve_exit_one()
    hplus = _first_step_average(sys, h, x0, path, lambda w: 1.0)
    if hplus <= 0.0:
        raise ValueError("the path seals its own endpoint")
    inv = 1.0 / (2 * dim)
    rhs = np.zeros(sys.sites.shape[0])
    for w in neighbors(x0):
        idx = sys.locate(np.array([w], dtype=np.int64))[0]
        if idx >= 0:
            rhs[idx] = inv
    v = sys.solve(rhs)
    x1 = tuple(c + (m // 2 if axis == 0 else 0) for axis, c in enumerate(x0))
    window = np.array(list(box(x1, m // 4).points()), dtype=np.int64)
    idx = sys.locate(window)
    if np.any(idx < 0):
        raise RuntimeError("the offset window leaks out of the system")
    profile = h[idx] * v[idx] / hplus
    return float(profile.min()) * m ** (dim - 2)
