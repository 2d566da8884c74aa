import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usflab import oracle
from usflab.lattice import Domain, origin_box
from usflab.oracle import TinyGraph, count_spanning_trees
from usflab.path_ops import Path
from usflab.rng import RngStream


def test_four_cycle_has_four_trees():
    g = TinyGraph(vertices=(0, 1, 2, 3), edges=((0, 1), (1, 2), (2, 3), (3, 0)))
    assert count_spanning_trees(g) == 4
    assert count_spanning_trees(g, "exhaustive") == 4


def test_complete_graph_counts_follow_cayley():
    for n in (2, 3, 4, 5):
        g = TinyGraph(vertices=tuple(range(n)),
                      edges=tuple(itertools.combinations(range(n), 2)))
        assert count_spanning_trees(g) == n ** (n - 2)
        assert count_spanning_trees(g, "exhaustive") == n ** (n - 2)


def test_parallel_edges_multiply_tree_count():
    # triangle with one doubled edge: 5 trees, two of them through each
    # copy of the doubled edge
    g = TinyGraph(vertices=("a", "b", "c"),
                  edges=(("a", "b"), ("a", "b"), ("b", "c"), ("c", "a")))
    assert count_spanning_trees(g) == 5
    assert count_spanning_trees(g, "exhaustive") == 5
    trees = list(oracle.spanning_tree_instances(g))
    assert len(trees) == 5
    assert len(set(trees)) == 5


def test_path_graph_has_one_tree():
    g = TinyGraph(vertices=(0, 1, 2, 3), edges=((0, 1), (1, 2), (2, 3)))
    assert count_spanning_trees(g) == 1
    assert count_spanning_trees(g, "exhaustive") == 1


def test_wired_interval_is_a_four_cycle():
    g = oracle.wired_box_graph(1, 1)
    assert sorted(g.edges, key=str) == sorted(
        (((-1,), (0,)), ((0,), (1,)), ((-1,), "root"), ((1,), "root")), key=str)
    assert count_spanning_trees(g) == 4
    assert count_spanning_trees(g, "exhaustive") == 4
    assert len(oracle.wired_arrow_trees(1, 1)) == 4


def test_wired_square_count_frozen():
    # det(4I - A(P3 x P3)) = 8 * 14^2 * 4^3, computed from the product
    # of eigenvalue sums; all three routes must land on it
    g = oracle.wired_box_graph(2, 1)
    assert count_spanning_trees(g) == 100352
    assert count_spanning_trees(g, "exhaustive") == 100352
    assert len(oracle.wired_arrow_trees(2, 1)) == 100352


def test_wired_corner_multiplicity():
    g = oracle.wired_box_graph(2, 1)
    root_edges = [e for e in g.edges if e[1] == "root"]
    assert len(root_edges) == 12
    per_vertex = {}
    for u, _ in root_edges:
        per_vertex[u] = per_vertex.get(u, 0) + 1
    # four corners with two leaving edges, four sides with one
    assert sorted(per_vertex.values()) == [1, 1, 1, 1, 2, 2, 2, 2]


def test_graph_validation():
    with pytest.raises(ValueError, match="not connected"):
        TinyGraph(vertices=(0, 1, 2), edges=((0, 1),))
    with pytest.raises(ValueError, match="self-loop"):
        TinyGraph(vertices=(0, 1), edges=((0, 0),))
    with pytest.raises(ValueError, match="duplicate"):
        TinyGraph(vertices=(0, 0), edges=())
    with pytest.raises(ValueError, match="size cap"):
        count_spanning_trees(
            oracle.wired_box_graph(2, 2), "exhaustive")


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_determinant_agrees_with_exhaustive_on_random_multigraphs(data):
    n = data.draw(st.integers(2, 6))
    base = [(i, j) for i, j in itertools.combinations(range(n), 2)]
    mult = data.draw(st.lists(st.integers(0, 2), min_size=len(base),
                              max_size=len(base)))
    edges = []
    for (u, v), m in zip(base, mult):
        edges.extend([(u, v)] * m)
    spanning = set()
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for u, v in edges:
        parent[find(u)] = find(v)
    if len({find(i) for i in range(n)}) != 1:
        return
    g = TinyGraph(vertices=tuple(range(n)), edges=tuple(edges))
    assert count_spanning_trees(g, "determinant") == \
        count_spanning_trees(g, "exhaustive")


# ---------------------------------------------------------------------------
# exact loop-erased law


def test_single_site_law_is_uniform_over_neighbors():
    for y in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        p = oracle.lerw_exact_law([(0, 0)], Path.from_vertices([(0, 0), y]))
        assert p == 0.25


def test_interval_straight_exit_probability():
    # D = {-1,0,1}: reaching +2 via (0,1,2) happens with probability 1/2
    # (Green factor 2 at the start, escape factor 1/2 at each step)
    p = oracle.lerw_exact_law([(-1,), (0,), (1,)],
                              Path.from_vertices([(0,), (1,), (2,)]))
    assert abs(p - 0.5) < 1e-12


def test_inadmissible_paths_have_zero_probability():
    dom = Domain.from_box(origin_box(2, 2))
    inside = Path.from_vertices([(0, 0), (1, 0)])
    assert oracle.lerw_exact_law(dom, inside) == 0.0
    ok, reason = oracle.lerw_path_admissible(dom, inside)
    assert not ok and "end outside" in reason
    wanderer = Path.from_vertices([(0, 0), (1, 0), (0, 0), (0, 1)])
    assert oracle.lerw_exact_law(dom, wanderer) == 0.0
    ok, reason = oracle.lerw_path_admissible(dom, wanderer)
    assert not ok and "self-avoiding" in reason
    far_start = Path.from_vertices([(9, 9), (9, 10)])
    assert oracle.lerw_exact_law(dom, far_start) == 0.0


def test_law_table_sums_to_one_small_square():
    tab = oracle.lerw_law_table(Domain.from_box(origin_box(2, 1)), (0, 0))
    assert len(tab) == 92
    assert abs(sum(tab.values()) - 1.0) < 1e-9
    assert all(p > 0 for p in tab.values())


def test_law_table_agrees_with_direct_formula():
    dom = Domain.from_box(origin_box(2, 1))
    tab = oracle.lerw_law_table(dom, (0, 0))
    for pth, pr in tab.items():
        assert abs(oracle.lerw_exact_law(dom, pth) - pr) < 1e-12 * max(1.0, pr)


def test_law_table_off_center_start():
    dom = Domain.from_box(origin_box(2, 1))
    tab = oracle.lerw_law_table(dom, (1, 1))
    assert abs(sum(tab.values()) - 1.0) < 1e-9
    assert all(pth.start == (1, 1) for pth in tab)


@pytest.mark.slow
def test_law_table_sums_to_one_q2():
    tab = oracle.lerw_law_table(Domain.from_box(origin_box(2, 2)), (0, 0))
    assert len(tab) == 115516
    assert abs(sum(tab.values()) - 1.0) < 1e-9


def test_one_dimensional_law_is_gamblers_ruin():
    # in d=1 the loop-erased exit path is a straight run, so its law is
    # the exit-side law of the walk: 1/2 each from the center
    dom = Domain.from_box(origin_box(1, 2))
    tab = oracle.lerw_law_table(dom, (0,))
    assert len(tab) == 2
    for pth, pr in tab.items():
        assert abs(pr - 0.5) < 1e-12
        assert abs(pth.end[0]) == 3


# ---------------------------------------------------------------------------
# conditioned continuation law


def test_conditioned_law_sums_to_one():
    dom = Domain.from_box(origin_box(2, 1))
    alpha = Path.from_vertices([(0, 0), (1, 0)])
    tab = oracle.conditioned_lerw_law_table(dom, alpha)
    assert abs(sum(tab.values()) - 1.0) < 1e-9
    assert all(pth.start == (1, 0) for pth in tab)
    assert all((0, 0) not in list(pth.vertices()) for pth in tab)


def test_conditioned_routes_agree():
    dom = Domain.from_box(origin_box(2, 1))
    for alpha in [Path.from_vertices([(0, 0), (1, 0)]),
                  Path.from_vertices([(0, 0), (0, 1), (1, 1)]),
                  Path.single((0, 0))]:
        a = oracle.conditioned_lerw_law_table(dom, alpha)
        b = oracle.conditioned_law_by_telescoping(dom, alpha)
        assert set(a) == set(b)
        assert oracle.law_distance(a, b) < 1e-12


def test_empty_prefix_conditioning_recovers_the_full_law():
    # erasing all loops at the start means the walk after its last
    # visit to the start carries the rest of the path, and that walk is
    # exactly the no-return conditioned walk
    dom = Domain.from_box(origin_box(2, 1))
    full = oracle.lerw_law_table(dom, (0, 0))
    cond = oracle.conditioned_lerw_law_table(dom, Path.single((0, 0)))
    assert oracle.law_distance(full, cond) < 1e-12


def test_conditioned_law_rejects_bad_prefixes():
    dom = Domain.from_box(origin_box(2, 1))
    with pytest.raises(ValueError, match="self-avoiding"):
        oracle.conditioned_lerw_law_table(
            dom, Path.from_vertices([(0, 0), (1, 0), (0, 0)]))
    with pytest.raises(ValueError, match="leaves the domain"):
        oracle.conditioned_lerw_law_table(
            dom, Path.from_vertices([(1, 0), (2, 0)]))


def test_blocked_endpoint_raises():
    # a prefix that walks around the center and then steps into it
    # seals the endpoint: every neighbor of (0,0) is on the prefix, so
    # no continuation can escape and the prefix itself has law zero
    dom = Domain.from_box(origin_box(2, 1))
    sealed = Path.from_vertices([(0, 1), (1, 1), (1, 0), (1, -1), (0, -1),
                                 (-1, -1), (-1, 0), (0, 0)])
    with pytest.raises(ValueError, match="cannot reach the boundary"):
        oracle.conditioned_lerw_law_table(dom, sealed)


# ---------------------------------------------------------------------------
# the domain-Markov check


def test_dmp_check_small_square():
    dom = Domain.from_box(origin_box(2, 1))
    rep = oracle.dmp_check(dom, k=1, samples=30_000, rng=RngStream(400, 0))
    assert rep.samples == 30_000
    assert len(rep.prefix_tv) == 4
    assert not rep.untested
    # noise floor at n ~ 7500 per prefix is ~ 0.020; a correct sampler
    # stays within a few SD of it, a broken one lands far above
    assert rep.max_tv < 0.05
    assert sum(rep.prefix_counts.values()) == 30_000


def test_dmp_check_k2_has_deterministic_short_prefixes():
    dom = Domain.from_box(origin_box(2, 1))
    rep = oracle.dmp_check(dom, k=2, samples=20_000, rng=RngStream(400, 1),
                           min_conditional_samples=200)
    # k=2 prefixes from the center of the 3-box can exit at step two;
    # their continuation is deterministic and must show TV 0 exactly
    short = [pre for pre in rep.prefix_tv if pre.end not in dom]
    assert short
    for pre in short:
        assert rep.prefix_tv[pre] == 0.0
    assert rep.max_tv < 0.08


def test_dmp_check_respects_sample_floor():
    dom = Domain.from_box(origin_box(2, 1))
    rep = oracle.dmp_check(dom, k=3, samples=2_000, rng=RngStream(400, 2),
                           min_conditional_samples=1_000_000)
    assert not rep.prefix_tv
    assert rep.untested
    assert rep.max_tv == 0.0


def test_dmp_check_requires_box_domain():
    with pytest.raises(ValueError, match="box-union"):
        oracle.dmp_check(Domain.from_points([(0, 0)]), k=1, samples=10,
                         rng=RngStream(1, 1))


def test_dmp_report_summary_mentions_counts():
    dom = Domain.from_box(origin_box(2, 1))
    rep = oracle.dmp_check(dom, k=1, samples=5_000, rng=RngStream(400, 3))
    s = rep.summary()
    assert "k=1" in s and "max TV" in s


# ---------------------------------------------------------------------------
# noise-floor helper


def test_expected_tv_coin_flip_closed_form():
    # for a fair coin at n=2: TV is 0 w.p. 1/2 and 1/2 otherwise
    law = {"a": 0.5, "b": 0.5}
    assert abs(oracle.expected_empirical_tv(law, 2) - 0.25) < 1e-12


def test_expected_tv_shrinks_like_root_n():
    law = {i: 1 / 16 for i in range(16)}
    lo = oracle.expected_empirical_tv(law, 6400)
    hi = oracle.expected_empirical_tv(law, 1600)
    assert 1.8 < hi / lo < 2.2
    assert oracle.expected_empirical_tv(law, 10 ** 6) < 0.01


def test_law_distance_basic():
    assert oracle.law_distance({"a": 1.0}, {"a": 1.0}) == 0.0
    assert oracle.law_distance({"a": 1.0}, {"b": 1.0}) == 1.0
    assert abs(oracle.law_distance({"a": 0.7, "b": 0.3},
                                   {"a": 0.3, "b": 0.7}) - 0.4) < 1e-15
