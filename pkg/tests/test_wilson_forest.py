"""Forest sampler: uniformity, popping equivalence, tree queries."""

import io
import math
import random
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from usflab import wilson_forest as W
from usflab.lattice import Domain, box, neighbors, origin_box
from usflab.oracle import (TinyGraph, count_spanning_trees, wired_arrow_trees,
                           wired_box_graph)
from usflab.rng import RngStream


def _wired(d, radius):
    return W.WiredGraph(Domain.from_box(origin_box(d, radius)))


# ---------------------------------------------------------------------------
# sampler basics


def test_single_vertex_domain():
    g = W.WiredGraph(Domain.from_box(box((0, 0, 0), 0)))
    f = W.wilson_sample(g, [(0, 0, 0)], RngStream(1, 0))
    assert f.parent((0, 0, 0)) is W.ROOT
    assert f.revealed_count == 1
    assert W.component(f, (0, 0, 0), [(0, 0, 0)]) == {(0, 0, 0)}
    f.validate()


def test_same_stream_reproduces_forest():
    g = _wired(2, 1)
    pts = sorted(g.domain.points())
    fa = W.wilson_sample(g, pts, RngStream(42, 3))
    fb = W.wilson_sample(g, pts, RngStream(42, 3))
    assert fa.entries == fb.entries


def test_forest_ignores_start_choice_and_order():
    # randomness is keyed by (vertex, depth), so any reveal schedule
    # uncovers the same underlying forest
    g = _wired(2, 2)
    pts = sorted(g.domain.points())
    full = W.wilson_sample(g, pts, RngStream(9, 9))
    shuffled = list(pts)
    random.Random(0).shuffle(shuffled)
    assert W.wilson_sample(g, shuffled, RngStream(9, 9)).entries == full.entries
    partial = W.wilson_sample(g, [(0, 0), (2, -2)], RngStream(9, 9))
    for k, entry in partial.entries.items():
        assert full.entries[k] == entry


def test_start_outside_domain_errors():
    g = _wired(2, 1)
    with pytest.raises(ValueError, match="outside domain"):
        W.wilson_sample(g, [(0, 0), (5, 0)], RngStream(1, 1))


def test_wired_graph_requires_box_union():
    dom = Domain.from_points([(0, 0), (1, 0)])
    with pytest.raises(ValueError, match="box-union"):
        W.WiredGraph(dom)


def test_pair_domain_from_two_boxes():
    dom = Domain.from_boxes([box((0, 0), 0), box((1, 0), 0)])
    g = W.WiredGraph(dom)
    f = W.wilson_sample(g, [(0, 0), (1, 0)], RngStream(3, 0))
    f.validate()
    assert f.revealed_count == 2


def test_metadata_records_run():
    g = _wired(2, 1)
    pts = sorted(g.domain.points())
    f = W.wilson_sample(g, pts, RngStream(31, 5))
    assert f.metadata["master_seed"] == 31
    assert f.metadata["stream_id"] == 5
    assert f.metadata["starts"] == [list(p) for p in pts]


def test_sampled_forests_are_valid():
    g = _wired(2, 2)
    pts = sorted(g.domain.points())
    for i in range(40):
        f = W.wilson_sample(g, pts, RngStream(1000, i))
        f.validate()
        for x in pts:
            p = f.parent(x)
            if p is not W.ROOT:
                assert p == neighbors(x)[f.direction(x)]


# ---------------------------------------------------------------------------
# law checks


def _sample_fields(g, pts, seed, count):
    sampler = W.WilsonSampler(g, pts)
    fields = {}
    for i in range(count):
        f = sampler.sample(RngStream(seed, i))
        key = f.arrow_field(pts)
        fields[key] = fields.get(key, 0) + 1
    return fields


def test_uniform_over_trees_tiny_cycle():
    # wired segment of three sites: the wired graph is a 4-cycle
    g = _wired(1, 1)
    pts = sorted(g.domain.points())
    trees = set(wired_arrow_trees(1, 1))
    assert count_spanning_trees(wired_box_graph(1, 1)) == len(trees) == 4
    n = 20000
    fields = _sample_fields(g, pts, 2024, n)
    assert set(fields) <= trees
    observed = [fields.get(t, 0) for t in sorted(trees)]
    p = stats.chisquare(observed).pvalue
    assert p > 1e-3, f"chi^2 p={p:.2e}"


def test_uniform_over_trees_pair_domain():
    # two sites, one shared edge, three root edges each: 15 trees by
    # the matrix-tree determinant, and arrow fields miss only the
    # mutual 2-cycle
    a, b = (0, 0), (1, 0)
    dom = Domain.from_boxes([box(a, 0), box(b, 0)])
    g = W.WiredGraph(dom)
    tiny = TinyGraph(
        vertices=(a, b, "root"),
        edges=((a, b), (a, "root"), (a, "root"), (a, "root"),
               (b, "root"), (b, "root"), (b, "root")),
        root="root")
    assert count_spanning_trees(tiny) == 15
    trees = {(da, db) for da, db in product(range(4), repeat=2)
             if not (da == 0 and db == 1)}
    assert len(trees) == 15
    n = 30000
    fields = _sample_fields(g, [a, b], 77, n)
    assert set(fields) <= trees
    observed = [fields.get(t, 0) for t in sorted(trees)]
    p = stats.chisquare(observed).pvalue
    assert p > 1e-3, f"chi^2 p={p:.2e}"


def test_q1_fields_are_exactly_the_enumerated_trees():
    trees = set(wired_arrow_trees(2, 1))
    assert len(trees) == count_spanning_trees(wired_box_graph(2, 1)) == 100352
    g = _wired(2, 1)
    pts = sorted(g.domain.points())
    fields = _sample_fields(g, pts, 555, 2000)
    assert set(fields) <= trees


def test_partial_run_is_a_marginal():
    # the path of one vertex has the same law whether it is revealed
    # alone or inside a full-domain run
    g = _wired(1, 1)
    probe = (-1,)
    pts = [(0,), (1,), probe]

    def path_of(f):
        out = []
        x = probe
        while x is not W.ROOT:
            out.append(x)
            x = f.parent(x)
        return tuple(out)

    n = 20000
    alone = W.WilsonSampler(g, [probe])
    within = W.WilsonSampler(g, pts)
    counts = {}
    for i in range(n):
        counts.setdefault(path_of(alone.sample(RngStream(481, i))), [0, 0])[0] += 1
    for i in range(n):
        counts.setdefault(path_of(within.sample(RngStream(482, i))), [0, 0])[1] += 1
    table = [[a for a, _ in counts.values()], [b for _, b in counts.values()]]
    p = stats.chi2_contingency(table).pvalue
    assert p > 1e-3, f"two-sample chi^2 p={p:.2e}"


# ---------------------------------------------------------------------------
# cycle popping


def test_pop_tree_stacks_pop_nothing():
    g = _wired(1, 1)
    recorded = {(-1,): (1,), (0,): (1,), (1,): (0,)}
    s = W.StackSystem(g, recorded=recorded)
    f = W.pop_all_cycles(s, g)
    assert s.pop_log == []
    assert f.parent((-1,)) is W.ROOT
    assert f.parent((0,)) == (-1,)
    assert f.parent((1,)) is W.ROOT
    assert W.tree_distance(f, (0,), (-1,)) == 1
    assert W.tree_distance(f, (0,), (1,)) == math.inf


def test_pop_removes_recorded_cycle():
    # both sites point at each other first; the popped configuration
    # must use the second entries
    a, b = (0, 0), (1, 0)
    dom = Domain.from_boxes([box(a, 0), box(b, 0)])
    g = W.WiredGraph(dom)
    s = W.StackSystem(g, recorded={a: (0, 2), b: (1, 3)})
    f = W.pop_all_cycles(s, g)
    assert s.pop_log == [(a, b)]
    assert f.parent(a) is W.ROOT and f.parent(b) is W.ROOT
    assert f.direction(a) == 2 and f.direction(b) == 3


def test_recorded_stacks_refuse_to_extend():
    a, b = (0, 0), (1, 0)
    dom = Domain.from_boxes([box(a, 0), box(b, 0)])
    g = W.WiredGraph(dom)
    s = W.StackSystem(g, recorded={a: (0,), b: (1,)})
    with pytest.raises(RuntimeError, match="recorded stack exhausted"):
        W.pop_all_cycles(s, g)


def test_stack_system_needs_one_source():
    g = _wired(1, 1)
    with pytest.raises(ValueError, match="exactly one"):
        W.StackSystem(g)
    with pytest.raises(ValueError, match="exactly one"):
        W.StackSystem(g, RngStream(1, 1), recorded={})


def test_pop_order_never_changes_the_forest():
    g = _wired(2, 1)
    pts = sorted(g.domain.points())
    shuffler = random.Random(99)
    for trial in range(100):
        s = W.StackSystem(g, RngStream(6000, trial))
        reference = W.pop_all_cycles(s, g).entries
        for _ in range(9):
            order = list(pts)
            shuffler.shuffle(order)
            assert W.pop_all_cycles(s, g, scan_order=order).entries == reference


def test_pop_matches_sampler():
    for d, radius, seeds in ((1, 2, 25), (2, 1, 25)):
        g = _wired(d, radius)
        pts = sorted(g.domain.points())
        for i in range(seeds):
            fw = W.wilson_sample(g, pts, RngStream(777, i))
            fp = W.pop_all_cycles(W.StackSystem(g, RngStream(777, i)), g)
            assert fp.entries == fw.entries


def test_bad_scan_order_rejected():
    g = _wired(1, 1)
    s = W.StackSystem(g, RngStream(1, 1))
    with pytest.raises(ValueError, match="permute"):
        W.pop_all_cycles(s, g, scan_order=[(0,), (1,)])


# ---------------------------------------------------------------------------
# tree queries


def test_component_excludes_other_root_branches():
    g = _wired(1, 1)
    s = W.StackSystem(g, recorded={(-1,): (1,), (0,): (1,), (1,): (0,)})
    f = W.pop_all_cycles(s, g)
    got = W.component(f, (0,), [(-1,), (0,), (1,)])
    assert got == {(-1,), (0,)}


def test_component_requires_revealed_vertices():
    g = _wired(2, 2)
    f = W.wilson_sample(g, [(0, 0)], RngStream(5, 5))
    outside = next(p for p in g.domain.points() if not f.revealed(p))
    with pytest.raises(ValueError, match="partial forest"):
        W.component(f, (0, 0), [outside])


def test_tree_distance_basics():
    g = _wired(2, 2)
    pts = sorted(g.domain.points())
    f = W.wilson_sample(g, pts, RngStream(12, 0))
    x = (1, 1)
    assert W.tree_distance(f, x, x) == 0
    p = f.parent(x)
    if p is not W.ROOT:
        assert W.tree_distance(f, x, p) == 1
    with pytest.raises(ValueError, match="unrevealed"):
        W.tree_distance(f, x, (9, 9))


def test_depth_counts_edges_to_root():
    g = _wired(1, 1)
    s = W.StackSystem(g, recorded={(-1,): (1,), (0,): (1,), (1,): (0,)})
    f = W.pop_all_cycles(s, g)
    assert f.depth((-1,)) == 1
    assert f.depth((0,)) == 2
    assert f.depth((1,)) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 30), st.data())
def test_tree_distance_triangle_inequality(seed, data):
    g = _wired(2, 2)
    pts = sorted(g.domain.points())
    f = W.wilson_sample(g, pts, RngStream(seed, 0))
    pick = st.sampled_from(pts)
    x, y, z = data.draw(pick), data.draw(pick), data.draw(pick)
    dxz = W.tree_distance(f, x, z)
    dxy = W.tree_distance(f, x, y)
    dyz = W.tree_distance(f, y, z)
    assert dxz <= dxy + dyz


# ---------------------------------------------------------------------------
# intrinsic balls


def test_ball_trivial_radii():
    D = Domain.from_box(origin_box(2, 8))
    b0 = W.intrinsic_ball(D, 0, RngStream(4, 4))
    assert dict(b0.members) == {(0, 0): 0}
    rng_key = RngStream(4, 4)
    b1 = W.intrinsic_ball(D, 1, rng_key)
    g = W.WiredGraph(D)
    full = W.wilson_sample(g, sorted(D.points()), RngStream(4, 4))
    expected = {(0, 0): 0}
    for q in neighbors((0, 0)):
        if full.parent(q) == (0, 0) or full.parent((0, 0)) == q:
            expected[q] = 1
    assert dict(b1.members) == expected


def test_ball_matches_full_reveal():
    D = Domain.from_box(origin_box(2, 12))
    for i in range(10):
        ball = W.intrinsic_ball(D, 3, RngStream(71, i))
        full = W.wilson_sample(W.WiredGraph(D), sorted(D.points()),
                               RngStream(71, i))
        manual = {}
        for p in origin_box(2, 3).points():
            t = W.tree_distance(full, (0, 0), p)
            if t <= 3:
                manual[p] = t
        assert dict(ball.members) == manual


def test_ball_envelope_is_enforced():
    D = Domain.from_box(origin_box(2, 8))
    with pytest.raises(ValueError, match="radius 12"):
        W.intrinsic_ball(D, 3, RngStream(1, 1))
    with pytest.raises(ValueError, match="outside Q"):
        W.BallResult((0, 0), 1, {(2, 0): 1}, D)
    with pytest.raises(ValueError, match="tree distance"):
        W.BallResult((0, 0), 1, {(1, 0): 2}, D)


def test_ball_in_five_dimensions():
    D = Domain.from_box(origin_box(5, 8))
    ball = W.intrinsic_ball(D, 2, RngStream(50, 2))
    assert ball.members[(0,) * 5] == 0
    assert all(v <= 2 for v in ball.members.values())
    assert all(max(map(abs, p)) <= 2 for p in ball.members)


def test_ball_survives_long_reveal_walks():
    # this stream once died in the growth loop: a reveal walk outgrew
    # the row buffer and the retry grew the member queue instead
    D = Domain.from_box(origin_box(5, 64))
    ball = W.intrinsic_ball(D, 16, RngStream(7, 0).substream(0))
    assert len(ball) >= 16
    assert all(max(map(abs, p)) <= 16 for p in ball.members)


# ---------------------------------------------------------------------------
# component volumes


def test_volume_matches_component_query():
    D = Domain.from_box(origin_box(2, 8))
    g = W.WiredGraph(D)
    inner = list(origin_box(2, 2).points())
    for i in range(8):
        vol = W.component_box_volume(D, 2, RngStream(202, i))
        full = W.wilson_sample(g, sorted(D.points()), RngStream(202, i))
        assert vol == len(W.component(full, (0, 0), inner))


def test_volume_needs_containing_domain():
    D = Domain.from_box(origin_box(2, 2))
    with pytest.raises(ValueError, match="radius 4"):
        W.component_box_volume(D, 4, RngStream(1, 1))


def test_volume_distribution_is_seed_invariant():
    D = Domain.from_box(origin_box(2, 16))
    target = box((0, 0), 4)
    starts = [(0, 0)] + sorted(target.points())
    sampler = W.WilsonSampler(W.WiredGraph(D), starts, count_box=target)
    runs = []
    for seed in (3001, 4001):
        runs.append([sampler.sample_volume(RngStream(seed, i))
                     for i in range(300)])
    p = stats.ks_2samp(runs[0], runs[1]).pvalue
    assert p > 1e-3, f"KS p={p:.2e}"


# ---------------------------------------------------------------------------
# dumps


def test_dump_load_and_replay():
    g = _wired(2, 2)
    pts = sorted(g.domain.points())
    f = W.wilson_sample(g, pts, RngStream(11, 4))
    buf = io.StringIO()
    W.dump_forest(f, buf)
    buf.seek(0)
    loaded = W.load_forest(buf)
    assert loaded.parent_map() == f.parent_map()
    assert loaded.metadata["master_seed"] == 11
    for x in pts:
        if f.parent(x) is not W.ROOT:
            assert loaded.direction(x) == f.direction(x)
    replay_starts = [tuple(p) for p in loaded.metadata["starts"]]
    replayed = W.wilson_sample(
        W.WiredGraph(loaded.domain), replay_starts,
        RngStream(loaded.metadata["master_seed"],
                  loaded.metadata["stream_id"]))
    assert replayed.entries == f.entries


def test_load_rejects_other_files():
    with pytest.raises(ValueError, match="not a forest dump"):
        W.load_forest(io.StringIO('{"format": "something-else"}\n'))
