import pytest
from hypothesis import given
from hypothesis import strategies as st

from usflab import lattice
from usflab.lattice import Box, Domain, boundary, box, neighbors, origin_box

points = st.integers(1, 4).flatmap(
    lambda d: st.tuples(*[st.integers(-1000, 1000)] * d))


def test_neighbor_order_is_the_kernel_convention():
    # +e1, -e1, +e2, -e2, ...: kernels index directions this way and the
    # oracle's arrow-field enumeration must agree with them exactly
    assert neighbors((0, 0)) == [(1, 0), (-1, 0), (0, 1), (0, -1)]
    assert neighbors((2,)) == [(3,), (1,)]
    assert neighbors((0, 0, 0))[4] == (0, 0, 1)


@given(points)
def test_neighbors_are_at_l1_distance_one(x):
    for y in neighbors(x):
        assert lattice.l1(x, y) == 1
    assert len(set(neighbors(x))) == 2 * len(x)


@given(points)
def test_pack_unpack_roundtrip(x):
    assert lattice.unpack_point(lattice.pack_point(x), len(x)) == x


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        lattice.pack_point((lattice.COORD_BOUND,))


def test_box_size_and_membership():
    b = origin_box(5, 2)
    assert b.size() == 5 ** 5
    assert (2, 2, 2, 2, 2) in b
    assert (3, 0, 0, 0, 0) not in b
    assert len(list(b.points())) == 5 ** 5 or b.d < 5  # generator is exhaustive
    small = origin_box(2, 1)
    assert sorted(small.points())[0] == (-1, -1)
    assert len(list(small.points())) == 9


def test_box_face():
    b = box((1, 1), 2)
    f = b.face(1, +1)
    assert len(f) == 5
    assert all(p[0] == 3 for p in f)
    assert all(-1 <= p[1] <= 3 for p in f)
    g = origin_box(5, 2).face(3, -1)
    assert len(g) == 5 ** 4
    assert all(p[2] == -2 for p in g)


def test_inner_boundary_count_in_dimension_five():
    # 5^5 - 3^5: everything except the strictly interior 3-box
    assert len(boundary(origin_box(5, 2), kind="inner")) == 2882


def test_outer_boundary_of_small_square():
    out = boundary(origin_box(2, 1), kind="outer")
    assert len(out) == 12
    assert all(p not in origin_box(2, 1) for p in out)


def test_interior_plus_inner_boundary_partitions_box():
    b = origin_box(3, 2)
    inner = boundary(b, kind="inner")
    interior = boundary(b, kind="interior")
    assert inner.isdisjoint(interior)
    assert inner | interior == set(b.points())


def test_domain_union_and_contains():
    d = Domain.from_boxes([origin_box(2, 1), box((4, 0), 1)])
    assert (4, 1) in d
    assert (2, 0) not in d
    assert d.size() == 9 + 9
    overlapping = Domain.from_boxes([origin_box(2, 2), box((1, 0), 2)])
    assert overlapping.size() == len(set(overlapping.points()))


def test_domain_from_points():
    d = Domain.from_points([(0, 0), (1, 0)])
    assert (1, 0) in d and (2, 0) not in d
    assert d.size() == 2


def test_bounding_box_covers_domain():
    d = Domain.from_boxes([origin_box(2, 1), box((5, 5), 2)])
    bb = d.bounding_box()
    assert all(p in bb for p in d.points())
