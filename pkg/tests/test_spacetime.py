import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from finicode import spacetime as st


def test_l1_ball_sizes():
    assert st.l1_ball(1, 0) == [(0,)]
    assert st.l1_ball(1, 2) == [(-2,), (-1,), (0,), (1,), (2,)]
    assert len(st.l1_ball(2, 1)) == 5
    assert len(st.l1_ball(2, 3)) == 2 * 3 * 3 + 2 * 3 + 1


def test_cone_layer_and_order():
    w = st.cone(1, 1)
    assert w.layer(0) == [((0,), 0)]
    assert w.layer(2) == [((-2,), 2), ((-1,), 2), ((0,), 2), ((1,), 2), ((2,), 2)]
    # canonical successor steps match the ball enumeration
    assert w.successor(((0,), 0)) == ((-1,), 1)
    assert w.successor(((1,), 1)) == ((-2,), 2)


def test_cone_sizes():
    w1 = st.cone(1, 1)
    for n in range(6):
        assert w1.size(n) == (n + 1) ** 2
    w2 = st.cone(2, 1)
    assert w2.size(0) == 1
    assert w2.size(1) == 1 + 5
    assert w2.size(2) == 1 + 5 + 13


def test_simple_window():
    w = st.simple_window(2)
    assert w.ball(3) == [((0, 0), i) for i in range(4)]
    assert w.min_index(((0, 0), 7)) == 7
    assert w.min_index(((1, 0), 2)) is None
    assert w.slope() == 0


def test_min_index_cone():
    w = st.cone(2, 2)
    assert w.min_index(((0, 0), 0)) == 0
    assert w.min_index(((2, -1), 2)) == 2      # |u| = 3 <= 2*2
    assert w.min_index(((3, 2), 2)) is None    # |u| = 5 > 4
    assert w.contains(((1, 1), 1), 3)
    assert not w.contains(((1, 1), 1), 0)


def test_cube_contains_earlier_times():
    w = st.cube(1, 1)
    # (u, i) = ((2,), 0) enters once the box is wide enough
    assert w.min_index(((2,), 0)) == 2
    assert ((2,), 0) in w.ball(2)
    assert ((2,), 0) not in w.ball(1)


@given(n=hst.integers(min_value=0, max_value=6))
def test_ball_nesting_cone2(n):
    w = st.cone(2, 1)
    ball_n = set(w.ball(n))
    ball_n1 = set(w.ball(n + 1))
    assert ball_n < ball_n1
    assert set(w.layer(n + 1)) == ball_n1 - ball_n


@settings(max_examples=30)
@given(k=hst.integers(min_value=1, max_value=40),
       delta=hst.integers(min_value=1, max_value=2),
       d=hst.integers(min_value=1, max_value=2))
def test_successor_walk_matches_enumeration(k, delta, d):
    w = st.cone(d, delta)
    walk = [(st.origin(d), 0)]
    for _ in range(k):
        walk.append(w.successor(walk[-1]))
    prefix = []
    pts = w.points()
    for _ in range(k + 1):
        prefix.append(next(pts))
    assert walk == prefix


def test_custom_window_validation():
    with pytest.raises(st.WindowError):
        st.custom(1, [[((1,), 0)]])          # layer 0 must be the origin
    with pytest.raises(st.WindowError):
        st.custom(1, [[((0,), 0)], [((0,), 0)]])  # duplicate point
    w = st.custom(1, [[((0,), 0)], [((0,), 1), ((1,), 1)]])
    assert w.ball(1) == [((0,), 0), ((0,), 1), ((1,), 1)]
    with pytest.raises(st.WindowError):
        w.layer(2)
    assert w.max_index() == 1
    assert w.slope() == 1


def test_custom_layer_ordering_normalized():
    w = st.custom(1, [[((0,), 0)], [((1,), 1), ((0,), 1), ((-1,), 1)]])
    assert w.layer(1) == [((-1,), 1), ((0,), 1), ((1,), 1)]


def test_slope_values():
    assert st.cone(1, 2).slope() == 2
    assert st.cube(2, 1).slope() == 1
