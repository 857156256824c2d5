from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.grades import (
    Order,
    RewardMap,
    add,
    compare,
    distance,
    grade_to_strs,
    greedy_select,
    insert_reward,
    make_grade,
    parse_rational,
    rational_str,
    scale,
    set_sum,
    success,
    tolerance_select,
)
from artifact.turing import FINISH

GOOD, BAD = 1, 2
unit = st.fractions(min_value=-1, max_value=1, max_denominator=12)


def grades(length):
    return st.tuples(*[unit] * length)


def test_success_examples():
    assert success([GOOD]) == 1
    assert success([GOOD, BAD, GOOD]) == F(1, 3)
    assert success([GOOD, GOOD], terminal_finish=True) == F(1, 3)
    assert success([GOOD, GOOD, FINISH]) == F(1, 3)
    assert success([3, 3], rewards=RewardMap(1, 2)) == 0
    with pytest.raises(ValueError):
        success([])


def test_reward_map():
    r = RewardMap()
    assert [r(o) for o in (GOOD, BAD, FINISH, 3)] == [1, -1, -1, 0]
    neutral = RewardMap(good=None, bad=None)
    assert neutral(1) == 0 and neutral(FINISH) == -1


def test_compare_examples():
    assert compare((F(1, 2), 1, -1), (F(1, 2), 1, 0)) is Order.LESS
    assert compare((1, 0), (1, 0)) is Order.EQUAL
    assert compare((F(3, 5), -1, -1), (F(1, 2), 1, 1)) is Order.GREATER
    with pytest.raises(ValueError):
        compare((1,), (1, 0))


def test_distance_examples():
    assert distance((1, 0, 1), (1, 0, 1)) == 0
    assert distance((1, 0, 0, 0), (0, 0, 0, 0), F(1, 2)) == 1
    assert distance((1, 0, 1, 0), (0, 1, 0, 1), F(1, 2)) == 1
    assert distance((0, 1), (0, 0)) == F(1, 2)
    with pytest.raises(ValueError):
        distance((1,), (1, 0))


def test_tolerance_select_examples():
    alpha, selected = tolerance_select([(1, 0), (F(9, 10), 1)], F(1, 5), F(1, 2))
    assert alpha == (1, 1) and selected == ((F(9, 10), 1),)
    assert tolerance_select([(F(1, 3), 0)], F(1, 10)) == ((F(1, 3), 0), ((F(1, 3), 0),))
    assert tolerance_select([(1, 1), (1, 1)], F(1, 100))[1] == ((1, 1),)
    with pytest.raises(ValueError):
        tolerance_select([(1, 1)], 0)


def test_greedy_select_examples():
    assert greedy_select([(1, 0), (F(9, 10), 1)]) == (1, 0)
    assert greedy_select([(F(1, 2),)]) == (F(1, 2),)
    assert greedy_select([(1, 1), (1, 1)]) == (1, 1)


def test_arithmetic_examples():
    g = make_grade([F(1, 2), -1, 0])
    assert scale(1, g) == g
    assert add(g, (0, 0, 0)) == g
    half = F(1, 2)
    assert set_sum([(half, [(1, 0)]), (half, [(0, 1)])]) == ((half, half),)
    assert set_sum([(half, [(1, 0), (0, 0)]), (half, [(0, 1)])]) == ((half, half), (0, half))
    assert insert_reward((half,), 1) == (half, 1)
    assert insert_reward((0, 0), -1) == (0, -1, 0)
    with pytest.raises(ValueError):
        make_grade([2])


def test_set_sum_cap_keeps_largest():
    parts = [(F(1, 2), [(i, 0) for i in range(5)]), (F(1, 2), [(0, j) for j in range(5)])]
    full = set_sum(parts, cap=100)
    assert set_sum(parts, cap=3) == full[:3]


def test_rational_strings():
    assert rational_str(1) == "1/1"
    assert rational_str(F(-2, 6)) == "-1/3"
    assert parse_rational("-1/3") == F(-1, 3)
    assert grade_to_strs((F(1, 2), 0)) == ["1/2", "0/1"]


@given(grades(3), grades(3), grades(3))
def test_compare_is_total_order(a, b, c):
    assert compare(a, a) is Order.EQUAL
    assert compare(a, b) == -compare(b, a)
    if compare(a, b) <= 0 and compare(b, c) <= 0:
        assert compare(a, c) <= 0


@given(grades(4), grades(4))
def test_distance_symmetric_nonnegative(a, b):
    assert distance(a, b) == distance(b, a) >= 0
    assert distance(a, a) == 0


@settings(max_examples=200)
@given(
    st.lists(grades(3), min_size=1, max_size=8),
    st.fractions(min_value=F(1, 100), max_value=2),
)
def test_tolerance_select_properties(members, eps):
    alpha, selected = tolerance_select(members, eps)
    assert selected and set(selected) <= set(members)
    for g in selected:
        shortfall, weight = F(0), F(1)
        for x, y in zip(alpha, g):
            shortfall += weight * (x - y)
            weight /= 2
        assert shortfall < eps
    assert alpha >= max(members)


@given(st.lists(grades(2), min_size=1, max_size=8))
def test_greedy_is_maximum(members):
    best = greedy_select(members)
    assert best in members and all(compare(best, g) >= 0 for g in members)


@given(st.lists(st.tuples(st.fractions(0, 1, max_denominator=6), grades(2)), min_size=1, max_size=4))
def test_set_sum_of_singletons_is_weighted_sum(parts):
    expected = (0, 0)
    for w, g in parts:
        expected = add(expected, scale(w, g))
    assert set_sum([(w, [g]) for w, g in parts]) == (expected,)


@settings(max_examples=100)
@given(st.lists(st.lists(grades(2), min_size=1, max_size=4), min_size=1, max_size=3), st.integers(1, 6))
def test_set_sum_truncation_is_exact(sets, cap):
    import itertools

    w = F(1, len(sets))
    brute = sorted(
        {tuple(sum(w * g[i] for g in combo) for i in range(2)) for combo in itertools.product(*sets)},
        reverse=True,
    )
    assert list(set_sum([(w, s) for s in sets], cap)) == brute[:cap]
