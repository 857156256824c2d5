from fractions import Fraction as F

import pytest
from _models import action_blind, explicit_set, sample_members
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from artifact.grades import RewardMap, insert_reward, set_sum
from artifact.planner import (
    Belief,
    PlannerConfig,
    best,
    choose_action,
    default_epsilon,
    expected_grade,
    grade_to_leaf,
    oracle_action_grades,
    oracle_expectimax,
    plan,
    planner_policy,
    winning_margin,
)
from artifact.search import (
    History,
    find_models,
    full_model_set,
    rewind,
    successor_partition,
)
from artifact.turing import FINISH, CapacityError

TINY = F(1, 10**9)
TRAP = RewardMap(1, None)


def test_default_epsilon():
    assert default_epsilon(1) == 1
    assert default_epsilon(4) == F(1, 2)
    assert abs(float(default_epsilon(2)) - 2**-0.5) < 1e-4
    assert PlannerConfig(h=9).eps == F(1, 3)


def test_config_rejects_bad_bounds():
    for kwargs in ({"h": 0}, {"eps": 0}, {"gamma": 1}, {"gamma": 0}):
        with pytest.raises(ValueError):
            PlannerConfig(**kwargs)


def test_grade_to_leaf_full_depth():
    # life of five observations, one good, the last two on the lookahead path
    g = grade_to_leaf((3, 3, 3, 3, 1), (0, 1), h=3, i=1, j=3)
    assert g == (F(1, 5), 0, 1)


def test_grade_to_leaf_pads_after_finish():
    g = grade_to_leaf((1, 2, FINISH), (-1,), h=3, i=0, j=1)
    s = F(-1, 3)
    assert g == (s, -1, s, s)


def test_grade_to_leaf_degenerate():
    assert grade_to_leaf((1, 1), (), h=2, i=2, j=2) == (1,)
    with pytest.raises(ValueError):
        grade_to_leaf((1,), (), h=1, i=2, j=1)


def test_singleton_toggle_h1(true_sets):
    mset = true_sets("toggle", 2)
    one = mset.take([0]) if mset.rows > 1 else mset
    assert len(one) == 1
    history = History(2, 2)
    grades = oracle_action_grades(one, history, 1)
    # from the bad state, a1 flips to good and a2 stays bad
    assert grades == {1: (1, 1), 2: (-1, -1)}
    assert best(history, one, PlannerConfig(h=1)) == ((1, 1),)


def test_observation_vertex_means():
    parts = [(F(1, 2), [insert_reward((1, 1), 1)]), (F(1, 2), [insert_reward((0, 0), 0)])]
    assert set_sum(parts) == ((F(1, 2), F(1, 2), F(1, 2)),)


def test_all_finish_set():
    # k=1 models with n=m=1 that never halt over a 1
    loopers = rewind(successor_partition(full_model_set(1, 1, 1), History(1, 1), 1)[FINISH])
    assert len(loopers) == 104
    assert best(History(1, 1), loopers, PlannerConfig(h=2)) == ((-1, -1, -1),)


def test_choose_action_toggle_bad_state(true_sets):
    assert choose_action(History(2, 2), true_sets("toggle", 2), PlannerConfig(h=2)) == 1


def test_choose_action_trap(true_sets):
    cfg = PlannerConfig(h=1, rewards=TRAP)
    assert choose_action(History(2, 1), true_sets("trap", 2), cfg) == 1


def test_choose_action_tie_breaks_low():
    mset = explicit_set([action_blind(1)])
    decision = plan(History(2, 2), Belief.from_model_set(mset), PlannerConfig(h=3))
    assert decision.action == 1
    assert decision.candidates[1] == decision.candidates[2]


def test_oracle_toggle_h3(true_sets):
    result = oracle_expectimax(true_sets("toggle", 2), History(2, 2), 3)
    assert result.action == 1
    assert result.grade == (1, 1, 1, 1)


def test_oracle_all_equivalent():
    mset = explicit_set([action_blind(1), action_blind(2)])
    result = oracle_expectimax(mset, History(2, 2), 2)
    assert result.action == 1
    assert result.grade == (0, 0, 0)


def test_oracle_node_limit(true_sets):
    with pytest.raises(CapacityError):
        oracle_expectimax(true_sets("toggle", 2), History(2, 2), 4, node_limit=10)


def test_winning_margin():
    assert winning_margin({1: (1, 1), 2: (-1, -1)}) == 2
    assert winning_margin({1: (0, 1, 0), 2: (0, 0, 1)}) == F(1, 2)
    assert winning_margin({1: (0, 0), 2: (0, 0)}) is None


def test_expected_grade_singleton_equals_leaf_grade():
    mset = explicit_set([action_blind(2)])
    g = expected_grade(planner_policy(PlannerConfig(h=2)), mset, History(2, 2), 2)
    assert g == grade_to_leaf((2, 2), (-1, -1), 2, 0, 2)


def test_expected_grade_two_models_fixed_policy():
    mset = explicit_set([action_blind(1), action_blind(2)])
    g = expected_grade(lambda hist, sub: 1, mset, History(2, 2), 2)
    assert g == (0, 0, 0)


def test_expected_grade_planner_matches_oracle(true_sets):
    mset = true_sets("toggle", 2)
    history = History(2, 2)
    ours = expected_grade(planner_policy(PlannerConfig(h=4, eps=TINY)), mset, history, 4)
    oracle = expected_grade(lambda hist, sub: oracle_expectimax(sub, hist, 4).action, mset, history, 4)
    assert ours == oracle


def test_verify_mode_on_whole_k1_set():
    mset = full_model_set(1, 1, 1)
    decision = plan(History(1, 1), Belief.from_model_set(mset), PlannerConfig(h=3, verify=True))
    stats = decision.stats
    assert stats.observation_vertices > 0
    assert stats.probability_violations == 0
    assert stats.length_violations == 0
    assert stats.empty_expansions == 0


def test_verify_mode_after_one_k2_step():
    history = History(2, 2, ((1, 1),))
    mset = find_models(history, 2)
    decision = plan(history, Belief.from_model_set(mset), PlannerConfig(h=1, verify=True))
    assert decision.stats.probability_violations == 0
    assert all(len(g) == 2 for grades in decision.candidates.values() for g in grades)


def test_plan_is_deterministic(true_sets):
    mset = true_sets("trap", 2)
    cfg = PlannerConfig(h=2, rewards=TRAP)
    first = plan(History(2, 1), Belief.from_model_set(mset), cfg)
    second = plan(History(2, 1), Belief.from_model_set(mset), cfg)
    assert (first.action, first.candidates, first.alpha, first.selected) == (
        second.action, second.candidates, second.alpha, second.selected,
    )


def test_empty_set_is_rejected():
    empty = find_models(History(1, 1, ((1, 1), (1, 1), (1, FINISH))), 1)
    with pytest.raises(ValueError):
        choose_action(History(1, 1), empty, PlannerConfig())


@pytest.fixture(scope="module")
def one_step_set():
    return find_models(History(2, 2, ((1, 1),)), 2)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 10**6), size=st.integers(1, 8), h=st.integers(1, 3))
def test_planner_grades_match_oracle_on_random_sets(one_step_set, seed, size, h):
    # with a tolerance below every gap, action vertices keep only their maximum
    models = sample_members(one_step_set, size, seed)
    mset = explicit_set(models)
    history = History(2, 2)
    oracle = oracle_action_grades(mset, history, h)
    decision = plan(history, Belief.from_model_set(mset), PlannerConfig(h=h, eps=TINY))
    for a, grade in oracle.items():
        assert max(decision.candidates[a]) == grade
    assert decision.action == oracle_expectimax(mset, history, h).action
