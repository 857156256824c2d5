"""Lookahead planning over a set of world models.

The planner walks the partial subtree of depth ``h`` below the current
vertex.  Action vertices keep the tolerance-selected set of their children's
grades; observation vertices combine children weighted by the share of
models predicting each observation, with finish always a leaf.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from artifact import _kernel
from artifact.grades import (
    DEFAULT_CAP,
    Grade,
    GradeSet,
    RewardMap,
    insert_reward,
    set_sum,
    success,
    tolerance_select,
)
from artifact.search import History, ModelSet, gather_ragged, refine_models
from artifact.turing import (
    FINISH,
    CapacityError,
    entry_count,
    eval_world_step,
    option_base,
)

__all__ = [
    "PlannerConfig",
    "PlanStats",
    "Decision",
    "Belief",
    "ClassTable",
    "default_epsilon",
    "grade_to_leaf",
    "best",
    "plan",
    "choose_action",
    "OracleResult",
    "oracle_expectimax",
    "oracle_action_grades",
    "winning_margin",
    "expected_grade",
    "planner_policy",
    "oracle_policy",
]


def default_epsilon(h: int) -> Fraction:
    """h ** -1/2 as a rational (exact when h is a perfect square)."""
    root = math.isqrt(h)
    if root * root == h:
        return Fraction(1, root)
    return Fraction(1 / math.sqrt(h)).limit_denominator(10_000)


@dataclass(frozen=True)
class PlannerConfig:
    h: int = 2
    eps: Fraction | None = None
    gamma: Fraction = Fraction(1, 2)
    cap: int = DEFAULT_CAP
    rewards: RewardMap = RewardMap()
    verify: bool = False

    def __post_init__(self) -> None:
        if self.h < 1:
            raise ValueError("lookahead depth must be at least 1")
        object.__setattr__(self, "eps", default_epsilon(self.h) if self.eps is None else Fraction(self.eps))
        object.__setattr__(self, "gamma", Fraction(self.gamma))
        if self.eps <= 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("discount must lie in (0, 1)")


@dataclass
class PlanStats:
    """Counters gathered while expanding one subtree."""

    action_vertices: int = 0
    observation_vertices: int = 0
    probability_violations: int = 0
    length_violations: int = 0
    empty_expansions: int = 0
    max_rows: int = 0

    def merge(self, other: PlanStats) -> None:
        for name in self.__dataclass_fields__:
            if name == "max_rows":
                self.max_rows = max(self.max_rows, other.max_rows)
            else:
                setattr(self, name, getattr(self, name) + getattr(other, name))


class ClassTable:
    """Weight classes shared by belief rows.

    A class carries the prior weight of its rows and, for randomness-driven
    models, the per-letter probabilities used to extend them.  Extending a
    class by a letter multiplies its weight by that letter's probability.
    """

    def __init__(self) -> None:
        self.weights: list[Fraction] = []
        self.probs: list[tuple[Fraction, ...] | None] = []
        self._ids: dict[tuple, int] = {}
        self._child: dict[tuple[int, int], int] = {}

    def add(self, key: tuple, weight: Fraction, probs: tuple[Fraction, ...] | None) -> int:
        if key not in self._ids:
            self._ids[key] = len(self.weights)
            self.weights.append(Fraction(weight))
            self.probs.append(probs)
        return self._ids[key]

    def child(self, cls: int, letter: int) -> int:
        """Class after drawing ``letter``; -1 when that letter has probability 0."""
        got = self._child.get((cls, letter))
        if got is None:
            probs = self.probs[cls]
            p = probs[letter - 1]
            if p == 0:
                got = -1
            else:
                got = self.add(("child", cls, letter), self.weights[cls] * p, probs)
            self._child[(cls, letter)] = got
        return got


@dataclass
class Belief:
    """Weighted rows of partial tables at one vertex of the subtree.

    The mass of a row is ``mult * option_base ** free_entries * weight[cls]``.
    """

    k: int
    m: int
    budget: int
    tables: np.ndarray
    words: np.ndarray
    word_off: np.ndarray
    cls: np.ndarray
    mult: np.ndarray
    classes: ClassTable
    stochastic: bool = False

    @classmethod
    def from_model_set(cls, mset: ModelSet) -> Belief:
        classes = ClassTable()
        classes.add(("det",), Fraction(1), None)
        n = mset.rows
        return cls(
            mset.k, mset.m, mset.budget_factor * mset.k, mset.tables, mset.words,
            mset.word_off, np.zeros(n, np.int64), np.ones(n, np.int64), classes,
        )

    @property
    def rows(self) -> int:
        return len(self.tables)

    def mass(self) -> Fraction:
        if not self.rows:
            return Fraction(0)
        E = entry_count(self.k)
        base = option_base(self.k)
        wild = (self.tables < 0).sum(axis=1)
        key = self.cls * (E + 1) + wild
        uniq, inv = np.unique(key, return_inverse=True)
        sums = np.zeros(len(uniq), np.int64)
        np.add.at(sums, inv, self.mult)
        total = Fraction(0)
        for u, s in zip(uniq.tolist(), sums.tolist()):
            c, w = divmod(u, E + 1)
            total += s * base**w * self.classes.weights[c]
        return total

    def _subset(self, parent, tables, woff, words, cls, mult) -> Belief:
        return Belief(
            self.k, self.m, self.budget, tables, words, woff, cls, mult,
            self.classes, self.stochastic,
        )

    def split(self, action: int, with_finish: bool = False) -> tuple[dict[int, Belief], Belief | None]:
        """Buckets by predicted observation; the finish bucket only on request."""
        letters = range(1, self.k + 1) if self.stochastic else (0,)
        present, inverse = np.unique(self.cls, return_inverse=True)
        pieces: dict[int, list] = defaultdict(list)
        for letter in letters:
            if letter:
                child = np.array([self.classes.child(c, letter) for c in present.tolist()], np.int64)
                new_cls = child[inverse]
                rows = np.flatnonzero(new_cls >= 0)
            else:
                new_cls = self.cls
                rows = np.arange(self.rows)
            if not len(rows):
                continue
            sub_words, sub_off = gather_ragged(self.words, self.word_off, rows)
            parent, tables, obs, _, woff, words = _kernel.expand(
                self.k, self.m, self.budget, self.tables[rows], sub_words, sub_off,
                action, rand=letter, emit_finish=with_finish,
            )
            src = rows[parent]
            for o in np.unique(obs).tolist():
                sel = np.flatnonzero(obs == o)
                w, off = gather_ragged(words, woff, sel)
                pieces[o].append((tables[sel], w, off, new_cls[src[sel]], self.mult[src[sel]]))
        buckets = {o: self._concat(parts) for o, parts in sorted(pieces.items())}
        finish = buckets.pop(FINISH, None)
        return buckets, finish

    def _concat(self, parts) -> Belief:
        tables = np.concatenate([p[0] for p in parts])
        words = np.concatenate([p[1] for p in parts])
        lens = np.concatenate([np.diff(p[2]) for p in parts])
        off = np.zeros(len(lens) + 1, np.int64)
        np.cumsum(lens, out=off[1:])
        return Belief(
            self.k, self.m, self.budget, tables, words, off,
            np.concatenate([p[3] for p in parts]), np.concatenate([p[4] for p in parts]),
            self.classes, self.stochastic,
        )


def grade_to_leaf(
    life_observations: Sequence[int],
    rewards_on_path: Sequence[int],
    h: int,
    i: int,
    j: int,
    rewards: RewardMap = RewardMap(),
) -> Grade:
    """Success of the whole life, the path rewards, then padding to h - i + 1.

    ``life_observations`` runs from the root to the leaf (a trailing FINISH
    included) and ``rewards_on_path`` holds the rewards of steps i+1..j.
    """
    if not 0 <= i <= j <= h:
        raise ValueError(f"need 0 <= i <= j <= h, got i={i} j={j} h={h}")
    if len(rewards_on_path) != j - i:
        raise ValueError("one reward per step between the vertex and the leaf")
    s = success(life_observations, rewards=rewards)
    return (s,) + tuple(Fraction(r) for r in rewards_on_path) + (s,) * (h - j)


class _Search:
    def __init__(self, history: History, config: PlannerConfig, n: int) -> None:
        self.history = history
        self.config = config
        self.n = n
        self.stats = PlanStats()
        self.root_obs = history.observations

    def leaf(self, path_obs: tuple[int, ...], depth: int) -> Grade:
        h = self.config.h
        s = success(self.root_obs + path_obs, rewards=self.config.rewards)
        return (s,) * (h - depth + 1)

    def action_vertex(self, belief: Belief, depth: int, path_obs: tuple[int, ...]) -> GradeSet:
        if not belief.rows:
            self.stats.empty_expansions += 1
            raise ValueError("vertex without models must not be expanded")
        self.stats.action_vertices += 1
        self.stats.max_rows = max(self.stats.max_rows, belief.rows)
        if depth == self.config.h:
            return (self.leaf(path_obs, depth),)
        union: list[Grade] = []
        for a in range(1, self.n + 1):
            union.extend(self.observation_vertex(belief, a, depth, path_obs))
        _, selected = tolerance_select(union, self.config.eps, self.config.gamma)
        self._check_length(selected, depth)
        return selected

    def observation_vertex(
        self, belief: Belief, action: int, depth: int, path_obs: tuple[int, ...]
    ) -> GradeSet:
        cfg = self.config
        self.stats.observation_vertices += 1
        total = belief.mass()
        buckets, finish = belief.split(action, with_finish=cfg.verify)
        masses = {o: b.mass() for o, b in buckets.items()}
        finish_mass = total - sum(masses.values())
        if cfg.verify:
            explicit = finish.mass() if finish is not None else Fraction(0)
            if explicit != finish_mass:
                self.stats.probability_violations += 1
        if finish_mass < 0:
            self.stats.probability_violations += 1
        probs = {o: mass / total for o, mass in masses.items()}
        p_finish = finish_mass / total
        if sum(probs.values()) + p_finish != 1:
            self.stats.probability_violations += 1
        parts: list[tuple[Fraction, GradeSet]] = []
        for o, sub in buckets.items():
            child = self.action_vertex(sub, depth + 1, path_obs + (o,))
            r = cfg.rewards(o)
            parts.append((probs[o], [insert_reward(g, r) for g in child]))
        if p_finish:
            leaf = self.leaf(path_obs + (FINISH,), depth + 1)
            parts.append((p_finish, [insert_reward(leaf, -1)]))
        result = set_sum(parts, cfg.cap)
        self._check_length(result, depth)
        return result

    def _check_length(self, grades: GradeSet, depth: int) -> None:
        want = self.config.h - depth + 1
        if any(len(g) != want for g in grades):
            self.stats.length_violations += 1


@dataclass
class Decision:
    action: int
    candidates: dict[int, GradeSet]
    alpha: Grade
    selected: GradeSet
    stats: PlanStats = field(default_factory=PlanStats)

    @property
    def grade(self) -> Grade:
        """Best selected grade reachable through the chosen action."""
        own = set(self.candidates[self.action])
        return next(g for g in self.selected if g in own)


def plan(history: History, belief: Belief, config: PlannerConfig, n: int | None = None) -> Decision:
    """Grade every action at the current vertex and pick one."""
    n = history.n if n is None else n
    if not belief.rows:
        raise ValueError("planning needs a nonempty model set")
    search = _Search(history, config, n)
    search.stats.action_vertices += 1
    candidates = {a: search.observation_vertex(belief, a, 0, ()) for a in range(1, n + 1)}
    union = [g for grades in candidates.values() for g in grades]
    alpha, selected = tolerance_select(union, config.eps, config.gamma)
    chosen = set(selected)
    action = next(a for a in range(1, n + 1) if chosen.intersection(candidates[a]))
    return Decision(action, candidates, alpha, selected, search.stats)


def best(history: History, mset: ModelSet, config: PlannerConfig, depth: int = 0) -> GradeSet:
    """Tolerance-selected grade set of the action vertex at ``history``."""
    search = _Search(history, config, history.n)
    return search.action_vertex(Belief.from_model_set(mset), depth, ())


def choose_action(history: History, mset: ModelSet, config: PlannerConfig) -> int:
    return plan(history, Belief.from_model_set(mset), config).action


# -- exhaustive reference ----------------------------------------------------


class OracleResult(tuple):
    """``(action, grade)`` of the exhaustive greedy expectimax."""

    __slots__ = ()

    def __new__(cls, action: int, grade: Grade):
        return super().__new__(cls, (action, grade))

    @property
    def action(self) -> int:
        return self[0]

    @property
    def grade(self) -> Grade:
        return self[1]


class _Oracle:
    def __init__(
        self, history: History, h: int, budget_factor: int, rewards: RewardMap, node_limit: int
    ) -> None:
        self.history = history
        self.h = h
        self.budget_factor = budget_factor
        self.rewards = rewards
        self.node_limit = node_limit
        self.nodes = 0

    def _tick(self) -> None:
        self.nodes += 1
        if self.nodes > self.node_limit:
            raise CapacityError(f"oracle expanded more than {self.node_limit} nodes")

    def _success_pad(self, path: tuple[int, ...], depth: int) -> Grade:
        s = success(self.history.observations + path, rewards=self.rewards)
        return (s,) * (self.h - depth + 1)

    def value(self, worlds: list, depth: int, path: tuple[int, ...]) -> Grade:
        self._tick()
        if depth == self.h:
            return self._success_pad(path, depth)
        return max(self.action_value(worlds, a, depth, path) for a in range(1, self.history.n + 1))

    def action_value(self, worlds: list, action: int, depth: int, path: tuple[int, ...]) -> Grade:
        self._tick()
        groups: dict[int, list] = {}
        for model, word in worlds:
            out = eval_world_step(model, word, action, self.budget_factor, m=self.history.m)
            groups.setdefault(out.observation, []).append((model, out.word))
        total = len(worlds)
        acc = [Fraction(0)] * (self.h - depth + 1)
        for o in sorted(groups):
            p = Fraction(len(groups[o]), total)
            if o == FINISH:
                g = (self._success_pad(path + (FINISH,), depth + 1)[0], Fraction(-1))
                g = g + (g[0],) * (self.h - depth - 1)
            else:
                child = self.value(groups[o], depth + 1, path + (o,))
                g = (child[0], Fraction(self.rewards(o))) + child[1:]
            acc = [x + p * y for x, y in zip(acc, g)]
        return tuple(acc)


def _oracle_worlds(mset: ModelSet, history: History, budget_factor: int, node_limit: int) -> list:
    models = mset.models(limit=node_limit)
    worlds = []
    for model in models:
        word = model.initial_word
        for action, observation in history.steps:
            out = eval_world_step(model, word, action, budget_factor, m=history.m)
            if out.observation != observation:
                raise ValueError("model set is not consistent with the history")
            word = out.word
        worlds.append((model, word))
    return worlds


def oracle_action_grades(
    mset: ModelSet,
    history: History,
    h: int,
    budget_factor: int | None = None,
    rewards: RewardMap = RewardMap(),
    node_limit: int = 200_000,
) -> dict[int, Grade]:
    """Exact expected grade of each first action under greedy maximization."""
    budget_factor = mset.budget_factor if budget_factor is None else budget_factor
    if not len(mset):
        raise ValueError("oracle needs a nonempty model set")
    worlds = _oracle_worlds(mset, history, budget_factor, node_limit)
    oracle = _Oracle(history, h, budget_factor, rewards, node_limit)
    return {a: oracle.action_value(worlds, a, 0, ()) for a in range(1, history.n + 1)}


def oracle_expectimax(
    mset: ModelSet,
    history: History,
    h: int,
    budget_factor: int | None = None,
    rewards: RewardMap = RewardMap(),
    node_limit: int = 200_000,
) -> OracleResult:
    """Brute-force expectimax over explicit models; lowest action wins ties."""
    grades = oracle_action_grades(mset, history, h, budget_factor, rewards, node_limit)
    best_a = min(grades, key=lambda a: (tuple(-x for x in grades[a]), a))
    return OracleResult(best_a, grades[best_a])


def winning_margin(grades: dict[int, Grade], gamma: Fraction = Fraction(1, 2)) -> Fraction | None:
    """Smallest discounted gap between the winner and any strictly worse action."""
    top = max(grades.values())
    gaps = []
    for g in grades.values():
        if g == top:
            continue
        i = next(i for i, (x, y) in enumerate(zip(top, g)) if x != y)
        gaps.append(Fraction(gamma) ** i * (top[i] - g[i]))
    return min(gaps) if gaps else None


# -- policy evaluation ---------------------------------------------------------

Policy = Callable[[History, ModelSet], int]


def planner_policy(config: PlannerConfig) -> Policy:
    return lambda history, mset: choose_action(history, mset, config)


def oracle_policy(h: int, rewards: RewardMap = RewardMap()) -> Policy:
    return lambda history, mset: oracle_expectimax(mset, history, h, rewards=rewards).action


def expected_grade(
    policy: Policy,
    mset: ModelSet,
    history: History,
    h: int,
    rewards: RewardMap = RewardMap(),
) -> Grade:
    """Mean over models of the grade of the life each model produces under ``policy``.

    The policy sees the model set refined to the history it has reached.
    Each rollout runs ``h`` steps, or ends early on finish.
    """
    worlds = _oracle_worlds(mset, history, mset.budget_factor, 10**7)
    decisions: dict[History, int] = {}
    sets: dict[History, ModelSet] = {history: mset}

    def act(hist: History) -> int:
        if hist not in decisions:
            decisions[hist] = policy(hist, sets[hist])
        return decisions[hist]

    total = [Fraction(0)] * (h + 1)
    for model, word in worlds:
        hist = history
        path_rewards: list[int] = []
        finished = False
        for _ in range(h):
            a = act(hist)
            out = eval_world_step(model, word, a, mset.budget_factor, m=history.m)
            if out.finished:
                path_rewards.append(-1)
                finished = True
                life = hist.observations + (FINISH,)
                break
            nxt = hist.extend(a, out.observation)
            if nxt not in sets:
                sets[nxt] = refine_models(sets[hist], hist, (a, out.observation))
            hist, word = nxt, out.word
            path_rewards.append(rewards(out.observation))
        if not finished:
            life = hist.observations
        g = grade_to_leaf(life, path_rewards, h, 0, len(path_rewards), rewards)
        total = [x + y for x, y in zip(total, g)]
    return tuple(x / len(worlds) for x in total)
