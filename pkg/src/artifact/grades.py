"""Success, grades and the set arithmetic used by the planner.

Grades are tuples of :class:`fractions.Fraction`: the success of the life
followed by per-step rewards.  Python's tuple ordering is already the
first-difference order, so grades compare with ``<`` directly; the
:func:`compare` wrapper adds the equal-length contract.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from artifact.turing import FINISH

__all__ = [
    "Grade",
    "GradeSet",
    "Order",
    "RewardMap",
    "DEFAULT_CAP",
    "make_grade",
    "success",
    "compare",
    "distance",
    "tolerance_select",
    "greedy_select",
    "scale",
    "add",
    "set_sum",
    "insert_reward",
    "normalize_set",
    "rational_str",
    "parse_rational",
    "grade_to_strs",
]

Grade = tuple  # tuple[Fraction, ...]
GradeSet = tuple  # tuple[Grade, ...], unique members, descending order

DEFAULT_CAP = 64
_ONE = Fraction(1)
_ZERO = Fraction(0)


class Order(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True)
class RewardMap:
    """Which observation indices are ``good`` (+1) and ``bad`` (-1).

    Finish always rewards -1; every other observation rewards 0.
    """

    good: int | None = 1
    bad: int | None = 2

    def __call__(self, observation: int) -> int:
        if observation == FINISH:
            return -1
        if observation == self.good:
            return 1
        if observation == self.bad:
            return -1
        return 0


def make_grade(values: Iterable) -> Grade:
    grade = tuple(Fraction(v) for v in values)
    if not grade:
        raise ValueError("a grade has at least the success component")
    if any(not -1 <= v <= 1 for v in grade):
        raise ValueError(f"grade components must lie in [-1, 1]: {grade}")
    return grade


def success(
    observations: Sequence[int],
    terminal_finish: bool = False,
    rewards: RewardMap = RewardMap(),
) -> Fraction:
    """(good - bad - finish) / length of the life.

    A trailing FINISH in ``observations`` counts like ``terminal_finish``.
    """
    obs = list(observations)
    if terminal_finish:
        obs.append(FINISH)
    if not obs:
        raise ValueError("success is undefined for an empty life")
    total = 0
    for o in obs:
        if o == FINISH:
            total -= 1
        elif o == rewards.good:
            total += 1
        elif o == rewards.bad:
            total -= 1
    return Fraction(total, len(obs))


def _same_length(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def compare(g1: Grade, g2: Grade) -> Order:
    _same_length(g1, g2)
    if g1 == g2:
        return Order.EQUAL
    return Order.LESS if tuple(g1) < tuple(g2) else Order.GREATER


def distance(a: Sequence, b: Sequence, gamma: Fraction = Fraction(1, 2)) -> Fraction:
    """Largest |eps_n| where eps_n accumulates gamma**n * (a_n - b_n)."""
    _same_length(a, b)
    gamma = Fraction(gamma)
    if not 0 < gamma < 1:
        raise ValueError("discount must lie in (0, 1)")
    eps = _ZERO
    worst = _ZERO
    weight = _ONE
    for x, y in zip(a, b):
        eps += weight * (Fraction(x) - Fraction(y))
        worst = max(worst, abs(eps))
        weight *= gamma
    return worst


def normalize_set(grades: Iterable[Grade]) -> GradeSet:
    """Deduplicate and sort descending; all members must share one length."""
    members = sorted(set(grades), reverse=True)
    if members and any(len(g) != len(members[0]) for g in members):
        raise ValueError("grade set members must share one length")
    return tuple(members)


def tolerance_select(
    grades: Iterable[Grade], eps: Fraction, gamma: Fraction = Fraction(1, 2)
) -> tuple[Grade, GradeSet]:
    """Target grade and the grades within tolerance ``eps`` of it.

    Coordinate by coordinate: the target takes the maximum over the
    survivors, and a grade survives while its discounted cumulative
    shortfall against the target stays strictly below ``eps``.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("tolerance must be positive; use greedy_select for eps -> 0")
    survivors = list(normalize_set(grades))
    if not survivors:
        raise ValueError("cannot select from an empty grade set")
    shortfall = [_ZERO] * len(survivors)
    alpha = []
    weight = _ONE
    for i in range(len(survivors[0])):
        best = max(g[i] for g in survivors)
        alpha.append(best)
        kept, kept_short = [], []
        for g, s in zip(survivors, shortfall):
            s = s + weight * (best - g[i])
            if s < eps:
                kept.append(g)
                kept_short.append(s)
        survivors, shortfall = kept, kept_short
        weight *= gamma
    return tuple(alpha), tuple(survivors)


def greedy_select(grades: Iterable[Grade]) -> Grade:
    members = normalize_set(grades)
    if not members:
        raise ValueError("cannot select from an empty grade set")
    return members[0]


def scale(p: Fraction, g: Grade) -> Grade:
    return tuple(p * x for x in g)


def add(g1: Grade, g2: Grade) -> Grade:
    _same_length(g1, g2)
    return tuple(x + y for x, y in zip(g1, g2))


def insert_reward(g: Grade, r) -> Grade:
    """Place ``r`` right after the success component."""
    return (g[0], Fraction(r)) + tuple(g[1:])


def set_sum(
    parts: Iterable[tuple[Fraction, Iterable[Grade]]], cap: int = DEFAULT_CAP
) -> GradeSet:
    """All weighted sums picking one member per part, largest ``cap`` kept.

    Truncating after each pairwise combination keeps exactly the top ``cap``
    of the full product, because the order is invariant under translation.
    """
    acc: GradeSet | None = None
    for weight, members in parts:
        weight = Fraction(weight)
        if weight < 0:
            raise ValueError("weights must be nonnegative")
        scaled = normalize_set(scale(weight, g) for g in members)
        if not scaled:
            raise ValueError("each part needs at least one grade")
        if acc is None:
            acc = scaled[:cap]
            continue
        _same_length(acc[0], scaled[0])
        acc = normalize_set(add(a, b) for a in acc for b in scaled)[:cap]
    if acc is None:
        raise ValueError("set_sum needs at least one part")
    return acc


def rational_str(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(text: str) -> Fraction:
    return Fraction(text)


def grade_to_strs(g: Grade) -> list[str]:
    return [rational_str(x) for x in g]
