"""Toy environments with known behaviour, and their true model sets."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from artifact.grades import RewardMap
from artifact.search import (
    History,
    ModelSet,
    _advance,
    _from_ids,
    full_model_set,
    rewind,
)
from artifact.turing import FINISH

__all__ = [
    "UsageError",
    "Environment",
    "WORLDS",
    "make_environment",
    "true_model_set",
]


class UsageError(ValueError):
    """Bad command-line or configuration input."""


@dataclass
class Environment:
    """A live world: ``step`` maps an action to an observation or FINISH."""

    name: str
    n: int
    m: int
    rewards: RewardMap
    seed: int | None = None
    finished: bool = field(default=False, init=False)

    def __post_init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self.finished = False
        self._reset()

    def step(self, action: int) -> int:
        if self.finished:
            raise RuntimeError("the episode already finished")
        if not 1 <= action <= self.n:
            raise ValueError(f"action {action} outside 1..{self.n}")
        observation = self._step(action)
        self.finished = observation == FINISH
        return observation

    def _reset(self) -> None:
        pass

    def _step(self, action: int) -> int:
        raise NotImplementedError


class Constant(Environment):
    def _step(self, action: int) -> int:
        return 1


class Toggle(Environment):
    """State A (good) or B (bad); a1 swaps the state, a2 keeps it.  Starts in B."""

    def _reset(self) -> None:
        self.in_a = False

    def _step(self, action: int) -> int:
        if action == 1:
            self.in_a = not self.in_a
        return 1 if self.in_a else 2


class Coin(Environment):
    def _reset(self) -> None:
        self.rng = random.Random(self.seed)

    def _step(self, action: int) -> int:
        return 1 if self.rng.random() < 0.5 else 2


class Trap(Environment):
    def _step(self, action: int) -> int:
        return 1 if action == 1 else FINISH


class Counter(Environment):
    """Good on every third step, neutral o3 otherwise."""

    def _reset(self) -> None:
        self.count = 0

    def _step(self, action: int) -> int:
        self.count += 1
        return 1 if self.count % 3 == 0 else 3


WORLDS = {
    "constant": (Constant, 1, 1, RewardMap(good=None, bad=None)),
    "toggle": (Toggle, 2, 2, RewardMap(good=1, bad=2)),
    "coin": (Coin, 2, 2, RewardMap(good=1, bad=2)),
    "trap": (Trap, 2, 1, RewardMap(good=1, bad=None)),
    "counter": (Counter, 2, 3, RewardMap(good=1, bad=2)),
}


def make_environment(name: str, seed: int | None = None) -> Environment:
    try:
        cls, n, m, rewards = WORLDS[name]
    except KeyError:
        raise UsageError(f"unknown world {name!r}; choose from {', '.join(WORLDS)}") from None
    return cls(name, n, m, rewards, seed)


def _world_history(name: str, actions: tuple[int, ...]) -> History:
    env = make_environment(name)
    steps = []
    for a in actions:
        steps.append((a, env.step(a)))
        if env.finished:
            break
    return History(env.n, env.m, tuple(steps))


def true_model_set(
    name: str, k: int, depth: int = 4, budget_factor: int = 1000, limit: int = 8
) -> ModelSet:
    """Complexity-k models that behave exactly like a deterministic world.

    A model qualifies when it reproduces the world on every action sequence
    of length ``depth``.  The first ``limit`` qualifying models in canonical
    order are returned; they are indistinguishable within ``depth`` steps.
    """
    if name == "coin":
        raise UsageError("the coin world is random and has no true deterministic model")
    env = make_environment(name)
    mset = full_model_set(k, env.n, env.m, budget_factor)
    histories = {_world_history(name, acts) for acts in itertools.product(range(1, env.n + 1), repeat=depth)}
    for history in sorted(histories, key=lambda h: h.steps):
        mset = rewind(mset)
        for action, observation in history.steps:
            mset = _advance(mset, action, observation)
            if not mset:
                return mset
    root = History(env.n, env.m)
    return _from_ids(root, k, budget_factor, rewind(mset).first_ids(limit))
