"""Turing machines of complexity k and the world-step function they define.

A world of complexity k is a k-state machine over the symbols 0..k (0 is the
blank) together with an initial state word of at most k non-blank letters.
One world step writes the action symbol at cell 0 and the state word on cells
1.., starts the machine in state 1 with the head on cell 0, and runs it for at
most ``budget_factor * k`` steps.  The symbol under the head at halt is the
observation; the non-blank run right of the head is the new state word.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

__all__ = [
    "HALT",
    "FINISH",
    "INDEX_BITS",
    "Move",
    "Action",
    "TransitionTable",
    "DetWorldModel",
    "MachineConfig",
    "Halted",
    "StepOutcome",
    "CapacityError",
    "option_base",
    "entry_count",
    "machine_count",
    "word_count",
    "check_capacity",
    "step_machine",
    "encode_input",
    "decode_output",
    "eval_world_step",
    "enumerate_machines",
    "enumerate_words",
    "enumerate_models",
    "machine_index",
    "machine_from_index",
    "word_index",
    "word_from_index",
    "model_from_id",
]

#: Successor value meaning "stop after this transition".
HALT = 0
#: Observation index used for the ``finish`` outcome (never in 1..m).
FINISH = 0
#: Model identifiers are stored as signed 64-bit integers on disk.
INDEX_BITS = 63


class CapacityError(ValueError):
    """Raised when a request exceeds what the index type or a cap allows."""


class Move(enum.IntEnum):
    LEFT = 0
    RIGHT = 1


class Action(NamedTuple):
    """What the machine does for one (state, symbol) pair."""

    write: int
    move: Move
    next: int  # 1..k, or HALT


def option_base(k: int) -> int:
    """Number of distinct action records for complexity k."""
    return 2 * (k + 1) * (k + 1)


def entry_count(k: int) -> int:
    return k * (k + 1)


def machine_count(k: int) -> int:
    return option_base(k) ** entry_count(k)


def word_count(k: int) -> int:
    return sum(k**i for i in range(k + 1))


def check_capacity(k: int) -> None:
    if k < 1:
        raise ValueError(f"complexity must be positive, got {k}")
    if machine_count(k) > 2**INDEX_BITS or word_count(k) > 2**INDEX_BITS:
        raise CapacityError(
            f"k={k}: {machine_count(k)} machines do not fit a 64-bit model index"
        )


def _decode_option(k: int, opt: int) -> Action:
    k1 = k + 1
    write, rest = divmod(opt, 2 * k1)
    move, nxt = divmod(rest, k1)
    return Action(write, Move(move), HALT if nxt == k else nxt + 1)


def _encode_option(k: int, action: Action) -> int:
    k1 = k + 1
    nxt = k if action.next == HALT else action.next - 1
    return action.write * 2 * k1 + int(action.move) * k1 + nxt


class TransitionTable(NamedTuple):
    """A total transition table stored as one option digit per entry.

    Entries are ordered by (state, symbol); each digit ranks the action record
    by (write, move, next) with HALT as the last successor.  Tuples compare in
    canonical enumeration order.
    """

    k: int
    digits: tuple[int, ...]

    @classmethod
    def from_actions(cls, k: int, actions: Sequence[Action]) -> TransitionTable:
        table = cls(k, tuple(_encode_option(k, Action(*a)) for a in actions))
        table.validate()
        return table

    def validate(self) -> None:
        k = self.k
        if len(self.digits) != entry_count(k):
            raise ValueError(f"expected {entry_count(k)} entries, got {len(self.digits)}")
        base = option_base(k)
        for d in self.digits:
            if not 0 <= d < base:
                raise ValueError(f"option {d} out of range for k={k}")

    def entry(self, state: int, symbol: int) -> Action:
        return _decode_option(self.k, self.digits[(state - 1) * (self.k + 1) + symbol])

    def actions(self) -> list[Action]:
        return [_decode_option(self.k, d) for d in self.digits]

    @property
    def index(self) -> int:
        return machine_index(self)


@dataclass(frozen=True)
class DetWorldModel:
    machine: TransitionTable
    initial_word: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        k = self.machine.k
        if len(self.initial_word) > k:
            raise ValueError("initial word longer than k")
        if any(not 1 <= s <= k for s in self.initial_word):
            raise ValueError("initial word must use non-blank symbols 1..k")

    @property
    def k(self) -> int:
        return self.machine.k

    @property
    def id(self) -> tuple[int, int, int]:
        return (self.k, machine_index(self.machine), word_index(self.k, self.initial_word))


@dataclass(frozen=True)
class MachineConfig:
    """Tape (non-blank cells only), head position and current state."""

    tape: tuple[tuple[int, int], ...] = ()
    head: int = 0
    state: int = 1

    @classmethod
    def from_cells(cls, cells: dict[int, int], head: int = 0, state: int = 1) -> MachineConfig:
        return cls(tuple(sorted((p, s) for p, s in cells.items() if s)), head, state)

    def cells(self) -> dict[int, int]:
        return dict(self.tape)

    def symbol(self, pos: int) -> int:
        return self.cells().get(pos, 0)


@dataclass(frozen=True)
class Halted:
    config: MachineConfig


def _apply(action: Action, cells: dict[int, int], head: int) -> int:
    if action.write:
        cells[head] = action.write
    else:
        cells.pop(head, None)
    return head + (1 if action.move is Move.RIGHT else -1)


def step_machine(config: MachineConfig, table: TransitionTable) -> MachineConfig | Halted:
    """Apply one transition; the result is Halted if the successor is HALT."""
    cells = config.cells()
    action = table.entry(config.state, cells.get(config.head, 0))
    head = _apply(action, cells, config.head)
    if action.next == HALT:
        return Halted(MachineConfig.from_cells(cells, head, config.state))
    return MachineConfig.from_cells(cells, head, action.next)


@dataclass(frozen=True)
class StepOutcome:
    """Result of one world step.  ``observation == FINISH`` means finish."""

    observation: int
    word: tuple[int, ...] = ()
    steps: int = field(default=0, compare=False)

    @property
    def finished(self) -> bool:
        return self.observation == FINISH


def encode_input(state_word: Sequence[int], action: int, rand: int = 0) -> MachineConfig:
    """Initial configuration for a world step.

    ``rand`` is the randomness letter of the stochastic language, placed on
    cell -1; 0 leaves that cell blank.
    """
    cells = {0: action}
    cells.update((i + 1, s) for i, s in enumerate(state_word))
    if rand:
        cells[-1] = rand
    return MachineConfig.from_cells(cells)


def decode_output(config: MachineConfig, m: int) -> StepOutcome:
    cells = config.cells()
    obs = cells.get(config.head, 0)
    if not 1 <= obs <= m:
        return StepOutcome(FINISH)
    word = []
    pos = config.head + 1
    while pos in cells:
        word.append(cells[pos])
        pos += 1
    return StepOutcome(obs, tuple(word))


def eval_world_step(
    model: DetWorldModel,
    state_word: Sequence[int],
    action: int,
    budget_factor: int = 1000,
    *,
    m: int | None = None,
    rand: int = 0,
) -> StepOutcome:
    """Run one world step of ``model`` on ``state_word`` under ``action``.

    This is the plain reference simulator.  The batched search kernel in
    :mod:`artifact._kernel` must agree with it on every input.
    """
    k = model.k
    m = k if m is None else m
    if not 1 <= action <= k:
        raise ValueError(f"action {action} not representable at k={k}")
    if m > k:
        raise ValueError(f"m={m} observations not representable at k={k}")
    budget = budget_factor * k
    config = encode_input(state_word, action, rand)
    cells = config.cells()
    head, state = 0, 1
    table = model.machine
    for steps in range(1, budget + 1):
        action_rec = table.entry(state, cells.get(head, 0))
        head = _apply(action_rec, cells, head)
        if action_rec.next == HALT:
            out = decode_output(MachineConfig.from_cells(cells, head, state), m)
            return StepOutcome(out.observation, out.word, steps)
        state = action_rec.next
    return StepOutcome(FINISH, (), budget)


def enumerate_machines(k: int) -> Iterator[TransitionTable]:
    """All transition tables of complexity k in canonical order."""
    check_capacity(k)
    new = tuple.__new__
    for digits in itertools.product(range(option_base(k)), repeat=entry_count(k)):
        yield new(TransitionTable, (k, digits))


def enumerate_words(k: int) -> Iterator[tuple[int, ...]]:
    """Initial words, shorter first, then lexicographic."""
    for length in range(k + 1):
        yield from itertools.product(range(1, k + 1), repeat=length)


def enumerate_models(k: int) -> Iterator[DetWorldModel]:
    words = list(enumerate_words(k))
    for machine in enumerate_machines(k):
        for word in words:
            yield DetWorldModel(machine, word)


def machine_index(table: TransitionTable) -> int:
    base = option_base(table.k)
    index = 0
    for d in table.digits:
        index = index * base + d
    return index


def machine_from_index(k: int, index: int) -> TransitionTable:
    check_capacity(k)
    if not 0 <= index < machine_count(k):
        raise ValueError(f"machine index {index} out of range for k={k}")
    base = option_base(k)
    digits = []
    for _ in range(entry_count(k)):
        index, d = divmod(index, base)
        digits.append(d)
    return TransitionTable(k, tuple(reversed(digits)))


def word_index(k: int, word: Sequence[int]) -> int:
    index = sum(k**i for i in range(len(word)))
    rank = 0
    for s in word:
        rank = rank * k + (s - 1)
    return index + rank


def word_from_index(k: int, index: int) -> tuple[int, ...]:
    if not 0 <= index < word_count(k):
        raise ValueError(f"word index {index} out of range for k={k}")
    length = 0
    while index >= k**length:
        index -= k**length
        length += 1
    letters = []
    for _ in range(length):
        index, r = divmod(index, k)
        letters.append(r + 1)
    return tuple(reversed(letters))


def model_from_id(k: int, machine: int, word: int) -> DetWorldModel:
    return DetWorldModel(machine_from_index(k, machine), word_from_index(k, word))
