"""Small model-building helpers shared by the tests."""

import random

from artifact.search import History, ModelSet, model_set_from_models
from artifact.turing import (
    Action,
    DetWorldModel,
    Move,
    TransitionTable,
    option_base,
    word_from_index,
)

HALT = 0
LOOP_RIGHT = Action(0, Move.RIGHT, 1)


def table(k, entries):
    """Table from a {(state, symbol): Action} dict; unlisted entries loop right."""
    return TransitionTable.from_actions(
        k, [entries.get((q, y), LOOP_RIGHT) for q in range(1, k + 1) for y in range(k + 1)]
    )


def action_blind(observation=1, k=2):
    """Overwrites the action cell with ``observation`` and halts over it, whatever the action."""
    entries = {(1, y): Action(observation, Move.LEFT, 2) for y in range(1, k + 1)}
    entries[2, 0] = Action(0, Move.RIGHT, HALT)
    return DetWorldModel(table(k, entries), ())


def sample_members(mset: ModelSet, count: int, seed: int) -> list[DetWorldModel]:
    """Random members of a cylinder set: a row by size, then a random completion."""
    rng = random.Random(seed)
    sizes = mset.row_sizes()
    base = option_base(mset.k)
    out = []
    for row in rng.choices(range(mset.rows), weights=sizes, k=count):
        digits = tuple(int(d) if d >= 0 else rng.randrange(base) for d in mset.tables[row])
        word = word_from_index(mset.k, int(mset.word_ids[row]))
        out.append(DetWorldModel(TransitionTable(mset.k, digits), word))
    return out


def explicit_set(models, n=2, m=2, budget_factor=1000) -> ModelSet:
    return model_set_from_models(History(n, m), models, budget_factor)
