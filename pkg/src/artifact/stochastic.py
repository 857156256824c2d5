"""World models that read one random letter per step.

The randomness letter for a step sits on cell -1, left of the action.  A
member is a (machine, initial word, randomness word R) triple weighted by the
likelihood of R under the letter frequencies of R itself.
"""

from __future__ import annotations

import logging
import math
import os
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from artifact import _kernel
from artifact.grades import rational_str
from artifact.planner import Belief, ClassTable, Decision, PlannerConfig, plan
from artifact.search import (
    CACHE_VERSION,
    MATERIALIZE_LIMIT,
    CacheFormatError,
    History,
    ModelSet,
    _advance,
    _header,
    find_models,
    full_model_set,
    gather_ragged,
)
from artifact.turing import (
    FINISH,
    CapacityError,
    entry_count,
    eval_world_step,
    machine_from_index,
    model_from_id,
    word_count,
)

__all__ = [
    "ml_probabilities",
    "model_weight",
    "WeightedModelSet",
    "find_stoch_models",
    "extend_stoch_models",
    "save_stoch_cache",
    "load_stoch_cache",
    "stoch_belief",
    "stoch_plan",
    "stoch_choose_action",
    "natural_extension",
    "Stmt3Trial",
    "Stmt3Summary",
    "stmt3_experiment",
    "DEFAULT_ROW_CAP",
    "weighted_set_from_members",
]

log = logging.getLogger(__name__)

DEFAULT_ROW_CAP = 4_000_000


def ml_probabilities(R: Sequence[int], k: int) -> tuple[Fraction, ...]:
    """Letter frequencies of R; uniform when R is empty."""
    if not R:
        return (Fraction(1, k),) * k
    counts = Counter(R)
    if any(not 1 <= r <= k for r in counts):
        raise ValueError(f"randomness letters must lie in 1..{k}")
    return tuple(Fraction(counts[i], len(R)) for i in range(1, k + 1))


def model_weight(R: Sequence[int], k: int | None = None) -> Fraction:
    """Probability of R under its own maximum-likelihood letter frequencies."""
    if k is None:
        k = max(R, default=1)
    probs = ml_probabilities(R, k)
    counts = Counter(R)
    weight = Fraction(1)
    for i, p in enumerate(probs, start=1):
        c = counts.get(i, 0)
        if c:
            weight *= p**c
    return weight


def _counts(R: Sequence[int], k: int) -> tuple[int, ...]:
    c = Counter(R)
    return tuple(c.get(i, 0) for i in range(1, k + 1))


def _weight_from_counts(counts: tuple[int, ...]) -> Fraction:
    total = sum(counts)
    weight = Fraction(1)
    for c in counts:
        if c:
            weight *= Fraction(c, total) ** c
    return weight


@dataclass(frozen=True, eq=False)
class WeightedModelSet:
    """Randomness-extended models with likelihood weights.

    Each row is a partial table with its initial word and reached state
    word, together with every randomness word R leading there.  The R of a
    row share one letter-count vector, hence one weight and one set of
    letter probabilities.  R is stored as a base-k code, first letter most
    significant, in the ragged array ``r_codes``/``r_off``.
    """

    models: ModelSet
    counts: np.ndarray
    r_codes: np.ndarray
    r_off: np.ndarray
    truncated_rows: int = 0
    truncated_mass: Fraction = Fraction(0)

    @property
    def k(self) -> int:
        return self.models.k

    @property
    def t(self) -> int:
        return self.models.t

    @property
    def rows(self) -> int:
        return self.models.rows

    @property
    def multiplicity(self) -> np.ndarray:
        return np.diff(self.r_off)

    def __bool__(self) -> bool:
        return bool(self.models)

    def __len__(self) -> int:
        """Number of (machine, word, R) members."""
        sizes = self.models.row_sizes()
        return sum(s * n for s, n in zip(sizes, self.multiplicity.tolist()))

    def randomness(self, row: int) -> list[tuple[int, ...]]:
        codes = self.r_codes[self.r_off[row] : self.r_off[row + 1]].tolist()
        return [_decode_r(c, self.k, self.t) for c in codes]

    def row_weight(self, row: int) -> Fraction:
        """Unnormalized weight of each single member of ``row``."""
        return _weight_from_counts(tuple(self.counts[row].tolist()))

    def probabilities(self, row: int) -> tuple[Fraction, ...]:
        counts = self.counts[row].tolist()
        total = sum(counts)
        if not total:
            return ml_probabilities((), self.k)
        return tuple(Fraction(c, total) for c in counts)

    def row_masses(self) -> list[Fraction]:
        sizes = self.models.row_sizes()
        weights = _weight_table(self.counts)
        return [s * n * w for s, n, w in zip(sizes, self.multiplicity.tolist(), weights)]

    def total_weight(self) -> Fraction:
        return sum(self.row_masses(), Fraction(0))

    def members(self, limit: int = 100_000) -> list[tuple[int, int, tuple[int, ...], Fraction]]:
        """(machine index, word index, R, normalized weight), canonically ordered."""
        if len(self) > limit:
            raise CapacityError(f"{len(self)} members exceed the limit of {limit}")
        total = self.total_weight()
        out = []
        for row in range(self.rows):
            w = self.row_weight(row) / total
            ids = list(self.models._row_ids(row))
            for R in self.randomness(row):
                out.extend((mi, wi, R, w) for mi, wi in ids)
        out.sort()
        return out


def _decode_r(code: int, k: int, t: int) -> tuple[int, ...]:
    letters = []
    for _ in range(t):
        code, d = divmod(code, k)
        letters.append(d + 1)
    return tuple(reversed(letters))


def _weight_table(counts: np.ndarray) -> list[Fraction]:
    cache: dict[tuple[int, ...], Fraction] = {}
    out = []
    for row in counts.tolist():
        key = tuple(row)
        if key not in cache:
            cache[key] = _weight_from_counts(key)
        out.append(cache[key])
    return out


def _stack_offsets(offsets: list[np.ndarray]) -> np.ndarray:
    lens = np.concatenate([np.diff(o) for o in offsets])
    out = np.zeros(len(lens) + 1, np.int64)
    np.cumsum(lens, out=out[1:])
    return out


def _initial(k: int, n: int, m: int, budget_factor: int) -> WeightedModelSet:
    mset = full_model_set(k, n, m, budget_factor)
    rows = mset.rows
    return WeightedModelSet(
        mset, np.zeros((rows, k), np.int64), np.zeros(rows, np.int64),
        np.arange(rows + 1, dtype=np.int64),
    )


def _take(wset: WeightedModelSet, rows: np.ndarray) -> WeightedModelSet:
    codes, off = gather_ragged(wset.r_codes, wset.r_off, rows)
    return WeightedModelSet(
        wset.models.take(rows), wset.counts[rows], codes, off,
        wset.truncated_rows, wset.truncated_mass,
    )


def _stoch_step(wset: WeightedModelSet, action: int, observation: int) -> WeightedModelSet:
    """Extend each member by one step and one randomness letter, then merge.

    Rows that end up with the same table, initial word, state word and
    letter counts behave and weigh the same, so their R lists are joined.
    """
    mset = wset.models
    k = mset.k
    if observation == FINISH or observation > mset.m:
        empty = _take(wset, np.zeros(0, np.int64))
        return replace(empty, models=replace(empty.models, t=mset.t + 1))
    parents, tables, woffs, words, counts, codes, coffs = [], [], [], [], [], [], []
    for letter in range(1, k + 1):
        parent, tab, _, _, woff, wd = _kernel.expand(
            k, mset.m, mset.budget_factor * k, mset.tables, mset.words, mset.word_off,
            action, rand=letter, target=observation,
        )
        c = wset.counts[parent].copy()
        c[:, letter - 1] += 1
        rc, roff = gather_ragged(wset.r_codes, wset.r_off, parent)
        parents.append(parent)
        tables.append(tab)
        woffs.append(woff)
        words.append(wd)
        counts.append(c)
        codes.append(rc * k + (letter - 1))
        coffs.append(roff)
    parent = np.concatenate(parents)
    tables_a = np.concatenate(tables)
    word_ids = mset.word_ids[parent]
    counts_a = np.concatenate(counts)
    words_a = np.concatenate(words)
    woff = _stack_offsets(woffs)
    codes_a = np.concatenate(codes)
    coff = _stack_offsets(coffs)

    group_ids: dict[bytes, int] = {}
    group = np.empty(len(parent), np.int64)
    tab_bytes = tables_a.tobytes()
    row_len = tables_a.shape[1]
    for i in range(len(parent)):
        key = b"|".join((
            tab_bytes[i * row_len : (i + 1) * row_len], word_ids[i].tobytes(),
            counts_a[i].tobytes(), words_a[woff[i] : woff[i + 1]].tobytes(),
        ))
        group[i] = group_ids.setdefault(key, len(group_ids))
    heads = np.unique(group, return_index=True)[1]
    order = np.argsort(group, kind="stable")
    codes_a, _ = gather_ragged(codes_a, coff, order)
    per_group = np.bincount(group, weights=np.diff(coff), minlength=len(heads)).astype(np.int64)
    r_off = np.zeros(len(heads) + 1, np.int64)
    np.cumsum(per_group, out=r_off[1:])
    head_words, head_off = gather_ragged(words_a, woff, heads)
    merged = ModelSet(
        k, mset.n, mset.m, mset.budget_factor, mset.t + 1,
        tables_a[heads], word_ids[heads], head_words, head_off,
    )
    return WeightedModelSet(merged, counts_a[heads], codes_a, r_off)


def _canonical_order(wset: WeightedModelSet) -> np.ndarray:
    mset = wset.models
    keys = [wset.counts[:, j] for j in reversed(range(wset.k))]
    keys.append(mset.word_ids)
    keys.extend(mset.tables[:, j] for j in reversed(range(mset.tables.shape[1])))
    return np.lexsort(keys)


def _truncate(wset: WeightedModelSet, row_cap: int) -> WeightedModelSet:
    if wset.rows <= row_cap:
        return wset
    masses = wset.row_masses()
    order = sorted(range(wset.rows), key=lambda i: -masses[i])
    dropped = order[row_cap:]
    log.warning("stochastic search truncated to %d rows (dropped %d)", row_cap, len(dropped))
    kept = _take(wset, np.sort(np.array(order[:row_cap], np.int64)))
    return replace(
        kept,
        truncated_rows=wset.truncated_rows + len(dropped),
        truncated_mass=wset.truncated_mass + sum((masses[i] for i in dropped), Fraction(0)),
    )


def extend_stoch_models(
    wset: WeightedModelSet, action: int, observation: int, row_cap: int = DEFAULT_ROW_CAP
) -> WeightedModelSet:
    """The members of ``wset`` that also reproduce one more step."""
    if (wset.t + 1) * math.log2(max(wset.k, 2)) >= 63:
        raise CapacityError("randomness words this long do not fit a 64-bit code")
    nxt = _stoch_step(wset, action, observation)
    nxt = replace(nxt, truncated_rows=wset.truncated_rows, truncated_mass=wset.truncated_mass)
    nxt = _truncate(nxt, row_cap)
    return _take(nxt, _canonical_order(nxt))


def find_stoch_models(
    history: History,
    k: int,
    budget_factor: int = 1000,
    row_cap: int = DEFAULT_ROW_CAP,
) -> WeightedModelSet:
    """Every (machine, word, R) of complexity k that reproduces ``history``.

    The search branches over the k randomness letters at each step and drops
    a branch as soon as it mispredicts.  If more than ``row_cap`` rows
    survive a step, the heaviest ones are kept and the cut is reported in
    ``truncated_rows`` and ``truncated_mass``.
    """
    wset = _initial(k, history.n, history.m, budget_factor)
    for action, observation in history.steps:
        wset = extend_stoch_models(wset, action, observation, row_cap)
    return wset


def stoch_belief(wset: WeightedModelSet) -> Belief:
    """Planner belief with one weight class per letter-count vector.

    A row's multiplicity is its number of randomness words.
    """
    mset = wset.models
    classes = ClassTable()
    class_of: dict[tuple[int, ...], int] = {}
    cls = np.empty(mset.rows, np.int64)
    for row, counts in enumerate(map(tuple, wset.counts.tolist())):
        if counts not in class_of:
            class_of[counts] = classes.add(counts, _weight_from_counts(counts), wset.probabilities(row))
        cls[row] = class_of[counts]
    return Belief(
        mset.k, mset.m, mset.budget_factor * mset.k, mset.tables, mset.words, mset.word_off,
        cls, wset.multiplicity.astype(np.int64), classes, stochastic=True,
    )


def stoch_plan(history: History, wset: WeightedModelSet, config: PlannerConfig) -> Decision:
    if not wset:
        raise ValueError("planning needs a nonempty model set")
    return plan(history, stoch_belief(wset), config)


def stoch_choose_action(history: History, wset: WeightedModelSet, config: PlannerConfig) -> int:
    return stoch_plan(history, wset, config).action


# -- on-disk cache -------------------------------------------------------------


def save_stoch_cache(history: History, wset: WeightedModelSet, path: str | os.PathLike) -> None:
    """Write one ``machine word R weight`` line per member under the model-set header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write(_header(history, wset.k, wset.models.budget_factor) + "\n")
        for mi, wi, R, w in wset.members(MATERIALIZE_LIMIT):
            fh.write(f"{mi} {wi} {''.join(map(str, R)) or '-'} {rational_str(w)}\n")
        fh.write("end\n")
    os.replace(tmp, path)


def load_stoch_cache(
    history: History, k: int, budget_factor: int, path: str | os.PathLike
) -> WeightedModelSet | None:
    """Inverse of :func:`save_stoch_cache`; None when absent or keyed differently."""
    path = Path(path)
    if not path.exists():
        return None
    lines = path.read_text(encoding="ascii").split("\n")
    header = lines[0].split()
    if len(header) != 6 or header[0] != CACHE_VERSION:
        raise CacheFormatError(f"{path}: bad header {lines[0]!r}")
    if lines[0] != _header(history, k, budget_factor):
        return None
    if len(lines) < 3 or lines[-2] != "end" or lines[-1] != "":
        raise CacheFormatError(f"{path}: truncated record")
    members = []
    for no, line in enumerate(lines[1:-2], start=2):
        parts = line.split()
        if len(parts) != 4 or not (parts[0].isdigit() and parts[1].isdigit()):
            raise CacheFormatError(f"{path}:{no}: malformed record {line!r}")
        R = tuple(int(c) for c in parts[2]) if parts[2] != "-" else ()
        try:
            weight = Fraction(parts[3])
        except ValueError:
            raise CacheFormatError(f"{path}:{no}: bad weight {parts[3]!r}") from None
        members.append((int(parts[0]), int(parts[1]), R, weight))
    keys = [m[:3] for m in members]
    if keys != sorted(set(keys)):
        raise CacheFormatError(f"{path}: records not in canonical order")
    try:
        wset = weighted_set_from_members(history, k, budget_factor, [m[:3] for m in members])
    except ValueError as exc:
        raise CacheFormatError(f"{path}: {exc}") from None
    if [m[3] for m in members] != [m[3] for m in wset.members(MATERIALIZE_LIMIT)]:
        raise CacheFormatError(f"{path}: weights do not match the randomness words")
    return wset


def weighted_set_from_members(
    history: History, k: int, budget_factor: int, members: Sequence[tuple[int, int, tuple[int, ...]]]
) -> WeightedModelSet:
    """Set of explicit ``(machine index, word index, R)`` members that replay ``history``."""
    rows: dict[tuple, list[int]] = {}
    for mi, wi, R in members:
        if len(R) != len(history) or any(not 1 <= r <= k for r in R) or wi >= word_count(k):
            raise ValueError(f"record {mi} {wi} {R} does not fit k={k}, t={len(history)}")
        model = model_from_id(k, mi, wi)
        word = model.initial_word
        for (action, observation), r in zip(history.steps, R):
            out = eval_world_step(model, word, action, budget_factor, m=history.m, rand=r)
            if out.observation != observation:
                raise ValueError(f"record {mi} {wi} {R} does not replay the history")
            word = out.word
        code = 0
        for r in R:
            code = code * k + r - 1
        rows.setdefault((mi, wi, _counts(R, k), tuple(word)), []).append(code)
    keys = list(rows)
    flat, off = _pack([key[3] for key in keys])
    mset = ModelSet(
        k, history.n, history.m, budget_factor, len(history),
        np.array([machine_from_index(k, key[0]).digits for key in keys], np.int8).reshape(len(keys), entry_count(k)),
        np.array([key[1] for key in keys], np.int64), flat, off,
    )
    codes, r_off = _pack([sorted(rows[key]) for key in keys], np.int64)
    wset = WeightedModelSet(mset, np.array([key[2] for key in keys], np.int64).reshape(len(keys), k), codes, r_off)
    return _take(wset, _canonical_order(wset))


def _pack(seqs, dtype=np.int8) -> tuple[np.ndarray, np.ndarray]:
    off = np.zeros(len(seqs) + 1, np.int64)
    np.cumsum([len(s) for s in seqs], out=off[1:])
    return np.fromiter((x for s in seqs for x in s), dtype, count=int(off[-1])), off


# -- natural extension ---------------------------------------------------------


def _bits_history(omega: str) -> History:
    if not omega or set(omega) - {"0", "1"}:
        raise ValueError("omega must be a nonempty binary word")
    return History(1, 2, tuple((1, int(b) + 1) for b in omega))


class _PrefixCache:
    """Model sets of short prefixes, shared across many words."""

    def __init__(self, max_len: int) -> None:
        self.max_len = max_len
        self.sets: dict[tuple[int, tuple], ModelSet] = {}

    def find(self, history: History, k: int, budget_factor: int) -> ModelSet:
        steps = history.steps
        start = min(len(steps), self.max_len)
        while start > 0 and (k, steps[:start]) not in self.sets:
            start -= 1
        mset = self.sets.get((k, steps[:start])) if start else None
        if mset is None:
            mset = full_model_set(k, history.n, history.m, budget_factor)
        for i in range(start, len(steps)):
            mset = _advance(mset, *steps[i])
            if i + 1 <= self.max_len:
                self.sets[(k, steps[: i + 1])] = mset
            if not mset:
                break
        return mset


def natural_extension(
    omega: str,
    k_max: int,
    budget_factor: int = 1000,
    _cache: _PrefixCache | None = None,
) -> tuple[int, tuple[int, int, int]] | None:
    """Next bit predicted by the first model (in canonical order) generating ``omega``.

    Models that predict finish for the next bit are skipped.  Returns
    ``(bit, (k, machine index, word index))`` or None when no model of
    complexity up to ``k_max`` generates ``omega``.
    """
    history = _bits_history(omega)
    for k in range(max(history.n, history.m), k_max + 1):
        if _cache is not None:
            mset = _cache.find(history, k, budget_factor)
        else:
            mset = find_models(history, k, budget_factor)
        if not mset:
            continue
        firsts = []
        for obs in (1, 2):
            nxt = _advance(mset, 1, obs)
            first = nxt.min_id()
            if first is not None:
                firsts.append((first, obs))
        if firsts:
            (mi, wi), obs = min(firsts)
            return obs - 1, (k, mi, wi)
    return None


@dataclass(frozen=True)
class Stmt3Trial:
    word: str
    bit: int | None
    model: tuple[int, int, int] | None


@dataclass(frozen=True)
class Stmt3Summary:
    p: Fraction
    word_length: int
    trials: int
    mean: float | None
    ones: int
    no_model: int
    records: list[Stmt3Trial] = field(default_factory=list)

    @property
    def no_model_rate(self) -> float:
        return self.no_model / self.trials


def stmt3_experiment(
    p,
    word_length: int,
    trials: int,
    rng_seed: int,
    k_max: int,
    budget_factor: int = 1000,
    prefix_cache: int = 6,
) -> Stmt3Summary:
    """Draw Bernoulli(p) words and record the bit each one naturally extends to."""
    if trials < 1 or word_length < 1:
        raise ValueError("need at least one trial of a nonempty word")
    p = Fraction(p)
    rng = random.Random(rng_seed)
    cache = _PrefixCache(prefix_cache)
    records = []
    for _ in range(trials):
        word = "".join("1" if rng.random() < p else "0" for _ in range(word_length))
        found = natural_extension(word, k_max, budget_factor, _cache=cache)
        if found is None:
            records.append(Stmt3Trial(word, None, None))
        else:
            records.append(Stmt3Trial(word, found[0], found[1]))
    hits = [r.bit for r in records if r.bit is not None]
    mean = sum(hits) / len(hits) if hits else None
    return Stmt3Summary(p, word_length, trials, mean, sum(hits), trials - len(hits), records)
