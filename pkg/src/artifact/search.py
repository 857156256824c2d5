"""Finding the world models of complexity k that explain a history.

A :class:`ModelSet` is stored as rows of partially specified transition
tables.  A row with ``w`` free entries stands for ``option_base(k) ** w``
machines that all replay the history identically, so the set of all 238M
models at k=2 is seven rows, and counts stay exact without materializing ids.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from artifact import _kernel
from artifact.turing import (
    FINISH,
    DetWorldModel,
    check_capacity,
    entry_count,
    enumerate_words,
    eval_world_step,
    machine_from_index,
    option_base,
    word_count,
    word_from_index,
    word_index,
)

__all__ = [
    "History",
    "ModelSet",
    "SearchParams",
    "CacheFormatError",
    "CACHE_VERSION",
    "full_model_set",
    "is_consistent",
    "find_models",
    "find_min_k",
    "refine_models",
    "successor_partition",
    "save_cache",
    "load_cache",
    "cache_path",
]

CACHE_VERSION = "v1"
#: Largest set whose member ids may be materialized in one go.
MATERIALIZE_LIMIT = 2_000_000


@dataclass(frozen=True)
class History:
    """Alternating actions and observations a1, o1, ..., at, ot.

    Actions are 1..n.  Observations are positive; one above m is legal but
    no model can produce it.  A FINISH observation may only close the history.
    """

    n: int
    m: int
    steps: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("alphabets must be nonempty")
        for i, (a, o) in enumerate(self.steps):
            if not 1 <= a <= self.n:
                raise ValueError(f"action {a} outside 1..{self.n}")
            if o == FINISH and i != len(self.steps) - 1:
                raise ValueError("finish may only close a history")
            if o != FINISH and o < 1:
                raise ValueError(f"observation {o} is neither finish nor positive")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def actions(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.steps)

    @property
    def observations(self) -> tuple[int, ...]:
        return tuple(o for _, o in self.steps)

    @property
    def closed(self) -> bool:
        return bool(self.steps) and self.steps[-1][1] == FINISH

    def extend(self, action: int, observation: int) -> History:
        if self.closed:
            raise ValueError("history already ended with finish")
        return History(self.n, self.m, self.steps + ((action, observation),))

    def prefix(self, t: int) -> History:
        return History(self.n, self.m, self.steps[:t])

    def digest(self) -> str:
        text = f"{self.n} {self.m} " + " ".join(f"{a},{o}" for a, o in self.steps)
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def parse(cls, text: str, n: int, m: int) -> History:
        """Parse ``"1:1 2:1"`` (action:observation pairs); ``f`` is finish."""
        steps = []
        for tok in text.replace(",", " ").split():
            a, o = tok.split(":")
            steps.append((int(a), FINISH if o in ("f", "finish") else int(o)))
        return cls(n, m, tuple(steps))


@dataclass(frozen=True)
class SearchParams:
    k_max: int
    budget_factor: int = 1000


def _pack_words(words: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    off = np.zeros(len(words) + 1, np.int64)
    np.cumsum([len(w) for w in words], out=off[1:])
    flat = np.fromiter((s for w in words for s in w), np.int8, count=int(off[-1]))
    return flat, off


@dataclass(frozen=True, eq=False)
class ModelSet:
    """Equally weighted models of complexity k consistent with a history.

    ``tables`` holds one partial table per row (-1 = free entry), ``word_ids``
    the initial word index, and ``words``/``word_off`` the state word each
    row has reached after the history.
    """

    k: int
    n: int
    m: int
    budget_factor: int
    t: int
    tables: np.ndarray
    word_ids: np.ndarray
    words: np.ndarray
    word_off: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.tables, self.word_ids, self.words, self.word_off):
            arr.setflags(write=False)

    # -- size ---------------------------------------------------------------

    @property
    def rows(self) -> int:
        return len(self.tables)

    @property
    def free_counts(self) -> np.ndarray:
        return (self.tables < 0).sum(axis=1)

    def row_sizes(self) -> list[int]:
        base = option_base(self.k)
        return [base ** int(w) for w in self.free_counts]

    def __len__(self) -> int:
        if not self.rows:
            return 0
        base = option_base(self.k)
        hist = np.bincount(self.free_counts, minlength=1)
        return sum(int(c) * base**w for w, c in enumerate(hist))

    def __bool__(self) -> bool:
        return self.rows > 0

    @property
    def weights(self):
        """Every member carries weight 1/|M|."""
        from fractions import Fraction

        return Fraction(1, len(self)) if self.rows else None

    # -- members ------------------------------------------------------------

    def state_word(self, row: int) -> tuple[int, ...]:
        return tuple(int(s) for s in self.words[self.word_off[row] : self.word_off[row + 1]])

    def _row_ids(self, row: int) -> Iterator[tuple[int, int]]:
        base = option_base(self.k)
        digits = self.tables[row]
        free = [i for i, d in enumerate(digits) if d < 0]
        fixed = 0
        for d in digits:
            fixed = fixed * base + max(int(d), 0)
        E = len(digits)
        weights = [base ** (E - 1 - i) for i in free]
        wid = int(self.word_ids[row])
        for combo in np.ndindex(*([base] * len(free))):
            yield fixed + sum(c * w for c, w in zip(combo, weights)), wid

    def member_ids(self, limit: int = MATERIALIZE_LIMIT) -> list[tuple[int, int]]:
        """Canonically ordered (machine index, word index) pairs."""
        from artifact.turing import CapacityError

        if len(self) > limit:
            raise CapacityError(f"{len(self)} members exceed materialization limit {limit}")
        ids = [i for r in range(self.rows) for i in self._row_ids(r)]
        ids.sort()
        return ids

    def first_ids(self, count: int) -> list[tuple[int, int]]:
        """The ``count`` canonically smallest (machine index, word index) pairs."""
        streams = (itertools.islice(self._row_ids(r), count) for r in range(self.rows))
        return list(itertools.islice(heapq.merge(*streams), count))

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.member_ids())

    def models(self, limit: int = MATERIALIZE_LIMIT) -> list[DetWorldModel]:
        return [
            DetWorldModel(machine_from_index(self.k, mi), word_from_index(self.k, wi))
            for mi, wi in self.member_ids(limit)
        ]

    def min_id(self) -> tuple[int, int] | None:
        """Smallest member id without materializing the set."""
        if not self.rows:
            return None
        base = option_base(self.k)
        best = None
        for row in range(self.rows):
            idx = 0
            for d in self.tables[row]:
                idx = idx * base + max(int(d), 0)
            cand = (idx, int(self.word_ids[row]))
            if best is None or cand < best:
                best = cand
        return best

    def _canonical(self) -> tuple:
        if not self.rows:
            return ()
        keys = [self.word_ids] + [self.tables[:, j] for j in reversed(range(self.tables.shape[1]))]
        order = np.lexsort(keys)
        return tuple(
            (tuple(self.tables[i].tolist()), int(self.word_ids[i]))
            for i in order
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelSet):
            return NotImplemented
        head = (self.k, self.n, self.m, self.budget_factor)
        if head != (other.k, other.n, other.m, other.budget_factor):
            return False
        if len(self) != len(other):
            return False
        if self._canonical() == other._canonical():
            return True
        return self.member_ids() == other.member_ids()

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"ModelSet(k={self.k}, t={self.t}, size={len(self)}, rows={self.rows})"

    # -- construction helpers -------------------------------------------------

    def take(self, mask_or_index) -> ModelSet:
        """Sub-set of rows (boolean mask or index array), keeping state words."""
        sel = np.asarray(mask_or_index)
        idx = np.flatnonzero(sel) if sel.dtype == bool else sel.astype(np.int64)
        words, off = gather_ragged(self.words, self.word_off, np.asarray(idx, np.int64))
        return ModelSet(
            self.k, self.n, self.m, self.budget_factor, self.t,
            self.tables[idx].copy(), self.word_ids[idx].copy(), words, off,
        )


def _check_alphabets(k: int, n: int, m: int) -> None:
    check_capacity(k)
    if k < max(n, m):
        raise ValueError(f"k={k} cannot represent n={n} actions and m={m} observations")


def full_model_set(k: int, n: int, m: int, budget_factor: int = 1000) -> ModelSet:
    """Every model of complexity k, one row per initial word."""
    _check_alphabets(k, n, m)
    words = list(enumerate_words(k))
    flat, off = _pack_words(words)
    tables = np.full((len(words), entry_count(k)), _kernel.WILD, np.int8)
    return ModelSet(
        k, n, m, budget_factor, 0, tables, np.arange(len(words), dtype=np.int64), flat, off
    )


def rewind(mset: ModelSet) -> ModelSet:
    """The same members with state words reset to their initial words (t = 0)."""
    flat, off = _pack_words(list(enumerate_words(mset.k)))
    words, woff = gather_ragged(flat, off, mset.word_ids)
    return ModelSet(mset.k, mset.n, mset.m, mset.budget_factor, 0, mset.tables, mset.word_ids, words, woff)


def gather_ragged(
    flat: np.ndarray, off: np.ndarray, rows: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Pick ``rows`` out of a ragged array stored as ``flat`` plus offsets."""
    lens = off[rows + 1] - off[rows]
    new_off = np.zeros(len(rows) + 1, np.int64)
    np.cumsum(lens, out=new_off[1:])
    if not new_off[-1]:
        return flat[:0].copy(), new_off
    shift = np.repeat(off[rows] - new_off[:-1], lens)
    return flat[np.arange(new_off[-1]) + shift], new_off


def _advance(mset: ModelSet, action: int, observation: int) -> ModelSet:
    """Rows (split as needed) whose next outcome under ``action`` is ``observation``."""
    if not mset.rows or observation > mset.m:
        return _empty_like(mset, mset.t + 1)
    parent, tables, obs, _, woff, words = _kernel.expand(
        mset.k, mset.m, mset.budget_factor * mset.k, mset.tables, mset.words,
        mset.word_off, action, target=observation, emit_finish=observation == FINISH,
    )
    if observation == FINISH:
        keep = np.flatnonzero(obs == FINISH)
        parent, tables = parent[keep], tables[keep]
        words, woff = gather_ragged(words, woff, keep)
    return ModelSet(
        mset.k, mset.n, mset.m, mset.budget_factor, mset.t + 1,
        tables, mset.word_ids[parent], words, woff,
    )


def _empty_like(mset: ModelSet, t: int) -> ModelSet:
    return ModelSet(
        mset.k, mset.n, mset.m, mset.budget_factor, t,
        np.zeros((0, entry_count(mset.k)), np.int8), np.zeros(0, np.int64),
        np.zeros(0, np.int8), np.zeros(1, np.int64),
    )


def is_consistent(
    model: DetWorldModel, history: History, budget_factor: int = 1000
) -> bool:
    """Replay ``history`` through ``model`` with the reference simulator."""
    word: Sequence[int] = model.initial_word
    for action, observation in history.steps:
        out = eval_world_step(model, word, action, budget_factor, m=history.m)
        if out.observation != observation:
            return False
        word = out.word
    return True


def find_models(history: History, k: int, budget_factor: int = 1000) -> ModelSet:
    """All models of complexity k whose replay reproduces ``history``."""
    mset = full_model_set(k, history.n, history.m, budget_factor)
    for action, observation in history.steps:
        mset = _advance(mset, action, observation)
        if not mset:
            return _empty_like(mset, len(history))
    return mset


def find_min_k(history: History, params: SearchParams) -> tuple[int, ModelSet] | None:
    """Smallest k with a nonempty model set, or None when no k <= k_max works."""
    for k in range(max(history.n, history.m), params.k_max + 1):
        mset = find_models(history, k, params.budget_factor)
        if mset:
            return k, mset
    return None


def refine_models(
    mset: ModelSet,
    history: History,
    new_step: tuple[int, int],
    budget_factor: int | None = None,
) -> ModelSet:
    """Extend ``find_models(history)`` by one step using cached state words."""
    if budget_factor is not None and budget_factor != mset.budget_factor:
        raise ValueError("budget factor differs from the one the set was built with")
    if mset.t != len(history):
        raise ValueError(f"set was built for t={mset.t}, history has t={len(history)}")
    return _advance(mset, *new_step)


def successor_partition(
    mset: ModelSet,
    history: History,
    action: int,
    budget_factor: int | None = None,
) -> dict[int, ModelSet]:
    """Split the set by predicted next observation (FINISH included)."""
    if budget_factor is not None and budget_factor != mset.budget_factor:
        raise ValueError("budget factor differs from the one the set was built with")
    parent, tables, obs, _, woff, words = _kernel.expand(
        mset.k, mset.m, mset.budget_factor * mset.k, mset.tables, mset.words,
        mset.word_off, action, emit_finish=True,
    )
    split = ModelSet(
        mset.k, mset.n, mset.m, mset.budget_factor, mset.t + 1,
        tables, mset.word_ids[parent], words, woff,
    )
    return {int(o): split.take(obs == o) for o in sorted(set(obs.tolist()))}


# -- on-disk cache -------------------------------------------------------------


class CacheFormatError(ValueError):
    """The cache file exists but is not a well-formed record."""


def cache_path(directory: str | os.PathLike | None, history: History, k: int, budget_factor: int) -> Path:
    base = Path(directory or os.environ.get("OCCAM_CACHE_DIR", ".occam-cache"))
    return base / f"{history.digest()[:24]}-k{k}-b{budget_factor}.models"


def _header(history: History, k: int, budget_factor: int) -> str:
    return f"{CACHE_VERSION} {k} {budget_factor} {history.n} {history.m} {history.digest()}"


def save_cache(history: History, mset: ModelSet, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write(_header(history, mset.k, mset.budget_factor) + "\n")
        for mi, wi in mset.member_ids():
            fh.write(f"{mi} {wi}\n")
        fh.write("end\n")
    os.replace(tmp, path)


def load_cache(
    history: History, k: int, budget_factor: int, path: str | os.PathLike
) -> ModelSet | None:
    """Load a saved set; None when the file is absent or keyed differently."""
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
    ids = []
    for no, line in enumerate(lines[1:-2], start=2):
        parts = line.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise CacheFormatError(f"{path}:{no}: malformed record {line!r}")
        ids.append((int(parts[0]), int(parts[1])))
    if ids != sorted(set(ids)):
        raise CacheFormatError(f"{path}: records not in canonical order")
    if any(wi >= word_count(k) for _, wi in ids):
        raise CacheFormatError(f"{path}: word index out of range")
    return _from_ids(history, k, budget_factor, ids)


def _from_ids(
    history: History, k: int, budget_factor: int, ids: Iterable[tuple[int, int]]
) -> ModelSet:
    ids = list(ids)
    machines = [machine_from_index(k, mi).digits for mi, _ in ids]
    words = [word_from_index(k, wi) for _, wi in ids]
    flat, off = _pack_words(words)
    mset = ModelSet(
        k, history.n, history.m, budget_factor, 0,
        np.array(machines, np.int8).reshape(len(ids), entry_count(k)),
        np.array([wi for _, wi in ids], np.int64), flat, off,
    )
    for action, observation in history.steps:
        mset = _advance(mset, action, observation)
    if len(mset) != len(ids):
        raise CacheFormatError("cached models do not replay the history")
    return mset


def model_set_from_models(
    history: History, models: Sequence[DetWorldModel], budget_factor: int = 1000
) -> ModelSet:
    """Build a set from explicit models, keeping only those consistent with ``history``."""
    k = models[0].k if models else max(history.n, history.m)
    ids = sorted({(m.id[1], word_index(k, m.initial_word)) for m in models})
    consistent = [
        i for i, mdl in zip(ids, (DetWorldModel(machine_from_index(k, a), word_from_index(k, b)) for a, b in ids))
        if is_consistent(mdl, history, budget_factor)
    ]
    return _from_ids(history, k, budget_factor, consistent)
