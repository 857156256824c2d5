"""Compiled world-step expansion over partially specified transition tables.

A row of ``tables`` may contain -1 ("not yet fixed") in any entry.  The row
stands for every completion of its free entries.  Running one world step on
such a row branches over all options of a free entry the first time the
machine reads it, so each emitted leaf is again a partial table whose free
entries were never consulted; every completion of a leaf behaves identically.

Loops are cut short only when non-halting is certain from fixed entries
(repeated configuration, blank-tape runaway, no reachable HALT), which gives
the same outcome as running out the step budget.
"""

from __future__ import annotations

import numpy as np
from numba import njit

WILD = -1


@njit(cache=True)
def _grow1(arr, size):
    out = np.empty(size, arr.dtype)
    out[: len(arr)] = arr
    return out


@njit(cache=True)
def _grow2(arr, rows):
    out = np.empty((rows, arr.shape[1]), arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True)
def _expand(
    k, m, budget, tables, words, word_off, action, rand, target, emit_finish,
    cap_leaves, cap_words,
):
    K1 = k + 1
    E = k * K1
    B = 2 * K1 * K1
    n_rows = tables.shape[0]

    maxw = 0
    for p in range(n_rows):
        w = word_off[p + 1] - word_off[p]
        if w > maxw:
            maxw = w
    T = 2 * budget + maxw + 8
    c0 = budget + 4
    S = E * (B - 1) + 2

    st_table = np.empty((S, E), np.int8)
    st_tape = np.empty((S, T), np.int8)
    st_head = np.empty(S, np.int64)
    st_state = np.empty(S, np.int64)
    st_steps = np.empty(S, np.int64)
    st_lo = np.empty(S, np.int64)
    st_hi = np.empty(S, np.int64)

    tape = np.zeros(T, np.int8)
    snap = np.zeros(T, np.int8)
    table = np.empty(E, np.int8)
    lsnap = np.zeros(T, np.int8)
    rsnap = np.zeros(T, np.int8)
    a_state = np.empty(2, np.int64)
    a_count = np.empty(2, np.int64)
    a_next = np.empty(2, np.int64)
    a_x = np.empty(2, np.int64)
    a_max = np.empty(2, np.int64)
    a_min = np.empty(2, np.int64)
    a_lo = np.empty(2, np.int64)
    a_hi = np.empty(2, np.int64)

    out_parent = np.empty(cap_leaves, np.int64)
    out_table = np.empty((cap_leaves, E), np.int8)
    out_obs = np.empty(cap_leaves, np.int8)
    out_steps = np.empty(cap_leaves, np.int64)
    out_woff = np.zeros(cap_leaves + 1, np.int64)
    out_words = np.empty(cap_words, np.int8)
    n_out = 0
    n_w = 0
    finish_leaves = 0
    overflow = False
    lo_prev = 0
    hi_prev = T - 1

    for p in range(n_rows):
        if overflow:
            break
        start = word_off[p]
        wlen = word_off[p + 1] - start
        lo = c0 - 1 if rand > 0 else c0
        hi = c0 + wlen
        for i in range(lo, hi + 1):
            st_tape[0, i] = 0
        if rand > 0:
            st_tape[0, c0 - 1] = rand
        st_tape[0, c0] = action
        for i in range(wlen):
            st_tape[0, c0 + 1 + i] = words[start + i]
        for e in range(E):
            st_table[0, e] = tables[p, e]
        st_head[0] = c0
        st_state[0] = 0
        st_steps[0] = 0
        st_lo[0] = lo
        st_hi[0] = hi
        sp = 1

        while sp > 0:
            sp -= 1
            for i in range(lo_prev, hi_prev + 1):
                tape[i] = 0
            lo = st_lo[sp]
            hi = st_hi[sp]
            for i in range(lo, hi + 1):
                tape[i] = st_tape[sp, i]
            lo_prev = lo
            hi_prev = hi
            n_wild = 0
            n_halt = 0
            for e in range(E):
                table[e] = st_table[sp, e]
                if table[e] < 0:
                    n_wild += 1
                elif table[e] % K1 == k:
                    n_halt += 1
            head = st_head[sp]
            state = st_state[sp]
            steps = st_steps[sp]

            snap_at = 1
            local = 0
            s_state = -1
            s_head = 0
            s_lo = 0
            s_hi = -1
            for d in range(2):
                a_state[d] = -1
                a_count[d] = 0
                a_next[d] = 1
                a_max[d] = -1
                a_min[d] = T
            result = -2  # -2 running, -1 branched, 0 finish, >0 observation
            while True:
                if steps >= budget:
                    result = 0
                    break
                if n_wild == 0 and n_halt == 0:
                    result = 0
                    break
                sym = tape[head]
                e = state * K1 + sym
                opt = table[e]
                if opt < 0:
                    if sp + B > S:
                        overflow = True
                        break
                    for o in range(B - 1, -1, -1):
                        for j in range(E):
                            st_table[sp, j] = table[j]
                        st_table[sp, e] = o
                        for i in range(lo, hi + 1):
                            st_tape[sp, i] = tape[i]
                        st_head[sp] = head
                        st_state[sp] = state
                        st_steps[sp] = steps
                        st_lo[sp] = lo
                        st_hi[sp] = hi
                        sp += 1
                    result = -1
                    break
                write = opt // (2 * K1)
                mv = (opt // K1) % 2
                nxt = opt % K1
                tape[head] = write
                if head < lo:
                    lo = head
                if head > hi:
                    hi = head
                if mv == 1:
                    head += 1
                else:
                    head -= 1
                steps += 1
                local += 1
                if nxt == k:
                    s = tape[head]
                    if s >= 1 and s <= m:
                        result = s
                    else:
                        result = 0
                    break
                state = nxt

                # exact repetition of a whole configuration
                if state == s_state and head == s_head:
                    same = True
                    for i in range(lo, hi + 1):
                        v = snap[i] if (i >= s_lo and i <= s_hi) else 0
                        if tape[i] != v:
                            same = False
                            break
                    if same:
                        result = 0
                        break
                if local == snap_at:
                    snap_at *= 2
                    s_state = state
                    s_head = head
                    s_lo = lo
                    s_hi = hi
                    for i in range(lo, hi + 1):
                        snap[i] = tape[i]

                # translated cycle: same state at successive new extremes,
                # with the window the head revisited unchanged
                if head > a_max[0]:
                    a_max[0] = head
                if head < a_min[1]:
                    a_min[1] = head
                if head < lo or head > hi:
                    d = 0 if head < lo else 1
                    if a_state[d] == state:
                        same = True
                        if d == 0:
                            span = a_max[0] - a_x[0]
                            for i in range(span + 1):
                                pos = a_x[0] + i
                                v = lsnap[pos] if pos <= a_hi[0] else 0
                                if tape[head + i] != v:
                                    same = False
                                    break
                        else:
                            span = a_x[1] - a_min[1]
                            for i in range(span + 1):
                                pos = a_x[1] - i
                                v = rsnap[pos] if pos >= a_lo[1] else 0
                                if tape[head - i] != v:
                                    same = False
                                    break
                        if same:
                            result = 0
                            break
                    a_count[d] += 1
                    if a_count[d] == a_next[d]:
                        a_next[d] *= 2
                        a_count[d] = 0
                        a_state[d] = state
                        a_x[d] = head
                        if d == 0:
                            a_max[0] = head
                            a_hi[0] = hi
                            for i in range(head, hi + 1):
                                lsnap[i] = tape[i]
                        else:
                            a_min[1] = head
                            a_lo[1] = lo
                            for i in range(lo, head + 1):
                                rsnap[i] = tape[i]

                # head in untouched blank territory, drifting forever
                if head > hi or head < lo:
                    right = head > hi
                    q = state
                    seen = 0
                    endless = False
                    while True:
                        bit = 1 << q
                        if seen & bit:
                            endless = True
                            break
                        seen |= bit
                        o2 = table[q * K1]
                        if o2 < 0 or o2 % K1 == k:
                            break
                        if ((o2 // K1) % 2 == 1) != right:
                            break
                        q = o2 % K1
                    if endless:
                        result = 0
                        break

            lo_prev = lo
            hi_prev = hi
            if overflow:
                break
            if result == -1:
                continue
            if result == 0:
                finish_leaves += 1
                if not emit_finish or target > 0:
                    continue
            elif target > 0 and result != target:
                continue
            if n_out >= cap_leaves:
                cap_leaves *= 2
                out_parent = _grow1(out_parent, cap_leaves)
                out_obs = _grow1(out_obs, cap_leaves)
                out_steps = _grow1(out_steps, cap_leaves)
                out_woff = _grow1(out_woff, cap_leaves + 1)
                out_table = _grow2(out_table, cap_leaves)
            wl = 0
            if result > 0:
                i = head + 1
                while i < T and tape[i] != 0:
                    wl += 1
                    i += 1
            if n_w + wl > cap_words:
                cap_words = 2 * (n_w + wl)
                out_words = _grow1(out_words, cap_words)
            out_parent[n_out] = p
            for j in range(E):
                out_table[n_out, j] = table[j]
            out_obs[n_out] = result
            out_steps[n_out] = steps
            for i in range(wl):
                out_words[n_w + i] = tape[head + 1 + i]
            n_w += wl
            out_woff[n_out + 1] = n_w
            n_out += 1

    return (
        overflow, n_out, out_parent[:n_out], out_table[:n_out], out_obs[:n_out],
        out_steps[:n_out], out_woff[: n_out + 1], out_words[:n_w], finish_leaves,
    )


def expand(
    k: int,
    m: int,
    budget: int,
    tables: np.ndarray,
    words: np.ndarray,
    word_off: np.ndarray,
    action: int,
    rand: int = 0,
    target: int = 0,
    emit_finish: bool = False,
):
    """Run one world step on every row, branching on free entries.

    Returns ``(parent, tables, obs, steps, word_off, words)`` for the emitted
    leaves.  With ``target > 0`` only leaves observing ``target`` are kept;
    otherwise finish leaves are kept only when ``emit_finish`` is set.
    """
    cap = max(1024, 2 * len(tables))
    cap_w = max(4096, 2 * int(len(words)) + 16)
    tables = np.ascontiguousarray(tables, dtype=np.int8)
    words = np.ascontiguousarray(words, dtype=np.int8)
    word_off = np.ascontiguousarray(word_off, dtype=np.int64)
    while True:
        res = _expand(
            k, m, budget, tables, words, word_off, action, rand, target,
            emit_finish, cap, cap_w,
        )
        if not res[0]:
            _, _, parent, out_tables, obs, steps, woff, out_words, _ = res
            return parent, out_tables, obs, steps, woff, out_words
        cap *= 4
        cap_w *= 4
