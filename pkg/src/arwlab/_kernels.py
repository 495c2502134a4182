"""numba kernels for the hot loops.

The instruction hash here mirrors streams.py bit for bit (pinned by a test);
it is repeated because nopython kernels cannot call back into CPython.  All
kernels consume instructions through per-site cursor arrays so that the Python
layers and the kernels share one view of how far each stack has been read.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64, int64, float64

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)

# walk() exit reasons
REASON_LEFT = 0
REASON_RIGHT = 1
REASON_HOLE = 2
REASON_BUDGET = 3


@njit(uint64(uint64), cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * _M1
    z = (z ^ (z >> U64(27))) * _M2
    return z ^ (z >> U64(31))


@njit(float64(uint64, int64), cache=True, inline="always")
def _uniform_at(base, k):
    state = base + U64(k + 1) * _GOLDEN
    return (_mix64(state) >> U64(11)) * 2.0**-53


@njit(cache=True)
def walk(pos, hole, absorb_lo, absorb_hi, block_lo, block_hi,
         bases_single, bases_l, bases_r, cur_single, cur_l, cur_r,
         one_plus_lam, budget):
    """Move one walker until it hits an absorbing end or the hole site.

    Arrays are indexed by absolute site.  Sites strictly left of block_lo read
    the R lane (the walker came from the block on their right), sites strictly
    right of block_hi read the L lane, block sites read the single lane.
    Sleep instructions are consumed with no effect: on these walks the walker
    always shares its site with a resting particle.  Pass a negative `hole`
    to disable the hole stop.

    Returns (reason, pos, min_visited, max_visited, topplings).
    """
    mn = pos
    mx = pos
    n = 0
    while True:
        if pos == absorb_lo:
            return REASON_LEFT, pos, mn, mx, n
        if pos == absorb_hi:
            return REASON_RIGHT, pos, mn, mx, n
        if pos == hole:
            return REASON_HOLE, pos, mn, mx, n
        if n >= budget:
            return REASON_BUDGET, pos, mn, mx, n
        if pos < block_lo:
            b = bases_r[pos]
            k = cur_r[pos]
            cur_r[pos] = k + 1
        elif pos > block_hi:
            b = bases_l[pos]
            k = cur_l[pos]
            cur_l[pos] = k + 1
        else:
            b = bases_single[pos]
            k = cur_single[pos]
            cur_single[pos] = k + 1
        r = _uniform_at(b, k) * one_plus_lam
        n += 1
        if r < 0.5:
            pos += 1
            if pos > mx:
                mx = pos
        elif r < 1.0:
            pos -= 1
            if pos < mn:
                mn = pos
        # else: sleep, no effect


@njit(cache=True)
def stabilize(states, bases, one_plus_lam, absorb, budget):
    """Topple until no site holds an active particle.

    states: int64 per site, -1 = one sleeping particle, k >= 0 = k active.
    Boundary: absorb=True removes particles stepping outside (tallied),
    absorb=False leaves them in place (instruction still consumed).

    Internal toppling order is a LIFO worklist; by the abelian property the
    returned configuration, odometer and cursors do not depend on it.

    Returns (odometer, cursors, exit_left, exit_right, total, completed).
    """
    n = states.size
    odo = np.zeros(n, np.int64)
    cur = np.zeros(n, np.int64)
    stack = np.empty(n, np.int64)
    in_stack = np.zeros(n, np.bool_)
    top = 0
    exit_left = 0
    exit_right = 0
    total = 0
    for x in range(n):
        if states[x] >= 1:
            stack[top] = x
            top += 1
            in_stack[x] = True
    while top > 0:
        top -= 1
        x = stack[top]
        in_stack[x] = False
        while states[x] >= 1:
            if total >= budget:
                return odo, cur, exit_left, exit_right, total, False
            k = cur[x]
            cur[x] = k + 1
            r = _uniform_at(bases[x], k) * one_plus_lam
            odo[x] += 1
            total += 1
            if r < 0.5:
                y = x + 1
                if y < n:
                    states[x] -= 1
                    s = states[y]
                    states[y] = 2 if s == -1 else s + 1
                    if not in_stack[y]:
                        stack[top] = y
                        top += 1
                        in_stack[y] = True
                elif absorb:
                    states[x] -= 1
                    exit_right += 1
            elif r < 1.0:
                y = x - 1
                if y >= 0:
                    states[x] -= 1
                    s = states[y]
                    states[y] = 2 if s == -1 else s + 1
                    if not in_stack[y]:
                        stack[top] = y
                        top += 1
                        in_stack[y] = True
                elif absorb:
                    states[x] -= 1
                    exit_left += 1
            else:
                if states[x] == 1:
                    states[x] = -1
    return odo, cur, exit_left, exit_right, total, True


@njit(cache=True)
def excursion_max_batch(base, n_excursions, cap):
    """Simulate SRW excursions from 0, record the max distance reached.

    Walks are absorbed early once the max reaches `cap`; those land in the
    counts[cap] bucket, so counts[z] for z < cap follow the exact excursion
    law.  Returns an int64 histogram of length cap + 1 (index 0 unused).
    """
    counts = np.zeros(cap + 1, np.int64)
    k = 0
    for _ in range(n_excursions):
        pos = 0
        m = 0
        while True:
            u = _uniform_at(base, k)
            k += 1
            if u < 0.5:
                pos += 1
            else:
                pos -= 1
            ab = -pos if pos < 0 else pos
            if ab > m:
                m = ab
            if m >= cap:
                counts[cap] += 1
                break
            if pos == 0:
                counts[m] += 1
                break
    return counts


def warmup() -> None:
    """Trigger compilation of all kernels on tiny inputs."""
    z = np.zeros(4, np.int64)
    z[1] = 1
    b = np.zeros(4, np.uint64)
    c = np.zeros(4, np.int64)
    stabilize(z.copy(), b, 1.5, True, 1000)
    stabilize(z.copy(), b, 1.5, False, 1000)
    walk(1, -1, 0, 3, 1, 2, b, b, b, c.copy(), c.copy(), c.copy(), 1.5, 1000)
    excursion_max_batch(np.uint64(1), 4, 3)
    _uniform_at(np.uint64(1), 0)
