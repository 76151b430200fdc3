"""Hot loops for the walk simulations, jitted when numba is available.

A xoshiro256** generator is inlined in the kernels (one 4-word state per
replicate, derived in `_rng`); each draw consumes exactly one 64-bit word,
split as in `StepLaw.sample`: bit 0 is the sign coin, the top 53 bits map to
a uniform in (0, 1] feeding the magnitude inverse CDF.  The pure-Python
mirrors (`Xoshiro256`, `jump_from_word`, `difference_walks_py`, and
`coalesce.CoalescenceFrontier`) consume identical word streams and exist
both as fallbacks when numba is missing and as reference implementations
the jitted paths are tested against.

Positions live in int64: jump magnitudes are capped at 2**62 and any line
whose position passes 2**61 in magnitude is retired as escaped (sum of the
two stays below 2**63, so arithmetic never overflows).
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

HAVE_NUMBA = njit is not None

MAGNITUDE_CAP = 1 << 62
ESCAPE_LIMIT = 1 << 61

_MASK64 = (1 << 64) - 1
_CAP_F = float(MAGNITUDE_CAP)

# outcome codes shared by the difference-walk kernels
HIT, RETIRED, TIMED_OUT = 0, 1, 2

_U1 = np.uint64(1)
_U5 = np.uint64(5)
_U7 = np.uint64(7)
_U9 = np.uint64(9)
_U11 = np.uint64(11)
_U17 = np.uint64(17)
_U19 = np.uint64(19)
_U45 = np.uint64(45)
_U57 = np.uint64(57)


def law_params(law) -> tuple[float, float, bool, float]:
    """Scalar parameters ``(alpha, c0, is_log, two_t1)`` a kernel needs from a law."""
    is_log = law.slowly_varying_kind == "log_corrected"
    return law.alpha, law.per_side_tail_constant, is_log, 2.0 * float(law.tail(1))


class Xoshiro256:
    """Pure-Python xoshiro256**, word-for-word equal to the jitted stepper."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, state) -> None:
        s = [int(x) & _MASK64 for x in state]
        if not any(s):
            s[0] = 1
        self.s0, self.s1, self.s2, self.s3 = s

    def next_word(self) -> int:
        x = (self.s1 * 5) & _MASK64
        result = ((((x << 7) | (x >> 57)) & _MASK64) * 9) & _MASK64
        t = (self.s1 << 17) & _MASK64
        self.s2 ^= self.s0
        self.s3 ^= self.s1
        self.s1 ^= self.s2
        self.s0 ^= self.s3
        self.s2 ^= t
        self.s3 = ((self.s3 << 45) | (self.s3 >> 19)) & _MASK64
        return result


def magnitude_from_word_uniform(u: float, alpha: float, c0: float,
                                is_log: bool) -> int:
    """Scalar inverse-CDF magnitude, mirroring ``StepLaw.magnitude_from_uniform``."""
    if not is_log:
        two_c0 = 2.0 * c0
        if u > two_c0:
            return 0
        m = (two_c0 / u) ** (1.0 / alpha)
        return MAGNITUDE_CAP if m >= _CAP_F else int(m)
    two_t1 = 2.0 * c0 * (1.0 + 1.0 / math.log(math.e + 1.0))
    if u > two_t1:
        return 0
    lo, hi = 1, MAGNITUDE_CAP
    for _ in range(64):
        mid = lo + (hi - lo + 1) // 2
        tail2 = 2.0 * c0 * (1.0 + 1.0 / math.log(math.e + float(mid))) * float(mid) ** (-alpha)
        if tail2 >= u:
            lo = mid
        else:
            hi = mid - 1
        if hi <= lo:
            break
    return lo


def jump_from_word(word: int, alpha: float, c0: float, is_log: bool) -> int:
    """Signed jump from one 64-bit word (sign bit 0, uniform from bits 11+)."""
    u = (float(word >> 11) + 1.0) * 2.0 ** -53
    mag = magnitude_from_word_uniform(u, alpha, c0, is_log)
    return -mag if word & 1 else mag


# -- jitted core ---------------------------------------------------------------
#
# The functions below are written in the numba-compatible subset and rebound
# through njit at import time when numba is present.


def _xo(s0, s1, s2, s3):
    x = s1 * _U5
    r = ((x << _U7) | (x >> _U57)) * _U9
    t = s1 << _U17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << _U45) | (s3 >> _U19)
    return r, s0, s1, s2, s3


def _word_jump(word, alpha, c0, is_log, two_t1):
    u = (np.float64(word >> _U11) + 1.0) * 2.0 ** -53
    mag = np.int64(0)
    if not is_log:
        two_c0 = 2.0 * c0
        if u <= two_c0:
            m = (two_c0 / u) ** (1.0 / alpha)
            if m >= 4.611686018427387904e18:
                mag = np.int64(4611686018427387904)
            else:
                mag = np.int64(m)
    elif u <= two_t1:
        lo = np.int64(1)
        hi = np.int64(4611686018427387904)
        for _ in range(64):
            mid = lo + (hi - lo + np.int64(1)) // np.int64(2)
            t2 = 2.0 * c0 * (1.0 + 1.0 / np.log(np.e + np.float64(mid))) \
                * np.float64(mid) ** (-alpha)
            if t2 >= u:
                lo = mid
            else:
                hi = mid - np.int64(1)
            if hi <= lo:
                break
        mag = lo
    if word & _U1:
        return -mag
    return mag


def _difference_walks(states, k0, t_max, radius, alpha, c0, is_log, two_t1):
    """Difference walks D_0 = k0, increments J - J'; returns outcome counts.

    counts[0] = hit 0, counts[1] = retired at |D| >= radius,
    counts[2] = still live at t_max; steps is the total step count.
    """
    counts = np.zeros(3, np.int64)
    steps = 0
    for i in range(states.shape[0]):
        s0 = states[i, 0]
        s1 = states[i, 1]
        s2 = states[i, 2]
        s3 = states[i, 3]
        d = k0
        outcome = 2
        for _ in range(t_max):
            w, s0, s1, s2, s3 = _xo(s0, s1, s2, s3)
            j1 = _word_jump(w, alpha, c0, is_log, two_t1)
            w, s0, s1, s2, s3 = _xo(s0, s1, s2, s3)
            j2 = _word_jump(w, alpha, c0, is_log, two_t1)
            d += j1 - j2
            steps += 1
            if d == 0:
                outcome = 0
                break
            if d >= radius or d <= -radius:
                outcome = 1
                break
        counts[outcome] += 1
    return counts, steps


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


def _union(parent, size, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return ra
    # union by size, ties broken toward the smaller site index
    if size[ra] < size[rb] or (size[ra] == size[rb] and rb < ra):
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return ra


def _frontier_evolve(site_pos, site_time, state, stop_level, alpha, c0,
                     is_log, two_t1, parent, size):
    """Level-synchronous backward frontier over sorted sites.

    ``site_pos``/``site_time`` must be sorted by (time descending, position
    ascending); ``parent``/``size`` are the union-find arrays over site
    indices in that order.  One jump is drawn per occupied position per
    level, in ascending position order.  Returns (escaped, live, level).
    """
    n = site_pos.shape[0]
    pos = np.empty(n, np.int64)
    rep = np.empty(n, np.int64)
    scratch_pos = np.empty(n, np.int64)
    scratch_rep = np.empty(n, np.int64)
    newpos = np.empty(n, np.int64)
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    k = 0
    ptr = 0
    escaped = 0
    level = site_time[0]
    while True:
        # inject sites at this level (their slice of site_pos is ascending)
        ptr_end = ptr
        while ptr_end < n and site_time[ptr_end] == level:
            ptr_end += 1
        if ptr_end > ptr:
            i = 0
            j = ptr
            m = 0
            while i < k and j < ptr_end:
                if pos[i] < site_pos[j]:
                    scratch_pos[m] = pos[i]
                    scratch_rep[m] = rep[i]
                    i += 1
                elif pos[i] > site_pos[j]:
                    scratch_pos[m] = site_pos[j]
                    scratch_rep[m] = j
                    j += 1
                else:
                    scratch_pos[m] = pos[i]
                    scratch_rep[m] = _union(parent, size, rep[i], j)
                    i += 1
                    j += 1
                m += 1
            while i < k:
                scratch_pos[m] = pos[i]
                scratch_rep[m] = rep[i]
                i += 1
                m += 1
            while j < ptr_end:
                scratch_pos[m] = site_pos[j]
                scratch_rep[m] = j
                j += 1
                m += 1
            pos[:m] = scratch_pos[:m]
            rep[:m] = scratch_rep[:m]
            k = m
            ptr = ptr_end
        if level <= stop_level:
            break
        if k <= 1 and ptr >= n:
            break
        # one jump per occupied position, ascending position order
        if k > 4096:
            for i in range(k):
                w, s0, s1, s2, s3 = _xo(s0, s1, s2, s3)
                newpos[i] = pos[i] + _word_jump(w, alpha, c0, is_log, two_t1)
            order = np.argsort(newpos[:k])
            for i in range(k):
                scratch_pos[i] = newpos[order[i]]
                scratch_rep[i] = rep[order[i]]
        else:
            # small frontiers stay nearly sorted: stable insertion sort beats
            # argsort here and keeps equal-position union order deterministic
            for i in range(k):
                w, s0, s1, s2, s3 = _xo(s0, s1, s2, s3)
                p = pos[i] + _word_jump(w, alpha, c0, is_log, two_t1)
                r = rep[i]
                j = i - 1
                while j >= 0 and scratch_pos[j] > p:
                    scratch_pos[j + 1] = scratch_pos[j]
                    scratch_rep[j + 1] = scratch_rep[j]
                    j -= 1
                scratch_pos[j + 1] = p
                scratch_rep[j + 1] = r
        m = 0
        i = 0
        while i < k:
            p = scratch_pos[i]
            r = scratch_rep[i]
            j = i + 1
            while j < k and scratch_pos[j] == p:
                r = _union(parent, size, r, scratch_rep[j])
                j += 1
            if -2305843009213693952 < p < 2305843009213693952:  # 2**61
                pos[m] = p
                rep[m] = r
                m += 1
            else:
                escaped += 1
            i = j
        k = m
        level -= 1
    return escaped, k, level


if HAVE_NUMBA:
    _xo = njit(inline="always")(_xo)
    _word_jump = njit(inline="always")(_word_jump)
    _find = njit(inline="always")(_find)
    _union = njit(inline="always")(_union)
    difference_walks = njit(cache=True, nogil=True)(_difference_walks)
    frontier_evolve = njit(cache=True, nogil=True)(_frontier_evolve)
else:  # pragma: no cover - exercised only without numba
    difference_walks = None
    frontier_evolve = None


# -- pure-Python references ----------------------------------------------------


def difference_walks_py(states, k0, t_max, radius, alpha, c0, is_log):
    """Reference mirror of the jitted difference-walk batch."""
    counts = np.zeros(3, np.int64)
    steps = 0
    for row in np.asarray(states, dtype=np.uint64):
        gen = Xoshiro256(row)
        d = int(k0)
        outcome = TIMED_OUT
        for _ in range(t_max):
            j1 = jump_from_word(gen.next_word(), alpha, c0, is_log)
            j2 = jump_from_word(gen.next_word(), alpha, c0, is_log)
            d += j1 - j2
            steps += 1
            if d == 0:
                outcome = HIT
                break
            if abs(d) >= radius:
                outcome = RETIRED
                break
        counts[outcome] += 1
    return counts, steps


