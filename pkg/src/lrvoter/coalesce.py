"""Backward coalescing ancestral lines and pairwise merge probabilities.

Each lattice site carries one outgoing edge into the previous time level, so
the ancestral lines of a finite set of sites form coalescing walks: evolving
them one backward level at a time, every occupied *position* draws one jump
(lines that met move together forever) and collisions merge clusters.
`run_backward` samples the induced partition of the queried sites; the
pairwise merge probability is computed independently by Monte Carlo on the
difference walk (`coalesce_prob_mc`) and by Green-function quadrature
(`coalesce_prob_fourier`), and the two are cross-checked in the acceptance
suite.

Monte Carlo difference walks retire when they reach a far-field radius at
which the remaining hitting probability is certified negligible: for a
transient walk the chance of ever returning to 0 from distance d is
G(d)/G(0), and G(d) decays like d**(alpha-1) with an explicit constant, so a
radius with certified bias <= `retire_bias` can be computed up front.  Lines
in `run_backward` are never retired; they are only dropped (and counted) at
the int64 safety horizon 2**61, far beyond any physically relevant window.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import _kernels
from ._rng import state_from_generator, states_from_generator
from .analytic import c_alpha, q_norm_squared
from .steplaw import StepLaw

__all__ = [
    "CoalescenceEstimate",
    "CoalescenceFrontier",
    "ComponentLabeling",
    "coalesce_prob_fourier",
    "coalesce_prob_mc",
    "component_slice_sizes",
    "retirement_bias_bound",
    "retirement_radius",
    "run_backward",
]


class _UnionFind:
    """Union by size with path compression; ties keep the smaller root index."""

    __slots__ = ("parent", "size")

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb] or (
            self.size[ra] == self.size[rb] and rb < ra
        ):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


class CoalescenceFrontier:
    """Occupied positions of backward ancestral lines, merged as they collide.

    Pure-Python reference engine: `run_backward` uses the jitted kernel when
    numba is available, and the two consume identical xoshiro word streams
    (one word per occupied position per level, in ascending position order),
    so they produce identical partitions under a fixed seed.

    Parameters
    ----------
    law : StepLaw
        Jump distribution of each ancestral line.
    n_sites : int
        Number of initial sites the union-find tracks.
    state : sequence of 4 ints
        Initial xoshiro256** state words.

    Attributes
    ----------
    backward_time : int
        Steps taken into the past.
    occupancy : dict
        Maps occupied lattice position to a cluster-representative site index.
    clusters : _UnionFind
        Merge structure over the initial site indices.
    escaped : int
        Lines dropped at the |position| >= 2**61 safety horizon.
    """

    def __init__(self, law: StepLaw, n_sites: int, state) -> None:
        self.law = law
        self.backward_time = 0
        self.occupancy: dict[int, int] = {}
        self.clusters = _UnionFind(n_sites)
        self.escaped = 0
        self._gen = _kernels.Xoshiro256(state)
        alpha, c0, is_log, _ = _kernels.law_params(law)
        self._params = (alpha, c0, is_log)

    @property
    def live_count(self) -> int:
        """Number of distinct occupied positions."""
        return len(self.occupancy)

    def inject(self, site_index: int, position: int) -> None:
        """Place a site's line at `position`, merging on collision."""
        position = int(position)
        held = self.occupancy.get(position)
        if held is None:
            self.occupancy[position] = site_index
        else:
            self.occupancy[position] = self.clusters.union(held, site_index)

    def step(self) -> None:
        """Advance all lines one level into the past and merge collisions."""
        moved: dict[int, int] = {}
        for position in sorted(self.occupancy):
            rep = self.occupancy[position]
            target = position + _kernels.jump_from_word(
                self._gen.next_word(), *self._params
            )
            held = moved.get(target)
            moved[target] = rep if held is None else self.clusters.union(held, rep)
        self.occupancy = {}
        for target in sorted(moved):
            if abs(target) < _kernels.ESCAPE_LIMIT:
                self.occupancy[target] = moved[target]
            else:
                self.escaped += 1
        self.backward_time += 1


@dataclass(frozen=True)
class ComponentLabeling:
    """Partition of queried space-time sites into ancestral components.

    `label[i]` is a dense component id (numbered by first appearance in the
    input site order); two sites share a label iff their ancestral lines
    merged within the backward horizon.  `residual_clusters` counts the
    components still alive (unmerged) when evolution stopped, including any
    lines dropped at the safety horizon (`escaped_lines`).
    """

    sites: tuple[tuple[int, int], ...]
    label: np.ndarray
    residual_clusters: int
    cutoff_used: int
    escaped_lines: int = 0

    @property
    def n_components(self) -> int:
        return int(self.label.max()) + 1 if len(self.label) else 0

    def component_sizes(self) -> np.ndarray:
        """Site count per component, indexed by component id."""
        return np.bincount(self.label, minlength=self.n_components)


def run_backward(sites, law: StepLaw, t_max: int, rng,
                 engine: str = "auto") -> ComponentLabeling:
    """Sample the ancestral partition of `sites` under `law`.

    The frontier evolves level-synchronously from the latest queried time:
    all sites at the current level join (merging into any line already
    there), every occupied position then draws one jump, and collisions
    merge.  Evolution stops `t_max` levels below the *earliest* queried
    time — so every line gets at least `t_max` backward steps — or as soon
    as a single cluster holds every site.  ``t_max=0`` allows no steps below
    the earliest level (useful to inspect the injected state alone).

    Parameters
    ----------
    sites : iterable of (position, time) integer pairs
        Distinct space-time sites to label.
    law : StepLaw
        Jump distribution.
    t_max : int
        Backward horizon below the earliest queried time level, >= 0.
    rng : numpy.random.Generator
        Source for the simulation stream (consumed: 4 words).
    engine : {"auto", "kernel", "reference"}
        "kernel" requires numba; "reference" forces the pure-Python
        `CoalescenceFrontier`; "auto" picks the kernel when available.

    Returns
    -------
    ComponentLabeling
    """
    site_list = [(int(p), int(t)) for p, t in sites]
    n = len(site_list)
    if n == 0:
        raise ValueError("need at least one site")
    if len(set(site_list)) != n:
        raise ValueError("sites must be distinct")
    t_max = int(t_max)
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if engine not in ("auto", "kernel", "reference"):
        raise ValueError(f"unknown engine {engine!r}")
    use_kernel = engine == "kernel" or (engine == "auto" and _kernels.HAVE_NUMBA)
    if engine == "kernel" and not _kernels.HAVE_NUMBA:
        raise RuntimeError("engine='kernel' requires numba")

    order = sorted(range(n), key=lambda i: (-site_list[i][1], site_list[i][0]))
    stop_level = min(t for _, t in site_list) - t_max
    state = state_from_generator(rng)

    if use_kernel:
        site_pos = np.array([site_list[i][0] for i in order], dtype=np.int64)
        site_time = np.array([site_list[i][1] for i in order], dtype=np.int64)
        parent = np.arange(n, dtype=np.int64)
        size = np.ones(n, dtype=np.int64)
        alpha, c0, is_log, two_t1 = _kernels.law_params(law)
        escaped, live, _ = _kernels.frontier_evolve(
            site_pos, site_time, state, np.int64(stop_level),
            alpha, c0, is_log, two_t1, parent, size,
        )

        def find(i: int) -> int:
            while parent[i] != i:
                i = parent[i]
            return int(i)
    else:
        frontier = CoalescenceFrontier(law, n, state)
        level = site_list[order[0]][1]
        ptr = 0
        while True:
            while ptr < n and site_list[order[ptr]][1] == level:
                frontier.inject(ptr, site_list[order[ptr]][0])
                ptr += 1
            if level <= stop_level:
                break
            if frontier.live_count <= 1 and ptr >= n:
                break
            frontier.step()
            level -= 1
        escaped, live = frontier.escaped, frontier.live_count
        find = frontier.clusters.find

    sorted_slot = [0] * n
    for slot, i in enumerate(order):
        sorted_slot[i] = slot
    label = np.empty(n, dtype=np.int64)
    dense: dict[int, int] = {}
    for i in range(n):
        root = find(sorted_slot[i])
        label[i] = dense.setdefault(root, len(dense))
    return ComponentLabeling(
        sites=tuple(site_list),
        label=label,
        residual_clusters=int(live) + int(escaped),
        cutoff_used=t_max,
        escaped_lines=int(escaped),
    )


def component_slice_sizes(labeling: ComponentLabeling, slice_time: int) -> list[int]:
    """Per-component count of queried sites at one time level.

    Components with no site at `slice_time` are omitted; the returned sizes
    (in component-id order) sum to the number of sites at that level.
    """
    slice_time = int(slice_time)
    at_level = [lab for (_, t), lab in zip(labeling.sites, labeling.label)
                if t == slice_time]
    if not at_level:
        raise ValueError(f"no queried site has time {slice_time}")
    counts = np.bincount(np.asarray(at_level))
    return [int(c) for c in counts if c > 0]


# -- pairwise merge probability ------------------------------------------------


def coalesce_prob_fourier(law: StepLaw, k: int, q_norm2: float | None = None) -> float:
    """P(sites (k, 0) and (0, 0) share a component), by Green quadrature.

    Equals G(k)/G(0) for the difference walk with increment J - J', i.e.
    ``[(1/2pi) int_{-pi}^{pi} cos(kx) / (1 - P(x)^2) dx] / q_norm2``; finite
    for alpha < 1 (StepLaw enforces this).  The x**-alpha endpoint blowup is
    flattened by the substitution x = y**(1/(1-alpha)) on an initial segment
    short enough that cos(kx) does not oscillate there; the remainder uses
    cosine-weighted quadrature.
    """
    k = abs(int(k))
    if k == 0:
        return 1.0
    if q_norm2 is None:
        q_norm2 = q_norm_squared(law)
    alpha = law.alpha
    power = 1.0 / (1.0 - alpha)
    cut = min(0.2, math.pi / (2.0 * k))

    def near(y: float) -> float:
        x = y ** power
        omc = law.one_minus_char(x)
        return math.cos(k * x) * power * y ** (power - 1.0) / (omc * (2.0 - omc))

    def rest(x: float) -> float:
        omc = law.one_minus_char(x)
        return 1.0 / (omc * (2.0 - omc))

    total = quad(near, 0.0, cut ** (1.0 - alpha),
                 epsabs=0.0, epsrel=1e-11, limit=200)[0]
    total += quad(rest, cut, math.pi, weight="cos", wvar=k,
                  epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    value = total / math.pi / q_norm2
    if not -1e-6 < value < 1.0 + 1e-6:
        raise ArithmeticError(f"quadrature left [0, 1]: {value}")
    return min(max(value, 0.0), 1.0)


def retirement_bias_bound(law: StepLaw, q_norm2: float, radius: float) -> float:
    """Certified bound on P(difference walk ever returns to 0 | |D| >= radius).

    The Green function of the J - J' walk satisfies
    ``G(d) ~ d**(alpha-1) * Gamma(1-alpha) sin(pi alpha/2) / (4 pi L c_alpha)``
    and the hitting probability from d is G(d)/G(0); a safety factor 4 and
    the infimum of L make the asymptotic an upper bound over d >= radius
    (checked against exact quadrature values of G in the test suite).
    """
    alpha = law.alpha
    gamma_sin = math.gamma(1.0 - alpha) * math.sin(math.pi * alpha / 2.0)
    low_l = law.per_side_tail_constant
    return (4.0 * gamma_sin * float(radius) ** (alpha - 1.0)
            / (4.0 * math.pi * low_l * c_alpha(alpha) * q_norm2))


def retirement_radius(law: StepLaw, q_norm2: float, target_bias: float) -> int:
    """Smallest far-field radius whose certified return bias is <= target."""
    alpha = law.alpha
    gamma_sin = math.gamma(1.0 - alpha) * math.sin(math.pi * alpha / 2.0)
    low_l = law.per_side_tail_constant
    raw = (target_bias * math.pi * low_l * c_alpha(alpha) * q_norm2
           / gamma_sin) ** (1.0 / (alpha - 1.0))
    return int(min(math.ceil(raw), _kernels.ESCAPE_LIMIT - 1))


@dataclass(frozen=True)
class CoalescenceEstimate:
    """Monte Carlo merge-probability estimate with its error budget.

    Iterating yields ``(estimate, stderr)``.  The estimate underestimates the
    true probability by at most ``bias_bound = live_fraction +
    retired_fraction * certified-return-bound``: timed-out paths might merge
    later with probability at most 1, retired paths with the certified
    far-field bound.
    """

    estimate: float
    stderr: float
    live_fraction: float
    retired_fraction: float
    retire_radius: int
    bias_bound: float
    reps: int
    t_max: int
    degenerate: bool = False

    def __iter__(self):
        return iter((self.estimate, self.stderr))


def coalesce_prob_mc(law: StepLaw, k: int, t_max: int, reps: int, rng,
                     threads: int = 1,
                     retire_bias: float = 1e-4) -> CoalescenceEstimate:
    """Estimate P((k,0) ~ (0,0)) by simulating the difference walk.

    Each replicate runs D_0 = k with increments J - J' (two independent
    draws per step) until it hits 0, reaches the certified retirement
    radius, or exhausts `t_max` steps.  ``k = 0`` is degenerate (a site is
    related to itself) and returns estimate 1 with the flag set.

    Parameters
    ----------
    law : StepLaw
    k : int
        Initial separation; symmetric in sign.
    t_max : int
        Step budget per replicate, >= 1.
    reps : int
        Number of replicates, >= 100.
    rng : numpy.random.Generator
        Seeds the per-replicate streams (consumed: 4 words per replicate).
    threads : int
        Worker threads; results are independent of the thread count.
    retire_bias : float
        Target certified bias of far-field retirement.
    """
    k = int(k)
    if k == 0:
        return CoalescenceEstimate(1.0, 0.0, 0.0, 0.0, 0, 0.0,
                                   int(reps), int(t_max), degenerate=True)
    if reps < 100:
        raise ValueError("reps must be >= 100")
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    q_norm2 = q_norm_squared(law)
    radius = retirement_radius(law, q_norm2, retire_bias)
    retire_bound = retirement_bias_bound(law, q_norm2, radius)
    alpha, c0, is_log, two_t1 = _kernels.law_params(law)
    states = states_from_generator(rng, reps)

    if _kernels.HAVE_NUMBA:
        def run(chunk):
            return _kernels.difference_walks(
                chunk, np.int64(abs(k)), np.int64(t_max), np.int64(radius),
                alpha, c0, is_log, two_t1)
    else:
        def run(chunk):
            return _kernels.difference_walks_py(
                chunk, abs(k), t_max, radius, alpha, c0, is_log)

    chunk_size = 4096
    chunks = [states[i:i + chunk_size] for i in range(0, reps, chunk_size)]
    counts = np.zeros(3, np.int64)
    if threads > 1 and len(chunks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for part, _ in pool.map(run, chunks):
                counts += part
    else:
        for chunk in chunks:
            counts += run(chunk)[0]

    hit, retired, live = (int(c) for c in counts)
    estimate = hit / reps
    stderr = math.sqrt(estimate * (1.0 - estimate) / reps)
    live_fraction = live / reps
    retired_fraction = retired / reps
    return CoalescenceEstimate(
        estimate=estimate,
        stderr=stderr,
        live_fraction=live_fraction,
        retired_fraction=retired_fraction,
        retire_radius=radius,
        bias_bound=live_fraction + retired_fraction * retire_bound,
        reps=int(reps),
        t_max=int(t_max),
    )
