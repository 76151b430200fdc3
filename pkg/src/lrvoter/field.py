"""Equilibrium ±1 field on a window, its partial sums, and their rescaling.

A field sample is a two-stage experiment: `run_backward` partitions the
queried sites (all positions 0..n on each requested time slice, jointly, so
cross-slice covariance comes from the shared graph) into ancestral
components, then each component independently receives +1 with probability p
and -1 otherwise.  Clusters still unmerged at the backward horizon get
independent colors; that is exact in the limit of an infinite horizon and
otherwise underestimates positive covariance by a bias that shrinks with the
horizon (the acceptance suite checks the variance normalization directly).

Values are stored as packed sign bits per slice with int64 prefix sums, so
`partial_sum` is an O(1) lookup and a field at n = 2**14 costs ~130 kB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coalesce import ComponentLabeling, run_backward
from .steplaw import StepLaw

__all__ = [
    "SpaceTimeField",
    "microscopic_slice_time",
    "partial_sum",
    "rescaled",
    "sample_equilibrium_field",
]


def microscopic_slice_time(law: StepLaw, t: float, n: int) -> int:
    """Microscopic (integer) time of the macroscopic slice time ``t``.

    Macroscopic time t corresponds to ``floor(t * n**alpha / (2 L(n)))``
    steps: the clock that makes the temporal covariance land on
    V(t, 1)/V(0, 1) given that two merged lines advance jointly (one jump
    per occupied position), as cross-checked by the temporal acceptance
    criterion.
    """
    if t < 0:
        raise ValueError("macroscopic time must be >= 0")
    scale = float(n) ** law.alpha / (2.0 * float(law.slowly_varying(max(n, 1))))
    return int(math.floor(t * scale))


@dataclass(frozen=True)
class SpaceTimeField:
    """One equilibrium sample of the ±1 field on ``{0..n} x slice_times``.

    Attributes
    ----------
    window_width : int
        n; each slice holds the n + 1 sites 0..n.
    slice_times : tuple of int
        Microscopic backward times of the slices, ascending.
    p : float
        Probability a component is colored +1.
    labeling : ComponentLabeling
        The ancestral partition the coloring was applied to.
    law : StepLaw
        Jump distribution (provenance).
    seed : int or None
        Caller-supplied stream identifier (provenance only).
    """

    window_width: int
    slice_times: tuple[int, ...]
    p: float
    labeling: ComponentLabeling
    law: StepLaw
    seed: int | None
    _sign_bits: np.ndarray
    _prefix: np.ndarray

    @property
    def n_slices(self) -> int:
        return len(self.slice_times)

    @property
    def values(self) -> np.ndarray:
        """Field values, shape (n_slices, n + 1), entries +1 / -1 (int8)."""
        width = self.window_width + 1
        bits = np.unpackbits(self._sign_bits, axis=1, count=width)
        return (bits.astype(np.int8) * 2) - 1

    def value(self, i: int, slice_index: int = 0) -> int:
        """Single site value (±1)."""
        if not 0 <= i <= self.window_width:
            raise ValueError(f"site {i} outside window 0..{self.window_width}")
        byte = self._sign_bits[slice_index, i // 8]
        return 1 if (byte >> (7 - i % 8)) & 1 else -1


def sample_equilibrium_field(law: StepLaw, p: float, n: int, slice_times,
                             t_max: int, rng, seed: int | None = None,
                             ) -> SpaceTimeField:
    """Color the ancestral components of a window and return the field.

    Parameters
    ----------
    law : StepLaw
    p : float
        +1 probability, in (0, 1).
    n : int
        Window width; sites 0..n are sampled on every slice.
    slice_times : iterable of int
        Distinct microscopic times >= 0 (see `microscopic_slice_time`).
    t_max : int
        Backward horizon passed to `run_backward`.
    rng : numpy.random.Generator
        Drives both the graph sample and the component colors.
    seed : int, optional
        Recorded as provenance on the returned field.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly in (0, 1), got {p}")
    if n < 0:
        raise ValueError("window width must be >= 0")
    times = [int(t) for t in slice_times]
    if len(times) == 0:
        raise ValueError("need at least one slice time")
    if len(set(times)) != len(times):
        raise ValueError("slice times must be distinct")
    if min(times) < 0:
        raise ValueError("slice times must be >= 0")
    times = sorted(times)

    sites = [(i, t) for t in times for i in range(n + 1)]
    labeling = run_backward(sites, law, t_max, rng)
    colors = np.where(rng.random(labeling.n_components) < p, 1, -1).astype(np.int8)
    values = colors[labeling.label].reshape(len(times), n + 1)

    sign_bits = np.packbits(values > 0, axis=1)
    prefix = np.zeros((len(times), n + 2), dtype=np.int64)
    np.cumsum(values, axis=1, dtype=np.int64, out=prefix[:, 1:])
    return SpaceTimeField(
        window_width=n,
        slice_times=tuple(times),
        p=float(p),
        labeling=labeling,
        law=law,
        seed=seed,
        _sign_bits=sign_bits,
        _prefix=prefix,
    )


def partial_sum(field: SpaceTimeField, x: float, slice_index: int = 0) -> int:
    """``S(floor(x n), t) = sum_{i=0}^{floor(x n)} value(i, t)``.

    O(1) from the precomputed prefix sums.  ``x`` must lie in [0, 1]; x = 0
    returns the single site value at 0.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    j = int(math.floor(x * field.window_width))
    return int(field._prefix[slice_index, j + 1])


def rescaled(field: SpaceTimeField, sigma_n: float, x: float,
             slice_index: int = 0) -> float:
    """``(S(floor(x n), t) - (2p - 1) floor(x n)) / sigma_n``.

    The diffusive rescaling of the partial-sum field; with the variance
    normalizer from `analytic.sigma_n` this converges in distribution to the
    evolving fractional field (variance 1 at x = 1 on the deepest slice).
    """
    if not sigma_n > 0:
        raise ValueError("sigma_n must be positive")
    center = (2.0 * field.p - 1.0) * math.floor(x * field.window_width)
    return (partial_sum(field, x, slice_index) - center) / sigma_n
