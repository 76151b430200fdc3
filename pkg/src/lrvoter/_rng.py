"""Replicate-indexed random streams.

Every replicate owns an independent stream derived from ``(root_seed,
replicate_index)``, so results do not depend on worker count or execution
order.  Two stream flavours are used:

* ``replicate_generator`` — a ``numpy.random.Generator`` for vectorized /
  Python-level sampling;
* ``xoshiro_states`` — packed 4x64-bit states consumed by the jitted walk
  kernels, which inline a xoshiro256** step for speed.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "replicate_generator",
    "xoshiro_states",
    "state_from_generator",
    "states_from_generator",
]


def replicate_generator(seed: int, replicate: int) -> np.random.Generator:
    """Independent ``Generator`` for one replicate of one experiment."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, replicate))))


def xoshiro_states(seed: int, n_streams: int) -> np.ndarray:
    """Derive ``n_streams`` xoshiro256** states, one 4-word row per stream.

    Words come from ``SeedSequence(seed)``; the all-zero state (invalid for
    xoshiro) is patched, an event of probability 2**-256 per row.
    """
    words = np.random.SeedSequence(seed).generate_state(4 * n_streams, dtype=np.uint64)
    states = words.reshape(n_streams, 4)
    dead = ~states.any(axis=1)
    if dead.any():
        states[dead, 0] = np.uint64(1)
    return states


def state_from_generator(rng: np.random.Generator) -> np.ndarray:
    """Draw one xoshiro state from an existing generator (4 words consumed)."""
    state = rng.integers(0, 2**64, size=4, dtype=np.uint64)
    if not state.any():
        state[0] = np.uint64(1)
    return state


def states_from_generator(rng: np.random.Generator, n_streams: int) -> np.ndarray:
    """Draw a batch of xoshiro states (one 4-word row each) from a generator."""
    states = rng.integers(0, 2**64, size=(n_streams, 4), dtype=np.uint64)
    dead = ~states.any(axis=1)
    if dead.any():
        states[dead, 0] = np.uint64(1)
    return states
