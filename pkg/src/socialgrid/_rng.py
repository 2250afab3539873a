"""Seeded random streams.

Every stochastic routine takes ``rng`` as ``None``, an integer seed, a
``numpy.random.SeedSequence`` or a ``numpy.random.Generator``. Monte-Carlo
trials draw from private child streams so results do not depend on the
order in which trials are evaluated.
"""

import zlib

import numpy as np


def check_random_state(rng=None):
    """Turn ``rng`` into a ``numpy.random.Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer, np.random.SeedSequence)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a random generator from {rng!r}")


def draw_seed(rng):
    """Draw a 63-bit integer from ``rng`` to root a family of child streams."""
    return int(check_random_state(rng).integers(0, 2**63 - 1))


def trial_streams(rng, n):
    """Return ``n`` independent generators, one per Monte-Carlo trial."""
    root = np.random.SeedSequence(draw_seed(rng))
    return [np.random.default_rng(child) for child in root.spawn(n)]


def named_stream(seed, name):
    """Generator for the sub-stream ``name`` of a top-level integer seed.

    The same ``(seed, name)`` pair always yields the same stream, and
    distinct names give statistically independent streams.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), key]))
