"""Counter-based random streams.

Every stochastic routine in this package takes a numpy Generator.  Replicated
experiments derive one independent substream per (seed, replica-chunk,
component) triple, so results do not depend on scheduling or worker count.
"""
import numpy as np


def substream(seed, *key):
    """Independent Philox generator for a (seed, *key) address.

    The same (seed, key) always yields the same stream; distinct keys yield
    statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Coerce a seed or Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(int(rng))
