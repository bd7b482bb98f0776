"""Counter-based random streams.

Every draw in a run comes from a Philox generator whose key is derived once
from the run seed and whose counter encodes (stream, iteration).  A draw is
therefore a pure function of (seed, iteration, stream) and does not depend on
how many other draws happened before it or on thread scheduling.
"""

import numpy as np

GAINS = 0
NOISE = 1
PHASE = 2
DATA = 3


def stream_key(seed):
    """128-bit Philox key for an integer seed (or pass a key through)."""
    if isinstance(seed, np.ndarray):
        if seed.shape != (2,) or seed.dtype != np.uint64:
            raise ValueError("a stream key must be a (2,) uint64 array")
        return seed
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


class Streams:
    """Reusable stream source for one key.

    ``at(k, stream_id)`` rewinds a single Philox generator to the block for
    (stream_id, k) and returns it; the result is identical to a freshly
    constructed generator.  Consume each generator before the next call.
    """

    def __init__(self, key):
        self.key = stream_key(key)
        self._bitgen = np.random.Philox(key=self.key)
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def at(self, k, stream_id):
        st = self._state
        st["state"]["counter"] = np.array([0, 0, stream_id, k], dtype=np.uint64)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen


def stream(key, k, stream_id):
    """Fresh generator for iteration ``k`` of stream ``stream_id``.

    The low counter words are left at zero so a single stream can produce
    2**128 blocks before touching the identifying words.
    """
    counter = np.array([0, 0, stream_id, k], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=stream_key(key), counter=counter))


def replication_seed(base_seed, r):
    """Seed of replication ``r``; a pure function of (base_seed, r)."""
    state = np.random.SeedSequence([int(base_seed), int(r)]).generate_state(1, np.uint64)
    return int(state[0])
