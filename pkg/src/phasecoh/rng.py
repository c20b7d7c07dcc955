"""Counter-based random substreams keyed by (seed, shot, channel).

Each (seed, channel) pair selects a Philox key; the shot index selects a
disjoint region of the counter space. Draws for one shot therefore never
depend on which other shots were generated, or in which order.
"""

import numpy as np

BERNOULLI = 0
NOISE = 1
DEPHASING = 2
PHASE_NOISE = 3

_MASK64 = (1 << 64) - 1


class ShotStreams:
    """Repositionable per-channel generators for one seed.

    ``at(channel, shot)`` returns a generator positioned at the start of the
    shot's substream. The generator object is reused, so consume its draws
    before asking for another substream.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._bitgens = {}
        self._gens = {}
        self._states = {}

    def _channel(self, channel):
        if channel not in self._bitgens:
            key = np.array([self.seed, channel], dtype=np.uint64)
            bg = np.random.Philox(key=key)
            self._bitgens[channel] = bg
            self._gens[channel] = np.random.Generator(bg)
            self._states[channel] = bg.state
        return self._bitgens[channel]

    def at(self, channel, shot):
        bg = self._channel(channel)
        state = self._states[channel]
        state["state"]["counter"] = np.array([0, 0, shot, 0], dtype=np.uint64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        bg.state = state
        return self._gens[channel]


def substream(seed, shot, channel):
    """Fresh generator for one (seed, shot, channel) substream."""
    key = np.array([int(seed) & _MASK64, channel], dtype=np.uint64)
    counter = np.array([0, 0, shot, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
