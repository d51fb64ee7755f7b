"""Counter-based random substreams.

Every (sweep, block) pair owns an independent Philox stream keyed by the
chain seed, so the draws of one parameter block never depend on how many
numbers another block consumed. Within a block, row ``k`` always receives
the ``k``-th element of each vectorized draw.
"""

import enum

import numpy as np

_MASK64 = (1 << 64) - 1


class Block(enum.IntEnum):
    INIT = 0
    IMPUTE = 1
    THETA = 2
    BETA = 3
    ALPHA = 4
    GAMMA = 5
    SLAB = 6
    SIGMA = 7
    SIGMA_EPS = 8
    Z = 9
    W = 10


class Substreams:
    def __init__(self, seed: int, chain: int = 0):
        seed = int(seed)
        if seed < 0 or seed > _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.chain = int(chain)
        self._key = np.array([seed, self.chain], dtype=np.uint64)

    def block(self, sweep: int, block: Block) -> np.random.Generator:
        # the lowest counter word is left free for Philox's own increments
        counter = np.array([0, 0, int(block), int(sweep)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))
