"""Counter-based random streams for reproducible parallel Monte Carlo.

Work is cut into blocks of ``BLOCK`` items.  Block ``b`` under seed ``s``
always draws from a Philox generator keyed by ``(s, b)``, so results do not
depend on how blocks are scheduled across threads.
"""

import numpy as np

BLOCK = 1 << 14


def block_generator(seed, index):
    key = np.random.SeedSequence([int(seed), int(index)]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def blocks(total, size=BLOCK):
    """Yield ``(block_index, block_size)`` covering ``total`` items."""
    for index, start in enumerate(range(0, total, size)):
        yield index, min(size, total - start)
