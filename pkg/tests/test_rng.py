import numpy as np
from hypothesis import given, strategies as st

from qsdpert import rng


@given(st.integers(0, 200_000), st.integers(1, 5000))
def test_blocks_tile_the_range(total, size):
    parts = list(rng.blocks(total, size))
    assert sum(s for _, s in parts) == total
    assert [i for i, _ in parts] == list(range(len(parts)))
    assert all(0 < s <= size for _, s in parts)


def test_streams_are_keyed_by_seed_and_block():
    a = rng.block_generator(7, 0).random(5)
    assert np.array_equal(a, rng.block_generator(7, 0).random(5))
    assert not np.array_equal(a, rng.block_generator(7, 1).random(5))
    assert not np.array_equal(a, rng.block_generator(8, 0).random(5))
