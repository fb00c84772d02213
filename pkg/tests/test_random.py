import pytest
from jax import random

from dxhoglib.util.random import MASK_63, child_seed, child_stream, os_seed, stream


def test_child_seeds_are_deterministic_and_distinct():
    seeds = [child_seed(42, i) for i in range(1000)]
    assert seeds == [child_seed(42, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert all(0 <= s <= MASK_63 for s in seeds)
    assert child_seed(42, 0) != child_seed(43, 0)


def test_child_seed_rejects_negative_values():
    with pytest.raises(ValueError):
        child_seed(-1, 0)
    with pytest.raises(ValueError):
        child_seed(0, -1)


def test_streams_replay():
    a = random.uniform(child_stream(7, 3), (4,))
    b = random.uniform(stream(child_seed(7, 3)), (4,))
    assert bool((a == b).all())


def test_os_seed_range():
    assert 0 <= os_seed() <= MASK_63
