"""
Seedable, splittable random streams.

每个随机流由 (root_seed, stream, index...) 唯一确定，底层是计数器型的 Philox，
因此结果与线程数、调用顺序无关。
"""
import numpy as np

STREAM_DRIVING = 0
STREAM_SPECTRAL = 1
STREAM_REPLICATE = 2


def make_generator(seed: int, *keys: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: int) -> int:
    """A child 64-bit seed, e.g. for replicate r: derive_seed(root, STREAM_REPLICATE, r)."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])
