# backend/services/rng_service.py

"""
Counter-based sample streams. Sample index i lives in block i // SAMPLE_BLOCK, and
each block draws from a Philox generator keyed by the run seed with the block
number in the high counter word, so a block's draws never depend on which worker
produced them or on how many blocks run in parallel.
"""

import numpy as np

import config
from errors import ParameterError
from services.linalg_service import Field

MAX_SEED = 1 << 64


def check_seed(seed):
    if not 0 <= seed < MAX_SEED:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")


def block_generator(seed: int, block: int) -> np.random.Generator:
    # counter words are little-endian 64-bit limbs; word 2 leaves 2^128 draws per block
    return np.random.Generator(np.random.Philox(key=seed, counter=block << 128))


def block_ranges(samples: int, block_size: int = None):
    """(block, count) pairs covering `samples` draws."""
    size = block_size or config.SAMPLE_BLOCK
    return [(b, min(size, samples - b * size)) for b in range(-(-samples // size))]


def unit_vectors(gen: np.random.Generator, field, count: int, n: int) -> np.ndarray:
    """
    `count` rows of n independent unit-modulus coordinates: uniform signs for the
    real field, e^{i theta} with theta uniform on [0, 2 pi) for the complex field.
    """
    if Field(field) is Field.REAL:
        return gen.integers(0, 2, size=(count, n), dtype=np.int8).astype(np.float64) * 2.0 - 1.0
    return np.exp(2j * np.pi * gen.random((count, n)))
