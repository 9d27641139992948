"""Named random streams.

Every random draw in the package comes from a Philox generator keyed by a
master seed and a path of small integers (trial index, role tag, user
index, ...), so a trial can be replayed on any worker.
"""

import numpy as np

from .errors import InvalidArgumentError

ROLE_CORRELATION = 1
ROLE_CHANNEL = 2
ROLE_CODEBOOK = 3
ROLE_REDRAW = 4
ROLE_ORDER_STATISTIC = 5
ROLE_ANGLES = 6
ROLE_SUITE = 7

SEED_BITS = 63


def make_stream(seed, *path):
    if seed < 0 or any(p < 0 for p in path):
        raise InvalidArgumentError("stream keys must be non-negative, got {}".format(repr((seed,) + path)))
    # flat entropy lists are zero padded, (a,) and (a, 0) must not collide
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(rng):
    return int(rng.integers(0, 2 ** SEED_BITS, dtype=np.int64))


def complex_gaussian(rng, shape):
    # unit variance per complex entry; C-order fill keeps chunked draws equal to one large draw
    if isinstance(shape, int):
        shape = (shape,)
    parts = rng.standard_normal(tuple(shape) + (2,))
    return (parts[..., 0] + 1j * parts[..., 1]) / np.sqrt(2.0)
