"""Seeded random streams.

Every random draw in the toolkit comes from a PCG64 generator seeded with a
plain integer (numpy's ``SeedSequence`` expansion).  Restart ``r`` of an
experiment with base seed ``b`` uses seed ``b + r``.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def restart_seed(base_seed: int, restart: int) -> int:
    return int(base_seed) + int(restart)


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normals by the Box-Muller transform of uniform pairs.

    Draws ``ceil(size / 2)`` uniform pairs; the cosine branch fills the first
    half of the output and the sine branch the second.
    """
    size = int(np.prod(shape))
    m = (size + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1]
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:size]
    return z.reshape(shape)
