from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Union

import numpy as np
import torch

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Turn an int / SeedSequence / Generator into a Generator without hidden global state."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(seed: int, *keys: int) -> int:
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(k) & 0xFFFFFFFF for k in keys]])
    return int(seq.generate_state(1)[0])


def torch_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


@contextmanager
def torch_seeded(seed: int) -> Iterator[None]:
    """Seed torch's global CPU stream for the block, restoring the caller's state afterwards."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        yield
