"""
Deterministic interleaving of two datasets at a fixed a:b ratio
"""
import logging
from typing import Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..models import parse_ratio

logger = logging.getLogger(__name__)

DATASET_A = 0
DATASET_B = 1


def interleave_pattern(a: int, b: int, count: int) -> List[int]:
    """
    Spread `count` draws so that any prefix holds dataset A in proportion
    a / (a + b), within one sample.
    """
    total = a + b
    pattern = []
    for k in range(count):
        if (k + 1) * a // total > k * a // total:
            pattern.append(DATASET_A)
        else:
            pattern.append(DATASET_B)
    return pattern


class MixSampler:
    """
    Yields (dataset, index) pairs. Each dataset is walked through a seeded
    permutation which is redrawn once exhausted, so the smaller set cycles.
    """

    def __init__(self, len_a: int, len_b: int, ratio='1:1', seed: int = 0, epoch_size: Optional[int] = None):
        self.a, self.b = parse_ratio(ratio) if isinstance(ratio, str) else tuple(ratio)
        if self.a < 0 or self.b < 0 or self.a + self.b == 0:
            raise ConfigError(f"Invalid sampling ratio {ratio}")
        if self.a and len_a == 0:
            raise ConfigError("Dataset A is empty but has a non-zero share")
        if self.b and len_b == 0:
            raise ConfigError("Dataset B is empty but has a non-zero share")
        self.len_a = len_a
        self.len_b = len_b
        self.seed = seed
        self.epoch_size = epoch_size if epoch_size is not None else self.default_epoch_size()
        if self.epoch_size < 0:
            raise ConfigError("Epoch size cannot be negative")
        self.epoch = 0

    def default_epoch_size(self) -> int:
        if self.b == 0:
            return self.len_a
        if self.a == 0:
            return self.len_b
        return 2 * min(self.len_a, self.len_b)

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def _stream(self, length: int, stream: int) -> Iterator[int]:
        rng = np.random.default_rng([self.seed, self.epoch, stream])
        while True:
            yield from (int(i) for i in rng.permutation(length))

    def __len__(self):
        return self.epoch_size

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        streams = {}
        if self.a:
            streams[DATASET_A] = self._stream(self.len_a, DATASET_A)
        if self.b:
            streams[DATASET_B] = self._stream(self.len_b, DATASET_B)
        for source in interleave_pattern(self.a, self.b, self.epoch_size):
            yield source, next(streams[source])
