import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

from ..errors import ConfigError
from ..models import NUM_CLASSES

DEFAULT_FILTERS = (16, 32, 64, 96, 128, 160)
DEFAULT_SPLIT_K = (1, 2, 2, 4, 4, 4)
TASKS = ('joint', 'depth', 'semantic')


def canonical_json(data: Dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def fingerprint(data: Dict) -> str:
    """SHA-256 of the canonical JSON form of a config record"""
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


@dataclass
class ArchConfig:
    """Network shape. Filter and split lists default to the first num_levels entries of the defaults."""
    num_levels: int = 5
    filters_per_level: Optional[Tuple[int, ...]] = None
    split_K_per_level: Optional[Tuple[int, ...]] = None
    sncv_radius: int = 3
    pscv_candidates: int = 5
    pscv_step: float = 1.25
    num_classes: int = NUM_CLASSES
    sequence_length: int = 3
    semantic_refiner_layers: int = 5
    depth_refiner_layers: int = 7
    refiner_width: int = 32
    parallax_features: int = 4
    semantic_features: int = 4
    leaky_slope: float = 0.1
    semantic_sncv: bool = False
    tasks: str = 'joint'
    alternative_denominator: bool = False
    max_depth: float = 200.0

    def __post_init__(self):
        if self.num_levels not in (4, 5, 6):
            raise ConfigError(f"num_levels must be 4, 5 or 6, got {self.num_levels}")
        if self.filters_per_level is None:
            self.filters_per_level = DEFAULT_FILTERS[:self.num_levels]
        if self.split_K_per_level is None:
            self.split_K_per_level = DEFAULT_SPLIT_K[:self.num_levels]
        self.filters_per_level = tuple(int(f) for f in self.filters_per_level)
        self.split_K_per_level = tuple(int(k) for k in self.split_K_per_level)

        if len(self.filters_per_level) != self.num_levels or len(self.split_K_per_level) != self.num_levels:
            raise ConfigError(f"Per-level lists must have {self.num_levels} entries")
        for level, (channels, k) in enumerate(zip(self.filters_per_level, self.split_K_per_level), start=1):
            if k < 1 or channels % k != 0:
                raise ConfigError(f"Level {level}: {channels} channels cannot be split into K={k} groups")
        if self.pscv_candidates < 3 or self.pscv_candidates % 2 == 0:
            raise ConfigError(f"pscv_candidates must be odd and at least 3, got {self.pscv_candidates}")
        if self.pscv_step <= 1.0:
            raise ConfigError("pscv_step must exceed 1")
        if self.sncv_radius < 1:
            raise ConfigError("sncv_radius must be at least 1")
        if self.tasks not in TASKS:
            raise ConfigError(f"tasks must be one of {TASKS}, got '{self.tasks}'")
        if self.sequence_length < 1 or (self.has_depth and self.sequence_length < 2):
            raise ConfigError("The depth task needs sequences of at least 2 frames")
        if self.semantic_refiner_layers < 2 or self.depth_refiner_layers < 2:
            raise ConfigError("Refiners need at least 2 layers")
        if self.num_classes < 2:
            raise ConfigError("At least 2 classes are required")

    @property
    def has_depth(self) -> bool:
        return self.tasks in ('joint', 'depth')

    @property
    def has_semantic(self) -> bool:
        return self.tasks in ('joint', 'semantic')

    @property
    def divisor(self) -> int:
        return 2 ** self.num_levels

    def with_tasks(self, tasks: str) -> 'ArchConfig':
        data = self.to_dict()
        data['tasks'] = tasks
        return ArchConfig.from_dict(data)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['filters_per_level'] = list(self.filters_per_level)
        data['split_K_per_level'] = list(self.split_K_per_level)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'ArchConfig':
        return cls(**data)

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())
