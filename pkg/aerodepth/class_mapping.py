"""
Named label mappings from foreign datasets onto the common class set
"""
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .errors import ConfigError, UnmappedLabelError
from .models import BUILDING, CLASS_NAMES, LAND, OTHERS, ROAD, ROCKS, SKY, TREES, VEHICLE, WATER


@dataclass(frozen=True)
class ClassMapping:
    name: str
    source_names: Tuple[str, ...]
    target_names: Tuple[str, ...]
    table: Tuple[int, ...]

    def __post_init__(self):
        if len(self.table) != len(self.source_names):
            raise ConfigError(f"Mapping '{self.name}' must give one target per source class")
        for source, target in zip(self.source_names, self.table):
            if not 0 <= target < len(self.target_names):
                raise ConfigError(f"Mapping '{self.name}' sends '{source}' to invalid target {target}")

    @property
    def lookup(self) -> np.ndarray:
        return np.asarray(self.table, dtype=np.int64)

    def as_dict(self) -> Dict[str, str]:
        return {s: self.target_names[t] for s, t in zip(self.source_names, self.table)}


def map_classes(seg_map: np.ndarray, mapping: ClassMapping) -> np.ndarray:
    """Relabel every pixel through the mapping; labels without a source entry are an error"""
    seg_map = np.asarray(seg_map)
    labels = np.unique(seg_map)
    unmapped = [int(label) for label in labels if label < 0 or label >= len(mapping.table)]
    if unmapped:
        raise UnmappedLabelError(unmapped, mapping.name)
    return mapping.lookup[seg_map.astype(np.int64)].astype(np.uint8)


MIDAIR_CLASSES = (
    'sky', 'animals', 'trees', 'dirt ground', 'ground vegetation', 'rocky ground', 'boulders',
    'empty', 'water', 'man-made construction', 'road', 'train track', 'road sign', 'others',
)
MIDAIR7_CLASSES = ('sky', 'water', 'land', 'trees', 'boulders', 'road', 'others')
WILDUAV_CLASSES = (
    'sky', 'deciduous tree', 'coniferous tree', 'fallen trees', 'dirt ground', 'ground vegetation',
    'rocks', 'water plane', 'building', 'fence', 'road', 'sidewalk', 'static car', 'moving car',
    'people', 'empty',
)
AEROSCAPES_CLASSES = (
    'background', 'person', 'bike', 'car', 'drone', 'boat', 'animal', 'obstacle',
    'construction', 'vegetation', 'road', 'sky',
)
UDD_CLASSES = ('other', 'facade', 'road', 'vegetation', 'vehicle', 'roof')

MAPPINGS = {
    'midair': ClassMapping('midair', MIDAIR_CLASSES, CLASS_NAMES, (
        SKY, OTHERS, TREES, LAND, LAND, LAND, ROCKS, OTHERS, WATER, BUILDING, ROAD, OTHERS, OTHERS, OTHERS,
    )),
    'midair7': ClassMapping('midair7', MIDAIR_CLASSES, MIDAIR7_CLASSES, (
        0, 6, 3, 2, 2, 2, 4, 6, 1, 6, 5, 6, 6, 6,
    )),
    'topair': ClassMapping('topair', CLASS_NAMES, CLASS_NAMES, tuple(range(len(CLASS_NAMES)))),
    'wilduav': ClassMapping('wilduav', WILDUAV_CLASSES, CLASS_NAMES, (
        SKY, TREES, TREES, TREES, LAND, LAND, ROCKS, WATER, BUILDING, OTHERS, ROAD, ROAD,
        VEHICLE, VEHICLE, OTHERS, OTHERS,
    )),
    'aeroscapes': ClassMapping('aeroscapes', AEROSCAPES_CLASSES, CLASS_NAMES, (
        LAND, OTHERS, OTHERS, VEHICLE, OTHERS, OTHERS, OTHERS, OTHERS, BUILDING, TREES, ROAD, SKY,
    )),
    'udd': ClassMapping('udd', UDD_CLASSES, CLASS_NAMES, (LAND, BUILDING, ROAD, TREES, VEHICLE, BUILDING)),
}


def get_mapping(name: str) -> ClassMapping:
    try:
        return MAPPINGS[name]
    except KeyError:
        raise ConfigError(f"Unknown class mapping '{name}'; available: {', '.join(sorted(MAPPINGS))}")
