"""
Relative inference timing using psutil
"""
import logging
import time
from typing import Dict, List

import psutil

logger = logging.getLogger(__name__)


class InferenceTimer:
    """Accumulate wall-clock samples for repeated forward passes"""

    def __init__(self):
        self.samples: List[float] = []
        self._started = None

    def __enter__(self):
        self._started = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.samples.append(time.perf_counter() - self._started)
        self._started = None
        return False

    @property
    def ms_per_frame(self) -> float:
        if not self.samples:
            return 0.0
        return 1000.0 * sum(self.samples) / len(self.samples)

    @classmethod
    def get_process_info(cls) -> Dict:
        """Get current process memory and thread count"""
        try:
            process = psutil.Process()
            with process.oneshot():
                return {
                    'memory_mb': round(process.memory_info().rss / (1024 ** 2), 2),
                    'threads': process.num_threads(),
                    'cpu_count': psutil.cpu_count(logical=True),
                }
        except Exception as e:
            logger.error(f"Error getting process info: {e}")
            return {'memory_mb': 0, 'threads': 0, 'cpu_count': 0}

    def summary(self) -> Dict:
        stats = {
            'frames': len(self.samples),
            'ms_per_frame': round(self.ms_per_frame, 3),
        }
        stats.update(self.get_process_info())
        return stats
