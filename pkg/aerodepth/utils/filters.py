"""
Curation filters for rendered ground truth
"""
import numpy as np
from scipy import ndimage

from ..errors import ConfigError


def median_filter(values: np.ndarray, window: int) -> np.ndarray:
    """
    Window x window median with clamp-to-edge padding.

    For an even window the neighborhood spans offsets -window//2 .. window - window//2 - 1
    and the result is the upper median (element window*window//2 of the sorted window).

    Args:
        values: 2D map (depth or class indices)
        window: neighborhood width in pixels

    Returns:
        Filtered map with the input dtype
    """
    if int(window) < 1:
        raise ConfigError(f"Median window must be at least 1, got {window}")
    values = np.asarray(values)
    if window == 1:
        return values.copy()
    return ndimage.median_filter(values, size=int(window), mode='nearest')


def window_offsets(window: int):
    """Row/column offsets covered by `median_filter` for a given window"""
    start = -(window // 2)
    return range(start, start + window)
