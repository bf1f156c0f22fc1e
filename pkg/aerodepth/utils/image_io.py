"""
PNG input/output for frames, depth maps and class maps using Pillow
"""
import logging
import os

import numpy as np
from PIL import Image

from ..errors import DatasetLoadError

logger = logging.getLogger(__name__)

DEPTH_CODE_MAX = 65535


def depth_scale_for(max_depth: float) -> float:
    return float(max_depth) / DEPTH_CODE_MAX


def encode_depth(values: np.ndarray, scale: float) -> np.ndarray:
    """Meters to 16-bit codes: round(value / scale), clipped to [1, 65535]"""
    codes = np.rint(np.asarray(values, dtype=np.float64) / scale)
    return np.clip(codes, 1, DEPTH_CODE_MAX).astype(np.uint16)


def decode_depth(codes: np.ndarray, scale: float, max_depth: float) -> np.ndarray:
    """16-bit codes to meters; the top code decodes to exactly max_depth"""
    codes = np.asarray(codes)
    values = codes.astype(np.float64) * scale
    return np.where(codes == DEPTH_CODE_MAX, float(max_depth), values)


def _ensure_parent(path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def save_rgb(path: str, rgb: np.ndarray):
    _ensure_parent(path)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode='RGB').save(path)


def save_class_map(path: str, seg: np.ndarray):
    _ensure_parent(path)
    Image.fromarray(np.asarray(seg, dtype=np.uint8), mode='L').save(path)


def save_depth_codes(path: str, codes: np.ndarray):
    _ensure_parent(path)
    Image.fromarray(np.asarray(codes, dtype=np.uint16), mode='I;16').save(path)


def save_colorized(path: str, seg: np.ndarray, palette) -> None:
    """Class map rendered through a palette for viewing"""
    _ensure_parent(path)
    colors = np.asarray(palette, dtype=np.uint8)[np.asarray(seg, dtype=np.int64)]
    Image.fromarray(colors, mode='RGB').save(path)


def _open(path: str) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
        return image
    except (OSError, ValueError) as e:
        raise DatasetLoadError(f"Cannot read image {path}: {e}", frame=path)


def load_rgb(path: str) -> np.ndarray:
    image = _open(path)
    if image.mode != 'RGB':
        raise DatasetLoadError(f"{path} is {image.mode}, expected 8-bit RGB", frame=path)
    return np.array(image, dtype=np.uint8)


def load_class_map(path: str) -> np.ndarray:
    image = _open(path)
    if image.mode not in ('L', 'P'):
        raise DatasetLoadError(f"{path} is {image.mode}, expected an 8-bit class map", frame=path)
    return np.array(image, dtype=np.uint8)


def load_depth_codes(path: str) -> np.ndarray:
    image = _open(path)
    if image.mode not in ('I;16', 'I;16B', 'I'):
        raise DatasetLoadError(f"{path} is {image.mode}, expected 16-bit grayscale", frame=path)
    codes = np.array(image)
    if codes.min() < 0 or codes.max() > DEPTH_CODE_MAX:
        raise DatasetLoadError(f"{path} holds values outside the 16-bit range", frame=path)
    return codes.astype(np.uint16)
