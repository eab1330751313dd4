"""Image decode/encode helpers shared by the pipeline and the service.

Images travel through the models as CHW float32 arrays scaled to [0,1].
"""

from __future__ import annotations

import io
import math

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def open_image(path) -> Image.Image:
    """Decode fully (not lazily) so truncated files fail here."""
    with Image.open(path) as img:
        img.load()
        return img.convert("RGB")


def try_open_image(path) -> Image.Image | None:
    try:
        return open_image(path)
    except (UnidentifiedImageError, OSError, ValueError):
        return None


def decode_bytes(data: bytes) -> Image.Image | None:
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError):
        return None


def pil_to_chw(img: Image.Image) -> np.ndarray:
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def load_chw(path, side: int | None = None) -> np.ndarray:
    img = open_image(path)
    if side is not None and img.size != (side, side):
        img = img.resize((side, side), Image.BILINEAR)
    return pil_to_chw(img)


def grayscale_255(path) -> np.ndarray:
    """Luma plane on the 0..255 scale, as float64 for stable variance."""
    with Image.open(path) as img:
        img.load()
        return np.asarray(img.convert("L"), dtype=np.float64)


def resize_chw(arr: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize of a CHW float array, sampling at pixel centers
    with edge clamping; used for in-memory model input preparation."""
    c, h, w = arr.shape
    if h == side and w == side:
        return arr
    sy = (np.arange(side, dtype=np.float64) + 0.5) * (h / side) - 0.5
    sx = (np.arange(side, dtype=np.float64) + 0.5) * (w / side) - 0.5
    sy_grid, sx_grid = np.meshgrid(sy, sx, indexing="ij")
    y0 = np.floor(sy_grid).astype(np.int64)
    x0 = np.floor(sx_grid).astype(np.int64)
    fy = (sy_grid - y0).astype(arr.dtype)
    fx = (sx_grid - x0).astype(arr.dtype)
    y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
    x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x0 + 1, 0, w - 1)
    out = (
        arr[:, y0c, x0c] * (1 - fy) * (1 - fx)
        + arr[:, y1c, x0c] * fy * (1 - fx)
        + arr[:, y0c, x1c] * (1 - fy) * fx
        + arr[:, y1c, x1c] * fy * fx
    )
    return np.ascontiguousarray(out.astype(arr.dtype))


def laplacian_variance(gray_255: np.ndarray) -> float:
    """Variance of the 3x3 four-neighbour Laplacian over the interior.

    Uniform images score exactly 0; sharper detail scores higher.
    Degenerate images (under 3px a side) score 0 by convention.
    """
    if gray_255.shape[0] < 3 or gray_255.shape[1] < 3:
        return 0.0
    g = gray_255
    lap = g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * g[1:-1, 1:-1]
    value = float(lap.var())
    return 0.0 if math.isnan(value) else value
