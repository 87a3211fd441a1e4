"""Image plumbing: (3, H, W) float64 arrays in [0, 1], PNG I/O, resizing.

PNG is the only stego transport format; it is lossless, which the protocol
requires (a lossy default would silently destroy the perturbation).
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ShapeError

MIN_SIDE = 8


def validate_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 3 or x.shape[0] != 3:
        raise ShapeError(f"{name} must be a (3, H, W) array, got "
                         f"{getattr(x, 'shape', type(x))}")
    if x.shape[1] < MIN_SIDE or x.shape[2] < MIN_SIDE:
        raise ShapeError(f"{name} sides must be >= {MIN_SIDE}, got {x.shape[1:]}")
    if not np.isfinite(x).all():
        raise ShapeError(f"{name} contains non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ShapeError(f"{name} values must lie in [0, 1], "
                         f"got range [{x.min():.4g}, {x.max():.4g}]")
    return x


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Scale [0,1] to 0..255 with round-half-even, matching quantize8."""
    return np.round(255.0 * x).astype(np.uint8)


def from_uint8(b: np.ndarray) -> np.ndarray:
    return b.astype(np.float64) / 255.0


def save_png(x: np.ndarray, path) -> None:
    validate_image(x)
    arr = to_uint8(x).transpose(1, 2, 0)  # HWC for PIL
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.uint8)
    return from_uint8(arr.transpose(2, 0, 1))


def resize_bilinear(x: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of a (C, H, W) array to (C, out_h, out_w).

    Pixel centers map as src = (dst + 0.5) * scale - 0.5, clamped at the
    borders (the usual half-pixel convention).
    """
    c, h, w = x.shape
    oh, ow = out_hw
    if oh < 1 or ow < 1:
        raise ShapeError(f"target size must be positive, got {out_hw}")
    if (oh, ow) == (h, w):
        return x.copy()

    def axis_coords(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    ylo, yhi, yf = axis_coords(h, oh)
    xlo, xhi, xf = axis_coords(w, ow)
    top = x[:, ylo][:, :, xlo] * (1 - xf) + x[:, ylo][:, :, xhi] * xf
    bot = x[:, yhi][:, :, xlo] * (1 - xf) + x[:, yhi][:, :, xhi] * xf
    return top * (1 - yf[None, :, None]) + bot * yf[None, :, None]
