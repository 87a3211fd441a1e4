"""Key-reproducible cover images.

Sender and receiver must hold the *identical* cover so that subtracting it
from the stego recovers the perturbation exactly.  Two providers exist:

* `ProceduralCover` synthesizes the cover from the cover seed: four octaves
  of seeded Gaussian value noise (each octave a coarse grid bilinearly
  upsampled to full size, octave o weighted 1/2**o) drive a shared luminance
  field plus a weaker per-channel field around a seeded base tone, squashed
  through a logistic into [0, 1].  The result is a pure function of
  (seed, height, width).
* `FileBackedCover` decodes a PNG from disk.  This shifts cover sharing
  out-of-band and is intended for benchmarking against fixed images only.

Either way the output is snapped to the 8-bit lattice, so both parties'
float pipelines agree bit-for-bit and cover separation is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distort import quantize8
from .errors import ShapeError
from .images import load_png, resize_bilinear, validate_image
from .rng import derive_stream, sample_gaussian

MIN_COVER_SIDE = 32
OCTAVES = 4

# field mix: shared luminance dominates so channels stay correlated
_LUMA_WEIGHT = 0.18
_CHROMA_WEIGHT = 0.07
_SQUASH_SLOPE = 4.0


@dataclass(frozen=True)
class ProceduralCover:
    cover_seed: int
    height: int
    width: int


@dataclass(frozen=True)
class FileBackedCover:
    path: str


CoverProvider = ProceduralCover | FileBackedCover


def _octave_field(seed: int, label: str, height: int, width: int) -> np.ndarray:
    """Sum of upsampled noise grids, z-scored over the pixels."""
    total = np.zeros((height, width))
    for o in range(OCTAVES):
        gh = max(2, (height * 2**o) // 32)
        gw = max(2, (width * 2**o) // 32)
        rng = derive_stream(seed, f"{label}/{o}")
        grid = sample_gaussian(rng, gh * gw).reshape(1, gh, gw)
        total += (0.5**o) * resize_bilinear(grid, (height, width))[0]
    total -= total.mean()
    std = total.std()
    if std > 0:
        total /= std
    return total


def _procedural(seed: int, height: int, width: int) -> np.ndarray:
    tone_rng = derive_stream(seed, "cover/tone")
    base = 0.3 + 0.4 * tone_rng.uniforms(3)
    luma = _octave_field(seed, "cover/luma", height, width)
    out = np.empty((3, height, width))
    for c in range(3):
        chroma = _octave_field(seed, f"cover/chroma/{c}", height, width)
        val = base[c] + _LUMA_WEIGHT * luma + _CHROMA_WEIGHT * chroma
        out[c] = 1.0 / (1.0 + np.exp(-_SQUASH_SLOPE * (val - 0.5)))
    return out


def generate_cover(provider: CoverProvider, multiple_of: int = 1) -> np.ndarray:
    """Produce the cover image on the 8-bit lattice.

    `multiple_of` is the decoder stride product; sides must divide evenly so
    the decoder's output size comes out whole.
    """
    if isinstance(provider, ProceduralCover):
        h, w = provider.height, provider.width
        if h < MIN_COVER_SIDE or w < MIN_COVER_SIDE:
            raise ShapeError(f"cover sides must be >= {MIN_COVER_SIDE}, got {h}x{w}")
        if h % multiple_of or w % multiple_of:
            raise ShapeError(
                f"cover sides {h}x{w} must be divisible by the stride product {multiple_of}"
            )
        img = _procedural(provider.cover_seed, h, w)
    elif isinstance(provider, FileBackedCover):
        img = load_png(provider.path)
        if img.shape[1] % multiple_of or img.shape[2] % multiple_of:
            raise ShapeError(
                f"cover sides {img.shape[1]}x{img.shape[2]} must be divisible "
                f"by the stride product {multiple_of}"
            )
    else:
        raise ShapeError(f"unknown cover provider {provider!r}")
    return quantize8(validate_image(img, "cover"))
