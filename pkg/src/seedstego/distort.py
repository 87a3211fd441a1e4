"""Distortion models between sender and receiver.

Three pieces live here:

* 8-bit quantization (`quantize8`), the only lossy step on the nominal
  lossless path.  Round-half-even is frozen so both parties agree exactly.
* A JPEG proxy: the pixel-domain effect of baseline JPEG at a given quality
  factor, i.e. blockwise DCT quantization on full-resolution (4:4:4) YCbCr.
  Entropy coding is lossless and therefore omitted.  Its gradient is the
  identity (straight-through), which is how it participates in the search.
* The pluggable critic interface for the detectability term, with a
  built-in stand-in that scores high-frequency residual energy.  Real
  steganalysis networks can be attached through the same handle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import correlate2d

_RANGE_TOL = 1e-6


def quantize8(x: np.ndarray) -> np.ndarray:
    """Snap values in [0, 1] to the 8-bit lattice k/255, ties to even.

    Float dust up to 1e-6 outside [0, 1] (from bound arithmetic) is
    tolerated and clipped before rounding; anything further out is an error.
    """
    if x.min() < -_RANGE_TOL or x.max() > 1.0 + _RANGE_TOL:
        raise ShapeError(
            f"quantize8 input must lie in [0, 1], got [{x.min():.4g}, {x.max():.4g}]"
        )
    return np.round(255.0 * np.clip(x, 0.0, 1.0)) / 255.0


def is_on_lattice(x: np.ndarray) -> bool:
    scaled = 255.0 * x
    return bool(np.all(np.abs(scaled - np.round(scaled)) <= 1e-6))


# ---------------------------------------------------------------------------
# JPEG proxy

# baseline luminance/chrominance quantization tables (the standard defaults)
LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

CHROMA_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class JpegProxyConfig:
    quality: int = 90

    def __post_init__(self):
        if not 1 <= self.quality <= 100:
            raise ConfigError(f"quality must be in 1..100, got {self.quality}")


def scaled_quant_tables(quality: int) -> tuple[np.ndarray, np.ndarray]:
    """Luma/chroma tables after the standard quality scaling.

    scale = 50/q below 50, (200 - 2q)/100 at or above; entries clamp to a
    minimum of 1 (so quality 100 quantizes coefficients to integers).
    """
    if quality < 50:
        scale = 50.0 / quality
    else:
        scale = (200.0 - 2.0 * quality) / 100.0
    luma = np.maximum(1.0, np.round(LUMA_TABLE * scale))
    chroma = np.maximum(1.0, np.round(CHROMA_TABLE * scale))
    return luma, chroma


def _dct_matrix() -> np.ndarray:
    a = np.zeros((8, 8))
    a[0, :] = 1.0 / math.sqrt(8.0)
    j = np.arange(8)
    for i in range(1, 8):
        a[i, :] = 0.5 * np.cos((2 * j + 1) * i * math.pi / 16.0)
    return a


_DCT = _dct_matrix()

# JFIF RGB <-> YCbCr in the 0..255 scale
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def _pad_to_blocks(x: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = x.shape[1], x.shape[2]
    ph = (-h) % 8
    pw = (-w) % 8
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return x, (h, w)


def jpeg_proxy_forward(x: np.ndarray, cfg: JpegProxyConfig = JpegProxyConfig()) -> np.ndarray:
    """Blockwise DCT quantization of an RGB image in [0, 1].

    RGB -> YCbCr (full resolution), per 8x8 block: orthonormal DCT, divide
    by the scaled tables, round, multiply back, inverse DCT, then back to
    RGB and clamp to [0, 1].
    """
    if x.ndim != 3 or x.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) image, got {x.shape}")
    luma, chroma = scaled_quant_tables(cfg.quality)
    rgb = 255.0 * x
    ycc = np.tensordot(_RGB_TO_YCC, rgb, axes=(1, 0))
    ycc[1:] += 128.0
    ycc -= 128.0  # level shift for the DCT
    ycc, (h, w) = _pad_to_blocks(ycc)
    hb, wb = ycc.shape[1] // 8, ycc.shape[2] // 8
    blocks = ycc.reshape(3, hb, 8, wb, 8).transpose(0, 1, 3, 2, 4)
    coeffs = _DCT @ blocks @ _DCT.T
    tables = np.stack([luma, chroma, chroma])[:, None, None]
    coeffs = np.round(coeffs / tables) * tables
    rec = _DCT.T @ coeffs @ _DCT
    ycc = rec.transpose(0, 1, 3, 2, 4).reshape(3, hb * 8, wb * 8)[:, :h, :w]
    ycc += 128.0
    ycc[1:] -= 128.0
    rgb = np.tensordot(_YCC_TO_RGB, ycc, axes=(1, 0))
    return np.clip(rgb / 255.0, 0.0, 1.0)


def jpeg_proxy_gradient(grad_out: np.ndarray) -> np.ndarray:
    """Straight-through: the proxy's backward pass is the identity."""
    return grad_out


@dataclass(frozen=True)
class JpegChannel:
    """Distortion channel wrapper the search inserts before each decoder."""

    cfg: JpegProxyConfig = field(default_factory=JpegProxyConfig)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return jpeg_proxy_forward(x, self.cfg)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return jpeg_proxy_gradient(grad_out)


# ---------------------------------------------------------------------------
# critics

@dataclass(frozen=True)
class CriticHandle:
    """Differentiable detectability scorer: image -> score in [0, 1]."""

    identifier: str
    evaluate: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


def check_critic_gradient(
    critic: CriticHandle,
    image: np.ndarray,
    n_coords: int = 8,
    h: float = 1e-3,
    rtol: float = 1e-3,
) -> float:
    """Central-difference consistency check; returns the worst relative error."""
    g = critic.gradient(image)
    if g.shape != image.shape:
        raise ConfigError(
            f"critic {critic.identifier!r} gradient shape {g.shape} != {image.shape}"
        )
    idx_rng = np.random.default_rng(0)
    flat = image.reshape(-1)
    worst = 0.0
    for i in idx_rng.choice(flat.size, size=min(n_coords, flat.size), replace=False):
        probe = flat.copy()
        probe[i] += h
        up = critic.evaluate(probe.reshape(image.shape))
        probe[i] -= 2 * h
        down = critic.evaluate(probe.reshape(image.shape))
        numeric = (up - down) / (2 * h)
        analytic = g.reshape(-1)[i]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    if worst > rtol:
        raise ConfigError(
            f"critic {critic.identifier!r} failed the gradient check "
            f"(relative error {worst:.3g} > {rtol})"
        )
    return worst


# fixed zero-sum high-pass bank: Laplacian plus both Sobel responses
_HF_FILTERS = (
    np.array(
        [[[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]]]
    )[None] / 4.0,
    np.array(
        [[[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]]
    )[None] / 4.0,
    np.array(
        [[[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]]
    )[None] / 4.0,
)

# chosen so a typical textured cover lands mid-range rather than saturating
_HF_GAIN = 2.0e3


def _hf_energy(image: np.ndarray) -> tuple[float, list[list[np.ndarray]]]:
    responses = []
    total = 0.0
    count = 0
    for c in range(image.shape[0]):
        per_channel = []
        for filt in _HF_FILTERS:
            r = correlate2d(image[c : c + 1], filt, stride=1, pad=0)
            per_channel.append(r)
            total += float((r * r).sum())
            count += r.size
        responses.append(per_channel)
    return total / count, responses


def _hf_score(image: np.ndarray) -> float:
    energy, _ = _hf_energy(image)
    return 1.0 - math.exp(-_HF_GAIN * energy)


def _hf_gradient(image: np.ndarray) -> np.ndarray:
    energy, responses = _hf_energy(image)
    count = sum(r.size for per in responses for r in per)
    outer = _HF_GAIN * math.exp(-_HF_GAIN * energy)
    grad = np.zeros_like(image)
    k = _HF_FILTERS[0].shape[-1]
    for c, per_channel in enumerate(responses):
        for filt, r in zip(_HF_FILTERS, per_channel):
            flipped = filt[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            back = correlate2d(
                (2.0 / count) * r, np.ascontiguousarray(flipped), stride=1, pad=k - 1
            )
            grad[c] += outer * back[0]
    return grad


def hf_residual_critic(verify: bool = True) -> CriticHandle:
    """Built-in critic: squashed mean energy of a 3x3 high-pass bank.

    Zero for constant images, strictly increasing in added noise, and
    analytically differentiable everywhere.  When `verify` is set the
    handle is checked against finite differences on a fixed probe image
    before being returned.
    """
    critic = CriticHandle(
        identifier="hf-residual",
        evaluate=_hf_score,
        gradient=_hf_gradient,
    )
    if verify:
        from .rng import derive_stream

        probe = derive_stream(0xC217, "critic/probe").uniforms(3 * 16 * 16)
        check_critic_gradient(critic, probe.reshape(3, 16, 16))
    return critic
