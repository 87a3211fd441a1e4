"""Image quality metrics used for reporting and acceptance thresholds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for signals on a [0, 1] scale.

    Computed jointly over all channels; identical inputs give +inf.
    """
    _check_pair(a, b)
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


_WIN_1D = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)


def _windowed_mean(x: np.ndarray) -> np.ndarray:
    # separable Gaussian filter over valid windows
    v = sliding_window_view(x, _SSIM_WINDOW, axis=0)
    v = np.tensordot(v, _WIN_1D, axes=(-1, 0))
    v = sliding_window_view(v, _SSIM_WINDOW, axis=1)
    return np.tensordot(v, _WIN_1D, axes=(-1, 0))


def _ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    c1 = (_SSIM_K1) ** 2
    c2 = (_SSIM_K2) ** 2
    mu_a = _windowed_mean(a)
    mu_b = _windowed_mean(b)
    var_a = _windowed_mean(a * a) - mu_a * mu_a
    var_b = _windowed_mean(b * b) - mu_b * mu_b
    cov = _windowed_mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity, Gaussian-weighted 11x11 windows.

    Per-channel SSIM maps are averaged; the dynamic range is 1 (unit-scale
    images).  Images must be at least the window size on both sides.
    """
    _check_pair(a, b)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) images, got {a.shape}")
    if min(a.shape[1], a.shape[2]) < _SSIM_WINDOW:
        raise ShapeError(
            f"images must be at least {_SSIM_WINDOW} px per side for SSIM, got {a.shape}"
        )
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.mean([_ssim_channel(a[c], b[c]) for c in range(3)]))


def residual_stats(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """(max absolute difference, Euclidean norm of the difference)."""
    _check_pair(a, b)
    d = np.asarray(a, dtype=np.float64) - b
    return float(np.max(np.abs(d))) if d.size else 0.0, float(np.linalg.norm(d.ravel()))


@dataclass(frozen=True)
class QualityReport:
    """Stego quality against the cover plus recovery quality per secret."""

    stego_psnr: float
    stego_ssim: float
    residual_linf: float
    residual_l2: float
    recovery_psnr: tuple[float, ...]
    recovery_ssim: tuple[float, ...]

    def summary(self) -> str:
        lines = [
            f"stego: psnr {self.stego_psnr:.2f} dB  ssim {self.stego_ssim:.4f}  "
            f"|delta|_inf {self.residual_linf:.5f}  |delta|_2 {self.residual_l2:.4f}"
        ]
        for i, (p, s) in enumerate(zip(self.recovery_psnr, self.recovery_ssim)):
            lines.append(f"secret {i}: psnr {p:.2f} dB  ssim {s:.4f}")
        return "\n".join(lines)


def quality_report(
    cover: np.ndarray,
    stego: np.ndarray,
    secrets: tuple[np.ndarray, ...],
    recovered: tuple[np.ndarray, ...],
) -> QualityReport:
    linf, l2 = residual_stats(stego, cover)
    return QualityReport(
        stego_psnr=psnr(stego, cover),
        stego_ssim=ssim(stego, cover),
        residual_linf=linf,
        residual_l2=l2,
        recovery_psnr=tuple(psnr(r, s) for r, s in zip(recovered, secrets)),
        recovery_ssim=tuple(
            # secrets below the SSIM window still get a full report; PSNR
            # carries the recovery number and SSIM degrades to NaN
            ssim(r, s) if min(s.shape[1], s.shape[2]) >= _SSIM_WINDOW else float("nan")
            for r, s in zip(recovered, secrets)
        ),
    )
