"""Minimal convolutional engine for the fixed random decoder.

Everything operates on single images in channels-first layout ``(C, H, W)``
as float64 numpy arrays.  The decoder's weights are frozen by construction,
so backward passes produce *input* gradients only; there is deliberately no
parameter-gradient path.

Convolutions are evaluated as im2col + one matrix product, which fixes the
accumulation order for a given BLAS build and keeps repeated forward passes
bit-identical within one process/platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

ACTIVATIONS = ("leaky_relu", "sigmoid", "none")


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    instance_norm: bool
    activation: str
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ShapeError(f"kernel must be odd and positive, got {self.kernel}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("channel counts must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")

    @property
    def padding(self) -> int:
        # floor(k/2): stride-1 layers preserve spatial size
        return self.kernel // 2

    def out_size(self, size: int) -> int:
        return (size + 2 * self.padding - self.kernel) // self.stride + 1


@dataclass(frozen=True)
class DecoderSpec:
    """Stack of conv layers: Conv -> IN -> LeakyReLU repeated, Conv -> Sigmoid last."""

    layers: tuple[ConvLayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("decoder needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_channels != b.in_channels:
                raise ShapeError(
                    f"channel mismatch between layers: {a.out_channels} -> {b.in_channels}"
                )
        for layer in self.layers[:-1]:
            if layer.activation != "leaky_relu" or not layer.instance_norm:
                raise ShapeError("intermediate layers must be Conv -> IN -> LeakyReLU")
        last = self.layers[-1]
        if last.activation != "sigmoid" or last.instance_norm:
            raise ShapeError("final layer must be Conv -> Sigmoid without normalization")

    @property
    def stride_product(self) -> int:
        p = 1
        for layer in self.layers:
            p *= layer.stride
        return p

    def output_shape(self, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        c, h, w = in_shape
        if c != self.layers[0].in_channels:
            raise ShapeError(
                f"input has {c} channels, decoder expects {self.layers[0].in_channels}"
            )
        for layer in self.layers:
            h, w = layer.out_size(h), layer.out_size(w)
        return self.layers[-1].out_channels, h, w

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "in_channels": l.in_channels,
                    "out_channels": l.out_channels,
                    "kernel": l.kernel,
                    "stride": l.stride,
                    "instance_norm": l.instance_norm,
                    "activation": l.activation,
                    "leaky_slope": l.leaky_slope,
                }
                for l in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderSpec":
        return cls(tuple(ConvLayerSpec(**entry) for entry in d["layers"]))


def default_decoder_spec(
    strides: tuple[int, ...] = (1, 1, 2),
    hidden_channels: int = 32,
    kernel: int = 3,
    leaky_slope: float = 0.2,
) -> DecoderSpec:
    """The shallow 3 -> hidden -> ... -> hidden -> 3 decoder used throughout."""
    if len(strides) < 2:
        raise ShapeError("need at least two layers")
    chans = [3] + [hidden_channels] * (len(strides) - 1) + [3]
    layers = []
    for i, s in enumerate(strides):
        last = i == len(strides) - 1
        layers.append(
            ConvLayerSpec(
                in_channels=chans[i],
                out_channels=chans[i + 1],
                kernel=kernel,
                stride=s,
                instance_norm=not last,
                activation="sigmoid" if last else "leaky_relu",
                leaky_slope=leaky_slope,
            )
        )
    return DecoderSpec(tuple(layers))


@dataclass(frozen=True)
class DecoderWeights:
    """Per-layer (kernel, bias) arrays; arrays are frozen on construction."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        for kern, bias in self.layers:
            kern.flags.writeable = False
            bias.flags.writeable = False


def check_weights(spec: DecoderSpec, weights: DecoderWeights) -> None:
    if len(spec.layers) != len(weights.layers):
        raise ShapeError("weight layer count does not match decoder spec")
    for layer, (kern, bias) in zip(spec.layers, weights.layers):
        want = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        if kern.shape != want:
            raise ShapeError(f"kernel shape {kern.shape} != {want}")
        if bias.shape != (layer.out_channels,):
            raise ShapeError(f"bias shape {bias.shape} != ({layer.out_channels},)")


# ---------------------------------------------------------------------------
# convolution


def correlate2d(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Cross-correlation of (C,H,W) with (O,C,k,k), zero padding, no bias."""
    k = w.shape[2]
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    c, oh, ow = windows.shape[:3]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c * k * k)
    out = cols @ w.reshape(w.shape[0], -1).T
    return out.T.reshape(w.shape[0], oh, ow)


def conv2d_forward(x: np.ndarray, layer: ConvLayerSpec, kern: np.ndarray,
                   bias: np.ndarray) -> np.ndarray:
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise ShapeError(f"expected ({layer.in_channels}, H, W) input, got {x.shape}")
    if min(x.shape[1], x.shape[2]) < layer.kernel:
        raise ShapeError("input smaller than kernel")
    y = correlate2d(x, kern, layer.stride, layer.padding)
    return y + bias[:, None, None]


def conv2d_backward_input(grad_out: np.ndarray, layer: ConvLayerSpec,
                          kern: np.ndarray, in_shape: tuple[int, int]) -> np.ndarray:
    """Gradient of a conv layer w.r.t. its input.

    Implemented as a stride-1 correlation of the (zero-dilated) output
    gradient with the spatially flipped, channel-transposed kernel, which is
    the transpose of the forward map.  Input positions past the last window
    (possible when stride does not divide the padded size) receive zero.
    """
    h, w = in_shape
    s, p, k = layer.stride, layer.padding, layer.kernel
    want = (layer.out_channels, layer.out_size(h), layer.out_size(w))
    if grad_out.shape != want:
        raise ShapeError(f"grad_out shape {grad_out.shape} != {want}")
    if s > 1:
        dil = np.zeros(
            (grad_out.shape[0], (grad_out.shape[1] - 1) * s + 1,
             (grad_out.shape[2] - 1) * s + 1),
            dtype=grad_out.dtype,
        )
        dil[:, ::s, ::s] = grad_out
    else:
        dil = grad_out
    w_t = kern[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (in, out, k, k)
    full = correlate2d(dil, np.ascontiguousarray(w_t), 1, k - 1)
    hp, wp = h + 2 * p, w + 2 * p
    if full.shape[1] != hp or full.shape[2] != wp:
        padded = np.zeros((full.shape[0], hp, wp), dtype=full.dtype)
        padded[:, : full.shape[1], : full.shape[2]] = full
        full = padded
    return full[:, p : p + h, p : p + w]


# ---------------------------------------------------------------------------
# instance normalization (no learned affine; the network is never trained)

EPS_IN = 1e-5


@dataclass
class InstanceNormCache:
    inv_std: np.ndarray   # (C, 1, 1)
    normalized: np.ndarray  # (C, H, W)


def instance_norm_forward(x: np.ndarray) -> tuple[np.ndarray, InstanceNormCache]:
    if x.ndim != 3 or x.shape[1] * x.shape[2] < 2:
        raise ShapeError(f"instance norm needs (C, H, W) with >= 2 positions, got {x.shape}")
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + EPS_IN)
    y = (x - mu) * inv_std
    return y, InstanceNormCache(inv_std=inv_std, normalized=y)


def instance_norm_backward_input(grad_out: np.ndarray, cache: InstanceNormCache) -> np.ndarray:
    y = cache.normalized
    if grad_out.shape != y.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != {y.shape}")
    g_mean = grad_out.mean(axis=(1, 2), keepdims=True)
    gy_mean = (grad_out * y).mean(axis=(1, 2), keepdims=True)
    return cache.inv_std * (grad_out - g_mean - y * gy_mean)


# ---------------------------------------------------------------------------
# activations


def leaky_relu_forward(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(grad_out: np.ndarray, x: np.ndarray, slope: float) -> np.ndarray:
    return grad_out * np.where(x > 0, 1.0, slope)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    # split form avoids overflow of exp for large |x|
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_out * y * (1.0 - y)


# ---------------------------------------------------------------------------
# full decoder


@dataclass
class _LayerCache:
    in_shape: tuple[int, int]
    norm: InstanceNormCache | None
    act: np.ndarray  # pre-activation for leaky_relu, output for sigmoid


@dataclass
class DecoderCaches:
    spec: DecoderSpec
    weights: DecoderWeights
    layers: list[_LayerCache] = field(default_factory=list)
    out_shape: tuple[int, ...] = ()


def decoder_forward_with_cache(
    x: np.ndarray, spec: DecoderSpec, weights: DecoderWeights
) -> tuple[np.ndarray, DecoderCaches]:
    check_weights(spec, weights)
    caches = DecoderCaches(spec=spec, weights=weights)
    for layer, (kern, bias) in zip(spec.layers, weights.layers):
        in_shape = (x.shape[1], x.shape[2])
        x = conv2d_forward(x, layer, kern, bias)
        norm_cache = None
        if layer.instance_norm:
            x, norm_cache = instance_norm_forward(x)
        if layer.activation == "leaky_relu":
            act_cache = x
            x = leaky_relu_forward(x, layer.leaky_slope)
        elif layer.activation == "sigmoid":
            x = sigmoid_forward(x)
            act_cache = x
        else:
            act_cache = x
        caches.layers.append(_LayerCache(in_shape=in_shape, norm=norm_cache, act=act_cache))
    caches.out_shape = x.shape
    return x, caches


def decoder_forward(x: np.ndarray, spec: DecoderSpec, weights: DecoderWeights) -> np.ndarray:
    y, _ = decoder_forward_with_cache(x, spec, weights)
    return y


def decoder_backward_input(grad_out: np.ndarray, caches: DecoderCaches) -> np.ndarray:
    if not caches.layers or caches.out_shape == ():
        raise ShapeError("caches do not come from a completed forward pass")
    if grad_out.shape != caches.out_shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != {caches.out_shape}")
    g = grad_out
    for layer, (kern, _), cache in zip(
        reversed(caches.spec.layers),
        reversed(caches.weights.layers),
        reversed(caches.layers),
    ):
        if layer.activation == "leaky_relu":
            g = leaky_relu_backward(g, cache.act, layer.leaky_slope)
        elif layer.activation == "sigmoid":
            g = sigmoid_backward(g, cache.act)
        if layer.instance_norm:
            g = instance_norm_backward_input(g, cache.norm)
        g = conv2d_backward_input(g, layer, kern, cache.in_shape)
    return g
