"""Key material and seed-derived decoder weights.

A key file holds everything the receiver needs: the cover seed, one decoder
seed per receiver, and the weight-initialization algorithm.  Weights are
never stored or transmitted; both parties re-derive them from the seeds, so
initialization must be bit-reproducible (see `rng` for the frozen stream
construction).  Each layer draws from its own stream labelled
``weights/<layer-index>`` so inserting a layer cannot shift later layers'
draws.  Kernels fill in C order of shape (out, in, k, k), then the bias.
"""

from __future__ import annotations

import json
import secrets as _secrets
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import DecoderSpec, DecoderWeights
from .rng import DeterministicRng, derive_stream, sample_gaussian

INIT_ALGORITHMS = ("uniform01", "gaussian", "xavier", "orthogonal", "kaiming")

KEY_FILE_VERSION = 1
_KEY_FIELDS = {"version", "cover_seed", "decoder_seeds", "init_algorithm"}
_U64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class KeyMaterial:
    cover_seed: int
    decoder_seeds: tuple[int, ...]
    init_algorithm: str = "xavier"

    def __post_init__(self):
        for s in (self.cover_seed, *self.decoder_seeds):
            if not isinstance(s, int) or not 0 <= s <= _U64_MAX:
                raise ConfigError(f"seed out of 64-bit range: {s!r}")
        if len(self.decoder_seeds) < 1:
            raise ConfigError("need at least one decoder seed")
        if len(set(self.decoder_seeds)) != len(self.decoder_seeds):
            raise ConfigError("decoder seeds must be pairwise distinct")
        if self.init_algorithm not in INIT_ALGORITHMS:
            raise ConfigError(
                f"unknown init algorithm {self.init_algorithm!r}; "
                f"choose one of {INIT_ALGORITHMS}"
            )

    @property
    def receivers(self) -> int:
        return len(self.decoder_seeds)


def generate_key_material(receivers: int, init_algorithm: str = "xavier") -> KeyMaterial:
    """Fresh keys from system entropy; decoder seeds guaranteed distinct."""
    if receivers < 1:
        raise ConfigError(f"receivers must be >= 1, got {receivers}")
    seeds: list[int] = []
    while len(seeds) < receivers:
        s = _secrets.randbits(64)
        if s not in seeds:
            seeds.append(s)
    return KeyMaterial(
        cover_seed=_secrets.randbits(64),
        decoder_seeds=tuple(seeds),
        init_algorithm=init_algorithm,
    )


def _seed_to_hex(s: int) -> str:
    return f"0x{s:x}"


def _hex_to_seed(s) -> int:
    if not isinstance(s, str) or not s.startswith("0x"):
        raise ConfigError(f"seeds must be 0x-prefixed hex strings, got {s!r}")
    try:
        value = int(s, 16)
    except ValueError as exc:
        raise ConfigError(f"bad seed {s!r}") from exc
    if not 0 <= value <= _U64_MAX:
        raise ConfigError(f"seed out of 64-bit range: {s!r}")
    return value


def key_material_to_json(km: KeyMaterial) -> str:
    return json.dumps(
        {
            "version": KEY_FILE_VERSION,
            "cover_seed": _seed_to_hex(km.cover_seed),
            "decoder_seeds": [_seed_to_hex(s) for s in km.decoder_seeds],
            "init_algorithm": km.init_algorithm,
        },
        indent=2,
    )


def key_material_from_json(text: str) -> KeyMaterial:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"key file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("key file must be a JSON object")
    unknown = set(data) - _KEY_FIELDS
    if unknown:
        raise ConfigError(f"unknown key-file fields: {sorted(unknown)}")
    missing = _KEY_FIELDS - set(data)
    if missing:
        raise ConfigError(f"missing key-file fields: {sorted(missing)}")
    if data["version"] != KEY_FILE_VERSION:
        raise ConfigError(f"unsupported key-file version {data['version']!r}")
    if not isinstance(data["decoder_seeds"], list):
        raise ConfigError("decoder_seeds must be a list")
    return KeyMaterial(
        cover_seed=_hex_to_seed(data["cover_seed"]),
        decoder_seeds=tuple(_hex_to_seed(s) for s in data["decoder_seeds"]),
        init_algorithm=data["init_algorithm"],
    )


def save_key_file(km: KeyMaterial, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(key_material_to_json(km) + "\n")


def load_key_file(path) -> KeyMaterial:
    with open(path, "r", encoding="utf-8") as fh:
        return key_material_from_json(fh.read())


# ---------------------------------------------------------------------------
# weight initialization


def _uniform_pm(rng: DeterministicRng, n: int, a: float) -> np.ndarray:
    """n uniform draws on [-a, a]."""
    return a * (2.0 * rng.uniforms(n) - 1.0)


def _orthonormal_rows(rng: DeterministicRng, rows: int, cols: int) -> np.ndarray:
    """Gaussian (rows, cols) matrix, rows <= cols, orthonormalized by
    modified Gram-Schmidt with one re-orthogonalization pass."""
    a = sample_gaussian(rng, rows * cols).reshape(rows, cols)
    for _ in range(2):
        for i in range(rows):
            v = a[i]
            for j in range(i):
                v = v - (v @ a[j]) * a[j]
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                raise ConfigError("degenerate draw during orthogonal initialization")
            a[i] = v / norm
    return a


def init_weights(spec: DecoderSpec, seed: int, algorithm: str = "xavier") -> DecoderWeights:
    """Fill every kernel and bias deterministically from (seed, algorithm).

    Fan counts follow the convolution convention fan = channels x kernel
    area.  Biases are zero except for the plain uniform01/gaussian schemes,
    which draw them from the same distribution as the kernels.
    """
    if algorithm not in INIT_ALGORITHMS:
        raise ConfigError(
            f"unknown init algorithm {algorithm!r}; choose one of {INIT_ALGORITHMS}"
        )
    layers = []
    for idx, layer in enumerate(spec.layers):
        rng = derive_stream(seed, f"weights/{idx}")
        k2 = layer.kernel * layer.kernel
        fan_in = layer.in_channels * k2
        fan_out = layer.out_channels * k2
        shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        n = int(np.prod(shape))
        if algorithm == "uniform01":
            kern = rng.uniforms(n).reshape(shape)
            bias = rng.uniforms(layer.out_channels)
        elif algorithm == "gaussian":
            kern = sample_gaussian(rng, n).reshape(shape)
            bias = sample_gaussian(rng, layer.out_channels)
        elif algorithm == "xavier":
            a = np.sqrt(6.0 / (fan_in + fan_out))
            kern = _uniform_pm(rng, n, a).reshape(shape)
            bias = np.zeros(layer.out_channels)
        elif algorithm == "kaiming":
            std = np.sqrt(2.0 / fan_in)
            kern = (std * sample_gaussian(rng, n)).reshape(shape)
            bias = np.zeros(layer.out_channels)
        else:  # orthogonal
            rows, cols = layer.out_channels, fan_in
            if rows <= cols:
                mat = _orthonormal_rows(rng, rows, cols)
            else:
                mat = _orthonormal_rows(rng, cols, rows).T
            kern = np.ascontiguousarray(mat).reshape(shape)
            bias = np.zeros(layer.out_channels)
        layers.append((kern, bias))
    return DecoderWeights(layers=tuple(layers))


def weights_digest(weights: DecoderWeights) -> bytes:
    """Concatenated raw bytes of all arrays, for byte-identity checks."""
    return b"".join(
        part.tobytes() for kern, bias in weights.layers for part in (kern, bias)
    )
