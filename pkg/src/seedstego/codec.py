"""End-to-end protocol: sender-side embed and receiver-side extract.

Embed regenerates the cover from the shared seed, searches for a bounded
perturbation whose decodings match the secrets, and transmits the 8-bit
quantized sum.  Extract regenerates the same cover, subtracts it (exact,
because covers are always on the 8-bit lattice), and runs the receiver's
seeded decoder on the difference.  Nothing about any receiver's output
depends on the other receivers' seeds or secrets.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .cover import CoverProvider, generate_cover
from .distort import CriticHandle, JpegChannel, JpegProxyConfig, is_on_lattice, quantize8
from .errors import ConfigError, NumericsError, ProtocolError, ShapeError
from .images import resize_bilinear, validate_image
from .keys import KeyMaterial, init_weights
from .metrics import QualityReport, psnr, quality_report
from .nn import DecoderSpec, decoder_forward, default_decoder_spec
from .search import LossBreakdown, SpsConfig, search_perturbation

_STRIDE_PLANS = {6.0: (1, 1, 2), 1.5: (1, 2, 2)}


@dataclass(frozen=True)
class CapacityPlan:
    """Embedding rate and the decoder stride plan that realizes it.

    With stride product p the secret is (H/p, W/p), so the rate is
    24 / p^2 bits per cover pixel (3 channels at 8 bits each).
    """

    bpp: float
    stride_plan: tuple[int, int, int]

    def __post_init__(self):
        prod = 1
        for s in self.stride_plan:
            prod *= s
        if abs(self.bpp - 24.0 / prod**2) > 1e-9:
            raise ConfigError(
                f"bpp {self.bpp} inconsistent with stride plan {self.stride_plan} "
                f"(implies {24.0 / prod ** 2} bpp)"
            )

    @property
    def stride_product(self) -> int:
        p = 1
        for s in self.stride_plan:
            p *= s
        return p

    def secret_shape(self, cover_shape: tuple[int, ...]) -> tuple[int, int, int]:
        p = self.stride_product
        return (3, cover_shape[1] // p, cover_shape[2] // p)


def plan_capacity(bpp: float) -> CapacityPlan:
    if bpp not in _STRIDE_PLANS:
        raise ConfigError(
            f"unsupported capacity {bpp} bpp; supported: "
            f"{sorted(_STRIDE_PLANS)}"
        )
    return CapacityPlan(bpp=bpp, stride_plan=_STRIDE_PLANS[bpp])


@dataclass(frozen=True)
class EmbedRequest:
    keys: KeyMaterial
    secrets: tuple[np.ndarray, ...]
    provider: CoverProvider
    sps: SpsConfig = field(default_factory=SpsConfig)
    plan: CapacityPlan = field(default_factory=lambda: plan_capacity(6.0))
    robustness: JpegProxyConfig | None = None
    critics: tuple[CriticHandle, ...] = ()
    decoder_spec: DecoderSpec | None = None
    selfcheck_floor_db: float = 15.0

    def __post_init__(self):
        if len(self.secrets) != self.keys.receivers:
            raise ConfigError(
                f"{len(self.secrets)} secrets for {self.keys.receivers} receivers"
            )


@dataclass(frozen=True)
class EmbedResult:
    stego: np.ndarray
    cover: np.ndarray
    delta: np.ndarray
    recovered: tuple[np.ndarray, ...]
    report: QualityReport
    trace: tuple[LossBreakdown, ...]
    original_secret_sizes: tuple[tuple[int, int], ...]
    warnings: tuple[str, ...]


@contextmanager
def _stage(name: str):
    # keep exception type, prepend which protocol stage raised it
    try:
        yield
    except (ConfigError, ShapeError, ProtocolError, NumericsError) as exc:
        exc.args = (f"[{name}] {exc.args[0]}" if exc.args else f"[{name}]",)
        raise


def _resolve_spec(plan: CapacityPlan, override: DecoderSpec | None) -> DecoderSpec:
    if override is not None:
        return override
    return default_decoder_spec(strides=plan.stride_plan)


def _build_decoder(spec: DecoderSpec, keys: KeyMaterial, index: int):
    return spec, init_weights(spec, keys.decoder_seeds[index], keys.init_algorithm)


def embed(req: EmbedRequest) -> EmbedResult:
    spec = _resolve_spec(req.plan, req.decoder_spec)

    with _stage("cover"):
        cover = generate_cover(req.provider, multiple_of=req.plan.stride_product)

    with _stage("keys"):
        decoders = [
            _build_decoder(spec, req.keys, t) for t in range(req.keys.receivers)
        ]

    with _stage("secrets"):
        target = req.plan.secret_shape(cover.shape)
        sizes = []
        prepared = []
        for s in req.secrets:
            validate_image(s)
            sizes.append((s.shape[1], s.shape[2]))
            prepared.append(
                s if s.shape == target else resize_bilinear(s, target[1:])
            )

    channel = JpegChannel(req.robustness) if req.robustness is not None else None
    with _stage("search"):
        delta, trace = search_perturbation(
            cover, prepared, decoders, list(req.critics), req.sps, channel=channel
        )

    with _stage("quantize"):
        stego = quantize8(cover + delta)

    # pre-transmission self-check: what each receiver would recover from
    # this exact stego over a lossless channel
    with _stage("selfcheck"):
        residual = stego - cover
        recovered = tuple(
            quantize8(decoder_forward(residual, spec, w)) for _, w in decoders
        )
        report = quality_report(cover, stego, tuple(prepared), recovered)

    warnings = tuple(
        f"receiver {t}: self-check recovery {p:.2f} dB below floor "
        f"{req.selfcheck_floor_db:.2f} dB"
        for t, p in enumerate(report.recovery_psnr)
        if p < req.selfcheck_floor_db
    )
    return EmbedResult(
        stego=stego,
        cover=cover,
        delta=delta,
        recovered=recovered,
        report=report,
        trace=tuple(trace),
        original_secret_sizes=tuple(sizes),
        warnings=warnings,
    )


def extract(
    stego: np.ndarray,
    keys: KeyMaterial,
    receiver_index: int,
    provider: CoverProvider,
    plan: CapacityPlan,
    decoder_spec: DecoderSpec | None = None,
) -> np.ndarray:
    """Receiver path: regenerate the cover, separate the residual, decode."""
    if not 0 <= receiver_index < keys.receivers:
        raise ConfigError(
            f"receiver index {receiver_index} out of range for "
            f"{keys.receivers} receivers"
        )
    with _stage("stego"):
        validate_image(stego)
        if not is_on_lattice(stego):
            raise ProtocolError(
                "stego image is not 8-bit quantized; transmission must be lossless"
            )
    with _stage("cover"):
        cover = generate_cover(provider, multiple_of=plan.stride_product)
        if cover.shape != stego.shape:
            raise ProtocolError(
                f"stego shape {stego.shape} does not match regenerated cover "
                f"{cover.shape}: wrong key or wrong plan"
            )
    spec = _resolve_spec(plan, decoder_spec)
    with _stage("decode"):
        _, weights = _build_decoder(spec, keys, receiver_index)
        residual = stego - cover
        return quantize8(decoder_forward(residual, spec, weights))


def selfcheck_psnr(result: EmbedResult) -> tuple[float, ...]:
    return result.report.recovery_psnr


def cross_recovery_psnr(
    result: EmbedResult, secrets: tuple[np.ndarray, ...]
) -> np.ndarray:
    """Matrix of PSNR(receiver t's output, secret u); diagonal is the self-check."""
    t_count = len(result.recovered)
    out = np.zeros((t_count, len(secrets)))
    for t, rec in enumerate(result.recovered):
        for u, s in enumerate(secrets):
            out[t, u] = psnr(rec, s)
    return out
