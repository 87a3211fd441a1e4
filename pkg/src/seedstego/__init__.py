"""Cover-separable steganography with fixed, key-seeded random decoders.

A secret image is embedded as a small perturbation of a reproducible cover
image; any party holding the right seeds regenerates the cover, separates
the perturbation, and decodes it with a never-trained convolutional network
whose weights are derived from the key.
"""

from .codec import (
    CapacityPlan,
    EmbedRequest,
    EmbedResult,
    embed,
    extract,
    plan_capacity,
)
from .cover import CoverProvider, FileBackedCover, ProceduralCover, generate_cover
from .distort import (
    CriticHandle,
    JpegChannel,
    JpegProxyConfig,
    hf_residual_critic,
    is_on_lattice,
    jpeg_proxy_forward,
    jpeg_proxy_gradient,
    quantize8,
)
from .errors import ConfigError, NumericsError, ProtocolError, ShapeError
from .keys import (
    KeyMaterial,
    generate_key_material,
    init_weights,
    load_key_file,
    save_key_file,
)
from .metrics import QualityReport, psnr, quality_report, residual_stats, ssim
from .nn import (
    ConvLayerSpec,
    DecoderSpec,
    DecoderWeights,
    decoder_forward,
    default_decoder_spec,
)
from .search import (
    BoundBox,
    LossBreakdown,
    SearchState,
    SpsConfig,
    compute_bounds,
    evaluate_loss,
    reparameterize,
    search_perturbation,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityPlan",
    "ConvLayerSpec",
    "CoverProvider",
    "CriticHandle",
    "BoundBox",
    "ConfigError",
    "DecoderSpec",
    "DecoderWeights",
    "EmbedRequest",
    "EmbedResult",
    "FileBackedCover",
    "JpegChannel",
    "JpegProxyConfig",
    "KeyMaterial",
    "LossBreakdown",
    "NumericsError",
    "ProceduralCover",
    "ProtocolError",
    "QualityReport",
    "SearchState",
    "ShapeError",
    "SpsConfig",
    "compute_bounds",
    "decoder_forward",
    "default_decoder_spec",
    "embed",
    "evaluate_loss",
    "extract",
    "generate_cover",
    "generate_key_material",
    "hf_residual_critic",
    "init_weights",
    "is_on_lattice",
    "jpeg_proxy_forward",
    "jpeg_proxy_gradient",
    "load_key_file",
    "plan_capacity",
    "psnr",
    "quality_report",
    "quantize8",
    "reparameterize",
    "residual_stats",
    "save_key_file",
    "search_perturbation",
    "ssim",
]
