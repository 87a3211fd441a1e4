"""Run configuration: one JSON file holding every tunable with its default.

The file is the record of an experiment.  Unknown keys are rejected rather
than ignored so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .codec import CapacityPlan, plan_capacity
from .cover import CoverProvider, FileBackedCover, ProceduralCover
from .distort import CriticHandle, JpegProxyConfig, hf_residual_critic
from .errors import ConfigError
from .nn import DecoderSpec, default_decoder_spec
from .search import SpsConfig


@dataclass(frozen=True)
class DecoderConfig:
    hidden_channels: int = 32
    kernel: int = 3
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.hidden_channels < 1:
            raise ConfigError(f"hidden_channels must be >= 1, got {self.hidden_channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd and >= 1, got {self.kernel}")


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "procedural"
    height: int = 512
    width: int = 512
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("procedural", "file"):
            raise ConfigError(f"provider kind must be procedural or file, got {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ConfigError("file provider requires a path")


@dataclass(frozen=True)
class RunConfig:
    sps: SpsConfig = field(default_factory=SpsConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    capacity_bpp: float = 6.0
    critic_enabled: bool = True
    robustness_quality: int | None = None
    selfcheck_floor_db: float = 15.0
    trace_csv: str | None = None

    def build_plan(self) -> CapacityPlan:
        return plan_capacity(self.capacity_bpp)

    def build_decoder_spec(self) -> DecoderSpec:
        return default_decoder_spec(
            strides=self.build_plan().stride_plan,
            hidden_channels=self.decoder.hidden_channels,
            kernel=self.decoder.kernel,
            leaky_slope=self.decoder.leaky_slope,
        )

    def build_provider(self, cover_seed: int) -> CoverProvider:
        if self.provider.kind == "file":
            return FileBackedCover(path=self.provider.path)
        return ProceduralCover(
            cover_seed=cover_seed,
            height=self.provider.height,
            width=self.provider.width,
        )

    def build_robustness(self) -> JpegProxyConfig | None:
        if self.robustness_quality is None:
            return None
        return JpegProxyConfig(quality=self.robustness_quality)

    def build_critics(self) -> tuple[CriticHandle, ...]:
        return (hf_residual_critic(),) if self.critic_enabled else ()


def _dataclass_to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = _dataclass_to_dict(v) if dataclasses.is_dataclass(v) else v
    return out


def run_config_to_dict(cfg: RunConfig) -> dict:
    return _dataclass_to_dict(cfg)


def _build_section(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {where} section: {exc}") from exc


def run_config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(data)
    if "sps" in kwargs:
        kwargs["sps"] = _build_section(SpsConfig, kwargs["sps"], "sps")
    if "decoder" in kwargs:
        kwargs["decoder"] = _build_section(DecoderConfig, kwargs["decoder"], "decoder")
    if "provider" in kwargs:
        kwargs["provider"] = _build_section(ProviderConfig, kwargs["provider"], "provider")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def default_config_json() -> str:
    return json.dumps(run_config_to_dict(RunConfig()), indent=2) + "\n"


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return run_config_from_dict(data)


def save_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(
        json.dumps(run_config_to_dict(cfg), indent=2) + "\n", encoding="utf-8"
    )
