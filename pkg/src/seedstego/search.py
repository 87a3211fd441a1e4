"""Perturbation search: Adam on a tanh-reparameterized bounded variable.

The objective is

    ||delta||_2 + beta * ( sum_t ||D_t(delta) - S_t||_2 + gamma * sum_i j_i(C + delta) )

where delta lives in the per-pixel box [max(-C, -eps), min(1 - C, eps)].
Instead of projecting, delta is written as a tanh squash of a free variable
z, so every iterate is feasible by construction and there is no clipping
step anywhere.  The critic weight gamma is held at zero for the first
`gamma_start_iter` iterations and switched to its configured value after.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError, ShapeError
from .images import validate_image
from .nn import (
    DecoderSpec,
    DecoderWeights,
    decoder_backward_input,
    decoder_forward_with_cache,
)
from .rng import derive_stream, sample_gaussian

DEFAULT_LR0 = 10.0 ** -1.25


@dataclass(frozen=True)
class SpsConfig:
    epsilon: float = 0.2
    beta: float = 0.5
    gamma: float = 2e-5
    gamma_start_iter: int = 1400
    total_iters: int = 1500
    lr0: float = DEFAULT_LR0
    lr_halve_every: int = 500
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # z is initialized at zero (box midpoint) unless "gaussian" is selected
    z_init: str = "zero"
    z_init_seed: int = 1
    z_init_scale: float = 0.01
    # "euclidean" sums squares over the flattened tensor; "rms" divides by
    # the element count inside the root.  beta defaults are tuned for the
    # former; switch both together.
    norm_mode: str = "euclidean"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.beta <= 0.0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")
        if self.gamma_start_iter > self.total_iters:
            raise ConfigError(
                f"gamma_start_iter {self.gamma_start_iter} exceeds "
                f"total_iters {self.total_iters}"
            )
        if self.total_iters < 1:
            raise ConfigError(f"total_iters must be >= 1, got {self.total_iters}")
        if self.lr0 <= 0.0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if self.lr_halve_every < 1:
            raise ConfigError(f"lr_halve_every must be >= 1, got {self.lr_halve_every}")
        if self.z_init not in ("zero", "gaussian"):
            raise ConfigError(f"unknown z_init {self.z_init!r}")
        if self.norm_mode not in ("euclidean", "rms"):
            raise ConfigError(f"unknown norm_mode {self.norm_mode!r}")


@dataclass(frozen=True)
class BoundBox:
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class LossBreakdown:
    perturbation_norm: float
    recovery_terms: tuple[float, ...]
    critic_terms: tuple[float, ...]
    total: float


@dataclass
class SearchState:
    z: np.ndarray
    m: np.ndarray
    v: np.ndarray
    iteration: int = 0
    trace: list[LossBreakdown] = field(default_factory=list)


def compute_bounds(cover: np.ndarray, epsilon: float) -> BoundBox:
    """Per-pixel box for delta: feasibility in [0,1] intersected with |.|<=eps."""
    validate_image(cover)
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must be in (0, 1), got {epsilon}")
    lower = np.maximum(-cover, -epsilon)
    upper = np.minimum(1.0 - cover, epsilon)
    return BoundBox(lower=lower, upper=upper)


def reparameterize(z: np.ndarray, bounds: BoundBox) -> np.ndarray:
    if z.shape != bounds.lower.shape:
        raise ShapeError(f"z shape {z.shape} != bounds shape {bounds.lower.shape}")
    t = np.tanh(z)
    raw = bounds.lower + (bounds.upper - bounds.lower) * (t + 1.0) * 0.5
    # the affine map lands inside [l, u] mathematically, but the float
    # evaluation can overshoot an endpoint by one ulp (l + (u-l) != u in
    # binary); snap that representation error so feasibility is exact
    return np.minimum(np.maximum(raw, bounds.lower), bounds.upper)


def reparameterize_backward(
    grad_delta: np.ndarray, z: np.ndarray, bounds: BoundBox
) -> np.ndarray:
    t = np.tanh(z)
    return grad_delta * (bounds.upper - bounds.lower) * 0.5 * (1.0 - t * t)


def _norm_and_grad(x: np.ndarray, mode: str) -> tuple[float, np.ndarray]:
    # subgradient 0 at the origin in both modes
    if mode == "euclidean":
        n = float(np.linalg.norm(x.ravel()))
        g = x / n if n > 0.0 else np.zeros_like(x)
    else:
        n = float(np.sqrt(np.mean(x * x)))
        g = x / (n * x.size) if n > 0.0 else np.zeros_like(x)
    return n, g


def learning_rate(cfg: SpsConfig, iteration: int) -> float:
    return cfg.lr0 * 0.5 ** (iteration // cfg.lr_halve_every)


def evaluate_loss(
    z: np.ndarray,
    cover: np.ndarray,
    secrets: list[np.ndarray],
    decoders: list[tuple[DecoderSpec, DecoderWeights]],
    critics: list,
    cfg: SpsConfig,
    iteration: int,
    bounds: BoundBox | None = None,
    channel=None,
) -> tuple[LossBreakdown, np.ndarray]:
    """Full objective and its gradient with respect to z.

    When a distortion `channel` is supplied, each decoder reads
    channel.forward(C + delta) - C instead of delta, and the channel's
    backward (straight-through for the JPEG proxy) is chained in.  Critics
    always see the undistorted C + delta.
    """
    if len(secrets) != len(decoders) or not decoders:
        raise ConfigError(
            f"need equally many secrets and decoders (>=1), "
            f"got {len(secrets)} and {len(decoders)}"
        )
    if iteration >= cfg.total_iters:
        raise ConfigError(f"iteration {iteration} >= total_iters {cfg.total_iters}")
    if bounds is None:
        bounds = compute_bounds(cover, cfg.epsilon)
    delta = reparameterize(z, bounds)
    stego_like = cover + delta

    norm_val, grad_delta = _norm_and_grad(delta, cfg.norm_mode)
    grad_delta = grad_delta.copy()

    if channel is not None:
        decoder_input = channel.forward(stego_like) - cover
    else:
        decoder_input = delta

    recovery = []
    for (spec, weights), secret in zip(decoders, secrets):
        out_shape = spec.output_shape(cover.shape)
        if secret.shape != out_shape:
            raise ShapeError(
                f"secret shape {secret.shape} incompatible with decoder output "
                f"{out_shape} for cover {cover.shape}"
            )
        decoded, caches = decoder_forward_with_cache(decoder_input, spec, weights)
        diff = decoded - secret
        term, grad_out = _norm_and_grad(diff, cfg.norm_mode)
        recovery.append(term)
        grad_in = decoder_backward_input(grad_out, caches)
        if channel is not None:
            grad_in = channel.backward(grad_in)
        grad_delta += cfg.beta * grad_in

    gamma_eff = 0.0 if iteration < cfg.gamma_start_iter else cfg.gamma
    critic_terms = []
    if gamma_eff > 0.0 and critics:
        for critic in critics:
            critic_terms.append(float(critic.evaluate(stego_like)))
            grad_delta += cfg.beta * gamma_eff * critic.gradient(stego_like)

    total = norm_val + cfg.beta * (sum(recovery) + gamma_eff * sum(critic_terms))
    breakdown = LossBreakdown(
        perturbation_norm=norm_val,
        recovery_terms=tuple(recovery),
        critic_terms=tuple(critic_terms),
        total=total,
    )
    return breakdown, reparameterize_backward(grad_delta, z, bounds)


def init_state(cover: np.ndarray, cfg: SpsConfig) -> SearchState:
    if cfg.z_init == "zero":
        z = np.zeros_like(cover)
    else:
        draw = sample_gaussian(derive_stream(cfg.z_init_seed, "sps/z0"), cover.size)
        z = cfg.z_init_scale * draw.reshape(cover.shape)
    return SearchState(z=z, m=np.zeros_like(z), v=np.zeros_like(z))


def adam_step(state: SearchState, grad_z: np.ndarray, lr: float, cfg: SpsConfig) -> SearchState:
    """Standard bias-corrected Adam update; mutates and returns the state."""
    if grad_z.shape != state.z.shape:
        raise ShapeError(f"grad shape {grad_z.shape} != z shape {state.z.shape}")
    t = state.iteration + 1
    state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grad_z
    state.v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grad_z * grad_z
    m_hat = state.m / (1.0 - cfg.adam_beta1 ** t)
    v_hat = state.v / (1.0 - cfg.adam_beta2 ** t)
    state.z = state.z - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    state.iteration = t
    return state


def search_perturbation(
    cover: np.ndarray,
    secrets: list[np.ndarray],
    decoders: list[tuple[DecoderSpec, DecoderWeights]],
    critics: list,
    cfg: SpsConfig,
    channel=None,
) -> tuple[np.ndarray, list[LossBreakdown]]:
    """Run the full search; return the best-loss iterate's delta and the trace.

    The best iterate (lowest total loss seen) is returned rather than the
    last one, since the late critic phase can push the total back up.  The
    returned delta respects the bounds exactly by construction.
    """
    bounds = compute_bounds(cover, cfg.epsilon)
    state = init_state(cover, cfg)
    best_total = math.inf
    best_z = state.z.copy()
    for i in range(cfg.total_iters):
        breakdown, grad_z = evaluate_loss(
            state.z, cover, secrets, decoders, critics, cfg, i,
            bounds=bounds, channel=channel,
        )
        state.trace.append(breakdown)
        if not math.isfinite(breakdown.total):
            raise NumericsError(
                f"non-finite loss {breakdown.total} at iteration {i}",
                trace=state.trace,
            )
        if breakdown.total < best_total:
            best_total = breakdown.total
            best_z = state.z.copy()
        adam_step(state, grad_z, learning_rate(cfg, i), cfg)
    return reparameterize(best_z, bounds), state.trace


def write_trace_csv(trace: list[LossBreakdown], cfg: SpsConfig, path) -> None:
    """Dump the loss trace with one row per iteration."""
    n_rec = max((len(b.recovery_terms) for b in trace), default=0)
    n_cri = max((len(b.critic_terms) for b in trace), default=0)
    header = ["iteration", "lr", "total", "perturbation_norm"]
    header += [f"recovery_{t}" for t in range(n_rec)]
    header += [f"critic_{i}" for i in range(n_cri)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, b in enumerate(trace):
            row = [i, f"{learning_rate(cfg, i):.10g}", f"{b.total:.10g}",
                   f"{b.perturbation_norm:.10g}"]
            row += [f"{r:.10g}" for r in b.recovery_terms]
            row += [""] * (n_rec - len(b.recovery_terms))
            row += [f"{c:.10g}" for c in b.critic_terms]
            row += [""] * (n_cri - len(b.critic_terms))
            writer.writerow(row)
