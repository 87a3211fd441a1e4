"""The perturbation search: bounds, reparameterization, objective, Adam."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedstego.distort import CriticHandle, hf_residual_critic
from seedstego.errors import ConfigError, NumericsError, ShapeError
from seedstego.keys import init_weights
from seedstego.nn import decoder_forward, default_decoder_spec
from seedstego.search import (
    BoundBox,
    SearchState,
    SpsConfig,
    adam_step,
    compute_bounds,
    evaluate_loss,
    init_state,
    learning_rate,
    reparameterize,
    reparameterize_backward,
    search_perturbation,
    write_trace_csv,
)

from conftest import filtered_grad_rel_err, max_grad_rel_err, rel_err, textured_image


def make_problem(t_count=1, size=16, seed=0):
    spec = default_decoder_spec(strides=(1, 1, 2))
    cover = textured_image(1000 + seed, size, size)
    decoders = [(spec, init_weights(spec, 7000 + i)) for i in range(t_count)]
    secrets = [textured_image(2000 + i, size // 2, size // 2) for i in range(t_count)]
    return cover, secrets, decoders


# ---------------------------------------------------------------------------
# config


def test_config_defaults_match_frozen_values():
    cfg = SpsConfig()
    assert cfg.epsilon == 0.2
    assert cfg.beta == 0.5
    assert cfg.gamma == 2e-5
    assert cfg.gamma_start_iter == 1400
    assert cfg.total_iters == 1500
    assert abs(cfg.lr0 - 0.05623413251903491) < 1e-18
    assert cfg.lr_halve_every == 500


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epsilon": 0.0},
        {"epsilon": 1.0},
        {"beta": 0.0},
        {"gamma": -1e-6},
        {"gamma_start_iter": 2000},
        {"lr0": 0.0},
        {"z_init": "sobol"},
        {"norm_mode": "l1"},
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        SpsConfig(**kwargs)


# ---------------------------------------------------------------------------
# bounds and reparameterization


def test_bounds_pixel_cases():
    cover = np.full((3, 8, 8), 0.5)
    cover[0, 0, 0] = 0.05
    cover[0, 0, 1] = 1.0
    b = compute_bounds(cover, 0.2)
    assert b.lower[1, 4, 4] == -0.2 and b.upper[1, 4, 4] == 0.2
    assert abs(b.lower[0, 0, 0] + 0.05) < 1e-15 and b.upper[0, 0, 0] == 0.2
    assert b.lower[0, 0, 1] == -0.2 and b.upper[0, 0, 1] == 0.0


def test_bounds_invariants_on_random_cover():
    cover = textured_image(50, 32, 32)
    b = compute_bounds(cover, 0.2)
    assert np.all(b.lower <= b.upper)
    assert np.all(b.lower >= -0.2) and np.all(b.upper <= 0.2)
    assert np.all(cover + b.lower >= 0.0) and np.all(cover + b.upper <= 1.0)


def test_bounds_reject_bad_inputs():
    with pytest.raises(ShapeError):
        compute_bounds(np.full((3, 8, 8), 1.2), 0.2)
    with pytest.raises(ConfigError):
        compute_bounds(np.full((3, 8, 8), 0.5), 1.5)


def test_reparameterize_zero_gives_box_midpoint():
    cover = textured_image(51, 16, 16)
    b = compute_bounds(cover, 0.2)
    delta = reparameterize(np.zeros_like(cover), b)
    np.testing.assert_allclose(delta, (b.lower + b.upper) / 2.0, atol=1e-15)


def test_reparameterize_saturates_to_bounds():
    cover = textured_image(52, 16, 16)
    b = compute_bounds(cover, 0.2)
    hi = reparameterize(np.full_like(cover, 20.0), b)
    lo = reparameterize(np.full_like(cover, -20.0), b)
    assert np.max(np.abs(hi - b.upper)) < 1e-8
    assert np.max(np.abs(lo - b.lower)) < 1e-8


def test_reparameterize_always_feasible_property(rng_np):
    cover = textured_image(53, 16, 16)
    b = compute_bounds(cover, 0.2)
    for scale in (0.1, 1.0, 10.0, 1000.0):
        z = scale * rng_np.standard_normal(cover.shape)
        delta = reparameterize(z, b)
        assert np.all(delta >= b.lower) and np.all(delta <= b.upper)


def test_reparameterize_backward_matches_finite_differences(rng_np):
    cover = textured_image(54, 12, 12)
    b = compute_bounds(cover, 0.2)
    z = rng_np.standard_normal(cover.shape)
    probe = rng_np.standard_normal(cover.shape)

    def scalar(zz):
        return float(np.sum(reparameterize(zz, b) * probe))

    grad = reparameterize_backward(probe, z, b)
    assert max_grad_rel_err(scalar, grad, z, n_coords=25) < 1e-5


# ---------------------------------------------------------------------------
# objective


def test_loss_breakdown_recomposes():
    cover, secrets, decoders = make_problem(t_count=2)
    cfg = SpsConfig(gamma_start_iter=0)
    critics = [hf_residual_critic(verify=False)]
    z = 0.3 * np.random.default_rng(2).standard_normal(cover.shape)
    breakdown, _ = evaluate_loss(z, cover, secrets, decoders, critics, cfg, 10)
    recomposed = breakdown.perturbation_norm + cfg.beta * (
        sum(breakdown.recovery_terms) + cfg.gamma * sum(breakdown.critic_terms)
    )
    assert rel_err(breakdown.total, recomposed) < 1e-6
    assert len(breakdown.recovery_terms) == 2
    assert len(breakdown.critic_terms) == 1


def test_recovery_term_vanishes_when_decoder_output_is_target():
    cover, _, decoders = make_problem()
    cfg = SpsConfig(gamma=0.0)
    z = 0.1 * np.random.default_rng(3).standard_normal(cover.shape)
    bounds = compute_bounds(cover, cfg.epsilon)
    delta = reparameterize(z, bounds)
    spec, w = decoders[0]
    fitted_secret = decoder_forward(delta, spec, w)
    breakdown, _ = evaluate_loss(z, cover, [fitted_secret], decoders, [], cfg, 0)
    assert breakdown.recovery_terms[0] < 1e-12
    assert rel_err(breakdown.total, breakdown.perturbation_norm) < 1e-9


def test_gamma_schedule_boundary():
    cover, secrets, decoders = make_problem()
    critics = [hf_residual_critic(verify=False)]
    cfg = SpsConfig()
    z = 0.2 * np.random.default_rng(4).standard_normal(cover.shape)
    before, _ = evaluate_loss(z, cover, secrets, decoders, critics, cfg, 1399)
    after, _ = evaluate_loss(z, cover, secrets, decoders, critics, cfg, 1400)
    assert before.critic_terms == ()
    assert len(after.critic_terms) == 1
    jump = cfg.beta * cfg.gamma * sum(after.critic_terms)
    assert rel_err(after.total - before.total, jump) < 1e-9


# The objective runs through leaky activations, so a probe coordinate can sit
# within the finite-difference step of a kink.  Both half-steps then straddle
# the kink and agree with each other while disagreeing with the one-sided
# analytic value.  A step of 1e-5 makes straddles rare while keeping roundoff
# in the difference quotient near 1e-8 relative.


def test_objective_gradient_matches_finite_differences_t1():
    cover, secrets, decoders = make_problem(t_count=1, size=12)
    cfg = SpsConfig(gamma=0.0)
    rng = np.random.default_rng(5)
    z = 0.3 * rng.standard_normal(cover.shape)

    def scalar(zz):
        b, _ = evaluate_loss(zz, cover, secrets, decoders, [], cfg, 0)
        return b.total

    _, grad = evaluate_loss(z, cover, secrets, decoders, [], cfg, 0)
    worst, used = filtered_grad_rel_err(scalar, grad, z, n_coords=20, h=1e-5)
    assert used >= 20
    assert worst < 1e-3


def test_objective_gradient_matches_finite_differences_t2_with_critic():
    cover, secrets, decoders = make_problem(t_count=2, size=12)
    critics = [hf_residual_critic(verify=False)]
    cfg = SpsConfig(gamma=2e-5, gamma_start_iter=0)
    rng = np.random.default_rng(6)
    z = 0.3 * rng.standard_normal(cover.shape)

    def scalar(zz):
        b, _ = evaluate_loss(zz, cover, secrets, decoders, critics, cfg, 0)
        return b.total

    _, grad = evaluate_loss(z, cover, secrets, decoders, critics, cfg, 0)
    worst, used = filtered_grad_rel_err(scalar, grad, z, n_coords=20, h=1e-5)
    assert used >= 20
    assert worst < 1e-3


def test_singleton_multi_receiver_reduces_to_single():
    cover, secrets, decoders = make_problem(t_count=1)
    cfg = SpsConfig(gamma=0.0)
    z = 0.2 * np.random.default_rng(7).standard_normal(cover.shape)
    b1, g1 = evaluate_loss(z, cover, secrets, decoders, [], cfg, 0)
    b2, g2 = evaluate_loss(z, cover, list(secrets), list(decoders), [], cfg, 0)
    assert b1 == b2
    assert np.array_equal(g1, g2)


def test_loss_rejects_mismatched_counts():
    cover, secrets, decoders = make_problem(t_count=2)
    cfg = SpsConfig()
    z = np.zeros_like(cover)
    with pytest.raises(ConfigError):
        evaluate_loss(z, cover, secrets[:1], decoders, [], cfg, 0)
    with pytest.raises(ConfigError):
        evaluate_loss(z, cover, [], [], [], cfg, 0)


def test_loss_rejects_wrong_secret_size():
    cover, _, decoders = make_problem()
    cfg = SpsConfig()
    bad_secret = textured_image(60, 10, 10)  # decoder yields 8x8
    with pytest.raises(ShapeError):
        evaluate_loss(np.zeros_like(cover), cover, [bad_secret], decoders, [], cfg, 0)


def test_channel_reroutes_decoder_input():
    # with an identity channel the loss must be bitwise identical to none
    class IdentityChannel:
        def forward(self, x):
            return x

        def backward(self, g):
            return g

    cover, secrets, decoders = make_problem()
    cfg = SpsConfig(gamma=0.0)
    z = 0.2 * np.random.default_rng(8).standard_normal(cover.shape)
    plain, g_plain = evaluate_loss(z, cover, secrets, decoders, [], cfg, 0)
    routed, g_routed = evaluate_loss(
        z, cover, secrets, decoders, [], cfg, 0, channel=IdentityChannel()
    )
    # (C + delta) - C reintroduces last-ulp float noise, so equality is
    # tight-tolerance rather than bitwise
    assert rel_err(plain.total, routed.total) < 1e-12
    np.testing.assert_allclose(g_plain, g_routed, rtol=1e-6, atol=1e-9)


# ---------------------------------------------------------------------------
# Adam and the schedule


def test_adam_converges_on_quadratic():
    cfg = SpsConfig()
    state = SearchState(z=np.array([0.0]), m=np.zeros(1), v=np.zeros(1))
    for _ in range(500):
        grad = 2.0 * (state.z - 3.0)
        adam_step(state, grad, 0.1, cfg)
    assert abs(state.z[0] - 3.0) < 1e-2


def test_adam_first_step_is_signed_lr():
    cfg = SpsConfig()
    state = SearchState(z=np.array([1.0, 1.0]), m=np.zeros(2), v=np.zeros(2))
    grad = np.array([0.5, -2.0])
    adam_step(state, grad, 0.05, cfg)
    step = state.z - np.array([1.0, 1.0])
    # bias-corrected first step has magnitude ~= lr regardless of |g|
    np.testing.assert_allclose(np.abs(step), 0.05, rtol=1e-6)
    assert step[0] < 0 < step[1]


def test_adam_shape_check():
    cfg = SpsConfig()
    state = SearchState(z=np.zeros(3), m=np.zeros(3), v=np.zeros(3))
    with pytest.raises(ShapeError):
        adam_step(state, np.zeros(4), 0.1, cfg)


def test_lr_schedule_halves_every_500():
    cfg = SpsConfig()
    assert learning_rate(cfg, 0) == cfg.lr0
    assert learning_rate(cfg, 499) == cfg.lr0
    assert learning_rate(cfg, 500) == cfg.lr0 / 2
    assert learning_rate(cfg, 1000) == cfg.lr0 / 4
    assert learning_rate(cfg, 1499) == cfg.lr0 / 4


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_lr_schedule_formula(i):
    cfg = SpsConfig()
    assert learning_rate(cfg, i) == cfg.lr0 * 0.5 ** (i // 500)


# ---------------------------------------------------------------------------
# full search


def short_cfg(**kw):
    base = dict(total_iters=40, gamma_start_iter=40, gamma=0.0)
    base.update(kw)
    return SpsConfig(**base)


def test_search_returns_feasible_best_iterate():
    cover, secrets, decoders = make_problem(size=16)
    cfg = short_cfg()
    delta, trace = search_perturbation(cover, secrets, decoders, [], cfg)
    assert len(trace) == 40
    assert np.max(np.abs(delta)) <= cfg.epsilon
    assert np.all(cover + delta >= 0.0) and np.all(cover + delta <= 1.0)
    assert min(b.total for b in trace) <= trace[0].total


def test_search_is_deterministic():
    cover, secrets, decoders = make_problem(size=16)
    cfg = short_cfg()
    d1, t1 = search_perturbation(cover, secrets, decoders, [], cfg)
    d2, t2 = search_perturbation(cover, secrets, decoders, [], cfg)
    assert np.array_equal(d1, d2)
    assert [b.total for b in t1] == [b.total for b in t2]


def test_search_feasible_at_every_iterate():
    # replicate the loop manually so each iterate's delta can be audited
    cover, secrets, decoders = make_problem(size=16)
    cfg = short_cfg(total_iters=25, gamma_start_iter=25)
    bounds = compute_bounds(cover, cfg.epsilon)
    state = init_state(cover, cfg)
    for i in range(cfg.total_iters):
        delta = reparameterize(state.z, bounds)
        assert np.all(delta >= bounds.lower) and np.all(delta <= bounds.upper)
        _, grad = evaluate_loss(state.z, cover, secrets, decoders, [], cfg, i,
                                bounds=bounds)
        adam_step(state, grad, learning_rate(cfg, i), cfg)


def test_search_gaussian_init_differs_but_stays_feasible():
    cover, secrets, decoders = make_problem(size=16)
    d0, _ = search_perturbation(cover, secrets, decoders, [], short_cfg())
    dg, _ = search_perturbation(
        cover, secrets, decoders, [],
        short_cfg(z_init="gaussian", z_init_seed=9),
    )
    assert not np.array_equal(d0, dg)
    assert np.max(np.abs(dg)) <= 0.2


def test_search_loss_decreases_substantially():
    cover, secrets, decoders = make_problem(size=16)
    cfg = short_cfg(total_iters=120, gamma_start_iter=120)
    _, trace = search_perturbation(cover, secrets, decoders, [], cfg)
    assert min(b.total for b in trace) < 0.5 * trace[0].total


def test_non_finite_loss_aborts_with_trace():
    cover, secrets, decoders = make_problem(size=16)
    bomb = CriticHandle(
        identifier="bomb",
        evaluate=lambda img: math.inf,
        gradient=lambda img: np.zeros_like(img),
    )
    cfg = SpsConfig(total_iters=5, gamma_start_iter=2, gamma=1.0)
    with pytest.raises(NumericsError) as err:
        search_perturbation(cover, secrets, decoders, [bomb], cfg)
    assert err.value.trace is not None
    assert len(err.value.trace) == 3  # two clean iterations plus the bad one


def test_trace_csv_export(tmp_path):
    cover, secrets, decoders = make_problem(size=16)
    cfg = short_cfg(total_iters=10, gamma_start_iter=5, gamma=1e-4)
    critics = [hf_residual_critic(verify=False)]
    _, trace = search_perturbation(cover, secrets, decoders, critics, cfg)
    out = tmp_path / "trace.csv"
    write_trace_csv(trace, cfg, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "iteration,lr,total,perturbation_norm,recovery_0,critic_0"
    assert len(lines) == 11
    first = lines[1].split(",")
    assert first[0] == "0"
    assert abs(float(first[1]) - cfg.lr0) < 1e-12
    # critic column empty while the gamma schedule holds it at zero
    assert first[-1] == ""
    assert lines[-1].split(",")[-1] != ""
