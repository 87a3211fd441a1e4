"""Key material serialization and seeded weight initialization."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedstego.errors import ConfigError
from seedstego.keys import (
    INIT_ALGORITHMS,
    KeyMaterial,
    generate_key_material,
    init_weights,
    key_material_from_json,
    key_material_to_json,
    load_key_file,
    save_key_file,
    weights_digest,
)
from seedstego.nn import default_decoder_spec


@pytest.fixture
def spec():
    return default_decoder_spec(strides=(1, 1, 2))


# ---------------------------------------------------------------------------
# key material


def test_key_material_validation():
    KeyMaterial(cover_seed=1, decoder_seeds=(2, 3), init_algorithm="xavier")
    with pytest.raises(ConfigError):
        KeyMaterial(cover_seed=1, decoder_seeds=(), init_algorithm="xavier")
    with pytest.raises(ConfigError):
        KeyMaterial(cover_seed=1, decoder_seeds=(2, 2), init_algorithm="xavier")
    with pytest.raises(ConfigError):
        KeyMaterial(cover_seed=2**64, decoder_seeds=(2,), init_algorithm="xavier")
    with pytest.raises(ConfigError):
        KeyMaterial(cover_seed=1, decoder_seeds=(2,), init_algorithm="madeup")


def test_generate_produces_distinct_seeds():
    km = generate_key_material(8)
    assert km.receivers == 8
    assert len(set(km.decoder_seeds)) == 8
    assert km.cover_seed not in km.decoder_seeds


def test_json_round_trip():
    km = KeyMaterial(cover_seed=0xDEADBEEF, decoder_seeds=(0x1, 0xFFFFFFFFFFFFFFFF),
                     init_algorithm="orthogonal")
    text = key_material_to_json(km)
    assert key_material_from_json(text) == km
    data = json.loads(text)
    assert data["cover_seed"] == "0xdeadbeef"
    assert data["decoder_seeds"][1] == "0xffffffffffffffff"


def test_json_rejects_unknown_and_missing_fields():
    km = generate_key_material(1)
    data = json.loads(key_material_to_json(km))
    extra = dict(data, surprise=1)
    with pytest.raises(ConfigError):
        key_material_from_json(json.dumps(extra))
    missing = {k: v for k, v in data.items() if k != "decoder_seeds"}
    with pytest.raises(ConfigError):
        key_material_from_json(json.dumps(missing))


def test_json_rejects_wrong_version_and_bad_hex():
    km = generate_key_material(1)
    data = json.loads(key_material_to_json(km))
    with pytest.raises(ConfigError):
        key_material_from_json(json.dumps(dict(data, version=2)))
    with pytest.raises(ConfigError):
        key_material_from_json(json.dumps(dict(data, cover_seed="12ab")))
    with pytest.raises(ConfigError):
        key_material_from_json(json.dumps(dict(data, cover_seed=1234)))


def test_key_file_round_trip(tmp_path):
    km = generate_key_material(3, init_algorithm="kaiming")
    path = tmp_path / "keys.json"
    save_key_file(km, path)
    assert load_key_file(path) == km


# ---------------------------------------------------------------------------
# weight initialization


def test_weights_deterministic_per_seed(spec):
    a = weights_digest(init_weights(spec, 4242))
    b = weights_digest(init_weights(spec, 4242))
    c = weights_digest(init_weights(spec, 4243))
    assert a == b
    assert a != c


def test_weights_differ_across_algorithms(spec):
    digests = {algo: weights_digest(init_weights(spec, 7, algo)) for algo in INIT_ALGORITHMS}
    assert len(set(digests.values())) == len(INIT_ALGORITHMS)


def test_weight_shapes_match_spec(spec):
    w = init_weights(spec, 1)
    for layer, (kern, bias) in zip(spec.layers, w.layers):
        assert kern.shape == (layer.out_channels, layer.in_channels, 3, 3)
        assert bias.shape == (layer.out_channels,)
        assert not kern.flags.writeable


def test_xavier_bound_and_moments(spec):
    w = init_weights(spec, 31, "xavier")
    # middle layer: fan_in = fan_out = 32 * 9 = 288, bound sqrt(6/576)
    kern = w.layers[1][0]
    bound = math.sqrt(6.0 / (288 + 288))
    assert np.abs(kern).max() <= bound
    assert np.abs(kern).max() > 0.9 * bound  # actually fills the interval
    assert abs(kern.mean()) < 0.1 * bound
    assert np.all(w.layers[1][1] == 0.0)
    # first layer bound: fan_in 3*9=27, fan_out 32*9=288
    first = w.layers[0][0]
    assert np.abs(first).max() <= math.sqrt(6.0 / (27 + 288))


def test_kaiming_scale(spec):
    w = init_weights(spec, 55, "kaiming")
    kern = w.layers[1][0]  # fan_in 288
    assert abs(kern.std() - math.sqrt(2.0 / 288)) < 0.1 * math.sqrt(2.0 / 288)
    assert np.all(w.layers[1][1] == 0.0)


def test_uniform01_range(spec):
    w = init_weights(spec, 2, "uniform01")
    for kern, bias in w.layers:
        assert kern.min() >= 0.0 and kern.max() < 1.0
        assert bias.min() >= 0.0 and bias.max() < 1.0


def test_gaussian_is_standard_normal(spec):
    w = init_weights(spec, 2, "gaussian")
    kern = w.layers[1][0]
    assert abs(kern.mean()) < 0.05
    assert abs(kern.std() - 1.0) < 0.05
    assert not np.all(w.layers[1][1] == 0.0)  # biases drawn too


def test_orthogonal_rows_are_orthonormal(spec):
    w = init_weights(spec, 9, "orthogonal")
    for layer, (kern, bias) in zip(spec.layers, w.layers):
        mat = kern.reshape(kern.shape[0], -1)
        rows, cols = mat.shape
        if rows <= cols:
            gram = mat @ mat.T
        else:
            gram = mat.T @ mat
        np.testing.assert_allclose(gram, np.eye(min(rows, cols)), atol=1e-10)
        assert np.all(bias == 0.0)


def test_unknown_algorithm_rejected(spec):
    with pytest.raises(ConfigError):
        init_weights(spec, 1, "fancy")


@given(st.integers(min_value=0, max_value=2**64 - 1))
@settings(max_examples=15, deadline=None)
def test_any_seed_initializes_cleanly(seed):
    w = init_weights(default_decoder_spec(strides=(1, 1, 2)), seed)
    for kern, bias in w.layers:
        assert np.all(np.isfinite(kern))
        assert np.all(np.isfinite(bias))
