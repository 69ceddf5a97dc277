#!/usr/bin/env python3
import os
import sys

import numpy as np
import pytest

try:
    import fcn_texton_forest
except ImportError:
    sys.path.append(
        os.path.dirname(os.path.dirname(os.path.dirname(os.path.realpath(__file__))))
    )

from fcn_texton_forest.lib.errors import (
    BadMagic,
    DimensionMismatch,
    ShapeMismatch,
    TruncatedFile,
)
from fcn_texton_forest.lib.fcn import (
    ConvLayerSpec,
    FcnWeights,
    ScoreMap,
    bilinear_kernel,
    conv2d,
    fcn8s_architecture,
    fcn8s_forward_slice,
    fuse_skip,
    load_weights,
    maxpool2d,
    parse_fcn_weights,
    save_weights,
    score_volume,
    softmax,
    transposed_conv2d,
)
from fcn_texton_forest.lib.volume import MultimodalVolume, Volume3D
from fcn_texton_forest.lib.workers import WorkerPool
from fcn_texton_forest.tests.common import SLIM_WIDTHS, brute_conv2d


def _layer(rng, kh, kw, cin, cout, stride=1, pad=0, kind="conv", activation="relu"):
    return ConvLayerSpec(
        "test",
        kh,
        kw,
        cin,
        cout,
        stride,
        pad,
        kind,
        activation,
        rng.normal(size=(cout, cin, kh, kw)).astype(np.float32),
        rng.normal(size=cout).astype(np.float32),
    )


def test_conv2d_matches_direct_sum():
    rng = np.random.default_rng(0)
    for kh, stride, pad, activation in ((3, 1, 1, "relu"), (3, 2, 0, "none"), (1, 1, 0, "relu"), (5, 1, 2, "none")):
        layer = _layer(rng, kh, kh, 3, 4, stride, pad, activation=activation)
        x = rng.normal(size=(int(rng.integers(6, 17)), int(rng.integers(6, 17)), 3)).astype(np.float32)
        assert np.allclose(conv2d(x, layer), brute_conv2d(x, layer), atol=1e-5)


def test_maxpool_floor_mode():
    x = np.arange(5 * 5 * 1, dtype=np.float32).reshape(5, 5, 1)
    out = maxpool2d(x)
    assert out.shape == (2, 2, 1)
    assert out[:, :, 0].tolist() == [[6, 8], [16, 18]]


def test_transposed_conv_is_adjoint():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = int(rng.integers(1, 5))
        stride = int(rng.integers(1, 4))
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        h, w = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        weights = rng.normal(size=(cout, cin, k, k)).astype(np.float32)
        tconv = ConvLayerSpec("t", k, k, cin, cout, stride, 0, "tconv", "none", weights)
        # conv with swapped channel axes: maps cout-channel maps down to cin channels
        conv = ConvLayerSpec(
            "c", k, k, cout, cin, stride, 0, "conv", "none", weights.transpose(1, 0, 2, 3)
        )
        x = rng.normal(size=(h, w, cin)).astype(np.float32)
        y = rng.normal(size=((h - 1) * stride + k, (w - 1) * stride + k, cout)).astype(np.float32)
        lhs = float(np.sum(transposed_conv2d(x, tconv).astype(np.float64) * y))
        rhs = float(np.sum(x.astype(np.float64) * conv2d(y, conv)))
        assert abs(lhs - rhs) <= 1e-4 * max(1.0, abs(lhs))


def test_fuse_skip_crops_at_offset():
    coarse = np.ones((2, 3, 2), dtype=np.float32)
    skip = np.arange(6 * 6 * 2, dtype=np.float32).reshape(6, 6, 2)
    fused = fuse_skip(coarse, skip, 1)
    assert fused.shape == (2, 3, 2)
    assert np.array_equal(fused, skip[1:3, 1:4] + 1)
    with pytest.raises(DimensionMismatch):
        fuse_skip(coarse, skip, 4)
    with pytest.raises(DimensionMismatch):
        fuse_skip(coarse, skip[:, :, :1], 0)


def test_bilinear_upsampling_of_constant():
    kernel = bilinear_kernel(4)
    assert np.allclose(kernel.sum(), 4.0)
    layer = ConvLayerSpec(
        "up", 4, 4, 1, 1, 2, 1, "tconv", "none", kernel.reshape(1, 1, 4, 4)
    )
    out = transposed_conv2d(np.ones((4, 4, 1), dtype=np.float32), layer)
    assert out.shape == (8, 8, 1)
    assert np.allclose(out[1:-1, 1:-1], 1.0)


def test_softmax_simplex():
    rng = np.random.default_rng(2)
    probabilities = softmax(rng.normal(scale=50, size=(6, 7, 5)).astype(np.float32))
    assert np.all(probabilities >= 0)
    assert np.abs(probabilities.sum(axis=2) - 1).max() < 1e-5


@pytest.mark.parametrize("shape", [(32, 32), (48, 40), (64, 64)])
def test_forward_shapes_and_simplex(shape):
    weights = FcnWeights.random(seed=3, widths=SLIM_WIDTHS)
    rng = np.random.default_rng(4)
    axial = rng.random(shape + (3,)).astype(np.float32)
    scores = fcn8s_forward_slice(axial, weights)
    assert scores.shape == shape + (5,)
    assert np.all(scores >= 0)
    assert np.abs(scores.sum(axis=2) - 1).max() < 1e-5


def test_zero_weights_give_uniform_scores():
    weights = FcnWeights.zeros(SLIM_WIDTHS)
    scores = fcn8s_forward_slice(np.ones((32, 32, 3), dtype=np.float32), weights)
    assert np.allclose(scores, 0.2, atol=1e-7)


def test_weights_validation_names_layer():
    layers = fcn8s_architecture(SLIM_WIDTHS)
    broken = []
    for layer in layers:
        if layer.name == "score_pool3":
            layer = ConvLayerSpec("score_pool3", 3, 3, layer.in_channels, 5, activation="none")
        broken.append(layer)
    with pytest.raises(ShapeMismatch) as failure:
        FcnWeights(broken)
    assert failure.value.layer == "score_pool3"

    with pytest.raises(ShapeMismatch):
        ConvLayerSpec("bad", 3, 3, 2, 2, weights=np.zeros((2, 2, 3, 2)))


def test_weights_file(tmp_path):
    weights = FcnWeights.random(seed=5, widths=SLIM_WIDTHS)
    save_weights(weights, tmp_path / "w.fcnw")
    loaded = load_weights(tmp_path / "w.fcnw")
    assert loaded.widths == SLIM_WIDTHS
    for a, b in zip(weights, loaded):
        assert a.geometry() == b.geometry()
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
    assert loaded.to_bytes() == weights.to_bytes()

    data = weights.to_bytes()
    with pytest.raises(BadMagic):
        parse_fcn_weights(b"NOPE" + data[4:])
    with pytest.raises(TruncatedFile):
        parse_fcn_weights(data[: len(data) // 2])


def test_score_volume_threads_and_file(tmp_path):
    rng = np.random.default_rng(6)
    volumes = [Volume3D(rng.random((32, 32, 3)) + 0.1) for _ in range(3)]
    case = MultimodalVolume(*volumes)
    weights = FcnWeights.random(seed=7, widths=SLIM_WIDTHS)
    single = score_volume(case, weights, WorkerPool(1))
    multi = score_volume(case, weights, WorkerPool(3))
    assert single.dims == (32, 32, 3)
    assert np.array_equal(single.data, multi.data)

    single.save(tmp_path / "s.scmp")
    loaded = ScoreMap.load(tmp_path / "s.scmp")
    assert np.array_equal(loaded.data, single.data)
    with pytest.raises(ValueError):
        ScoreMap(np.full((2, 2, 2, 5), 0.5, dtype=np.float32))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
