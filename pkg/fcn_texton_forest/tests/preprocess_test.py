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
    DegenerateIntensity,
    EmptyForeground,
    TruncatedFile,
)
from fcn_texton_forest.lib.preprocess import (
    PreprocessConfig,
    ReferenceHistogram,
    clip_tails,
    histogram_match,
    prepare_reference,
    preprocess_case,
    rescale_unit,
    zscore_normalize,
)
from fcn_texton_forest.lib.volume import BinaryMask, MultimodalVolume, Volume3D


def _column(values) -> Volume3D:
    values = np.asarray(values, dtype=np.float32)
    return Volume3D(values.reshape(len(values), 1, 1))


def _random_case(rng, dims=(12, 10, 6)) -> MultimodalVolume:
    brain = np.zeros(dims, dtype=bool)
    brain[2:-2, 2:-2, 1:-1] = True
    volumes = [
        Volume3D(np.where(brain, rng.gamma(2.0 + i, 1.0, dims) + 0.1, 0.0))
        for i in range(3)
    ]
    return MultimodalVolume(*volumes)


def test_clip_tails_one_to_hundred():
    clipped = clip_tails(_column(np.arange(1, 101)), 0.01)
    assert clipped.data.min() == 2
    assert clipped.data.max() == 99
    assert np.array_equal(clipped.data[1:99, 0, 0], np.arange(2, 100))


def test_clip_tails_identity_cases():
    volume = _column([0, 3, 1, 4, 1, 5, 9, 2, 6])
    assert np.array_equal(clip_tails(volume, 0.0).data, volume.data)
    constant = _column([0, 7, 7, 7, 0])
    assert np.array_equal(clip_tails(constant, 0.2).data, constant.data)
    with pytest.raises(EmptyForeground):
        clip_tails(_column([0, 0, 0]), 0.01)
    with pytest.raises(ValueError):
        clip_tails(volume, 0.5)


def test_clip_tails_matches_sorted_indices():
    rng = np.random.default_rng(5)
    for n in (7, 64, 333, 1000):
        values = rng.normal(size=n).astype(np.float32) + 10
        clipped = clip_tails(_column(values), 0.03).data.ravel()
        ordered = np.sort(values)
        low = ordered[int(np.ceil(0.03 * (n - 1)))]
        high = ordered[int(np.floor(0.97 * (n - 1)))]
        assert np.array_equal(clipped, np.clip(values, low, high))


def test_zscore():
    out = zscore_normalize(_column([0, 0.5, 2.5, 0])).data.ravel()
    assert out.tolist() == [0.0, -1.0, 1.0, 0.0]
    rng = np.random.default_rng(0)
    volume = _column(rng.uniform(1, 50, 500))
    values = zscore_normalize(volume).data.ravel().astype(np.float64)
    assert abs(values.mean()) < 1e-6
    assert abs(values.std() - 1) < 1e-6
    with pytest.raises(DegenerateIntensity):
        zscore_normalize(_column([0, 3, 3, 3]))


def test_histogram_match_self_and_monotone():
    rng = np.random.default_rng(1)
    volume = _column(rng.normal(size=400) + 5)
    matched = histogram_match(volume, volume, 256)
    bin_width = (volume.data.max() - volume.data.min()) / 255
    assert np.abs(matched.data - volume.data).max() <= bin_width + 1e-6

    for seed in range(10):
        rng = np.random.default_rng(seed)
        source = _column(rng.exponential(size=300) + 0.01)
        reference = _column(rng.normal(size=250) + 4)
        out = histogram_match(source, reference, 64).data.ravel()
        order = np.argsort(source.data.ravel(), kind="stable")
        assert np.all(np.diff(out[order]) >= 0)


def test_histogram_match_uniform_to_reference_cdf():
    rng = np.random.default_rng(2)
    bins = 256
    source = _column(rng.uniform(0.1, 1.0, 4000))
    reference = rng.gamma(3.0, 1.0, 5000) + 0.01
    out = histogram_match(source, _column(reference), bins).data.ravel()
    grid = np.sort(reference)
    ours = np.searchsorted(np.sort(out), grid, side="right") / len(out)
    theirs = np.arange(1, len(grid) + 1) / len(grid)
    assert np.abs(ours - theirs).max() <= 2 / bins + 0.01


def test_rescale_unit():
    assert rescale_unit(_column([-1, 0, 1])).data.ravel().tolist() == [0.0, 0.5, 1.0]
    everywhere = BinaryMask(np.ones((4, 1, 1), dtype=bool))
    out = rescale_unit(_column([0, 1, 0.25, 1]), everywhere).data.ravel()
    assert out.tolist() == [0.0, 1.0, 0.25, 1.0]
    with pytest.raises(DegenerateIntensity):
        rescale_unit(_column([0, 2, 2]))


def test_preprocess_case_range_and_background():
    rng = np.random.default_rng(3)
    reference = prepare_reference(_random_case(rng))
    case = _random_case(rng)
    out = preprocess_case(case, reference, PreprocessConfig())
    for volume in out:
        inside = volume.data[case.brain_mask.data]
        assert inside.min() >= 0 and inside.max() <= 1
        assert inside.min() == 0 and inside.max() == 1
        assert np.all(volume.data[~case.brain_mask.data] == 0)
    assert out.brain_mask == case.brain_mask


def test_preprocess_self_match():
    rng = np.random.default_rng(4)
    case = _random_case(rng)
    cfg = PreprocessConfig()
    out = preprocess_case(case, prepare_reference(case, cfg), cfg)
    for volume, original in zip(out, case):
        expected = rescale_unit(
            zscore_normalize(clip_tails(original, cfg.tail_fraction, case.brain_mask), case.brain_mask),
            case.brain_mask,
        )
        assert np.abs(volume.data - expected.data).max() <= 1 / (cfg.hist_bins - 1) + 1e-5


def test_preprocess_constant_modality():
    rng = np.random.default_rng(6)
    case = _random_case(rng)
    flat = Volume3D(np.where(case.brain_mask.data, 2.0, 0.0))
    broken = MultimodalVolume(case.modalities[0], flat, case.modalities[2])
    with pytest.raises(DegenerateIntensity):
        preprocess_case(broken, prepare_reference(case))


def test_reference_histogram_file(tmp_path):
    rng = np.random.default_rng(7)
    reference = ReferenceHistogram.from_prepared(prepare_reference(_random_case(rng)), 32)
    assert reference.quantiles.shape == (3, 32)
    reference.save(tmp_path / "reference.rhst")
    loaded = ReferenceHistogram.load(tmp_path / "reference.rhst")
    assert np.array_equal(loaded.quantiles, reference.quantiles)

    case = _random_case(rng)
    a = preprocess_case(case, reference, PreprocessConfig(hist_bins=32))
    b = preprocess_case(case, loaded, PreprocessConfig(hist_bins=32))
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))

    data = reference.to_bytes()
    with pytest.raises(BadMagic):
        ReferenceHistogram.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(TruncatedFile):
        ReferenceHistogram.from_bytes(data[:-8])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
