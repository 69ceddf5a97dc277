#!/usr/bin/env python3
import os
import sys
from dataclasses import replace

import numpy as np
import pytest

try:
    import fcn_texton_forest
except ImportError:
    sys.path.append(
        os.path.dirname(os.path.dirname(os.path.dirname(os.path.realpath(__file__))))
    )

from fcn_texton_forest.lib.errors import PhantomError, TumorExceedsBrain
from fcn_texton_forest.lib.phantom import (
    SHELLS,
    PhantomSpec,
    generate_phantom,
    oracle_scores,
    phantom_labels,
    phantom_series,
)
from fcn_texton_forest.lib.volume import LABEL_NORMAL
from fcn_texton_forest.tests.common import ellipsoid_lattice_count


def test_shell_voxel_counts():
    spec = PhantomSpec(dims=(40, 40, 20), tumor_center=(20.0, 19.0, 10.0), tumor_radii=(9.0, 8.0, 5.0), noise_std=0.0)
    counts = phantom_labels(spec).counts()
    inside = {
        label: ellipsoid_lattice_count(spec.dims, spec.tumor_center, spec.tumor_radii, fraction)
        for label, fraction in SHELLS
    }
    fractions = [fraction for _, fraction in SHELLS] + [0.0]
    for (label, fraction), inner in zip(SHELLS, fractions[1:]):
        inner_count = (
            ellipsoid_lattice_count(spec.dims, spec.tumor_center, spec.tumor_radii, inner)
            if inner > 0
            else 0
        )
        assert counts[label] == inside[label] - inner_count
    assert counts[LABEL_NORMAL] == 40 * 40 * 20 - inside[SHELLS[0][0]]


def test_noise_free_intensities_follow_labels():
    spec = PhantomSpec(dims=(32, 32, 16), tumor_center=(16.0, 16.0, 8.0), tumor_radii=(6.0, 6.0, 4.0), noise_std=0.0)
    volume, truth = generate_phantom(spec)
    brain = volume.brain_mask.data
    for channel, modality in enumerate(volume):
        for label, means in spec.intensities.items():
            voxels = modality.data[(truth.data == label) & brain]
            assert np.allclose(voxels, means[channel])
    assert not np.any(truth.data[~brain])


def test_generation_is_deterministic():
    a, ta = generate_phantom(PhantomSpec(dims=(32, 32, 16), tumor_center=(16.0, 16.0, 8.0), tumor_radii=(6.0, 5.0, 4.0), seed=4))
    b, tb = generate_phantom(PhantomSpec(dims=(32, 32, 16), tumor_center=(16.0, 16.0, 8.0), tumor_radii=(6.0, 5.0, 4.0), seed=4))
    c, _ = generate_phantom(PhantomSpec(dims=(32, 32, 16), tumor_center=(16.0, 16.0, 8.0), tumor_radii=(6.0, 5.0, 4.0), seed=5))
    assert ta == tb
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))
    assert not np.array_equal(a.modalities[0].data, c.modalities[0].data)


def test_no_tumor_and_invalid_specs():
    _, truth = generate_phantom(PhantomSpec(tumor_radii=(0.0, 0.0, 0.0)))
    assert truth.tumor_mask().count() == 0
    with pytest.raises(TumorExceedsBrain):
        generate_phantom(PhantomSpec(tumor_center=(60.0, 32.0, 16.0)))
    with pytest.raises(PhantomError):
        generate_phantom(PhantomSpec(noise_std=-1.0))
    with pytest.raises(PhantomError):
        generate_phantom(PhantomSpec(brain_radii=(40.0, 20.0, 10.0)))


def test_phantom_series_jitters_tumor():
    specs = phantom_series(PhantomSpec(), 4, seed=7)
    again = phantom_series(PhantomSpec(), 4, seed=7)
    assert specs == again
    assert len({spec.tumor_center for spec in specs}) == 4
    assert len({spec.seed for spec in specs}) == 4
    for spec in specs:
        assert spec.dims == PhantomSpec().dims


def test_oracle_scores_plain_is_one_hot():
    _, truth = generate_phantom(replace(PhantomSpec(), dims=(48, 48, 24), tumor_center=(24.0, 22.0, 12.0), tumor_radii=(9.0, 8.0, 5.0)))
    scores = oracle_scores(truth)
    assert np.array_equal(scores.argmax().data, truth.data)
    assert np.allclose(scores.data.sum(axis=3), 1.0)


def test_oracle_flip_rate():
    _, truth = generate_phantom(replace(PhantomSpec(), dims=(48, 48, 24), tumor_center=(24.0, 22.0, 12.0), tumor_radii=(9.0, 8.0, 5.0)))
    for seed in range(10):
        scores = oracle_scores(truth, flip_rate=0.1, seed=seed)
        rate = np.mean(scores.argmax().data != truth.data)
        assert abs(rate - 0.1) <= 0.02
        assert np.allclose(scores.data.sum(axis=3), 1.0, atol=1e-6)


def test_oracle_blur_grows_roi():
    _, truth = generate_phantom(replace(PhantomSpec(), dims=(48, 48, 24), tumor_center=(24.0, 22.0, 12.0), tumor_radii=(9.0, 8.0, 5.0)))
    sharp = oracle_scores(truth).tumor_mask()
    blurred = oracle_scores(truth, blur_radius=2).tumor_mask()
    assert np.all(blurred.data[sharp.data])
    assert blurred.count() > sharp.count()
    with pytest.raises(ValueError):
        oracle_scores(truth, flip_rate=0.6)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
