#!/usr/bin/env python3
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from fcn_texton_forest.lib.errors import PhantomError, TumorExceedsBrain
from fcn_texton_forest.lib.features import dilate3d
from fcn_texton_forest.lib.fcn import ScoreMap
from fcn_texton_forest.lib.volume import (
    LABEL_ENHANCING,
    LABEL_NECROSIS,
    LABEL_NON_ENHANCING,
    LABEL_NORMAL,
    LABEL_OEDEMA,
    N_CLASSES,
    Dims,
    LabelVolume,
    MultimodalVolume,
    Spacing,
    Volume3D,
)

Vector = Tuple[float, float, float]

# fraction of the oedema radii at which each inner shell ends, innermost last
SHELLS = (
    (LABEL_OEDEMA, 1.0),
    (LABEL_NON_ENHANCING, 0.75),
    (LABEL_ENHANCING, 0.55),
    (LABEL_NECROSIS, 0.35),
)

# mean intensity per tissue label in FLAIR, T1c, T2
DEFAULT_INTENSITIES: Dict[int, Vector] = {
    LABEL_NORMAL: (0.4, 0.45, 0.4),
    LABEL_OEDEMA: (0.9, 0.4, 0.8),
    LABEL_NON_ENHANCING: (0.7, 0.3, 0.65),
    LABEL_ENHANCING: (0.6, 0.95, 0.55),
    LABEL_NECROSIS: (0.5, 0.1, 0.9),
}

# brain voxels never drop to zero, zero is background
MIN_BRAIN_INTENSITY = 1e-3


@dataclass(frozen=True)
class PhantomSpec:
    dims: Dims = (64, 64, 32)
    seed: int = 0
    spacing: Spacing = (1.0, 1.0, 1.0)
    # None centres the brain and sizes it to 0.45 of every dimension
    brain_center: Optional[Vector] = None
    brain_radii: Optional[Vector] = None
    tumor_center: Vector = (36.0, 28.0, 16.0)
    # outer (oedema) radii; inner shells are fixed fractions of them
    tumor_radii: Vector = (12.0, 11.0, 7.0)
    intensities: Dict[int, Vector] = field(
        default_factory=lambda: dict(DEFAULT_INTENSITIES)
    )
    noise_std: float = 0.03

    @property
    def resolved_brain_center(self) -> Vector:
        if self.brain_center is not None:
            return tuple(float(c) for c in self.brain_center)
        return tuple((n - 1) / 2 for n in self.dims)

    @property
    def resolved_brain_radii(self) -> Vector:
        if self.brain_radii is not None:
            return tuple(float(r) for r in self.brain_radii)
        return tuple(0.45 * n for n in self.dims)

    def has_tumor(self) -> bool:
        return all(r > 0 for r in self.tumor_radii)

    def validate(self) -> None:
        if len(self.dims) != 3 or any(n < 1 for n in self.dims):
            raise PhantomError(f"invalid dims {self.dims}")
        if self.noise_std < 0:
            raise PhantomError(f"noise std {self.noise_std} must be >= 0")
        if set(self.intensities) != set(range(N_CLASSES)):
            raise PhantomError("intensities must cover every label 0..4")
        center, radii = self.resolved_brain_center, self.resolved_brain_radii
        for c, r, n in zip(center, radii, self.dims):
            if not r > 0 or c - r < 0 or c + r > n - 1:
                raise PhantomError(f"brain ellipsoid {center}/{radii} leaves {self.dims}")
        if not self.has_tumor():
            return
        brain = _ellipsoid_radius2(self.dims, center, radii) <= 1.0
        tumor = _ellipsoid_radius2(self.dims, self.tumor_center, self.tumor_radii) <= 1.0
        if np.any(tumor & ~brain):
            raise TumorExceedsBrain(
                f"tumor {self.tumor_center}/{self.tumor_radii} extends past the brain"
            )


def _ellipsoid_radius2(dims: Dims, center: Vector, radii: Vector) -> np.ndarray:
    """Squared normalized ellipsoid radius of every voxel"""
    grid = np.ogrid[0 : dims[0], 0 : dims[1], 0 : dims[2]]
    return sum(((axis - c) / r) ** 2 for axis, c, r in zip(grid, center, radii))


def phantom_labels(spec: PhantomSpec) -> LabelVolume:
    labels = np.zeros(spec.dims, dtype=np.uint8)
    if spec.has_tumor():
        radius2 = _ellipsoid_radius2(spec.dims, spec.tumor_center, spec.tumor_radii)
        for label, fraction in SHELLS:
            labels[radius2 <= fraction ** 2] = label
    return LabelVolume(labels, spec.spacing)


def generate_phantom(spec: PhantomSpec) -> Tuple[MultimodalVolume, LabelVolume]:
    """
    Brain ellipsoid of normal tissue holding nested tumor shells
    (oedema > non-enhancing > enhancing > necrosis), Gaussian noise inside the brain
    """
    spec.validate()
    brain = (
        _ellipsoid_radius2(spec.dims, spec.resolved_brain_center, spec.resolved_brain_radii)
        <= 1.0
    )
    labels = phantom_labels(spec)
    table = np.array([spec.intensities[label] for label in range(N_CLASSES)])
    rng = np.random.default_rng(spec.seed)
    volumes = []
    for channel in range(3):
        data = table[labels.data, channel]
        if spec.noise_std > 0:
            data = data + rng.normal(0.0, spec.noise_std, spec.dims)
        data = np.where(brain, np.maximum(data, MIN_BRAIN_INTENSITY), 0.0)
        volumes.append(Volume3D(data, spec.spacing))
    return MultimodalVolume(*volumes), labels


def phantom_series(base: PhantomSpec, count: int, seed: int) -> List[PhantomSpec]:
    """
    count specs derived from base, tumor centre and radii jittered by a stream
    seeded from (seed, case index)
    """
    specs = []
    for index in range(count):
        sequence = np.random.SeedSequence([seed, index])
        rng = np.random.default_rng(sequence)
        shift = rng.uniform(-3.0, 3.0, 3) * np.array([1.0, 1.0, 0.4])
        scale = rng.uniform(0.85, 1.15)
        spec = replace(
            base,
            seed=int(sequence.generate_state(1)[0]),
            tumor_center=tuple(float(c + s) for c, s in zip(base.tumor_center, shift)),
            tumor_radii=tuple(float(r * scale) for r in base.tumor_radii),
        )
        spec.validate()
        specs.append(spec)
    return specs


def oracle_scores(
    truth: LabelVolume, blur_radius: int = 0, flip_rate: float = 0.0, seed: int = 0
) -> ScoreMap:
    """
    Stand-in for FCN output: one-hot truth, a ring of width blur_radius around the
    tumor scored 0.6 for the nearest tumor label, and a flip_rate share of voxels
    scored 0.7 for a random other label
    """
    if not 0 <= flip_rate < 0.5:
        raise ValueError(f"flip_rate {flip_rate} not in [0, 0.5)")
    labels = truth.data.astype(np.int64)
    scores = np.zeros(truth.dims + (N_CLASSES,), dtype=np.float32)
    np.put_along_axis(scores, labels[..., np.newaxis], 1.0, axis=3)

    tumor = truth.tumor_mask()
    if blur_radius > 0 and tumor.count():
        ring = dilate3d(tumor, blur_radius).data & ~tumor.data
        _, nearest = distance_transform_edt(~tumor.data, return_indices=True)
        nearest_label = labels[nearest[0], nearest[1], nearest[2]]
        scores[ring] = 0.0
        scores[ring, LABEL_NORMAL] = 0.4
        scores[ring, nearest_label[ring]] = 0.6
        labels = np.where(ring, nearest_label, labels)

    rng = np.random.default_rng(seed)
    flipped = rng.random(truth.dims) < flip_rate
    offsets = rng.integers(1, N_CLASSES, truth.dims)
    if flipped.any():
        original = labels[flipped]
        other = (original + offsets[flipped]) % N_CLASSES
        scores[flipped] = 0.0
        scores[flipped, original] = 0.3
        scores[flipped, other] = 0.7
    return ScoreMap(scores, truth.spacing)
