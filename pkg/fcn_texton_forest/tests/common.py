#!/usr/bin/env python3
import itertools
from collections import deque
from typing import List, Optional, Sequence, Tuple, Type

import numpy as np
from kaitaistruct import KaitaiStruct

from fcn_texton_forest.lib.fcn import ConvLayerSpec
from fcn_texton_forest.lib.phantom import PhantomSpec, generate_phantom, phantom_series
from fcn_texton_forest.lib.pipeline import TrainingCase
from fcn_texton_forest.lib.settings import SegmentationSettings

# narrow backbone, the layer table stays the FCN-8s one
SLIM_WIDTHS = (4, 4, 4, 4, 4, 8)

SMALL_SETTINGS = """
[general]
method = fcn_texton_rf
seed = 3

[fcn]
score_source = oracle
oracle_blur = 2
oracle_flip = 0.05

[texton]
k = 16
thetas = 0,90
sigmas = 0.6,1.2
lambdas = 1.0
max_samples = 6000
max_iter = 30

[forest]
n_trees = 6
max_depth = 12
max_per_class = 1500
"""


# default phantom scaled to 3/4 in every axis
SMALL_PHANTOM = PhantomSpec(
    dims=(48, 48, 24), tumor_center=(27.0, 21.0, 12.0), tumor_radii=(9.0, 8.25, 5.25)
)


def small_settings(**overrides) -> SegmentationSettings:
    settings = SegmentationSettings(filedata=SMALL_SETTINGS)
    return settings.with_overrides(**overrides) if overrides else settings


def phantom_cases(
    count: int, seed: int, base: Optional[PhantomSpec] = None, prefix: str = "case"
) -> List[TrainingCase]:
    cases = []
    for index, spec in enumerate(phantom_series(base or PhantomSpec(), count, seed)):
        volume, truth = generate_phantom(spec)
        cases.append(TrainingCase(f"{prefix}_{index:03d}", volume, truth))
    return cases


def random_mask(rng: np.random.Generator, dims: Tuple[int, int, int], density: float):
    return rng.random(dims) < density


def brute_overlap(pred: np.ndarray, truth: np.ndarray) -> Tuple[int, int, int]:
    tp = fp = fn = 0
    for p, t in zip(pred.ravel().tolist(), truth.ravel().tolist()):
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
    return tp, fp, fn


def brute_conv2d(x: np.ndarray, layer: ConvLayerSpec) -> np.ndarray:
    """Direct-sum cross-correlation with bias and activation"""
    h, w, _ = x.shape
    p, s = layer.pad, layer.stride
    padded = np.pad(x.astype(np.float64), ((p, p), (p, p), (0, 0)))
    out_h = (h + 2 * p - layer.kernel_h) // s + 1
    out_w = (w + 2 * p - layer.kernel_w) // s + 1
    out = np.zeros((out_h, out_w, layer.out_channels))
    for i in range(out_h):
        for j in range(out_w):
            patch = padded[i * s : i * s + layer.kernel_h, j * s : j * s + layer.kernel_w]
            for o in range(layer.out_channels):
                out[i, j, o] = np.sum(patch * layer.weights[o].transpose(1, 2, 0))
    out += layer.bias
    if layer.activation == "relu":
        out = np.maximum(out, 0)
    return out


def brute_convolve_slice(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' convolution of a 2D image with an odd square kernel"""
    nx, ny = image.shape
    half = kernel.shape[0] // 2
    out = np.zeros((nx, ny), dtype=np.complex128)
    for x in range(nx):
        for y in range(ny):
            total = 0j
            for i in range(kernel.shape[0]):
                for j in range(kernel.shape[1]):
                    u, v = x + half - i, y + half - j
                    if 0 <= u < nx and 0 <= v < ny:
                        total += image[u, v] * kernel[i, j]
            out[x, y] = total
    return out


def lattice_ball_count(radius: int) -> int:
    span = range(-radius, radius + 1)
    return sum(
        1 for x, y, z in itertools.product(span, span, span) if x * x + y * y + z * z <= radius * radius
    )


def brute_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    out = np.zeros_like(mask)
    offsets = [
        (dx, dy, dz)
        for dx, dy, dz in itertools.product(range(-radius, radius + 1), repeat=3)
        if dx * dx + dy * dy + dz * dz <= radius * radius
    ]
    for x, y, z in zip(*np.nonzero(mask)):
        for dx, dy, dz in offsets:
            u, v, w = x + dx, y + dy, z + dz
            if 0 <= u < mask.shape[0] and 0 <= v < mask.shape[1] and 0 <= w < mask.shape[2]:
                out[u, v, w] = True
    return out


def flood_fill_components(mask: np.ndarray) -> List[set]:
    """26-connected components as sets of voxel tuples"""
    seen = np.zeros_like(mask, dtype=bool)
    neighbours = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
    components = []
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        seen[start] = True
        queue, component = deque([start]), set()
        while queue:
            voxel = queue.popleft()
            component.add(tuple(int(c) for c in voxel))
            for d in neighbours:
                n = tuple(c + o for c, o in zip(voxel, d))
                if all(0 <= c < s for c, s in zip(n, mask.shape)) and mask[n] and not seen[n]:
                    seen[n] = True
                    queue.append(n)
        components.append(component)
    return components


def brute_postprocess(labels: np.ndarray, min_fraction: float) -> np.ndarray:
    components = flood_fill_components(labels > 0)
    out = labels.copy()
    if len(components) < 2:
        return out
    largest = max(len(c) for c in components)
    for component in components:
        if len(component) < min_fraction * largest:
            for voxel in component:
                out[voxel] = 0
    return out


def ellipsoid_lattice_count(
    dims: Sequence[int], center: Sequence[float], radii: Sequence[float], fraction: float
) -> int:
    count = 0
    for x, y, z in itertools.product(*(range(n) for n in dims)):
        r2 = sum(((c - m) / r) ** 2 for c, m, r in zip((x, y, z), center, radii))
        if r2 <= fraction ** 2:
            count += 1
    return count


def parse_test_data(class_name: Type[KaitaiStruct], bytedata: bytes) -> KaitaiStruct:
    """
    :param class_name: type of struct to expect
    :param bytedata: serialized artifact
    :return KaitaiStruct parsed instance, printed for manual runs
    """
    instance = class_name.from_bytes(bytedata)
    print("parseTestData: %s" % class_name.__name__)
    print({k: v for k, v in vars(instance).items() if not k.startswith("_")})
    return instance
