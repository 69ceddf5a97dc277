#!/usr/bin/env python3
import io
from typing import Dict, Tuple

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt
from matplotlib.colors import ListedColormap

from fcn_texton_forest.lib.errors import DimensionMismatch, SliceOutOfRange
from fcn_texton_forest.lib.utils import PathLike, atomic_write_bytes
from fcn_texton_forest.lib.volume import (
    LABEL_ENHANCING,
    LABEL_NECROSIS,
    LABEL_NON_ENHANCING,
    LABEL_NORMAL,
    LABEL_OEDEMA,
    N_CLASSES,
    LabelVolume,
    Volume3D,
)

LABEL_COLORS: Dict[int, Tuple[int, int, int]] = {
    LABEL_NORMAL: (0, 0, 0),
    LABEL_NECROSIS: (0, 0, 255),
    LABEL_OEDEMA: (0, 255, 0),
    LABEL_NON_ENHANCING: (255, 255, 0),
    LABEL_ENHANCING: (255, 0, 0),
}

LABEL_COLORMAP = ListedColormap(
    [np.array(LABEL_COLORS[label]) / 255.0 for label in range(N_CLASSES)],
    name="brats_labels",
)


def render_overlay(
    background: Volume3D, labels: LabelVolume, z: int, alpha: float = 0.5
) -> np.ndarray:
    """
    RGB image of axial slice z, x along image columns and y along rows,
    grey background scaled to [0, 255] with tumor labels blended in color

    @return: (ny, nx, 3) uint8
    """
    if background.dims != labels.dims:
        raise DimensionMismatch(f"background {background.dims} vs labels {labels.dims}")
    if not 0 <= z < background.dims[2]:
        raise SliceOutOfRange(f"slice {z} outside 0..{background.dims[2] - 1}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} not in [0, 1]")

    grey = background.data[:, :, z].astype(np.float64).T
    low, high = grey.min(), grey.max()
    if high > low:
        grey = (grey - low) / (high - low) * 255.0
    else:
        grey = np.zeros_like(grey)
    image = np.repeat(grey[..., np.newaxis], 3, axis=2)

    label_slice = labels.data[:, :, z].T
    colors = LABEL_COLORMAP(label_slice.astype(np.intp))[..., :3] * 255.0
    tumor = label_slice > 0
    image[tumor] = (1.0 - alpha) * image[tumor] + alpha * colors[tumor]
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def encode_png(image: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    plt.imsave(buffer, image, format="png")
    return buffer.getvalue()


def write_overlay(
    path: PathLike, background: Volume3D, labels: LabelVolume, z: int, alpha: float = 0.5
) -> None:
    atomic_write_bytes(path, encode_png(render_overlay(background, labels, z, alpha)))


def busiest_slice(labels: LabelVolume) -> int:
    """Axial slice with the most tumor voxels, the middle slice when there is no tumor"""
    per_slice = np.count_nonzero(labels.data, axis=(0, 1))
    if not per_slice.any():
        return labels.dims[2] // 2
    return int(np.argmax(per_slice))
