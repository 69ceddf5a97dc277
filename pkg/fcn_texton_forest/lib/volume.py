#!/usr/bin/env python3
from enum import IntEnum
from typing import Optional, Sequence, Tuple

import numpy as np

from fcn_texton_forest.lib.errors import DimensionMismatch, InvalidLabels

Dims = Tuple[int, int, int]
Spacing = Tuple[float, float, float]

# BRATS label convention
LABEL_NORMAL = 0
LABEL_NECROSIS = 1
LABEL_OEDEMA = 2
LABEL_NON_ENHANCING = 3
LABEL_ENHANCING = 4
N_CLASSES = 5
LABEL_NAMES = {
    LABEL_NORMAL: "normal",
    LABEL_NECROSIS: "necrosis",
    LABEL_OEDEMA: "oedema",
    LABEL_NON_ENHANCING: "non-enhancing",
    LABEL_ENHANCING: "enhancing",
}


class Modality(IntEnum):
    FLAIR = 0
    T1C = 1
    T2 = 2

    @property
    def tag(self) -> str:
        return {0: "flair", 1: "t1c", 2: "t2"}[int(self)]


def linear_index(dims: Dims, x: int, y: int, z: int) -> int:
    """x-fastest linear order, same as the NIfTI payload"""
    nx, ny, _ = dims
    return x + nx * (y + ny * z)


def voxel_coords(dims: Dims, index: int) -> Tuple[int, int, int]:
    nx, ny, _ = dims
    return index % nx, (index // nx) % ny, index // (nx * ny)


def _frozen(data: np.ndarray, dtype) -> np.ndarray:
    array = np.array(data, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


def _check_dims(dims: Sequence[int]) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise DimensionMismatch(f"dims must be three positive integers, got {dims}")
    return dims


class Volume3D:
    """
    Dense scalar grid indexed data[x, y, z], values stored as float32
    """

    def __init__(self, data: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0)):
        if np.ndim(data) != 3:
            raise DimensionMismatch(f"expected 3D data, got shape {np.shape(data)}")
        self.data: np.ndarray = _frozen(data, np.float32)
        self.dims: Dims = _check_dims(self.data.shape)
        # float32-representable so spacing survives the NIfTI header round trip
        self.spacing: Spacing = tuple(float(np.float32(s)) for s in spacing)
        if len(self.spacing) != 3 or any(not s > 0 for s in self.spacing):
            raise DimensionMismatch(f"spacing must be positive, got {spacing}")

    @classmethod
    def from_linear(
        cls, values: Sequence[float], dims: Dims, spacing: Spacing = (1.0, 1.0, 1.0)
    ) -> "Volume3D":
        dims = _check_dims(dims)
        values = np.asarray(values, dtype=np.float32)
        if values.size != dims[0] * dims[1] * dims[2]:
            raise DimensionMismatch(
                f"data length {values.size} does not match dims {dims}"
            )
        return cls(values.reshape(dims, order="F"), spacing)

    def linear(self) -> np.ndarray:
        return self.data.ravel(order="F")

    def with_data(self, data: np.ndarray) -> "Volume3D":
        return Volume3D(data, self.spacing)

    def foreground(self) -> np.ndarray:
        return self.data != 0

    def same_grid(self, other) -> bool:
        return self.dims == other.dims and self.spacing == other.spacing

    def __repr__(self) -> str:
        return f"Volume3D(dims={self.dims}, spacing={self.spacing})"


class LabelVolume:
    def __init__(self, data: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0)):
        if np.ndim(data) != 3:
            raise DimensionMismatch(f"expected 3D labels, got shape {np.shape(data)}")
        raw = np.asarray(data)
        if raw.size and (raw.min() < 0 or raw.max() >= N_CLASSES):
            raise InvalidLabels(f"labels must lie in 0..{N_CLASSES - 1}")
        self.data: np.ndarray = _frozen(raw, np.uint8)
        self.dims: Dims = _check_dims(self.data.shape)
        self.spacing: Spacing = tuple(float(s) for s in spacing)

    @classmethod
    def zeros(cls, dims: Dims, spacing: Spacing = (1.0, 1.0, 1.0)) -> "LabelVolume":
        return cls(np.zeros(dims, dtype=np.uint8), spacing)

    @classmethod
    def from_volume(cls, volume: Volume3D) -> "LabelVolume":
        return cls(np.rint(volume.data).astype(np.int16), volume.spacing)

    def tumor_mask(self) -> "BinaryMask":
        return BinaryMask(self.data > 0, self.spacing)

    def counts(self) -> np.ndarray:
        return np.bincount(self.data.ravel(), minlength=N_CLASSES)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabelVolume)
            and self.dims == other.dims
            and bool(np.array_equal(self.data, other.data))
        )

    def __repr__(self) -> str:
        return f"LabelVolume(dims={self.dims}, counts={self.counts().tolist()})"


class BinaryMask:
    def __init__(self, data: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0)):
        if np.ndim(data) != 3:
            raise DimensionMismatch(f"expected 3D mask, got shape {np.shape(data)}")
        self.data: np.ndarray = _frozen(data, bool)
        self.dims: Dims = _check_dims(self.data.shape)
        self.spacing: Spacing = tuple(float(s) for s in spacing)

    @classmethod
    def empty(cls, dims: Dims, spacing: Spacing = (1.0, 1.0, 1.0)) -> "BinaryMask":
        return cls(np.zeros(dims, dtype=bool), spacing)

    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def coords(self) -> np.ndarray:
        """True voxel coordinates as (n, 3) int32, x-fastest scan order"""
        flat = np.flatnonzero(self.data.ravel(order="F"))
        return np.stack(np.unravel_index(flat, self.dims, order="F"), axis=1).astype(
            np.int32
        )

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.data | other.data, self.spacing)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        return BinaryMask(self.data & other.data, self.spacing)

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryMask) and bool(
            np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"BinaryMask(dims={self.dims}, count={self.count()})"


class MultimodalVolume:
    """
    Co-registered FLAIR, T1c and T2 volumes; brain_mask survives normalization,
    where zero stops meaning background
    """

    def __init__(
        self,
        flair: Volume3D,
        t1c: Volume3D,
        t2: Volume3D,
        brain_mask: Optional[BinaryMask] = None,
    ):
        self.modalities: Tuple[Volume3D, Volume3D, Volume3D] = (flair, t1c, t2)
        self.dims: Dims = flair.dims
        self.spacing: Spacing = flair.spacing
        if brain_mask is None:
            brain_mask = BinaryMask(
                flair.foreground() | t1c.foreground() | t2.foreground(), self.spacing
            )
        if brain_mask.dims != self.dims:
            raise DimensionMismatch("brain mask does not match modality dims")
        self.brain_mask: BinaryMask = brain_mask

    def __getitem__(self, modality: Modality) -> Volume3D:
        return self.modalities[int(modality)]

    def __iter__(self):
        return iter(self.modalities)

    def axial_slice(self, z: int) -> np.ndarray:
        """(nx, ny, 3) float32, channels in FLAIR, T1c, T2 order"""
        return np.stack([m.data[:, :, z] for m in self.modalities], axis=-1)

    def __repr__(self) -> str:
        return f"MultimodalVolume(dims={self.dims}, spacing={self.spacing})"


def stack_modalities(flair: Volume3D, t1c: Volume3D, t2: Volume3D) -> MultimodalVolume:
    for name, volume in (("t1c", t1c), ("t2", t2)):
        if not flair.same_grid(volume):
            raise DimensionMismatch(
                f"{name} grid {volume.dims}/{volume.spacing} differs from flair "
                f"{flair.dims}/{flair.spacing}"
            )
    return MultimodalVolume(flair, t1c, t2)
