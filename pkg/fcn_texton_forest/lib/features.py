#!/usr/bin/env python3
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import kaitaistruct
import numpy as np
from scipy.ndimage import distance_transform_edt

from fcn_texton_forest.kaitai.feature_matrix import (
    FeatureMatrix as FeatureMatrixParser,
)
from fcn_texton_forest.lib.errors import (
    BadMagic,
    DimensionMismatch,
    FeatureCountMismatch,
    TruncatedFile,
)
from fcn_texton_forest.lib.fcn import ScoreMap
from fcn_texton_forest.lib.texton import DEFAULT_WINDOW, TextonMap, texton_histograms
from fcn_texton_forest.lib.utils import (
    PathLike,
    assemble_feature_matrix,
    atomic_write_bytes,
    feature_row_dtype,
)
from fcn_texton_forest.lib.volume import (
    N_CLASSES,
    BinaryMask,
    Modality,
    MultimodalVolume,
)

METHOD_FCN = "fcn"
METHOD_FCN_RF = "fcn_rf"
METHOD_FCN_TEXTON_RF = "fcn_texton_rf"
ALL_METHODS = (METHOD_FCN, METHOD_FCN_RF, METHOD_FCN_TEXTON_RF)


def feature_names(k: int = 16, with_textons: bool = True) -> List[str]:
    names = [f"score_{label}" for label in range(N_CLASSES)]
    names += [f"intensity_{modality.tag}" for modality in Modality]
    if with_textons:
        names += [
            f"texton_{modality.tag}_{index}"
            for modality in Modality
            for index in range(k)
        ]
    return names


FEATURE_NAMES = tuple(feature_names())
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class RoiConfig:
    margin_voxels: int = 10

    def __post_init__(self):
        if self.margin_voxels < 0:
            raise ValueError(f"margin_voxels {self.margin_voxels} must be >= 0")


def tumor_roi(scores: ScoreMap) -> BinaryMask:
    """Voxels whose most probable class is a tumor label, ties resolved to normal"""
    return scores.tumor_mask()


def dilate3d(mask: BinaryMask, radius: int) -> BinaryMask:
    """Euclidean ball dilation: true wherever a true voxel lies within radius"""
    if radius < 0:
        raise ValueError(f"radius {radius} must be >= 0")
    if radius == 0 or mask.count() == 0:
        return mask
    if mask.count() == mask.data.size:
        return mask
    distances = distance_transform_edt(~mask.data)
    # integer lattice distances are sqrt of integers, compare squared with slack
    return BinaryMask(distances ** 2 <= radius * radius + 1e-6, mask.spacing)


class FeatureMatrix:
    """
    One row per ROI voxel in x-fastest order, columns per feature_names()
    """

    def __init__(self, values: np.ndarray, coords: np.ndarray):
        values = np.array(values, dtype=np.float32)
        coords = np.array(coords, dtype=np.int32)
        if values.ndim != 2:
            raise DimensionMismatch(f"feature values must be 2D, got {values.shape}")
        if coords.shape != (values.shape[0], 3):
            raise DimensionMismatch(
                f"coords {coords.shape} do not match {values.shape[0]} rows"
            )
        values.flags.writeable = False
        coords.flags.writeable = False
        self.values: np.ndarray = values
        self.coords: np.ndarray = coords

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.n_rows

    @classmethod
    def empty(cls, n_cols: int = N_FEATURES) -> "FeatureMatrix":
        return cls(np.zeros((0, n_cols), np.float32), np.zeros((0, 3), np.int32))

    @classmethod
    def concatenate(cls, matrices: Sequence["FeatureMatrix"]) -> "FeatureMatrix":
        widths = {m.n_cols for m in matrices}
        if len(widths) > 1:
            raise FeatureCountMismatch(f"cannot stack matrices of widths {widths}")
        return cls(
            np.concatenate([m.values for m in matrices]),
            np.concatenate([m.coords for m in matrices]),
        )

    def to_bytes(self) -> bytes:
        return assemble_feature_matrix(self.values, self.coords)

    def save(self, path: PathLike) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def from_bytes(cls, bytedata: bytes) -> "FeatureMatrix":
        if bytedata[0:4] != b"FTMX":
            raise BadMagic(f"not a feature dump (magic {bytedata[0:4]!r})")
        try:
            parsed = FeatureMatrixParser.from_bytes(bytedata)
        except (EOFError, ValueError, kaitaistruct.KaitaiStructError) as e:
            raise TruncatedFile(f"feature dump: {e}") from e
        rows = np.frombuffer(
            parsed.rows, dtype=feature_row_dtype(parsed.n_cols), count=parsed.n_rows
        )
        return cls(rows["values"].reshape(parsed.n_rows, parsed.n_cols), rows["coords"])

    @classmethod
    def load(cls, path: PathLike) -> "FeatureMatrix":
        return cls.from_bytes(Path(path).read_bytes())

    def __repr__(self) -> str:
        return f"FeatureMatrix({self.n_rows}x{self.n_cols})"


def assemble_features(
    scores: ScoreMap,
    case: MultimodalVolume,
    textons: Optional[Sequence[TextonMap]],
    roi: BinaryMask,
    window: int = DEFAULT_WINDOW,
    window_3d: bool = False,
) -> FeatureMatrix:
    """
    Feature rows for every ROI voxel: 5 scores, 3 intensities and, when textons
    are given, the texton histograms of FLAIR, T1c and T2

    @param textons: one TextonMap per modality, or None for score + intensity rows
    """
    if scores.dims != case.dims or roi.dims != case.dims:
        raise DimensionMismatch(
            f"scores {scores.dims}, case {case.dims} and roi {roi.dims} differ"
        )
    coords = roi.coords()
    x, y, z = coords[:, 0], coords[:, 1], coords[:, 2]
    blocks = [scores.data[x, y, z]]
    blocks.append(np.stack([vol.data[x, y, z] for vol in case], axis=1))
    if textons is not None:
        if len(textons) != len(Modality):
            raise FeatureCountMismatch(f"expected 3 texton maps, got {len(textons)}")
        for tmap in textons:
            if tmap.dims != case.dims:
                raise DimensionMismatch(f"texton map {tmap.dims} != case {case.dims}")
            blocks.append(texton_histograms(tmap, coords, window, window_3d=window_3d))
    return FeatureMatrix(np.concatenate(blocks, axis=1), coords)
