#!/usr/bin/env python3
import os
import struct
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
    InvalidLabels,
    SegmentationError,
    TruncatedFile,
    UnsupportedDatatype,
    UnsupportedDimensions,
)
from fcn_texton_forest.lib.nifti import (
    DATATYPE_INT16,
    read_labels,
    read_nifti,
    write_labels,
    write_nifti,
)
from fcn_texton_forest.lib.utils import assemble_nifti1, parse_artifact
from fcn_texton_forest.lib.volume import (
    BinaryMask,
    LabelVolume,
    Modality,
    MultimodalVolume,
    Volume3D,
    linear_index,
    stack_modalities,
    voxel_coords,
)


def test_linear_order_is_x_fastest():
    dims = (3, 4, 5)
    volume = Volume3D.from_linear(np.arange(60), dims)
    assert volume.data[1, 0, 0] == 1
    assert volume.data[0, 1, 0] == 3
    assert volume.data[0, 0, 1] == 12
    assert linear_index(dims, 2, 3, 4) == 59
    assert voxel_coords(dims, 59) == (2, 3, 4)
    assert np.array_equal(volume.linear(), np.arange(60, dtype=np.float32))


def test_from_linear_rejects_wrong_length():
    with pytest.raises(DimensionMismatch):
        Volume3D.from_linear(np.zeros(10), (2, 2, 2))


def test_volumes_are_immutable():
    volume = Volume3D(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        volume.data[0, 0, 0] = 1


def test_label_volume_range_checked():
    with pytest.raises(InvalidLabels):
        LabelVolume(np.full((2, 2, 2), 5))
    assert issubclass(InvalidLabels, SegmentationError) and issubclass(InvalidLabels, ValueError)
    labels = LabelVolume(np.array([0, 1, 2, 3, 4, 4, 0, 0]).reshape(2, 2, 2))
    assert labels.counts().tolist() == [3, 1, 1, 1, 2]
    assert labels.tumor_mask().count() == 5


def test_binary_mask_coords_x_fastest():
    data = np.zeros((3, 3, 2), dtype=bool)
    data[2, 0, 0] = data[0, 1, 0] = data[1, 1, 1] = True
    coords = BinaryMask(data).coords()
    assert coords.tolist() == [[2, 0, 0], [0, 1, 0], [1, 1, 1]]


def test_stack_modalities_checks_grid():
    a = Volume3D(np.ones((4, 4, 4)))
    b = Volume3D(np.ones((4, 4, 3)))
    c = Volume3D(np.ones((4, 4, 4)), spacing=(1.0, 1.0, 2.0))
    with pytest.raises(DimensionMismatch):
        stack_modalities(a, b, a)
    with pytest.raises(DimensionMismatch):
        stack_modalities(a, a, c)
    case = stack_modalities(a, a, a)
    assert isinstance(case, MultimodalVolume)
    assert case.brain_mask.count() == 64
    assert case.axial_slice(0).shape == (4, 4, 3)
    assert case[Modality.T2] is case.modalities[2]


def test_nifti_write_read(tmp_path):
    rng = np.random.default_rng(0)
    volume = Volume3D(rng.normal(size=(5, 6, 7)), spacing=(0.9, 1.1, 2.5))
    path = tmp_path / "vol.nii"
    write_nifti(volume, path)
    loaded = read_nifti(path)
    assert loaded.dims == (5, 6, 7)
    assert loaded.spacing == volume.spacing
    assert np.array_equal(loaded.data, volume.data)

    labels = LabelVolume(rng.integers(0, 5, (5, 6, 7)))
    write_labels(labels, tmp_path / "labels.nii")
    assert read_labels(tmp_path / "labels.nii") == labels
    assert parse_artifact((tmp_path / "labels.nii").read_bytes()).dim[1:4] == [5, 6, 7]


def test_nifti_agrees_with_nibabel(tmp_path):
    nib = pytest.importorskip("nibabel")
    rng = np.random.default_rng(1)
    data = rng.normal(size=(4, 5, 6)).astype(np.float32)

    write_nifti(Volume3D(data, (1.0, 2.0, 3.0)), tmp_path / "ours.nii")
    image = nib.load(str(tmp_path / "ours.nii"))
    assert np.array_equal(np.asarray(image.dataobj, dtype=np.float32), data)
    assert tuple(float(z) for z in image.header.get_zooms()) == (1.0, 2.0, 3.0)

    nib.save(nib.Nifti1Image(data, np.eye(4)), str(tmp_path / "theirs.nii"))
    assert np.array_equal(read_nifti(tmp_path / "theirs.nii").data, data)

    ints = rng.integers(-100, 100, (3, 3, 3)).astype(np.int16)
    nib.save(nib.Nifti1Image(ints, np.eye(4)), str(tmp_path / "ints.nii"))
    assert np.array_equal(read_nifti(tmp_path / "ints.nii").data, ints.astype(np.float32))


def test_nifti_scaling_applied(tmp_path):
    raw = np.arange(8, dtype=np.int16).reshape(2, 2, 2)
    data = bytearray(assemble_nifti1(raw, (1.0, 1.0, 1.0), DATATYPE_INT16))
    # scl_slope and scl_inter live at offsets 112 and 116
    data[112:120] = struct.pack("<2f", 2.0, 1.0)
    (tmp_path / "scaled.nii").write_bytes(bytes(data))
    assert np.array_equal(read_nifti(tmp_path / "scaled.nii").data, raw * 2.0 + 1.0)


def test_nifti_errors(tmp_path):
    good = assemble_nifti1(np.zeros((2, 2, 2), dtype=np.float32), (1.0, 1.0, 1.0))
    path = tmp_path / "bad.nii"

    path.write_bytes(good[:-4])
    with pytest.raises(TruncatedFile):
        read_nifti(path)

    path.write_bytes(good[:200])
    with pytest.raises(TruncatedFile):
        read_nifti(path)

    broken = bytearray(good)
    broken[344:348] = b"ni1\x00"
    path.write_bytes(bytes(broken))
    with pytest.raises(BadMagic):
        read_nifti(path)

    broken = bytearray(good)
    broken[70:72] = struct.pack("<h", 64)  # float64
    path.write_bytes(bytes(broken))
    with pytest.raises(UnsupportedDatatype):
        read_nifti(path)

    broken = bytearray(good)
    broken[40:42] = struct.pack("<h", 4)
    path.write_bytes(bytes(broken))
    with pytest.raises(UnsupportedDimensions):
        read_nifti(path)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
