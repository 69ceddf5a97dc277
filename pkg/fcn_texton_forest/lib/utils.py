#!/usr/bin/env python3
import os
import shutil
import struct
import tempfile
from pathlib import Path
from typing import Callable, Iterable, Tuple, Union

import numpy as np
from kaitaistruct import KaitaiStruct

from fcn_texton_forest.kaitai.fcn_weights import FcnWeights
from fcn_texton_forest.kaitai.feature_matrix import FeatureMatrix
from fcn_texton_forest.kaitai.nifti1 import Nifti1
from fcn_texton_forest.kaitai.random_forest import RandomForest
from fcn_texton_forest.kaitai.reference_histogram import ReferenceHistogram
from fcn_texton_forest.kaitai.score_map import ScoreMap
from fcn_texton_forest.kaitai.texton_codebook import TextonCodebook

PathLike = Union[str, os.PathLike]

NIFTI_HEADER_SIZE = 348
NIFTI_VOX_OFFSET = 352
NIFTI_MAGIC = b"n+1\x00"
NIFTI_DATATYPES = {
    # datatype code: (numpy little-endian dtype, bitpix)
    2: ("<u1", 8),
    4: ("<i2", 16),
    16: ("<f4", 32),
}
NIFTI_HEADER_FORMAT = "<i10s18sihBB8h3f4h8f3fhBB4f2i80s24s2h3f3f4f4f4f16s4s"

MAGIC_PARSERS = {
    b"FCNW": FcnWeights,
    b"TXCB": TextonCodebook,
    b"RFOR": RandomForest,
    b"SCMP": ScoreMap,
    b"RHST": ReferenceHistogram,
    b"FTMX": FeatureMatrix,
}


def parse_artifact(bytedata: bytes) -> KaitaiStruct:
    if len(bytedata) >= NIFTI_HEADER_SIZE and bytedata[344:348] == NIFTI_MAGIC:
        return Nifti1.from_bytes(bytedata)
    parser = MAGIC_PARSERS.get(bytes(bytedata[0:4]))
    if parser is None:
        raise LookupError(f"Unknown artifact magic {bytes(bytedata[0:4])!r}")
    return parser.from_bytes(bytedata)


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """
    Writes to a temporary sibling and renames it over path, so readers never see partial files

    @param path: target file
    @param data: full file content
    """
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_directory(target: PathLike, populate: Callable[[Path], None]) -> None:
    """
    Builds a directory next to target through populate(tmp_dir), then swaps it into place
    """
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp_dir = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        populate(tmp_dir)
        if target.exists():
            shutil.rmtree(target)
        os.rename(tmp_dir, target)
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise


def to_x_fastest(array: np.ndarray) -> np.ndarray:
    """(nx, ny, nz, ...) array -> contiguous layout with x varying fastest per voxel"""
    axes = (2, 1, 0) + tuple(range(3, array.ndim))
    return np.ascontiguousarray(np.transpose(array, axes))


def from_x_fastest(flat: np.ndarray, dims: Tuple[int, int, int], *trailing: int):
    nx, ny, nz = dims
    array = flat.reshape((nz, ny, nx) + tuple(trailing))
    axes = (2, 1, 0) + tuple(range(3, array.ndim))
    return np.transpose(array, axes)


def assemble_nifti1(
    data: np.ndarray,
    spacing: Tuple[float, float, float],
    datatype: int = 16,
    description: str = "",
) -> bytes:
    dtype, bitpix = NIFTI_DATATYPES[datatype]
    nx, ny, nz = data.shape
    sx, sy, sz = spacing
    header = struct.pack(
        NIFTI_HEADER_FORMAT,
        NIFTI_HEADER_SIZE,
        bytes(10),
        bytes(18),
        0,
        0,
        ord("r"),
        0,
        # dim[0..7]
        3,
        nx,
        ny,
        nz,
        1,
        1,
        1,
        1,
        # intent_p1..3
        0.0,
        0.0,
        0.0,
        # intent_code, datatype, bitpix, slice_start
        0,
        datatype,
        bitpix,
        0,
        # pixdim[0..7], pixdim[0] is qfac
        1.0,
        sx,
        sy,
        sz,
        0.0,
        0.0,
        0.0,
        0.0,
        # vox_offset, scl_slope, scl_inter
        float(NIFTI_VOX_OFFSET),
        1.0,
        0.0,
        # slice_end, slice_code, xyzt_units (mm)
        0,
        0,
        2,
        # cal_max, cal_min, slice_duration, toffset
        0.0,
        0.0,
        0.0,
        0.0,
        # glmax, glmin
        0,
        0,
        description.encode("ascii", "replace")[0:79].ljust(80, b"\x00"),
        bytes(24),
        # qform_code, sform_code
        0,
        1,
        # quatern_b/c/d, qoffset_x/y/z
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        # srow_x, srow_y, srow_z
        sx,
        0.0,
        0.0,
        0.0,
        0.0,
        sy,
        0.0,
        0.0,
        0.0,
        0.0,
        sz,
        0.0,
        bytes(16),
        NIFTI_MAGIC,
    )
    # 4 byte extension flag, no extensions
    return header + bytes(4) + to_x_fastest(np.asarray(data, dtype=dtype)).tobytes()


def assemble_fcn_weights(layers: Iterable, version: int = 1) -> bytes:
    """
    @param layers: ConvLayerSpec instances in file order
    """
    layers = list(layers)
    chunks = [b"FCNW", struct.pack("<II", version, len(layers))]
    for layer in layers:
        name = layer.name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name)) + name)
        chunks.append(
            struct.pack(
                "<6IBB",
                layer.kernel_h,
                layer.kernel_w,
                layer.in_channels,
                layer.out_channels,
                layer.stride,
                layer.pad,
                1 if layer.kind == "tconv" else 0,
                1 if layer.activation == "relu" else 0,
            )
        )
        chunks.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    return b"".join(chunks)


def assemble_texton_codebook(centroids: np.ndarray, modality: int) -> bytes:
    k, dim = centroids.shape
    return (
        b"TXCB"
        + struct.pack("<IIB", k, dim, modality)
        + np.ascontiguousarray(centroids, dtype="<f4").tobytes()
    )


def assemble_score_map(scores: np.ndarray) -> bytes:
    nx, ny, nz, channels = scores.shape
    return (
        b"SCMP"
        + struct.pack("<4I", nx, ny, nz, channels)
        + to_x_fastest(np.asarray(scores, dtype="<f4")).tobytes()
    )


def assemble_reference_histogram(quantiles: np.ndarray) -> bytes:
    modalities, bins = quantiles.shape
    return (
        b"RHST"
        + struct.pack("<II", bins, modalities)
        + np.ascontiguousarray(quantiles, dtype="<f4").tobytes()
    )


def feature_row_dtype(n_cols: int) -> np.dtype:
    return np.dtype([("values", "<f4", (n_cols,)), ("coords", "<i4", (3,))])


def assemble_feature_matrix(values: np.ndarray, coords: np.ndarray) -> bytes:
    n_rows, n_cols = values.shape
    rows = np.empty(n_rows, dtype=feature_row_dtype(n_cols))
    rows["values"] = values
    rows["coords"] = coords
    return b"FTMX" + struct.pack("<II", n_rows, n_cols) + rows.tobytes()


def assemble_random_forest(
    n_trees: int,
    max_depth: int,
    k_attributes: int,
    min_leaf: int,
    seed: int,
    n_features: int,
    n_classes: int,
    trees: Iterable,
) -> bytes:
    """
    @param trees: DecisionTree instances, node arrays already in pre-order
    """
    chunks = [
        b"RFOR",
        struct.pack(
            "<4IQ2I",
            n_trees,
            max_depth,
            k_attributes,
            min_leaf,
            seed,
            n_features,
            n_classes,
        ),
    ]
    leaf_format = f"<B{n_classes}I"
    for tree in trees:
        for node in range(tree.n_nodes):
            if tree.feature[node] < 0:
                chunks.append(struct.pack(leaf_format, 1, *tree.counts[node]))
            else:
                chunks.append(
                    struct.pack(
                        "<BHf", 0, int(tree.feature[node]), float(tree.threshold[node])
                    )
                )
    return b"".join(chunks)
