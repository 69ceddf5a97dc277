#!/usr/bin/env python3
from enum import Enum
from pathlib import Path

import kaitaistruct
import numpy as np

from fcn_texton_forest.kaitai.nifti1 import Nifti1
from fcn_texton_forest.lib.errors import (
    BadMagic,
    TruncatedFile,
    UnsupportedDatatype,
    UnsupportedDimensions,
)
from fcn_texton_forest.lib.utils import (
    NIFTI_DATATYPES,
    NIFTI_HEADER_SIZE,
    NIFTI_MAGIC,
    PathLike,
    assemble_nifti1,
    atomic_write_bytes,
    from_x_fastest,
)
from fcn_texton_forest.lib.volume import LabelVolume, Volume3D

DATATYPE_UINT8 = Nifti1.Datatypes.uint8.value
DATATYPE_INT16 = Nifti1.Datatypes.int16.value
DATATYPE_FLOAT32 = Nifti1.Datatypes.float32.value


def parse_nifti(bytedata: bytes) -> Nifti1:
    if len(bytedata) < NIFTI_HEADER_SIZE:
        raise TruncatedFile(
            f"{len(bytedata)} bytes is shorter than a NIfTI-1 header ({NIFTI_HEADER_SIZE})"
        )
    try:
        header = Nifti1.from_bytes(bytedata)
    except (EOFError, kaitaistruct.KaitaiStructError) as e:
        raise TruncatedFile(str(e)) from e
    if header.magic != NIFTI_MAGIC or header.sizeof_hdr != NIFTI_HEADER_SIZE:
        raise BadMagic(
            f"not a little-endian single-file NIfTI-1 (magic {header.magic!r}, "
            f"sizeof_hdr {header.sizeof_hdr})"
        )
    return header


def read_nifti(path: PathLike) -> Volume3D:
    header = parse_nifti(Path(path).read_bytes())

    datatype = header.datatype
    code = datatype.value if isinstance(datatype, Enum) else int(datatype)
    if code not in NIFTI_DATATYPES:
        raise UnsupportedDatatype(
            f"datatype {datatype} is not one of uint8, int16, float32"
        )
    rank = header.dim[0]
    if rank != 3:
        raise UnsupportedDimensions(f"expected a 3D volume, header declares {rank}D")
    dims = tuple(int(d) for d in header.dim[1:4])
    if any(d < 1 for d in dims):
        raise UnsupportedDimensions(f"invalid dims {dims}")
    if header.vox_offset < NIFTI_HEADER_SIZE + 4:
        raise BadMagic(f"vox_offset {header.vox_offset} inside the header")

    dtype, bitpix = NIFTI_DATATYPES[code]
    count = dims[0] * dims[1] * dims[2]
    payload = header.payload
    if len(payload) < count * (bitpix // 8):
        raise TruncatedFile(
            f"payload holds {len(payload)} bytes, {count * (bitpix // 8)} expected"
        )
    raw = np.frombuffer(payload, dtype=dtype, count=count)

    values = raw.astype(np.float32)
    slope, inter = np.float32(header.scl_slope), np.float32(header.scl_inter)
    # slope 0 means unscaled, slope 1 / inter 0 is skipped to keep -0.0 bit-exact
    if np.isfinite(slope) and slope != 0 and not (slope == 1 and inter == 0):
        values = values * slope + (inter if np.isfinite(inter) else np.float32(0))

    spacing = tuple(abs(float(p)) or 1.0 for p in header.pixdim[1:4])
    return Volume3D(from_x_fastest(values, dims), spacing)


def write_nifti(volume: Volume3D, path: PathLike) -> None:
    atomic_write_bytes(path, assemble_nifti1(volume.data, volume.spacing, DATATYPE_FLOAT32))


def read_labels(path: PathLike) -> LabelVolume:
    return LabelVolume.from_volume(read_nifti(path))


def write_labels(labels: LabelVolume, path: PathLike) -> None:
    atomic_write_bytes(
        path, assemble_nifti1(labels.data, labels.spacing, DATATYPE_UINT8, "labels")
    )
