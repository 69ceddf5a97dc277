#!/usr/bin/env python3
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import kaitaistruct
import numpy as np

from fcn_texton_forest.kaitai.reference_histogram import (
    ReferenceHistogram as ReferenceHistogramParser,
)
from fcn_texton_forest.lib.errors import (
    BadMagic,
    DegenerateIntensity,
    DimensionMismatch,
    EmptyForeground,
    TruncatedFile,
)
from fcn_texton_forest.lib.utils import (
    PathLike,
    assemble_reference_histogram,
    atomic_write_bytes,
)
from fcn_texton_forest.lib.volume import BinaryMask, MultimodalVolume, Volume3D


@dataclass(frozen=True)
class PreprocessConfig:
    tail_fraction: float = 0.01
    hist_bins: int = 256
    reference_case: Optional[str] = None

    def __post_init__(self):
        if not 0 <= self.tail_fraction < 0.5:
            raise ValueError(f"tail_fraction {self.tail_fraction} not in [0, 0.5)")
        if self.hist_bins < 2:
            raise ValueError(f"hist_bins {self.hist_bins} must be at least 2")


def _support(vol: Volume3D, mask: Optional[BinaryMask]) -> np.ndarray:
    support = vol.foreground() if mask is None else mask.data
    if support.shape != vol.dims:
        raise DimensionMismatch(f"mask {support.shape} does not match volume {vol.dims}")
    if not support.any():
        raise EmptyForeground(f"{vol!r} has no foreground voxels")
    return support


def _rebuild(vol: Volume3D, support: np.ndarray, values: np.ndarray) -> Volume3D:
    data = np.zeros(vol.dims, dtype=np.float32)
    data[support] = values
    return vol.with_data(data)


def clip_tails(
    vol: Volume3D, tail_fraction: float, mask: Optional[BinaryMask] = None
) -> Volume3D:
    """
    Winsorizes foreground intensities at the tail_fraction / (1 - tail_fraction) quantiles

    Lower bound is sorted[ceil(p * (n - 1))], upper bound sorted[floor((1 - p) * (n - 1))]
    """
    if not 0 <= tail_fraction < 0.5:
        raise ValueError(f"tail_fraction {tail_fraction} not in [0, 0.5)")
    support = _support(vol, mask)
    values = vol.data[support]
    if tail_fraction == 0:
        return _rebuild(vol, support, values)
    low = np.quantile(values, tail_fraction, method="higher")
    high = np.quantile(values, 1 - tail_fraction, method="lower")
    return _rebuild(vol, support, np.clip(values, low, high))


def zscore_normalize(vol: Volume3D, mask: Optional[BinaryMask] = None) -> Volume3D:
    support = _support(vol, mask)
    values = vol.data[support].astype(np.float64)
    std = values.std()
    if not std > 0:
        raise DegenerateIntensity(f"{vol!r} has constant foreground {values[0]}")
    return _rebuild(vol, support, (values - values.mean()) / std)


def foreground_quantiles(values: np.ndarray, bins: int) -> np.ndarray:
    return np.quantile(
        np.asarray(values, dtype=np.float64), np.linspace(0.0, 1.0, bins)
    )


def match_to_quantiles(
    vol: Volume3D, reference: np.ndarray, mask: Optional[BinaryMask] = None
) -> Volume3D:
    """
    Monotone CDF inversion: source quantiles are mapped piecewise-linearly onto reference quantiles

    @param reference: nondecreasing reference quantiles at linspace(0, 1, bins)
    """
    support = _support(vol, mask)
    values = vol.data[support].astype(np.float64)
    source = foreground_quantiles(values, len(reference))
    # np.interp needs strictly increasing sample points
    source, first = np.unique(source, return_index=True)
    target = np.asarray(reference, dtype=np.float64)[first]
    if len(source) == 1:
        return _rebuild(vol, support, np.full(values.shape, target[0]))
    return _rebuild(vol, support, np.interp(values, source, target))


def histogram_match(
    vol: Volume3D,
    reference: Volume3D,
    bins: int = 256,
    mask: Optional[BinaryMask] = None,
    reference_mask: Optional[BinaryMask] = None,
) -> Volume3D:
    ref_support = _support(reference, reference_mask)
    return match_to_quantiles(
        vol, foreground_quantiles(reference.data[ref_support], bins), mask
    )


def rescale_unit(vol: Volume3D, mask: Optional[BinaryMask] = None) -> Volume3D:
    support = _support(vol, mask)
    values = vol.data[support].astype(np.float64)
    low, high = values.min(), values.max()
    if not high > low:
        raise DegenerateIntensity(f"{vol!r} foreground spans a single value {low}")
    return _rebuild(vol, support, np.clip((values - low) / (high - low), 0.0, 1.0))


def prepare_reference(
    reference: MultimodalVolume, cfg: PreprocessConfig = PreprocessConfig()
) -> MultimodalVolume:
    """Tail clipping and z-scoring of the reference case, the state histogram matching expects"""
    mask = reference.brain_mask
    prepared = [
        zscore_normalize(clip_tails(vol, cfg.tail_fraction, mask), mask)
        for vol in reference
    ]
    return MultimodalVolume(*prepared, brain_mask=mask)


class ReferenceHistogram:
    """
    Per-modality foreground quantiles of the prepared reference case, shape (3, bins)
    """

    def __init__(self, quantiles: np.ndarray):
        quantiles = np.array(quantiles, dtype=np.float32)
        if quantiles.ndim != 2 or quantiles.shape[0] != 3 or quantiles.shape[1] < 2:
            raise DimensionMismatch(f"expected (3, bins) quantiles, got {quantiles.shape}")
        if np.any(np.diff(quantiles, axis=1) < 0):
            raise ValueError("reference quantiles must be nondecreasing")
        quantiles.flags.writeable = False
        self.quantiles: np.ndarray = quantiles

    @property
    def bins(self) -> int:
        return self.quantiles.shape[1]

    @classmethod
    def from_prepared(
        cls, prepared: MultimodalVolume, bins: int = 256
    ) -> "ReferenceHistogram":
        support = prepared.brain_mask.data
        if not support.any():
            raise EmptyForeground("reference case has no brain voxels")
        return cls(
            np.stack([foreground_quantiles(vol.data[support], bins) for vol in prepared])
        )

    def to_bytes(self) -> bytes:
        return assemble_reference_histogram(self.quantiles)

    def save(self, path: PathLike) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def from_bytes(cls, bytedata: bytes) -> "ReferenceHistogram":
        if bytedata[0:4] != b"RHST":
            raise BadMagic(f"not a reference histogram (magic {bytedata[0:4]!r})")
        try:
            parsed = ReferenceHistogramParser.from_bytes(bytedata)
            table = np.frombuffer(
                parsed.quantiles, dtype="<f4", count=parsed.modalities * parsed.bins
            )
        except (EOFError, ValueError, kaitaistruct.KaitaiStructError) as e:
            raise TruncatedFile(str(e)) from e
        return cls(table.reshape(parsed.modalities, parsed.bins))

    @classmethod
    def load(cls, path: PathLike) -> "ReferenceHistogram":
        return cls.from_bytes(Path(path).read_bytes())


def preprocess_case(
    case: MultimodalVolume,
    reference: Union[MultimodalVolume, ReferenceHistogram],
    cfg: PreprocessConfig = PreprocessConfig(),
) -> MultimodalVolume:
    """
    clip_tails, zscore_normalize, histogram_match to the same protocol of the reference, rescale_unit

    @param reference: prepared reference case (clipped and z-scored) or its stored quantiles
    """
    if isinstance(reference, MultimodalVolume):
        reference = ReferenceHistogram.from_prepared(reference, cfg.hist_bins)
    mask = case.brain_mask
    output = []
    for vol, quantiles in zip(case, reference.quantiles):
        vol = clip_tails(vol, cfg.tail_fraction, mask)
        vol = zscore_normalize(vol, mask)
        vol = match_to_quantiles(vol, quantiles, mask)
        output.append(rescale_unit(vol, mask))
    return MultimodalVolume(*output, brain_mask=mask)
