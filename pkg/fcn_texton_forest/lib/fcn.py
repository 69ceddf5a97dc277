#!/usr/bin/env python3
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import kaitaistruct
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fcn_texton_forest.kaitai.fcn_weights import FcnWeights as FcnWeightsParser
from fcn_texton_forest.kaitai.score_map import ScoreMap as ScoreMapParser
from fcn_texton_forest.lib.errors import (
    BadMagic,
    DimensionMismatch,
    ShapeMismatch,
    TruncatedFile,
    WeightsError,
)
from fcn_texton_forest.lib.utils import (
    PathLike,
    assemble_fcn_weights,
    assemble_score_map,
    atomic_write_bytes,
    from_x_fastest,
)
from fcn_texton_forest.lib.volume import (
    N_CLASSES,
    BinaryMask,
    Dims,
    LabelVolume,
    MultimodalVolume,
    Spacing,
)
from fcn_texton_forest.lib.workers import WorkerPool

# (h, w, channels) float32 activations
FeatureMap2D = np.ndarray

VGG16_WIDTHS = (64, 128, 256, 512, 512, 4096)
WEIGHTS_VERSION = 1
INPUT_CHANNELS = 3

# offsets of the canonical FCN-8s crops
CROP_POOL4 = 5
CROP_POOL3 = 9
CROP_OUTPUT = 31

# layers whose output channels define the widths of the table
WIDTH_LAYERS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1", "fc6")


@dataclass
class ConvLayerSpec:
    name: str
    kernel_h: int
    kernel_w: int
    in_channels: int
    out_channels: int
    stride: int = 1
    pad: int = 0
    kind: str = "conv"
    activation: str = "relu"
    weights: np.ndarray = field(default=None, repr=False)
    bias: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        shape = (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
        if self.weights is None:
            self.weights = np.zeros(shape, dtype=np.float32)
        if self.bias is None:
            self.bias = np.zeros(self.out_channels, dtype=np.float32)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)
        if self.weights.shape != shape:
            raise ShapeMismatch(
                self.name, f"weights {self.weights.shape}, expected {shape}"
            )
        if self.bias.shape != (self.out_channels,):
            raise ShapeMismatch(
                self.name, f"bias {self.bias.shape}, expected ({self.out_channels},)"
            )
        if self.stride < 1 or self.pad < 0:
            raise ShapeMismatch(self.name, f"stride {self.stride} pad {self.pad}")
        if self.kind not in ("conv", "tconv") or self.activation not in ("relu", "none"):
            raise ShapeMismatch(self.name, f"kind {self.kind} activation {self.activation}")

    def geometry(self) -> Tuple:
        return (
            self.name,
            self.kind,
            self.kernel_h,
            self.kernel_w,
            self.in_channels,
            self.out_channels,
            self.stride,
            self.pad,
            self.activation,
        )


def _activate(data: np.ndarray, layer: ConvLayerSpec) -> np.ndarray:
    data += layer.bias
    if layer.activation == "relu":
        np.maximum(data, 0, out=data)
    return data


def conv2d(feature_map: FeatureMap2D, layer: ConvLayerSpec) -> FeatureMap2D:
    """Cross-correlation, out = (h + 2 pad - kh) // stride + 1 per spatial axis"""
    h, w, channels = feature_map.shape
    if channels != layer.in_channels:
        raise DimensionMismatch(
            f"{layer.name}: input has {channels} channels, layer expects {layer.in_channels}"
        )
    p, s = layer.pad, layer.stride
    out_h = (h + 2 * p - layer.kernel_h) // s + 1
    out_w = (w + 2 * p - layer.kernel_w) // s + 1
    if out_h < 1 or out_w < 1:
        raise DimensionMismatch(
            f"{layer.name}: {h}x{w} input too small for {layer.kernel_h}x{layer.kernel_w} kernel"
        )
    padded = np.pad(
        np.asarray(feature_map, dtype=np.float32), ((p, p), (p, p), (0, 0))
    )
    windows = sliding_window_view(padded, (layer.kernel_h, layer.kernel_w), axis=(0, 1))
    windows = windows[: (out_h - 1) * s + 1 : s, : (out_w - 1) * s + 1 : s]
    # windows (out_h, out_w, cin, kh, kw) against weights (cout, cin, kh, kw)
    out = np.tensordot(windows, layer.weights, axes=([2, 3, 4], [1, 2, 3]))
    return _activate(np.ascontiguousarray(out, dtype=np.float32), layer)


def maxpool2d(feature_map: FeatureMap2D, size: int = 2, stride: int = 2) -> FeatureMap2D:
    h, w, _ = feature_map.shape
    if h < size or w < size:
        raise DimensionMismatch(f"cannot pool {h}x{w} with a {size}x{size} window")
    out_h, out_w = (h - size) // stride + 1, (w - size) // stride + 1
    windows = sliding_window_view(feature_map, (size, size), axis=(0, 1))
    windows = windows[: (out_h - 1) * stride + 1 : stride, : (out_w - 1) * stride + 1 : stride]
    return np.ascontiguousarray(windows.max(axis=(-2, -1)))


def transposed_conv2d(feature_map: FeatureMap2D, layer: ConvLayerSpec) -> FeatureMap2D:
    """
    Scatter-add of every input pixel times the kernel at stride spacing, cropped by pad;
    out = (h - 1) * stride + kh - 2 pad, the adjoint of conv2d with swapped channel axes
    """
    h, w, channels = feature_map.shape
    if channels != layer.in_channels:
        raise DimensionMismatch(
            f"{layer.name}: input has {channels} channels, layer expects {layer.in_channels}"
        )
    s, kh, kw = layer.stride, layer.kernel_h, layer.kernel_w
    full_h, full_w = (h - 1) * s + kh, (w - 1) * s + kw
    out = np.zeros((full_h, full_w, layer.out_channels), dtype=np.float32)
    x = np.asarray(feature_map, dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            # (h, w, cin) @ (cin, cout)
            out[i : i + (h - 1) * s + 1 : s, j : j + (w - 1) * s + 1 : s] += (
                x @ layer.weights[:, :, i, j].T
            )
    p = layer.pad
    if full_h - 2 * p < 1 or full_w - 2 * p < 1:
        raise DimensionMismatch(f"{layer.name}: pad {p} consumes the whole output")
    out = np.ascontiguousarray(out[p : full_h - p, p : full_w - p])
    return _activate(out, layer)


def fuse_skip(coarse: FeatureMap2D, skip: FeatureMap2D, offset: int) -> FeatureMap2D:
    h, w, channels = coarse.shape
    if skip.shape[2] != channels:
        raise DimensionMismatch(f"skip has {skip.shape[2]} channels, coarse {channels}")
    if offset < 0 or offset + h > skip.shape[0] or offset + w > skip.shape[1]:
        raise DimensionMismatch(
            f"cannot crop {h}x{w} at offset {offset} from {skip.shape[0]}x{skip.shape[1]}"
        )
    return coarse + skip[offset : offset + h, offset : offset + w]


def softmax(scores: FeatureMap2D) -> FeatureMap2D:
    shifted = scores.astype(np.float64) - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return (exp / exp.sum(axis=-1, keepdims=True)).astype(np.float32)


def bilinear_kernel(size: int) -> np.ndarray:
    factor = (size + 1) // 2
    center = factor - 1 if size % 2 == 1 else factor - 0.5
    og = np.ogrid[:size, :size]
    return (
        (1 - abs(og[0] - center) / factor) * (1 - abs(og[1] - center) / factor)
    ).astype(np.float32)


def bilinear_upsample_weights(channels: int, size: int) -> np.ndarray:
    """(channels, channels, size, size) kernel upsampling every channel independently"""
    weights = np.zeros((channels, channels, size, size), dtype=np.float32)
    weights[range(channels), range(channels)] = bilinear_kernel(size)
    return weights


def fcn8s_architecture(
    widths: Sequence[int] = VGG16_WIDTHS, n_classes: int = N_CLASSES
) -> List[ConvLayerSpec]:
    """
    Layer table of FCN-8s over a VGG16 backbone, weights left zero

    @param widths: channels of conv blocks 1-5 and of fc6/fc7
    """
    if len(widths) != 6 or any(int(width) < 1 for width in widths):
        raise WeightsError(f"expected six positive widths, got {tuple(widths)}")
    layers: List[ConvLayerSpec] = []
    channels = INPUT_CHANNELS
    for block, (width, repeats) in enumerate(zip(widths[0:5], (2, 2, 3, 3, 3)), 1):
        for index in range(1, repeats + 1):
            pad = 100 if (block, index) == (1, 1) else 1
            layers.append(
                ConvLayerSpec(f"conv{block}_{index}", 3, 3, channels, width, 1, pad)
            )
            channels = width
    fc = widths[5]
    layers += [
        ConvLayerSpec("fc6", 7, 7, widths[4], fc, 1, 0),
        ConvLayerSpec("fc7", 1, 1, fc, fc, 1, 0),
        ConvLayerSpec("score_fr", 1, 1, fc, n_classes, activation="none"),
        ConvLayerSpec(
            "upscore2", 4, 4, n_classes, n_classes, 2, 0, "tconv", "none"
        ),
        ConvLayerSpec("score_pool4", 1, 1, widths[3], n_classes, activation="none"),
        ConvLayerSpec(
            "upscore_pool4", 4, 4, n_classes, n_classes, 2, 0, "tconv", "none"
        ),
        ConvLayerSpec("score_pool3", 1, 1, widths[2], n_classes, activation="none"),
        ConvLayerSpec(
            "upscore8", 16, 16, n_classes, n_classes, 8, 0, "tconv", "none"
        ),
    ]
    return layers


class FcnWeights:
    """Validated, immutable FCN-8s layer set"""

    def __init__(self, layers: Iterable[ConvLayerSpec]):
        layers = list(layers)
        by_name: Dict[str, ConvLayerSpec] = {layer.name: layer for layer in layers}
        for name in WIDTH_LAYERS:
            if name not in by_name:
                raise ShapeMismatch(name, "layer missing")
        widths = tuple(by_name[name].out_channels for name in WIDTH_LAYERS)
        expected = fcn8s_architecture(widths)
        if len(layers) != len(expected):
            raise WeightsError(f"{len(layers)} layers, FCN-8s needs {len(expected)}")
        for actual, reference in zip(layers, expected):
            if actual.geometry() != reference.geometry():
                raise ShapeMismatch(
                    reference.name,
                    f"got {actual.geometry()[1:]}, expected {reference.geometry()[1:]}",
                )
            actual.weights.flags.writeable = False
            actual.bias.flags.writeable = False
        self.widths: Tuple[int, ...] = widths
        self.layers: Dict[str, ConvLayerSpec] = by_name

    def __getitem__(self, name: str) -> ConvLayerSpec:
        return self.layers[name]

    def __iter__(self):
        return iter(self.layers.values())

    def to_bytes(self) -> bytes:
        return assemble_fcn_weights(self.layers.values(), WEIGHTS_VERSION)

    @classmethod
    def zeros(cls, widths: Sequence[int] = VGG16_WIDTHS) -> "FcnWeights":
        return cls(fcn8s_architecture(widths))

    @classmethod
    def random(
        cls, seed: int, widths: Sequence[int] = VGG16_WIDTHS, bilinear: bool = True
    ) -> "FcnWeights":
        """He-normal convolutions; upsampling layers bilinear unless bilinear=False"""
        rng = np.random.default_rng(seed)
        layers = []
        for layer in fcn8s_architecture(widths):
            if layer.kind == "tconv" and bilinear:
                layer.weights = bilinear_upsample_weights(
                    layer.out_channels, layer.kernel_h
                )
            else:
                fan_in = layer.in_channels * layer.kernel_h * layer.kernel_w
                layer.weights = rng.normal(
                    0.0, np.sqrt(2.0 / fan_in), layer.weights.shape
                ).astype(np.float32)
                layer.bias = rng.normal(0.0, 0.01, layer.bias.shape).astype(np.float32)
            layers.append(layer)
        return cls(layers)


def parse_fcn_weights(bytedata: bytes) -> FcnWeights:
    if bytedata[0:4] != b"FCNW":
        raise BadMagic(f"not an FCN weight file (magic {bytedata[0:4]!r})")
    try:
        parsed = FcnWeightsParser.from_bytes(bytedata)
    except (EOFError, ValueError, kaitaistruct.KaitaiStructError) as e:
        raise TruncatedFile(f"FCN weight file: {e}") from e
    if parsed.version != WEIGHTS_VERSION:
        raise WeightsError(f"unsupported weight file version {parsed.version}")
    layers = []
    for raw in parsed.layers:
        kind = raw.kind.name if isinstance(raw.kind, Enum) else None
        activation = raw.activation.name if isinstance(raw.activation, Enum) else None
        if kind is None or activation is None:
            raise ShapeMismatch(raw.name, f"unknown kind/activation {raw.kind}/{raw.activation}")
        layers.append(
            ConvLayerSpec(
                name=raw.name,
                kernel_h=raw.kh,
                kernel_w=raw.kw,
                in_channels=raw.cin,
                out_channels=raw.cout,
                stride=raw.stride,
                pad=raw.pad,
                kind=kind,
                activation=activation,
                weights=np.frombuffer(raw.weights, dtype="<f4").reshape(
                    raw.cout, raw.cin, raw.kh, raw.kw
                ),
                bias=np.frombuffer(raw.biases, dtype="<f4"),
            )
        )
    return FcnWeights(layers)


def load_weights(path: PathLike) -> FcnWeights:
    return parse_fcn_weights(Path(path).read_bytes())


def save_weights(weights: FcnWeights, path: PathLike) -> None:
    atomic_write_bytes(path, weights.to_bytes())


def fcn8s_forward_slice(axial: FeatureMap2D, weights: FcnWeights) -> FeatureMap2D:
    """
    FCN-8s inference on one (h, w, 3) slice, returns (h, w, 5) per-pixel class probabilities
    """
    h, w, _ = axial.shape
    x = np.asarray(axial, dtype=np.float32)
    pools = {}
    for block, repeats in enumerate((2, 2, 3, 3, 3), 1):
        for index in range(1, repeats + 1):
            x = conv2d(x, weights[f"conv{block}_{index}"])
        x = maxpool2d(x)
        pools[block] = x
    x = conv2d(x, weights["fc6"])
    x = conv2d(x, weights["fc7"])
    x = conv2d(x, weights["score_fr"])

    x = transposed_conv2d(x, weights["upscore2"])
    x = fuse_skip(x, conv2d(pools[4], weights["score_pool4"]), CROP_POOL4)
    x = transposed_conv2d(x, weights["upscore_pool4"])
    x = fuse_skip(x, conv2d(pools[3], weights["score_pool3"]), CROP_POOL3)
    x = transposed_conv2d(x, weights["upscore8"])

    if x.shape[0] < CROP_OUTPUT + h or x.shape[1] < CROP_OUTPUT + w:
        raise DimensionMismatch(f"upsampled map {x.shape[0:2]} too small for {h}x{w}")
    return softmax(x[CROP_OUTPUT : CROP_OUTPUT + h, CROP_OUTPUT : CROP_OUTPUT + w])


class ScoreMap:
    """
    Per-voxel class probabilities, data[x, y, z, channel] float32
    """

    SIMPLEX_TOLERANCE = 1e-4

    def __init__(self, data: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0)):
        data = np.array(data, dtype=np.float32)
        if data.ndim != 4 or data.shape[3] != N_CLASSES:
            raise DimensionMismatch(
                f"score map must be (nx, ny, nz, {N_CLASSES}), got {data.shape}"
            )
        if data.size and (
            data.min() < 0
            or np.abs(data.sum(axis=3) - 1).max() > self.SIMPLEX_TOLERANCE
        ):
            raise ValueError("score map voxels must lie on the probability simplex")
        data.flags.writeable = False
        self.data: np.ndarray = data
        self.dims: Dims = tuple(data.shape[0:3])
        self.channels: int = N_CLASSES
        self.spacing: Spacing = tuple(float(s) for s in spacing)

    def argmax(self) -> LabelVolume:
        # np.argmax returns the first maximum, ties go to the lowest label
        return LabelVolume(np.argmax(self.data, axis=3).astype(np.uint8), self.spacing)

    def tumor_mask(self) -> BinaryMask:
        return self.argmax().tumor_mask()

    def to_bytes(self) -> bytes:
        return assemble_score_map(self.data)

    def save(self, path: PathLike) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def from_bytes(
        cls, bytedata: bytes, spacing: Spacing = (1.0, 1.0, 1.0)
    ) -> "ScoreMap":
        if bytedata[0:4] != b"SCMP":
            raise BadMagic(f"not a score map (magic {bytedata[0:4]!r})")
        try:
            parsed = ScoreMapParser.from_bytes(bytedata)
        except (EOFError, ValueError, kaitaistruct.KaitaiStructError) as e:
            raise TruncatedFile(f"score map: {e}") from e
        dims = (parsed.nx, parsed.ny, parsed.nz)
        flat = np.frombuffer(parsed.scores, dtype="<f4")
        return cls(from_x_fastest(flat, dims, parsed.channels), spacing)

    @classmethod
    def load(cls, path: PathLike, spacing: Spacing = (1.0, 1.0, 1.0)) -> "ScoreMap":
        return cls.from_bytes(Path(path).read_bytes(), spacing)

    def __repr__(self) -> str:
        return f"ScoreMap(dims={self.dims})"


def score_volume(
    case: MultimodalVolume, weights: FcnWeights, pool: Optional[WorkerPool] = None
) -> ScoreMap:
    """Runs fcn8s_forward_slice on every axial slice independently and stacks along z"""
    pool = pool or WorkerPool(1)
    slices = pool.map(
        lambda z: fcn8s_forward_slice(case.axial_slice(z), weights),
        range(case.dims[2]),
    )
    return ScoreMap(np.stack(slices, axis=2), case.spacing)
