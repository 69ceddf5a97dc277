#!/usr/bin/env python3
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import kaitaistruct
import numpy as np
from scipy.signal import fftconvolve

from fcn_texton_forest.kaitai.texton_codebook import (
    TextonCodebook as TextonCodebookParser,
)
from fcn_texton_forest.lib.errors import (
    BadMagic,
    DimensionMismatch,
    TrainingError,
    TruncatedFile,
)
from fcn_texton_forest.lib.utils import (
    PathLike,
    assemble_texton_codebook,
    atomic_write_bytes,
)
from fcn_texton_forest.lib.volume import BinaryMask, Dims, Modality, Volume3D

DEFAULT_THETAS_DEG = (0.0, 30.0, 45.0, 60.0, 90.0, 120.0)
DEFAULT_SIGMAS = (0.3, 0.6, 0.9, 1.2, 1.5)
DEFAULT_LAMBDAS = (0.8, 1.0, 1.2, 1.5)
DEFAULT_PSI = 0.0
DEFAULT_GAMMA = 0.5
DEFAULT_K = 16
DEFAULT_WINDOW = 5

# rows per distance chunk in k-means, bounds the (rows, k, dim) temporary
DISTANCE_CHUNK = 4096


@dataclass(frozen=True)
class GaborParams:
    theta: float
    sigma: float
    lam: float
    psi: float = DEFAULT_PSI
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not (self.sigma > 0 and self.lam > 0 and self.gamma > 0):
            raise ValueError(f"sigma, lambda and gamma must be positive: {self}")

    @property
    def half_width(self) -> int:
        # rounding keeps 3 * 0.3 from landing just above 0.9
        return max(1, math.ceil(round(3 * self.sigma, 9)))


def gabor_kernel(p: GaborParams, half_width: int) -> np.ndarray:
    """
    Complex Gabor kernel indexed K[x + half_width, y + half_width], not normalized
    """
    if half_width < 1:
        raise ValueError(f"half_width {half_width} must be at least 1")
    x, y = np.mgrid[-half_width : half_width + 1, -half_width : half_width + 1].astype(
        np.float64
    )
    x_rot = x * np.cos(p.theta) + y * np.sin(p.theta)
    y_rot = -x * np.sin(p.theta) + y * np.cos(p.theta)
    envelope = np.exp(-(x_rot ** 2 + p.gamma ** 2 * y_rot ** 2) / (2 * p.sigma ** 2))
    return envelope * np.exp(1j * (2 * np.pi * x_rot / p.lam + p.psi))


class FilterBank:
    def __init__(self, params: Sequence[GaborParams]):
        params = list(params)
        if not params:
            raise ValueError("filter bank must hold at least one filter")
        self.params: List[GaborParams] = params
        self.kernels: List[np.ndarray] = [gabor_kernel(p, p.half_width) for p in params]

    def __len__(self) -> int:
        return len(self.kernels)

    def __repr__(self) -> str:
        return f"FilterBank({len(self)} filters)"


def build_filter_bank(
    thetas: Sequence[float] = tuple(np.deg2rad(DEFAULT_THETAS_DEG)),
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    psi: float = DEFAULT_PSI,
    gamma: float = DEFAULT_GAMMA,
) -> FilterBank:
    """
    Cartesian product theta x sigma x lambda, theta in radians

    @return: FilterBank ordered theta-major, lambda fastest
    """
    if not len(thetas) or not len(sigmas) or not len(lambdas):
        raise ValueError("filter bank grid lists must be nonempty")
    return FilterBank(
        [
            GaborParams(float(theta), float(sigma), float(lam), psi, gamma)
            for theta in thetas
            for sigma in sigmas
            for lam in lambdas
        ]
    )


def convolve_bank(
    modality: Volume3D, bank: FilterBank, z_range: Optional[Tuple[int, int]] = None
) -> np.ndarray:
    """
    Magnitude of every kernel response, per axial slice with zero-padded borders

    @param z_range: optional [start, stop) slab of slices to filter
    @return: (nx, ny, nz_slab, len(bank)) float32
    """
    start, stop = z_range or (0, modality.dims[2])
    data = modality.data[:, :, start:stop].astype(np.float64)
    responses = np.empty(data.shape + (len(bank),), dtype=np.float32)
    for index, kernel in enumerate(bank.kernels):
        response = fftconvolve(data, kernel[:, :, np.newaxis], mode="same", axes=(0, 1))
        responses[..., index] = np.abs(response)
    return responses


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = np.empty((len(points), len(centroids)), dtype=np.float64)
    for begin in range(0, len(points), DISTANCE_CHUNK):
        chunk = points[begin : begin + DISTANCE_CHUNK]
        diff = chunk[:, np.newaxis, :] - centroids[np.newaxis, :, :]
        out[begin : begin + DISTANCE_CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(len(points)))]
    closest = _squared_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(len(points), p=closest / total))
        else:
            remaining = np.setdiff1d(np.arange(len(points)), chosen)
            index = int(rng.choice(remaining))
        chosen.append(index)
        closest = np.minimum(closest, _squared_distances(points, points[[index]])[:, 0])
    return points[chosen].copy()


def kmeans_fit(
    points: np.ndarray,
    k: int = DEFAULT_K,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-4,
) -> Tuple[np.ndarray, List[float]]:
    """
    Lloyd iterations from k-means++ seeding; an empty cluster keeps its previous centroid

    @return: (centroids (k, dim) float64, objective after every assignment step)
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionMismatch(f"points must be (n, dim), got {points.shape}")
    if k < 1 or len(points) < k:
        raise TrainingError(f"cannot fit {k} clusters to {len(points)} points")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_plus_plus(points, k, rng)
    history: List[float] = []
    for _ in range(max_iter):
        distances = _squared_distances(points, centroids)
        labels = np.argmin(distances, axis=1)
        history.append(float(distances[np.arange(len(points)), labels].sum()))
        updated = centroids.copy()
        for cluster in range(k):
            members = points[labels == cluster]
            if len(members):
                updated[cluster] = members.mean(axis=0)
        shift = float(np.linalg.norm(updated - centroids))
        centroids = updated
        if shift < tol:
            break
    distances = _squared_distances(points, centroids)
    history.append(float(distances.min(axis=1).sum()))
    return centroids, history


class TextonCodebook:
    def __init__(
        self,
        centroids: np.ndarray,
        modality: Modality,
        inertia_history: Sequence[float] = (),
    ):
        centroids = np.array(centroids, dtype=np.float32)
        if centroids.ndim != 2 or len(centroids) < 1:
            raise DimensionMismatch(f"centroids must be (k, dim), got {centroids.shape}")
        centroids.flags.writeable = False
        self.centroids: np.ndarray = centroids
        self.modality: Modality = Modality(modality)
        self.inertia_history: List[float] = list(inertia_history)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @classmethod
    def fit(
        cls,
        points: np.ndarray,
        modality: Modality,
        k: int = DEFAULT_K,
        seed: int = 0,
        max_iter: int = 100,
        tol: float = 1e-4,
    ) -> "TextonCodebook":
        centroids, history = kmeans_fit(points, k, seed, max_iter, tol)
        return cls(centroids, modality, history)

    def assign(self, responses: np.ndarray) -> np.ndarray:
        """Nearest centroid per response vector, ties to the lowest index"""
        responses = np.asarray(responses)
        if responses.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"response dim {responses.shape[-1]} != codebook dim {self.dim}"
            )
        flat = responses.reshape(-1, self.dim).astype(np.float64)
        labels = np.argmin(
            _squared_distances(flat, self.centroids.astype(np.float64)), axis=1
        )
        return labels.reshape(responses.shape[:-1]).astype(np.uint8)

    def to_bytes(self) -> bytes:
        return assemble_texton_codebook(self.centroids, int(self.modality))

    def save(self, path: PathLike) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def from_bytes(cls, bytedata: bytes) -> "TextonCodebook":
        if bytedata[0:4] != b"TXCB":
            raise BadMagic(f"not a texton codebook (magic {bytedata[0:4]!r})")
        try:
            parsed = TextonCodebookParser.from_bytes(bytedata)
        except (EOFError, ValueError, kaitaistruct.KaitaiStructError) as e:
            raise TruncatedFile(f"texton codebook: {e}") from e
        if not isinstance(parsed.modality, Enum):
            raise BadMagic(f"unknown codebook modality {parsed.modality}")
        centroids = np.frombuffer(parsed.centroids, dtype="<f4").reshape(
            parsed.k, parsed.dim
        )
        return cls(centroids, Modality(parsed.modality.value))

    @classmethod
    def load(cls, path: PathLike) -> "TextonCodebook":
        return cls.from_bytes(Path(path).read_bytes())

    def __repr__(self) -> str:
        return f"TextonCodebook({self.modality.tag}, k={self.k}, dim={self.dim})"


class TextonMap:
    def __init__(self, data: np.ndarray, k: int):
        data = np.array(data, dtype=np.uint8)
        if data.ndim != 3:
            raise DimensionMismatch(f"texton map must be 3D, got {data.shape}")
        if data.size and int(data.max()) >= k:
            raise ValueError(f"texton labels must be below k={k}")
        data.flags.writeable = False
        self.data: np.ndarray = data
        self.dims: Dims = tuple(data.shape)
        self.k: int = int(k)


def assign_textons(responses: np.ndarray, codebook: TextonCodebook) -> TextonMap:
    """@param responses: (nx, ny, nz, dim) response stack"""
    if np.ndim(responses) != 4:
        raise DimensionMismatch(f"response stack must be 4D, got {np.shape(responses)}")
    return TextonMap(codebook.assign(responses), codebook.k)


def texton_map(
    modality: Volume3D, bank: FilterBank, codebook: TextonCodebook, slab: int = 8
) -> TextonMap:
    """Filters and assigns slab by slab so the full response stack never exists at once"""
    labels = np.empty(modality.dims, dtype=np.uint8)
    for start in range(0, modality.dims[2], slab):
        stop = min(start + slab, modality.dims[2])
        labels[:, :, start:stop] = codebook.assign(
            convolve_bank(modality, bank, (start, stop))
        )
    return TextonMap(labels, codebook.k)


def sample_responses(
    modality: Volume3D,
    mask: BinaryMask,
    bank: FilterBank,
    count: int,
    rng: np.random.Generator,
    slab: int = 8,
) -> np.ndarray:
    """
    Filter responses at a uniform random subset of at most count mask voxels

    @return: (samples, len(bank)) float32 in x-fastest voxel order
    """
    coords = mask.coords()
    if len(coords) > count:
        coords = coords[np.sort(rng.choice(len(coords), size=count, replace=False))]
    samples = np.empty((len(coords), len(bank)), dtype=np.float32)
    for start in range(0, modality.dims[2], slab):
        stop = min(start + slab, modality.dims[2])
        rows = np.flatnonzero((coords[:, 2] >= start) & (coords[:, 2] < stop))
        if not len(rows):
            continue
        responses = convolve_bank(modality, bank, (start, stop))
        picked = coords[rows]
        samples[rows] = responses[picked[:, 0], picked[:, 1], picked[:, 2] - start]
    return samples


def _window_bounds(
    dims: Dims, voxel: Sequence[int], window: int, window_3d: bool
) -> List[Tuple[int, int]]:
    half = window // 2
    bounds = []
    for axis, (c, n) in enumerate(zip(voxel, dims)):
        if axis == 2 and not window_3d:
            bounds.append((c, c))
        else:
            bounds.append((max(0, c - half), min(n - 1, c + half)))
    return bounds


def texton_histogram(
    tmap: TextonMap,
    voxel: Sequence[int],
    window: int = DEFAULT_WINDOW,
    k: Optional[int] = None,
    window_3d: bool = False,
) -> np.ndarray:
    """
    Normalized texton counts in the window centred at voxel, clamped to the volume

    @param window_3d: count a window^3 cube instead of the in-plane window
    """
    k = tmap.k if k is None else k
    if len(voxel) != 3 or any(not 0 <= c < n for c, n in zip(voxel, tmap.dims)):
        raise DimensionMismatch(f"voxel {tuple(voxel)} outside {tmap.dims}")
    (x0, x1), (y0, y1), (z0, z1) = _window_bounds(tmap.dims, voxel, window, window_3d)
    block = tmap.data[x0 : x1 + 1, y0 : y1 + 1, z0 : z1 + 1]
    counts = np.bincount(block.ravel(), minlength=k)[:k].astype(np.float64)
    return (counts / block.size).astype(np.float32)


def texton_histograms(
    tmap: TextonMap,
    coords: np.ndarray,
    window: int = DEFAULT_WINDOW,
    k: Optional[int] = None,
    window_3d: bool = False,
) -> np.ndarray:
    """
    texton_histogram for many voxels at once through per-label integral images

    @param coords: (n, 3) voxel coordinates
    @return: (n, k) float32
    """
    k = tmap.k if k is None else k
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if len(coords) and (
        coords.min() < 0 or np.any(coords >= np.asarray(tmap.dims)[np.newaxis, :])
    ):
        raise DimensionMismatch(f"coordinates outside {tmap.dims}")
    half = window // 2
    nx, ny, nz = tmap.dims
    x0 = np.maximum(coords[:, 0] - half, 0)
    x1 = np.minimum(coords[:, 0] + half, nx - 1) + 1
    y0 = np.maximum(coords[:, 1] - half, 0)
    y1 = np.minimum(coords[:, 1] + half, ny - 1) + 1
    if window_3d:
        z0 = np.maximum(coords[:, 2] - half, 0)
        z1 = np.minimum(coords[:, 2] + half, nz - 1) + 1
    else:
        z0, z1 = coords[:, 2], coords[:, 2] + 1
    sizes = (x1 - x0) * (y1 - y0) * (z1 - z0)

    out = np.zeros((len(coords), k), dtype=np.float64)
    for label in range(k):
        hits = tmap.data == label
        if not hits.any():
            continue
        table = np.zeros((nx + 1, ny + 1, nz + 1), dtype=np.int32)
        table[1:, 1:, 1:] = hits.cumsum(0, dtype=np.int32).cumsum(1).cumsum(2)
        out[:, label] = (
            table[x1, y1, z1]
            - table[x0, y1, z1]
            - table[x1, y0, z1]
            - table[x1, y1, z0]
            + table[x0, y0, z1]
            + table[x0, y1, z0]
            + table[x1, y0, z0]
            - table[x0, y0, z0]
        )
    return (out / sizes[:, np.newaxis]).astype(np.float32)
