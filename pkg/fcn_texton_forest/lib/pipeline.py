#!/usr/bin/env python3
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from fcn_texton_forest.lib.errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    ManifestError,
    MissingLabels,
    NoTumorInTraining,
)
from fcn_texton_forest.lib.features import (
    METHOD_FCN,
    METHOD_FCN_TEXTON_RF,
    FeatureMatrix,
    assemble_features,
    dilate3d,
    tumor_roi,
)
from fcn_texton_forest.lib.fcn import FcnWeights, ScoreMap, load_weights, score_volume
from fcn_texton_forest.lib.forest import Forest, predict_matrix, train_forest
from fcn_texton_forest.lib.logging_trait import LoggingTrait
from fcn_texton_forest.lib.phantom import oracle_scores
from fcn_texton_forest.lib.preprocess import (
    ReferenceHistogram,
    prepare_reference,
    preprocess_case,
)
from fcn_texton_forest.lib.settings import SegmentationSettings
from fcn_texton_forest.lib.texton import (
    TextonCodebook,
    TextonMap,
    sample_responses,
    texton_map,
)
from fcn_texton_forest.lib.utils import PathLike, atomic_directory, atomic_write_text
from fcn_texton_forest.lib.volume import (
    N_CLASSES,
    BinaryMask,
    LabelVolume,
    Modality,
    MultimodalVolume,
)
from fcn_texton_forest.lib.workers import WorkerPool


def derive_seed(seed: int, *keys) -> int:
    """Stable 32-bit seed from a base seed and string or integer keys"""
    entropy = [int(seed)] + [
        zlib.crc32(key.encode("utf-8")) if isinstance(key, str) else int(key)
        for key in keys
    ]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass
class TrainingCase:
    case_id: str
    volume: MultimodalVolume
    truth: Optional[LabelVolume] = None
    scores_path: Optional[str] = None


@dataclass
class SegmentationResult:
    case_id: str
    labels: LabelVolume
    roi: BinaryMask
    scores: ScoreMap
    timings: Dict[str, float] = field(default_factory=dict)


class ScoreProvider(LoggingTrait):
    """Supplies the 5-channel score map of a preprocessed case"""

    weights: Optional[FcnWeights] = None

    def scores(self, case: TrainingCase, prepared: MultimodalVolume) -> ScoreMap:
        raise NotImplementedError()


class FcnScoreProvider(ScoreProvider):
    def __init__(self, weights: FcnWeights, pool: Optional[WorkerPool] = None):
        self.weights = weights
        self.pool = pool

    @classmethod
    def from_file(cls, path: PathLike, pool: Optional[WorkerPool] = None):
        return cls(load_weights(path), pool)

    def scores(self, case: TrainingCase, prepared: MultimodalVolume) -> ScoreMap:
        return score_volume(prepared, self.weights, self.pool)


class FileScoreProvider(ScoreProvider):
    def scores(self, case: TrainingCase, prepared: MultimodalVolume) -> ScoreMap:
        if not case.scores_path:
            raise ManifestError(f"case {case.case_id} has no score map file")
        scores = ScoreMap.load(case.scores_path, prepared.spacing)
        if scores.dims != prepared.dims:
            raise DimensionMismatch(
                f"score map {scores.dims} does not match case {case.case_id} {prepared.dims}"
            )
        return scores


class OracleScoreProvider(ScoreProvider):
    def __init__(self, blur_radius: int, flip_rate: float, seed: int):
        self.blur_radius = blur_radius
        self.flip_rate = flip_rate
        self.seed = seed

    def scores(self, case: TrainingCase, prepared: MultimodalVolume) -> ScoreMap:
        if case.truth is None:
            raise ManifestError(f"oracle scores need ground truth for {case.case_id}")
        return oracle_scores(
            case.truth,
            self.blur_radius,
            self.flip_rate,
            derive_seed(self.seed, case.case_id),
        )


def make_score_provider(
    settings: SegmentationSettings, pool: Optional[WorkerPool] = None
) -> ScoreProvider:
    if settings.score_source == settings.SCORE_SOURCE_ORACLE:
        return OracleScoreProvider(settings.oracle_blur, settings.oracle_flip, settings.seed)
    if settings.score_source == settings.SCORE_SOURCE_FILE:
        return FileScoreProvider()
    if not settings.fcn_weights:
        raise ManifestError("score source fcn needs [fcn] weights")
    return FcnScoreProvider.from_file(settings.fcn_weights, pool)


def postprocess_components(
    labels: LabelVolume, min_fraction: float = 0.1
) -> LabelVolume:
    """
    Erases 26-connected tumor components smaller than min_fraction of the largest one
    """
    tumor = labels.data > 0
    components, count = ndimage.label(tumor, structure=np.ones((3, 3, 3), dtype=bool))
    if count < 2:
        return labels
    sizes = np.bincount(components.ravel())
    sizes[0] = 0
    keep = sizes >= min_fraction * sizes.max()
    keep[0] = False
    keep[int(np.argmax(sizes))] = True
    return LabelVolume(np.where(keep[components], labels.data, 0), labels.spacing)


class ModelBundle(LoggingTrait):
    FILE_SETTINGS = "settings.ini"
    FILE_REFERENCE = "reference.rhst"
    FILE_FOREST = "forest.rfor"
    FILE_WEIGHTS = "fcn_weights.fcnw"

    def __init__(
        self,
        settings: SegmentationSettings,
        reference: ReferenceHistogram,
        codebooks: Optional[Sequence[TextonCodebook]] = None,
        forest: Optional[Forest] = None,
        fcn_weights: Optional[FcnWeights] = None,
    ):
        self.settings = settings
        self.reference = reference
        self.codebooks: Optional[List[TextonCodebook]] = (
            list(codebooks) if codebooks is not None else None
        )
        self.forest = forest
        self.fcn_weights = fcn_weights

    @staticmethod
    def codebook_file(modality: Modality) -> str:
        return f"codebook_{modality.tag}.txcb"

    def write_into(self, directory: Path) -> None:
        atomic_write_text(
            directory / self.FILE_SETTINGS, self.settings.to_canonical_string()
        )
        self.reference.save(directory / self.FILE_REFERENCE)
        for codebook in self.codebooks or ():
            codebook.save(directory / self.codebook_file(codebook.modality))
        if self.forest is not None:
            self.forest.save(directory / self.FILE_FOREST)
        if self.fcn_weights is not None:
            (directory / self.FILE_WEIGHTS).write_bytes(self.fcn_weights.to_bytes())

    def save(self, path: PathLike) -> None:
        atomic_directory(path, self.write_into)
        self.log_info(f"model bundle written to {path}")

    @classmethod
    def load(cls, path: PathLike) -> "ModelBundle":
        path = Path(path)
        settings = SegmentationSettings(filepath=str(path / cls.FILE_SETTINGS))
        reference = ReferenceHistogram.load(path / cls.FILE_REFERENCE)
        codebooks = None
        if settings.method == METHOD_FCN_TEXTON_RF:
            codebooks = [
                TextonCodebook.load(path / cls.codebook_file(modality))
                for modality in Modality
            ]
        forest = None
        if settings.method != METHOD_FCN:
            forest = Forest.load(path / cls.FILE_FOREST)
        weights = None
        if (path / cls.FILE_WEIGHTS).exists():
            weights = load_weights(path / cls.FILE_WEIGHTS)
        return cls(settings, reference, codebooks, forest, weights)


class SegmentationPipeline(LoggingTrait):
    """
    Preprocessing, FCN scores, texton maps, ROI features and the forest,
    for training and for segmentation of single cases
    """

    def __init__(
        self,
        settings: SegmentationSettings,
        provider: ScoreProvider,
        pool: Optional[WorkerPool] = None,
    ):
        self.settings = settings
        self.provider = provider
        self.pool = pool or WorkerPool(1)

    def choose_reference(self, cases: Sequence[TrainingCase]) -> TrainingCase:
        by_id = {case.case_id: case for case in cases}
        wanted = self.settings.reference_case or min(by_id)
        if wanted not in by_id:
            raise ManifestError(f"reference case {wanted} is not among the training cases")
        return by_id[wanted]

    @staticmethod
    def check_labels(cases: Sequence[TrainingCase]) -> None:
        totals = np.zeros(N_CLASSES, dtype=np.int64)
        for case in cases:
            if case.truth is None:
                raise MissingLabels(f"training case {case.case_id} has no ground truth")
            if case.truth.dims != case.volume.dims:
                raise DimensionMismatch(
                    f"truth {case.truth.dims} vs volume {case.volume.dims} in {case.case_id}"
                )
            totals += case.truth.counts()
        if not totals[1:].any():
            raise NoTumorInTraining("no tumor voxels in any training case")
        missing = [label for label in range(N_CLASSES) if totals[label] == 0]
        if missing:
            raise MissingLabels(f"labels {missing} never occur in the training cases")

    def _texton_maps(
        self, prepared: MultimodalVolume, codebooks: Sequence[TextonCodebook]
    ) -> List[TextonMap]:
        bank = self.settings.filter_bank()
        return [
            texton_map(prepared[codebook.modality], bank, codebook, self.settings.texton_slab)
            for codebook in codebooks
        ]

    def fit_codebooks(
        self, cases: Sequence[TrainingCase], prepared: Sequence[MultimodalVolume]
    ) -> List[TextonCodebook]:
        settings = self.settings
        bank = settings.filter_bank()
        budget = math.ceil(settings.kmeans_samples / len(cases))

        def sample(index: int) -> List[np.ndarray]:
            volume = prepared[index]
            return [
                sample_responses(
                    volume[modality],
                    volume.brain_mask,
                    bank,
                    budget,
                    np.random.default_rng(
                        derive_seed(settings.seed, cases[index].case_id, int(modality))
                    ),
                    settings.texton_slab,
                )
                for modality in Modality
            ]

        per_case = self.pool.map(sample, range(len(cases)))
        codebooks = []
        for modality in Modality:
            points = np.concatenate([samples[int(modality)] for samples in per_case])
            with self.log_duration(f"kmeans {modality.tag}"):
                codebook = TextonCodebook.fit(
                    points,
                    modality,
                    settings.texton_k,
                    derive_seed(settings.seed, "kmeans", int(modality)),
                    settings.kmeans_max_iter,
                    settings.kmeans_tol,
                )
            self.log_debug(
                f"{codebook} from {len(points)} samples, objective {codebook.inertia_history[-1]:.3f}"
            )
            codebooks.append(codebook)
        return codebooks

    def case_features(
        self,
        case: TrainingCase,
        prepared: MultimodalVolume,
        scores: ScoreMap,
        codebooks: Optional[Sequence[TextonCodebook]],
    ) -> Tuple[FeatureMatrix, BinaryMask]:
        roi = dilate3d(tumor_roi(scores), self.settings.roi_margin)
        textons = None
        if self.settings.method == METHOD_FCN_TEXTON_RF:
            textons = self._texton_maps(prepared, codebooks)
        features = assemble_features(
            scores,
            prepared,
            textons,
            roi,
            self.settings.texton_window,
            self.settings.texton_window_3d,
        )
        return features, roi

    def training_set(
        self, cases: Sequence[TrainingCase]
    ) -> Tuple[FeatureMatrix, np.ndarray, ReferenceHistogram, Optional[List[TextonCodebook]]]:
        """Pooled ROI features with their ground-truth labels, plus the fitted preprocessing state"""
        if not cases:
            raise EmptyTrainingSet("no training cases")
        ids = [case.case_id for case in cases]
        if len(set(ids)) != len(ids):
            raise ManifestError(f"duplicate case ids in {ids}")
        self.check_labels(cases)
        settings = self.settings
        preprocess_cfg = settings.preprocess_config()

        with self.log_duration("reference"):
            reference_case = self.choose_reference(cases)
            reference = ReferenceHistogram.from_prepared(
                prepare_reference(reference_case.volume, preprocess_cfg),
                preprocess_cfg.hist_bins,
            )
        self.log_info(f"reference case {reference_case.case_id}")

        def prepare(case: TrainingCase) -> Tuple[MultimodalVolume, ScoreMap]:
            prepared = preprocess_case(case.volume, reference, preprocess_cfg)
            return prepared, self.provider.scores(case, prepared)

        with self.log_duration("preprocess+scores"):
            prepared, scores = zip(*self.pool.map(prepare, cases))

        codebooks = None
        if settings.method == METHOD_FCN_TEXTON_RF:
            with self.log_duration("codebooks"):
                codebooks = self.fit_codebooks(cases, prepared)

        def features(index: int) -> Tuple[FeatureMatrix, np.ndarray]:
            matrix, _ = self.case_features(
                cases[index], prepared[index], scores[index], codebooks
            )
            coords = matrix.coords
            truth = cases[index].truth.data[coords[:, 0], coords[:, 1], coords[:, 2]]
            return matrix, truth

        with self.log_duration("features"):
            per_case = self.pool.map(features, range(len(cases)))
        matrix = FeatureMatrix.concatenate([m for m, _ in per_case])
        labels = np.concatenate([t for _, t in per_case]).astype(np.uint8)
        self.log_info(f"training set {matrix}, label counts {np.bincount(labels, minlength=N_CLASSES).tolist()}")
        return matrix, labels, reference, codebooks

    def train(self, cases: Sequence[TrainingCase]) -> ModelBundle:
        settings = self.settings
        matrix, labels, reference, codebooks = self.training_set(cases)
        forest = None
        if settings.method != METHOD_FCN:
            if not len(matrix):
                raise EmptyTrainingSet("FCN regions of interest hold no voxels")
            with self.log_duration("forest"):
                forest = train_forest(
                    matrix,
                    labels,
                    settings.forest_config(derive_seed(settings.seed, "forest")),
                    self.pool,
                )
            self.log_info(f"{forest} out-of-bag accuracy {forest.oob_accuracy}")
        return ModelBundle(settings, reference, codebooks, forest, self.provider.weights)

    def segment(self, case: TrainingCase, bundle: ModelBundle) -> SegmentationResult:
        settings = bundle.settings
        timings: Dict[str, float] = {}
        with self.log_duration("preprocess", timings):
            prepared = preprocess_case(
                case.volume, bundle.reference, settings.preprocess_config()
            )
        with self.log_duration("scores", timings):
            scores = self.provider.scores(case, prepared)
        with self.log_duration("roi", timings):
            roi = dilate3d(tumor_roi(scores), settings.roi_margin)

        if settings.method == METHOD_FCN:
            labels = scores.argmax()
        elif roi.count() == 0:
            self.log_warning(f"{case.case_id}: no tumor in the score map, every voxel labeled normal")
            labels = LabelVolume.zeros(case.volume.dims, case.volume.spacing)
        else:
            pipeline = SegmentationPipeline(settings, self.provider, WorkerPool(1))
            with self.log_duration("features", timings):
                matrix, _ = pipeline.case_features(case, prepared, scores, bundle.codebooks)
            with self.log_duration("forest", timings):
                predicted = predict_matrix(bundle.forest, matrix)
            data = np.zeros(case.volume.dims, dtype=np.uint8)
            coords = matrix.coords
            data[coords[:, 0], coords[:, 1], coords[:, 2]] = predicted
            labels = LabelVolume(data, case.volume.spacing)

        if settings.postprocess_enabled:
            with self.log_duration("postprocess", timings):
                labels = postprocess_components(labels, settings.min_component_fraction)
        return SegmentationResult(case.case_id, labels, roi, scores, timings)


def train_pipeline(
    cases: Sequence[TrainingCase],
    settings: SegmentationSettings,
    provider: Optional[ScoreProvider] = None,
    pool: Optional[WorkerPool] = None,
) -> ModelBundle:
    provider = provider or make_score_provider(settings, pool)
    return SegmentationPipeline(settings, provider, pool).train(cases)


def segment_case(
    case: TrainingCase,
    bundle: ModelBundle,
    provider: Optional[ScoreProvider] = None,
    pool: Optional[WorkerPool] = None,
) -> SegmentationResult:
    if provider is None:
        if bundle.fcn_weights is not None:
            provider = FcnScoreProvider(bundle.fcn_weights, pool)
        else:
            provider = make_score_provider(bundle.settings, pool)
    return SegmentationPipeline(bundle.settings, provider, pool).segment(case, bundle)
