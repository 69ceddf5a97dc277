#!/usr/bin/env python3


class SegmentationError(Exception):
    pass


class VolumeFormatError(SegmentationError):
    pass


class BadMagic(VolumeFormatError):
    pass


class UnsupportedDatatype(VolumeFormatError):
    pass


class UnsupportedDimensions(VolumeFormatError):
    pass


class TruncatedFile(VolumeFormatError):
    pass


class DimensionMismatch(SegmentationError, ValueError):
    pass


class IntensityError(SegmentationError):
    pass


class EmptyForeground(IntensityError):
    pass


class DegenerateIntensity(IntensityError):
    pass


class WeightsError(SegmentationError):
    pass


class ShapeMismatch(WeightsError):
    def __init__(self, layer: str, detail: str = ""):
        super().__init__(f"{layer}: {detail}" if detail else layer)
        self.layer = layer


class FeatureCountMismatch(SegmentationError, ValueError):
    pass


class TrainingError(SegmentationError):
    pass


class EmptyTrainingSet(TrainingError):
    pass


class MissingLabels(TrainingError):
    pass


class NoTumorInTraining(MissingLabels):
    pass


class ForestNotTrained(SegmentationError):
    pass


class PhantomError(SegmentationError):
    pass


class TumorExceedsBrain(PhantomError):
    pass


class ConfigurationError(SegmentationError, LookupError):
    pass


class ManifestError(SegmentationError):
    pass


class InvalidLabels(VolumeFormatError, ValueError):
    pass


class SliceOutOfRange(SegmentationError, IndexError):
    pass
