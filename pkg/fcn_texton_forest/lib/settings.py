#!/usr/bin/env python3

import configparser
from typing import Dict, List, Optional, Sequence

import numpy as np

from fcn_texton_forest.lib.errors import ConfigurationError
from fcn_texton_forest.lib.features import ALL_METHODS, METHOD_FCN_TEXTON_RF, RoiConfig
from fcn_texton_forest.lib.forest import ForestConfig
from fcn_texton_forest.lib.logging_trait import LoggingTrait
from fcn_texton_forest.lib.preprocess import PreprocessConfig
from fcn_texton_forest.lib.texton import (
    DEFAULT_GAMMA,
    DEFAULT_LAMBDAS,
    DEFAULT_PSI,
    DEFAULT_SIGMAS,
    DEFAULT_THETAS_DEG,
    FilterBank,
    build_filter_bank,
)

_UNSET = object()


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(item) for item in value)
    return str(value)


class SegmentationSettings(LoggingTrait):
    SECTION_GENERAL = "general"
    SECTION_PREPROCESS = "preprocess"
    SECTION_FCN = "fcn"
    SECTION_TEXTON = "texton"
    SECTION_ROI = "roi"
    SECTION_FOREST = "forest"
    SECTION_POSTPROCESS = "postprocess"

    SCORE_SOURCE_FCN = "fcn"
    SCORE_SOURCE_FILE = "file"
    SCORE_SOURCE_ORACLE = "oracle"
    SCORE_ALL_SOURCES = (SCORE_SOURCE_FCN, SCORE_SOURCE_FILE, SCORE_SOURCE_ORACLE)

    MINIMAL_SETTINGS = """
    [general]
    method = fcn_texton_rf
    seed = 0
    """

    def __init__(self, filepath: str = None, filedata: str = None) -> None:
        if not filepath and not filedata:
            raise ConfigurationError(
                "Cannot init SegmentationSettings without filepath and filedata, at least one must be provided"
            )
        if filepath and filedata:
            raise ConfigurationError(
                "Both filename and filedata provided, this is unsupported, choose one"
            )

        parser = configparser.ConfigParser()
        try:
            if filepath:
                if not parser.read(filenames=filepath):
                    raise ConfigurationError(f"Cannot read settings file {filepath}")
            else:
                parser.read_string(string=filedata)
        except configparser.Error as e:
            raise ConfigurationError(f"Invalid settings: {e}") from e

        try:
            self._load(parser)
        except (ValueError, configparser.Error) as e:
            raise ConfigurationError(f"Invalid settings value: {e}") from e

    def _load(self, parser: configparser.ConfigParser) -> None:
        self.method: str = parser.get(
            self.SECTION_GENERAL, "method", fallback=METHOD_FCN_TEXTON_RF
        )
        if self.method not in ALL_METHODS:
            raise ConfigurationError(
                "Invalid method %s, valid options are %s" % (self.method, ALL_METHODS)
            )
        self.seed: int = self.getint_safe(parser, self.SECTION_GENERAL, "seed", fallback=0)

        self.tail_fraction: float = parser.getfloat(
            self.SECTION_PREPROCESS, "tail_fraction", fallback=0.01
        )
        self.hist_bins: int = self.getint_safe(
            parser, self.SECTION_PREPROCESS, "hist_bins", fallback=256
        )
        self.reference_case: str = parser.get(
            self.SECTION_PREPROCESS, "reference_case", fallback=""
        )

        self.score_source: str = parser.get(
            self.SECTION_FCN, "score_source", fallback=self.SCORE_SOURCE_FCN
        )
        if self.score_source not in self.SCORE_ALL_SOURCES:
            raise ConfigurationError(
                "Invalid score source %s, valid options are %s"
                % (self.score_source, self.SCORE_ALL_SOURCES)
            )
        self.fcn_weights: str = parser.get(self.SECTION_FCN, "weights", fallback="")
        self.oracle_blur: int = self.getint_safe(
            parser, self.SECTION_FCN, "oracle_blur", fallback=2
        )
        self.oracle_flip: float = parser.getfloat(
            self.SECTION_FCN, "oracle_flip", fallback=0.05
        )

        self.texton_k: int = self.getint_safe(parser, self.SECTION_TEXTON, "k", fallback=16)
        self.texton_window: int = self.getint_safe(
            parser, self.SECTION_TEXTON, "window", fallback=5
        )
        self.texton_window_3d: bool = parser.getboolean(
            self.SECTION_TEXTON, "window_3d", fallback=False
        )
        self.gabor_thetas: List[float] = self.getfloats(
            parser, self.SECTION_TEXTON, "thetas", DEFAULT_THETAS_DEG
        )
        self.gabor_sigmas: List[float] = self.getfloats(
            parser, self.SECTION_TEXTON, "sigmas", DEFAULT_SIGMAS
        )
        self.gabor_lambdas: List[float] = self.getfloats(
            parser, self.SECTION_TEXTON, "lambdas", DEFAULT_LAMBDAS
        )
        self.gabor_psi: float = parser.getfloat(
            self.SECTION_TEXTON, "psi", fallback=DEFAULT_PSI
        )
        self.gabor_gamma: float = parser.getfloat(
            self.SECTION_TEXTON, "gamma", fallback=DEFAULT_GAMMA
        )
        self.kmeans_samples: int = self.getint_safe(
            parser, self.SECTION_TEXTON, "max_samples", fallback=200_000
        )
        self.kmeans_max_iter: int = self.getint_safe(
            parser, self.SECTION_TEXTON, "max_iter", fallback=100
        )
        self.kmeans_tol: float = parser.getfloat(self.SECTION_TEXTON, "tol", fallback=1e-4)
        self.texton_slab: int = self.getint_safe(
            parser, self.SECTION_TEXTON, "slab", fallback=8
        )

        self.roi_margin: int = self.getint_safe(
            parser, self.SECTION_ROI, "margin_voxels", fallback=10
        )

        self.forest_trees: int = self.getint_safe(
            parser, self.SECTION_FOREST, "n_trees", fallback=50
        )
        self.forest_depth: int = self.getint_safe(
            parser, self.SECTION_FOREST, "max_depth", fallback=15
        )
        self.forest_k_attributes: Optional[int] = self.getint_safe(
            parser, self.SECTION_FOREST, "k_attributes", fallback=None
        )
        self.forest_min_leaf: int = self.getint_safe(
            parser, self.SECTION_FOREST, "min_leaf", fallback=1
        )
        self.forest_max_per_class: int = self.getint_safe(
            parser, self.SECTION_FOREST, "max_per_class", fallback=100_000
        )

        self.postprocess_enabled: bool = parser.getboolean(
            self.SECTION_POSTPROCESS, "enabled", fallback=True
        )
        self.min_component_fraction: float = parser.getfloat(
            self.SECTION_POSTPROCESS, "min_component_fraction", fallback=0.1
        )

        # validates ranges early, raising before any work starts
        self.preprocess_config()
        self.roi_config()
        self.forest_config()
        if self.texton_k < 1 or self.texton_k > 255 or self.texton_window < 1:
            raise ConfigurationError(
                f"Invalid texton k {self.texton_k} / window {self.texton_window}"
            )
        if not 0 <= self.oracle_flip < 0.5:
            raise ConfigurationError(f"oracle_flip {self.oracle_flip} not in [0, 0.5)")

    @staticmethod
    def getint_safe(
        parser: configparser.ConfigParser, section: str, key: str, fallback=_UNSET
    ):
        """
        Handles empty values where int is expected
        Errors such as "ValueError: invalid literal for int() with base 10: ''" won't be propagated, if fallback is set

        @param parser:
        @param section:
        @param key:
        @param fallback:
        @return:
        """
        try:
            return parser.getint(section, key, fallback=fallback)
        except ValueError:
            if fallback is _UNSET:
                raise
            return fallback

    @staticmethod
    def getfloats(
        parser: configparser.ConfigParser,
        section: str,
        key: str,
        fallback: Sequence[float],
    ) -> List[float]:
        raw = parser.get(section, key, fallback="")
        if not raw.strip():
            return [float(value) for value in fallback]
        return [float(value) for value in raw.split(",")]

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            self.tail_fraction, self.hist_bins, self.reference_case or None
        )

    def roi_config(self) -> RoiConfig:
        return RoiConfig(self.roi_margin)

    def forest_config(self, seed: Optional[int] = None) -> ForestConfig:
        return ForestConfig(
            n_trees=self.forest_trees,
            max_depth=self.forest_depth,
            k_attributes=self.forest_k_attributes,
            min_leaf=self.forest_min_leaf,
            seed=self.seed if seed is None else seed,
            max_per_class=self.forest_max_per_class,
        )

    def filter_bank(self) -> FilterBank:
        return build_filter_bank(
            np.deg2rad(self.gabor_thetas),
            self.gabor_sigmas,
            self.gabor_lambdas,
            self.gabor_psi,
            self.gabor_gamma,
        )

    def as_dict(self) -> Dict[str, Dict[str, object]]:
        return {
            self.SECTION_GENERAL: {"method": self.method, "seed": self.seed},
            self.SECTION_PREPROCESS: {
                "tail_fraction": self.tail_fraction,
                "hist_bins": self.hist_bins,
                "reference_case": self.reference_case,
            },
            self.SECTION_FCN: {
                "score_source": self.score_source,
                "weights": self.fcn_weights,
                "oracle_blur": self.oracle_blur,
                "oracle_flip": self.oracle_flip,
            },
            self.SECTION_TEXTON: {
                "k": self.texton_k,
                "window": self.texton_window,
                "window_3d": self.texton_window_3d,
                "thetas": self.gabor_thetas,
                "sigmas": self.gabor_sigmas,
                "lambdas": self.gabor_lambdas,
                "psi": self.gabor_psi,
                "gamma": self.gabor_gamma,
                "max_samples": self.kmeans_samples,
                "max_iter": self.kmeans_max_iter,
                "tol": self.kmeans_tol,
                "slab": self.texton_slab,
            },
            self.SECTION_ROI: {"margin_voxels": self.roi_margin},
            self.SECTION_FOREST: {
                "n_trees": self.forest_trees,
                "max_depth": self.forest_depth,
                "k_attributes": self.forest_k_attributes,
                "min_leaf": self.forest_min_leaf,
                "max_per_class": self.forest_max_per_class,
            },
            self.SECTION_POSTPROCESS: {
                "enabled": self.postprocess_enabled,
                "min_component_fraction": self.min_component_fraction,
            },
        }

    def to_canonical_string(self) -> str:
        """Sorted sections and keys as key=value, equal settings give identical text"""
        lines = []
        for section, values in sorted(self.as_dict().items()):
            lines.append(f"[{section}]")
            for key, value in sorted(values.items()):
                lines.append(f"{key}={_format_value(value)}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, **overrides) -> "SegmentationSettings":
        """Copy with some keys replaced, e.g. with_overrides(seed=7)"""
        values = self.as_dict()
        sections = {key: section for section, items in values.items() for key in items}
        for key, value in overrides.items():
            if key not in sections:
                raise ConfigurationError(f"Unknown settings key {key}")
            values[sections[key]][key] = value
        lines = []
        for section, items in values.items():
            lines.append(f"[{section}]")
            lines += [f"{key}={_format_value(value)}" for key, value in items.items()]
        return SegmentationSettings(filedata="\n".join(lines))

    def print_settings(self) -> None:
        self.log_info("Settings Loaded")
        self.log_info(
            f"[METHOD {self.method}] [SEED {self.seed}] [SCORES {self.score_source}]"
        )
        self.log_info(
            f"[TEXTON k={self.texton_k} window={self.texton_window}"
            f"{'x3D' if self.texton_window_3d else ''}] [ROI margin={self.roi_margin}] "
            f"[FOREST trees={self.forest_trees} depth={self.forest_depth}]"
        )
