#!/usr/bin/env python3
import argparse
import logging
import logging.config
import os
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

from fcn_texton_forest.lib.errors import ConfigurationError, ManifestError, SegmentationError
from fcn_texton_forest.lib.evaluate import evaluate_cases, format_csv, write_report
from fcn_texton_forest.lib.features import ALL_METHODS, METHOD_FCN
from fcn_texton_forest.lib.forest import cross_validate
from fcn_texton_forest.lib.logging_trait import LoggingTrait
from fcn_texton_forest.lib.manifest import CaseEntry, read_manifest, write_manifest
from fcn_texton_forest.lib.nifti import read_labels, read_nifti, write_labels, write_nifti
from fcn_texton_forest.lib.overlay import busiest_slice, write_overlay
from fcn_texton_forest.lib.phantom import PhantomSpec, generate_phantom, phantom_series
from fcn_texton_forest.lib.pipeline import (
    FcnScoreProvider,
    FileScoreProvider,
    ModelBundle,
    OracleScoreProvider,
    ScoreProvider,
    SegmentationPipeline,
    TrainingCase,
)
from fcn_texton_forest.lib.preprocess import (
    ReferenceHistogram,
    prepare_reference,
    preprocess_case,
)
from fcn_texton_forest.lib.report_format import format_label_counts, format_report
from fcn_texton_forest.lib.settings import SegmentationSettings
from fcn_texton_forest.lib.utils import atomic_directory, atomic_write_text
from fcn_texton_forest.lib.volume import Modality
from fcn_texton_forest.lib.workers import WorkerPool

LOG_FORMAT = "%(levelname)s - %(asctime)s - %(name)s - %(message)s"
PHANTOM_PREFIX = "phantom"
MANIFEST_NAME = "manifest.csv"


def _dims(text: str):
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dims {text!r}, expected nx,ny,nz")
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"invalid dims {text!r}, expected nx,ny,nz")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcn-texton-forest",
        description="Brain tumor segmentation with FCN scores, texton features and a random forest",
    )
    parser.add_argument("--seed", type=int, default=None, help="overrides [general] seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads, default all cores")
    parser.add_argument("--config", default=None, help="settings ini file")
    parser.add_argument("--log-config", default=None, help="logging.config ini file")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument(
        "--overwrite", action="store_true", help="replace existing output directories"
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    def scores_options(command: argparse.ArgumentParser) -> None:
        command.add_argument(
            "--scores", choices=SegmentationSettings.SCORE_ALL_SOURCES, default=None
        )
        command.add_argument("--weights", default=None, help="FCN weights file")

    phantom = commands.add_parser("phantom", help="generate synthetic cases")
    phantom.add_argument("--out", required=True)
    phantom.add_argument("--cases", type=int, default=3)
    phantom.add_argument("--dims", type=_dims, default=(64, 64, 32))
    phantom.add_argument("--noise", type=float, default=0.03)

    preprocess = commands.add_parser("preprocess", help="normalize cases to a reference")
    preprocess.add_argument("--manifest", required=True)
    preprocess.add_argument("--out", required=True)
    preprocess.add_argument("--reference", default=None, help="reference case id")

    score = commands.add_parser("score", help="write score maps")
    score.add_argument("--manifest", required=True)
    score.add_argument("--out", required=True)
    score.add_argument("--reference", default=None, help="reference case id")
    scores_options(score)

    train = commands.add_parser("train", help="train a model bundle")
    train.add_argument("--manifest", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--method", choices=ALL_METHODS, default=None)
    scores_options(train)

    segment = commands.add_parser("segment", help="segment cases with a model bundle")
    segment.add_argument("--manifest", required=True)
    segment.add_argument("--model", required=True)
    segment.add_argument("--out", required=True)
    segment.add_argument("--overlay", action="store_true", help="also write PNG overlays")
    scores_options(segment)

    evaluate = commands.add_parser("evaluate", help="overlap report as CSV")
    evaluate.add_argument("--pred", default=None, help="predicted label volume")
    evaluate.add_argument("--truth", default=None, help="ground-truth label volume")
    evaluate.add_argument("--case", default="case", help="case id for --pred/--truth")
    evaluate.add_argument("--manifest", default=None)
    evaluate.add_argument("--pred-dir", default=None, help="directory written by segment")
    evaluate.add_argument("--out", default=None, help="CSV file, stdout when missing")
    evaluate.add_argument("--mean", action="store_true", help="append case=mean rows")

    crossval = commands.add_parser("crossval", help="k-fold forest cross-validation")
    crossval.add_argument("--manifest", required=True)
    crossval.add_argument("--folds", type=int, default=4)
    crossval.add_argument("--method", choices=ALL_METHODS, default=None)
    crossval.add_argument("--out", default=None, help="fold,accuracy CSV")
    scores_options(crossval)

    overlay = commands.add_parser("overlay", help="PNG of one labeled axial slice")
    overlay.add_argument("--flair", required=True)
    overlay.add_argument("--labels", required=True)
    overlay.add_argument("--z", type=int, default=None, help="default: slice with most tumor")
    overlay.add_argument("--alpha", type=float, default=0.5)
    overlay.add_argument("--out", required=True)
    return parser


def configure_logging(log_config: Optional[str], verbose: bool) -> None:
    if log_config:
        if not os.path.isfile(log_config):
            raise ConfigurationError(f"logging config {log_config} not found")
        logging.config.fileConfig(log_config)
        return
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)


class CommandLineRunner(LoggingTrait):
    def __init__(self, args: argparse.Namespace):
        self.args = args
        if args.config:
            settings = SegmentationSettings(filepath=args.config)
        else:
            settings = SegmentationSettings(filedata=SegmentationSettings.MINIMAL_SETTINGS)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if getattr(args, "method", None):
            overrides["method"] = args.method
        if getattr(args, "scores", None):
            overrides["score_source"] = args.scores
        self.settings: SegmentationSettings = (
            settings.with_overrides(**overrides) if overrides else settings
        )
        if args.threads is not None and args.threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")
        self.pool = WorkerPool(args.threads)

    def run(self) -> int:
        handler: Callable[[], int] = getattr(self, f"command_{self.args.command}")
        return handler()

    def check_output(self, target: str) -> Path:
        path = Path(target)
        if path.exists() and any(path.iterdir()) and not self.args.overwrite:
            raise ManifestError(f"output {path} exists and is not empty, use --overwrite")
        return path

    def output_directory(self, target: str, populate: Callable[[Path], None]) -> None:
        atomic_directory(self.check_output(target), populate)

    def provider(
        self, settings: SegmentationSettings, bundle: Optional[ModelBundle] = None
    ) -> ScoreProvider:
        source = settings.score_source
        if source == settings.SCORE_SOURCE_ORACLE:
            return OracleScoreProvider(settings.oracle_blur, settings.oracle_flip, settings.seed)
        if source == settings.SCORE_SOURCE_FILE:
            return FileScoreProvider()
        if getattr(self.args, "weights", None):
            return FcnScoreProvider.from_file(self.args.weights, self.pool)
        if bundle is not None and bundle.fcn_weights is not None:
            return FcnScoreProvider(bundle.fcn_weights, self.pool)
        if settings.fcn_weights:
            return FcnScoreProvider.from_file(settings.fcn_weights, self.pool)
        raise ConfigurationError("score source fcn needs --weights or [fcn] weights")

    def load_cases(self, manifest: str, with_truth: bool = True) -> List[TrainingCase]:
        entries = read_manifest(manifest)
        if not entries:
            raise ManifestError(f"manifest {manifest} lists no cases")
        return [entry.load(with_truth) for entry in entries]

    def reference_for(self, cases: Sequence[TrainingCase]) -> ReferenceHistogram:
        wanted = getattr(self.args, "reference", None)
        settings = self.settings.with_overrides(reference_case=wanted) if wanted else self.settings
        pipeline = SegmentationPipeline(settings, FileScoreProvider(), self.pool)
        chosen = pipeline.choose_reference(cases)
        cfg = settings.preprocess_config()
        self.log_info(f"reference case {chosen.case_id}")
        return ReferenceHistogram.from_prepared(
            prepare_reference(chosen.volume, cfg), cfg.hist_bins
        )

    def command_phantom(self) -> int:
        args = self.args
        if args.cases < 1:
            raise ConfigurationError(f"--cases must be >= 1, got {args.cases}")
        default = PhantomSpec()
        # tumor placement scales with the volume
        scale = [n / d for n, d in zip(args.dims, default.dims)]
        base = PhantomSpec(
            dims=tuple(args.dims),
            noise_std=args.noise,
            tumor_center=tuple(c * s for c, s in zip(default.tumor_center, scale)),
            tumor_radii=tuple(r * s for r, s in zip(default.tumor_radii, scale)),
        )
        specs = phantom_series(base, args.cases, self.settings.seed)

        def populate(directory: Path) -> None:
            entries = []
            for index, spec in enumerate(specs):
                case_id = f"{PHANTOM_PREFIX}_{index:03d}"
                case_dir = directory / case_id
                case_dir.mkdir()
                volume, truth = generate_phantom(spec)
                paths = {}
                for modality in Modality:
                    paths[modality] = case_dir / f"{modality.tag}.nii"
                    write_nifti(volume[modality], paths[modality])
                write_labels(truth, case_dir / "truth.nii")
                self.log_info(format_label_counts(case_id, truth.counts()))
                entries.append(
                    CaseEntry(
                        case_id,
                        paths[Modality.FLAIR],
                        paths[Modality.T1C],
                        paths[Modality.T2],
                        case_dir / "truth.nii",
                    )
                )
            write_manifest(directory / MANIFEST_NAME, entries)

        self.output_directory(args.out, populate)
        self.log_info(f"{len(specs)} phantom cases written to {args.out}")
        return 0

    def command_preprocess(self) -> int:
        entries = read_manifest(self.args.manifest)
        cases = [entry.load() for entry in entries]
        reference = self.reference_for(cases)
        cfg = self.settings.preprocess_config()
        prepared = self.pool.map(lambda case: preprocess_case(case.volume, reference, cfg), cases)

        def populate(directory: Path) -> None:
            reference.save(directory / "reference.rhst")
            written = []
            for entry, volume in zip(entries, prepared):
                case_dir = directory / entry.case_id
                case_dir.mkdir()
                paths = [case_dir / f"{modality.tag}.nii" for modality in Modality]
                for modality, path in zip(Modality, paths):
                    write_nifti(volume[modality], path)
                written.append(CaseEntry(entry.case_id, *paths, entry.truth, entry.scores))
            write_manifest(directory / MANIFEST_NAME, written)

        self.output_directory(self.args.out, populate)
        return 0

    def command_score(self) -> int:
        entries = read_manifest(self.args.manifest)
        cases = [entry.load() for entry in entries]
        provider = self.provider(self.settings)
        reference = self.reference_for(cases)
        cfg = self.settings.preprocess_config()
        scores = [
            provider.scores(case, preprocess_case(case.volume, reference, cfg))
            for case in cases
        ]

        def populate(directory: Path) -> None:
            written = []
            for entry, score_map in zip(entries, scores):
                path = directory / f"{entry.case_id}.scmp"
                score_map.save(path)
                written.append(
                    CaseEntry(entry.case_id, entry.flair, entry.t1c, entry.t2, entry.truth, path)
                )
            write_manifest(directory / MANIFEST_NAME, written)

        self.output_directory(self.args.out, populate)
        return 0

    def command_train(self) -> int:
        self.check_output(self.args.out)
        self.settings.print_settings()
        cases = self.load_cases(self.args.manifest)
        pipeline = SegmentationPipeline(self.settings, self.provider(self.settings), self.pool)
        bundle = pipeline.train(cases)
        self.output_directory(self.args.out, bundle.write_into)
        self.log_info(f"model bundle written to {self.args.out}")
        return 0

    def command_segment(self) -> int:
        args = self.args
        self.check_output(args.out)
        bundle = ModelBundle.load(args.model)
        settings = bundle.settings
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.scores:
            overrides["score_source"] = args.scores
        if overrides:
            settings = settings.with_overrides(**overrides)
        settings.print_settings()
        provider = self.provider(settings, bundle)
        pipeline = SegmentationPipeline(settings, provider, WorkerPool(1))
        cases = self.load_cases(args.manifest)

        def segment(case: TrainingCase):
            return pipeline.segment(case, bundle)

        results = self.pool.map(segment, cases)

        def populate(directory: Path) -> None:
            for case, result in zip(cases, results):
                write_labels(result.labels, directory / f"{case.case_id}.nii")
                if args.overlay:
                    write_overlay(
                        directory / f"{case.case_id}.png",
                        case.volume[Modality.FLAIR],
                        result.labels,
                        busiest_slice(result.labels),
                    )
                self.log_info(format_label_counts(case.case_id, result.labels.counts()))
                stages = " ".join(f"{k}={v:.2f}s" for k, v in result.timings.items())
                self.log_debug(f"{case.case_id} timings {stages}")

        self.output_directory(args.out, populate)
        return 0

    def command_evaluate(self) -> int:
        args = self.args
        if args.pred and args.truth:
            pairs = [(args.case, read_labels(args.pred), read_labels(args.truth))]
        elif args.manifest and args.pred_dir:
            pairs = []
            for entry in read_manifest(args.manifest):
                if entry.truth is None:
                    raise ManifestError(f"case {entry.case_id} has no ground truth")
                prediction = Path(args.pred_dir) / f"{entry.case_id}.nii"
                pairs.append(
                    (entry.case_id, read_labels(prediction), read_labels(entry.truth))
                )
        else:
            raise ConfigurationError("evaluate needs --pred and --truth, or --manifest and --pred-dir")

        reports, summary = evaluate_cases(pairs)
        for report in reports:
            self.log_info(format_report(report, use_color=sys.stderr.isatty()))
        if len(reports) > 1:
            self.log_info(format_report(summary, use_color=sys.stderr.isatty()))
        if args.out:
            write_report(args.out, reports, args.mean)
        else:
            sys.stdout.write(format_csv(reports, args.mean))
        return 0

    def command_crossval(self) -> int:
        args = self.args
        if self.settings.method == METHOD_FCN:
            raise ConfigurationError("crossval needs a forest method (fcn_rf or fcn_texton_rf)")
        cases = self.load_cases(args.manifest)
        pipeline = SegmentationPipeline(self.settings, self.provider(self.settings), self.pool)
        matrix, labels, _, _ = pipeline.training_set(cases)
        result = cross_validate(
            matrix,
            labels,
            self.settings.forest_config(),
            args.folds,
            self.settings.seed,
            self.pool,
        )
        for fold, accuracy in enumerate(result.fold_accuracies):
            self.log_info(f"[FOLD {fold}] [ACCURACY {accuracy:.4f}]")
        self.log_info(f"[MEAN] [ACCURACY {result.mean_accuracy:.4f}]")
        if args.out:
            lines = ["fold,accuracy"]
            lines += [f"{fold},{acc:.6f}" for fold, acc in enumerate(result.fold_accuracies)]
            lines.append(f"mean,{result.mean_accuracy:.6f}")
            atomic_write_text(args.out, "\n".join(lines) + "\n")
        return 0

    def command_overlay(self) -> int:
        args = self.args
        flair = read_nifti(args.flair)
        labels = read_labels(args.labels)
        z = busiest_slice(labels) if args.z is None else args.z
        write_overlay(args.out, flair, labels, z, args.alpha)
        return 0


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    mainlog = logging.getLogger("fcn-texton-forest")
    try:
        configure_logging(args.log_config, args.verbose)
        return CommandLineRunner(args).run()
    except (SegmentationError, OSError, ValueError, LookupError) as e:
        mainlog.debug("command failed", exc_info=True)
        print(f"fcn-texton-forest {args.command}: {e}", file=sys.stderr)
        return 1
