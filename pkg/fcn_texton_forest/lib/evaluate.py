#!/usr/bin/env python3
import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from fcn_texton_forest.lib.errors import DimensionMismatch
from fcn_texton_forest.lib.utils import PathLike, atomic_write_text
from fcn_texton_forest.lib.volume import BinaryMask, LabelVolume

CSV_HEADER = ("case", "region", "dice", "ppv", "sensitivity", "tp", "fp", "fn")
MEAN_CASE = "mean"


class Region(Enum):
    COMPLETE = "complete"
    CORE = "core"
    ENHANCING = "enhancing"

    @property
    def labels(self) -> FrozenSet[int]:
        return REGION_LABELS[self]


REGION_LABELS: Dict[Region, FrozenSet[int]] = {
    Region.COMPLETE: frozenset({1, 2, 3, 4}),
    Region.CORE: frozenset({1, 3, 4}),
    Region.ENHANCING: frozenset({4}),
}


def region_mask(labels: LabelVolume, region: Region) -> BinaryMask:
    return BinaryMask(np.isin(labels.data, sorted(region.labels)), labels.spacing)


@dataclass(frozen=True)
class OverlapMetrics:
    dice: float
    ppv: float
    sensitivity: float
    tp: int
    fp: int
    fn: int


def overlap_metrics(pred: BinaryMask, truth: BinaryMask) -> OverlapMetrics:
    """
    Dice, PPV and sensitivity with fixed conventions for empty masks:
    both empty scores 1/1/1, empty prediction 0/1/0, empty truth 0/0/1
    """
    if pred.dims != truth.dims:
        raise DimensionMismatch(f"prediction {pred.dims} vs truth {truth.dims}")
    tp = int(np.count_nonzero(pred.data & truth.data))
    fp = int(np.count_nonzero(pred.data & ~truth.data))
    fn = int(np.count_nonzero(~pred.data & truth.data))
    pred_empty, truth_empty = tp + fp == 0, tp + fn == 0
    if pred_empty and truth_empty:
        return OverlapMetrics(1.0, 1.0, 1.0, tp, fp, fn)
    if pred_empty:
        return OverlapMetrics(0.0, 1.0, 0.0, tp, fp, fn)
    if truth_empty:
        return OverlapMetrics(0.0, 0.0, 1.0, tp, fp, fn)
    return OverlapMetrics(
        2 * tp / (2 * tp + fp + fn), tp / (tp + fp), tp / (tp + fn), tp, fp, fn
    )


@dataclass(frozen=True)
class OverlapReport:
    case_id: str
    metrics: Dict[Region, OverlapMetrics]

    def rows(self) -> List[tuple]:
        return [
            (self.case_id, region.value, m.dice, m.ppv, m.sensitivity, m.tp, m.fp, m.fn)
            for region, m in self.metrics.items()
        ]


def evaluate_case(
    pred: LabelVolume, truth: LabelVolume, case_id: str = "case"
) -> OverlapReport:
    if pred.dims != truth.dims:
        raise DimensionMismatch(f"prediction {pred.dims} vs truth {truth.dims}")
    return OverlapReport(
        case_id,
        {
            region: overlap_metrics(region_mask(pred, region), region_mask(truth, region))
            for region in Region
        },
    )


def summarize(reports: Sequence[OverlapReport]) -> OverlapReport:
    """Per-region mean of dice, ppv and sensitivity, summed voxel counts"""
    summary = {}
    for region in Region:
        metrics = [report.metrics[region] for report in reports]
        summary[region] = OverlapMetrics(
            float(np.mean([m.dice for m in metrics])),
            float(np.mean([m.ppv for m in metrics])),
            float(np.mean([m.sensitivity for m in metrics])),
            sum(m.tp for m in metrics),
            sum(m.fp for m in metrics),
            sum(m.fn for m in metrics),
        )
    return OverlapReport(MEAN_CASE, summary)


def format_csv(reports: Iterable[OverlapReport], include_mean: bool = False) -> str:
    reports = list(reports)
    if include_mean and reports:
        reports.append(summarize(reports))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for report in reports:
        for case_id, region, dice, ppv, sensitivity, tp, fp, fn in report.rows():
            writer.writerow(
                (
                    case_id,
                    region,
                    f"{dice:.6f}",
                    f"{ppv:.6f}",
                    f"{sensitivity:.6f}",
                    tp,
                    fp,
                    fn,
                )
            )
    return buffer.getvalue()


def write_report(
    path: PathLike, reports: Iterable[OverlapReport], include_mean: bool = False
) -> None:
    atomic_write_text(path, format_csv(reports, include_mean))


def evaluate_cases(
    pairs: Iterable[Tuple[str, LabelVolume, LabelVolume]]
) -> Tuple[List[OverlapReport], OverlapReport]:
    """
    @param pairs: (case id, prediction, truth) triples
    @return: per-case reports and their per-region mean
    """
    reports = [evaluate_case(pred, truth, case_id) for case_id, pred, truth in pairs]
    if not reports:
        raise ValueError("no cases to evaluate")
    return reports, summarize(reports)
