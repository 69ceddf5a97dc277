#!/usr/bin/env python3
import csv
import io
import os
import sys

import numpy as np
import pytest

try:
    import fcn_texton_forest
except ImportError:
    sys.path.append(
        os.path.dirname(os.path.dirname(os.path.dirname(os.path.realpath(__file__))))
    )

from fcn_texton_forest.lib.errors import DimensionMismatch
from fcn_texton_forest.lib.evaluate import (
    CSV_HEADER,
    Region,
    evaluate_case,
    evaluate_cases,
    format_csv,
    overlap_metrics,
    region_mask,
    summarize,
    write_report,
)
from fcn_texton_forest.lib.report_format import (
    format_label_counts,
    format_region,
    format_report,
)
from fcn_texton_forest.lib.volume import BinaryMask, LabelVolume
from fcn_texton_forest.tests.common import brute_overlap, random_mask


def test_overlap_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(60):
        density = rng.uniform(0.05, 0.6)
        pred = random_mask(rng, (8, 8, 8), density)
        truth = random_mask(rng, (8, 8, 8), density)
        tp, fp, fn = brute_overlap(pred, truth)
        metrics = overlap_metrics(BinaryMask(pred), BinaryMask(truth))
        assert (metrics.tp, metrics.fp, metrics.fn) == (tp, fp, fn)
        assert np.isclose(metrics.dice, 2 * tp / (2 * tp + fp + fn))
        assert np.isclose(metrics.ppv, tp / (tp + fp))
        assert np.isclose(metrics.sensitivity, tp / (tp + fn))

        swapped = overlap_metrics(BinaryMask(truth), BinaryMask(pred))
        assert swapped.ppv == metrics.sensitivity
        assert swapped.dice == metrics.dice
        assert overlap_metrics(BinaryMask(pred), BinaryMask(pred)).dice == 1.0


def test_empty_mask_conventions():
    empty = BinaryMask.empty((3, 3, 3))
    full = BinaryMask(np.ones((3, 3, 3), dtype=bool))
    both = overlap_metrics(empty, empty)
    assert (both.dice, both.ppv, both.sensitivity) == (1.0, 1.0, 1.0)
    missed = overlap_metrics(empty, full)
    assert (missed.dice, missed.ppv, missed.sensitivity) == (0.0, 1.0, 0.0)
    spurious = overlap_metrics(full, empty)
    assert (spurious.dice, spurious.ppv, spurious.sensitivity) == (0.0, 0.0, 1.0)
    with pytest.raises(DimensionMismatch):
        overlap_metrics(empty, BinaryMask.empty((3, 3, 4)))


def test_region_membership():
    labels = LabelVolume(np.arange(5, dtype=np.uint8).reshape(5, 1, 1))
    assert region_mask(labels, Region.COMPLETE).data.ravel().tolist() == [False, True, True, True, True]
    assert region_mask(labels, Region.CORE).data.ravel().tolist() == [False, True, False, True, True]
    assert region_mask(labels, Region.ENHANCING).data.ravel().tolist() == [False, False, False, False, True]


def test_evaluate_case_regions():
    truth = np.zeros((4, 4, 1), dtype=np.uint8)
    truth[0:2, 0:2, 0] = 2
    truth[0, 0, 0] = 4
    pred = truth.copy()
    pred[0, 0, 0] = 2  # enhancing voxel called oedema
    report = evaluate_case(LabelVolume(pred), LabelVolume(truth), "c1")
    assert report.metrics[Region.COMPLETE].dice == 1.0
    assert report.metrics[Region.CORE].dice == 0.0
    assert report.metrics[Region.CORE].ppv == 1.0
    enhancing = report.metrics[Region.ENHANCING]
    assert (enhancing.tp, enhancing.fp, enhancing.fn) == (0, 0, 1)


def test_csv_format_and_mean(tmp_path):
    rng = np.random.default_rng(1)
    pairs = []
    for index in range(3):
        truth = LabelVolume(rng.integers(0, 5, (6, 6, 3)))
        pred = LabelVolume(rng.integers(0, 5, (6, 6, 3)))
        pairs.append((f"case_{index}", pred, truth))
    reports, summary = evaluate_cases(pairs)
    assert summary == summarize(reports)

    text = format_csv(reports, include_mean=True)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 3 * 3 + 3
    assert [row[1] for row in rows[1:4]] == ["complete", "core", "enhancing"]
    mean_rows = [row for row in rows if row[0] == "mean"]
    assert len(mean_rows) == 3
    for region, row in zip(Region, mean_rows):
        dices = [r.metrics[region].dice for r in reports]
        assert float(row[2]) == pytest.approx(np.mean(dices), abs=1e-6)
        assert int(row[5]) == sum(r.metrics[region].tp for r in reports)
    assert all(len(cell.split(".")[1]) == 6 for row in rows[1:] for cell in row[2:5])

    write_report(tmp_path / "report.csv", reports)
    assert (tmp_path / "report.csv").read_text() == format_csv(reports)

    with pytest.raises(ValueError):
        evaluate_cases([])


def test_console_lines():
    labels = LabelVolume(np.array([0, 1, 2, 3, 4, 4]).reshape(6, 1, 1))
    report = evaluate_case(labels, labels, "phantom_000")
    line = format_region(report, Region.CORE)
    assert line.startswith("[phantom_000 ] [CORE     ] [DICE 1.0000]")
    assert "[TP 4 FP 0 FN 0]" in line
    assert len(format_report(report).splitlines()) == 3
    colored = format_region(report, Region.ENHANCING, use_color=True)
    assert colored.startswith("\x1b[38;5;203m") and colored.endswith("\x1b[0m")
    counts = format_label_counts("x", labels.counts())
    assert "[enhancing 2       ]" in counts
    assert counts.startswith("[x           ] [normal 1")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
