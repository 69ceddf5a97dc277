#!/usr/bin/env python3
import io

from fcn_texton_forest.lib.evaluate import OverlapReport, Region
from fcn_texton_forest.lib.volume import LABEL_NAMES, N_CLASSES

region_colors: dict = {
    Region.COMPLETE: 120,
    Region.CORE: 110,
    Region.ENHANCING: 203,
}


def _terminal_col256(text, fg=None, bg=None, bold=False):
    def _terminal_get_color(col):
        return "8;5;{0:d}".format(_to_terminal_color(col))

    def _to_terminal_color(num):
        if isinstance(num, int):
            # Assume it is already a color
            return num

        if isinstance(num, str) and len(num) <= 3:
            return 16 + int(num, 6)

        raise ValueError("Invalid color: {0!r}".format(num))

    if not isinstance(text, str):
        text = repr(text)

    buf = io.StringIO()

    if bold:
        buf.write("\x1b[1m")

    if fg is not None:
        buf.write("\x1b[3{0}m".format(_terminal_get_color(fg)))

    if bg is not None:
        buf.write("\x1b[4{0}m".format(_terminal_get_color(bg)))

    buf.write(text)
    buf.write("\x1b[0m")
    return buf.getvalue()


def format_brackets(
    text: str, padding: str = " ", align: str = "<", width: int = 10
) -> str:
    return f"[{text:{padding}{align}{width}}] "


def format_region(report: OverlapReport, region: Region, use_color: bool = False) -> str:
    metrics = report.metrics[region]
    line = (
        format_brackets(text=report.case_id, width=12)
        + format_brackets(text=region.value.upper(), width=9)
        + f"[DICE {metrics.dice:.4f}] "
        + f"[PPV {metrics.ppv:.4f}] "
        + f"[SENS {metrics.sensitivity:.4f}] "
        + f"[TP {metrics.tp} FP {metrics.fp} FN {metrics.fn}]"
    )
    return _terminal_col256(line, region_colors[region]) if use_color else line


def format_report(report: OverlapReport, use_color: bool = False) -> str:
    return "\n".join(format_region(report, region, use_color) for region in Region)


def format_label_counts(case_id: str, counts, use_color: bool = False) -> str:
    """
    @param counts: voxels per label, index = label
    """
    line = format_brackets(text=case_id, width=12) + "".join(
        format_brackets(text=f"{LABEL_NAMES[label]} {int(counts[label])}", width=18)
        for label in range(N_CLASSES)
    )
    return _terminal_col256(line, 250) if use_color else line
