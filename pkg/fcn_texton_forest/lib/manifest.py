#!/usr/bin/env python3
import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional

from fcn_texton_forest.lib.errors import ManifestError
from fcn_texton_forest.lib.nifti import read_labels, read_nifti
from fcn_texton_forest.lib.pipeline import TrainingCase
from fcn_texton_forest.lib.utils import PathLike, atomic_write_text
from fcn_texton_forest.lib.volume import stack_modalities

MANIFEST_HEADER = ("id", "flair", "t1c", "t2", "truth", "scores")


@dataclass(frozen=True)
class CaseEntry:
    case_id: str
    flair: Path
    t1c: Path
    t2: Path
    truth: Optional[Path] = None
    scores: Optional[Path] = None

    def load(self, with_truth: bool = True) -> TrainingCase:
        for path in (self.flair, self.t1c, self.t2):
            if not path.is_file():
                raise ManifestError(f"case {self.case_id}: missing file {path}")
        volume = stack_modalities(
            read_nifti(self.flair), read_nifti(self.t1c), read_nifti(self.t2)
        )
        truth = None
        if with_truth and self.truth is not None:
            if not self.truth.is_file():
                raise ManifestError(f"case {self.case_id}: missing file {self.truth}")
            truth = read_labels(self.truth)
        return TrainingCase(
            self.case_id,
            volume,
            truth,
            str(self.scores) if self.scores is not None else None,
        )


def _resolve(base: Path, value: str) -> Optional[Path]:
    value = value.strip()
    if not value:
        return None
    path = Path(value)
    return (path if path.is_absolute() else base / path).resolve()


def parse_manifest(text: str, base: PathLike = ".") -> List[CaseEntry]:
    """
    Reads the id,flair,t1c,t2,truth,scores table, truth and scores may be empty,
    relative paths resolve against base
    """
    base = Path(base)
    rows = list(csv.reader(io.StringIO(text)))
    rows = [row for row in rows if any(cell.strip() for cell in row)]
    if not rows or tuple(cell.strip() for cell in rows[0]) != MANIFEST_HEADER:
        raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    entries = []
    seen = set()
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(MANIFEST_HEADER):
            raise ManifestError(f"line {line}: expected {len(MANIFEST_HEADER)} columns")
        case_id = row[0].strip()
        if not case_id:
            raise ManifestError(f"line {line}: empty case id")
        if case_id in seen:
            raise ManifestError(f"line {line}: duplicate case id {case_id}")
        seen.add(case_id)
        modalities = [_resolve(base, cell) for cell in row[1:4]]
        if any(path is None for path in modalities):
            raise ManifestError(f"line {line}: case {case_id} lacks a modality path")
        entries.append(
            CaseEntry(case_id, *modalities, _resolve(base, row[4]), _resolve(base, row[5]))
        )
    return entries


def read_manifest(path: PathLike) -> List[CaseEntry]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    return parse_manifest(text, path.parent)


def format_manifest(entries: Iterable[CaseEntry], base: PathLike = ".") -> str:
    base = Path(base)

    def cell(path: Optional[Path]) -> str:
        if path is None:
            return ""
        try:
            return Path(path).resolve().relative_to(base.resolve()).as_posix()
        except ValueError:
            return str(Path(path).resolve())

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for entry in entries:
        writer.writerow(
            (
                entry.case_id,
                cell(entry.flair),
                cell(entry.t1c),
                cell(entry.t2),
                cell(entry.truth),
                cell(entry.scores),
            )
        )
    return buffer.getvalue()


def write_manifest(path: PathLike, entries: Iterable[CaseEntry]) -> None:
    path = Path(path)
    atomic_write_text(path, format_manifest(entries, path.parent))
