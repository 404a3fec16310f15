"""Parsing and validation of the input tables.

Four delimited tables feed the pipeline (UTF-8, header row required)::

    predictions.csv  model_id, argument_id, repetition, value
    pointwise.csv    annotator_id, argument_id, label
    pairwise.csv     annotator_id, arg_i, arg_j, framing, choice
    arguments.csv    argument_id, debate_id, locution, proposition

Every loader also accepts a JSON array of objects with the same keys (or
JSON lines), selected by a ``.json``/``.jsonl`` suffix or ``fmt=``. Lines
starting with ``#`` are skipped so artifacts stamped with a config hash can be
read back. Loaders return records in a canonical sorted order, so permuting
input rows never changes the result.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from dualscale.errors import ValidationError

Source = Union[str, Path, IO[str]]

NA_TOKEN = "NA"
POINTWISE_LABELS = ("political", "apolitical")
FRAMINGS = ("left", "right")
CHOICES = ("first", "second", "equal")

PREDICTION_COLUMNS = ("model_id", "argument_id", "repetition", "value")
POINTWISE_COLUMNS = ("annotator_id", "argument_id", "label")
PAIRWISE_COLUMNS = ("annotator_id", "arg_i", "arg_j", "framing", "choice")
ARGUMENT_COLUMNS = ("argument_id", "debate_id", "locution", "proposition")


@dataclass(frozen=True)
class ArgumentRef:
    argument_id: str
    debate_id: str | None = None
    locution: str | None = None
    proposition: str | None = None


@dataclass(frozen=True, order=True)
class PredictionRecord:
    """One repetition of one model on one argument; ``score is None`` means NA."""

    model_id: str
    argument_id: str
    repetition: int
    score: float | None

    @property
    def is_na(self) -> bool:
        return self.score is None

    def sort_key(self):
        return (self.model_id, self.argument_id, self.repetition)


@dataclass(frozen=True)
class PointwiseAnnotation:
    annotator_id: str
    argument_id: str
    label: str  # "political" | "apolitical"

    task = "pointwise"

    def sort_key(self):
        return (self.argument_id, self.annotator_id)


@dataclass(frozen=True)
class PairwiseAnnotation:
    """A framed choice between two arguments.

    ``choice`` is relative to the stated order: ``first`` picks ``arg_i``.
    Under ``right`` framing the picked argument is the more right-wing one,
    under ``left`` framing the more left-wing one.
    """

    annotator_id: str
    arg_i: str
    arg_j: str
    framing: str
    choice: str

    task = "pairwise"

    def sort_key(self):
        return (self.arg_i, self.arg_j, self.framing, self.annotator_id, self.choice)


AnnotationRecord = Union[PointwiseAnnotation, PairwiseAnnotation]


def _detect_format(source: Source, fmt: str | None) -> str:
    if fmt is not None:
        return fmt
    if isinstance(source, (str, Path)):
        suffix = Path(source).suffix.lower()
        if suffix == ".json":
            return "json"
        if suffix == ".jsonl":
            return "jsonl"
    return "csv"


def _open_text(source: Source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ValidationError(f"input file not found: {path}")
        return open(path, newline="", encoding="utf-8"), True
    return source, False


def _iter_rows(source: Source, columns: tuple[str, ...], fmt: str | None = None,
               required: tuple[str, ...] | None = None) -> Iterator[tuple[int, dict]]:
    """Yield ``(row_number, row_dict)``; row numbers are 1-based data rows."""
    required = columns if required is None else required
    fmt = _detect_format(source, fmt)
    handle, owned = _open_text(source)
    try:
        if fmt == "csv":
            lines = (line for line in handle if not line.startswith("#"))
            reader = csv.DictReader(lines)
            if reader.fieldnames is None:
                raise ValidationError("missing header row")
            header = [h.strip() for h in reader.fieldnames]
            missing = [c for c in required if c not in header]
            if missing:
                raise ValidationError(f"missing columns: {', '.join(missing)}")
            reader.fieldnames = header
            for n, row in enumerate(reader, start=1):
                yield n, row
        else:
            text = handle.read()
            if fmt == "json":
                data = json.loads(text)
                if not isinstance(data, list):
                    raise ValidationError("JSON input must be an array of objects")
            elif fmt == "jsonl":
                data = [json.loads(line) for line in text.splitlines() if line.strip()]
            else:
                raise ValidationError(f"unknown input format {fmt!r}")
            for n, obj in enumerate(data, start=1):
                if not isinstance(obj, dict):
                    raise ValidationError(f"row {n}: expected an object")
                missing = [c for c in required if c not in obj]
                if missing:
                    raise ValidationError(f"row {n}: missing fields {', '.join(missing)}")
                yield n, obj
    finally:
        if owned:
            handle.close()


def _text(row: dict, key: str, n: int) -> str:
    value = row.get(key)
    if value is None:
        raise ValidationError(f"row {n}: missing {key}")
    value = str(value).strip()
    if not value:
        raise ValidationError(f"row {n}: empty {key}")
    return value


def parse_score(raw, row: int | None = None) -> float | None:
    """Parse a prediction value: a real in [0, 100] or the NA marker."""
    where = f"row {row}: " if row is not None else ""
    if raw is None:
        raise ValidationError(f"{where}missing value")
    if isinstance(raw, str):
        token = raw.strip()
        if token.upper() == NA_TOKEN:
            return None
        try:
            score = float(token)
        except ValueError:
            raise ValidationError(f"{where}unparseable value {raw!r}") from None
    elif isinstance(raw, bool):
        raise ValidationError(f"{where}unparseable value {raw!r}")
    elif isinstance(raw, (int, float)):
        score = float(raw)
    else:
        raise ValidationError(f"{where}unparseable value {raw!r}")
    if not math.isfinite(score) or not 0.0 <= score <= 100.0:
        raise ValidationError(f"{where}score out of range [0, 100]: {raw!r}")
    return score


def load_predictions(source: Source, fmt: str | None = None) -> list[PredictionRecord]:
    """Load and validate prediction records.

    Raises:
        ValidationError: on out-of-range or unparseable values, non-positive
            repetition numbers, or duplicate ``(model_id, argument_id, repetition)``.
    """
    seen: dict[tuple, int] = {}
    records = []
    for n, row in _iter_rows(source, PREDICTION_COLUMNS, fmt):
        model_id = _text(row, "model_id", n)
        argument_id = _text(row, "argument_id", n)
        try:
            repetition = int(str(row["repetition"]).strip())
        except ValueError:
            raise ValidationError(f"row {n}: unparseable repetition {row['repetition']!r}") from None
        if repetition < 1:
            raise ValidationError(f"row {n}: repetition must be >= 1")
        rec = PredictionRecord(model_id, argument_id, repetition, parse_score(row["value"], n))
        key = rec.sort_key()
        if key in seen:
            raise ValidationError(f"row {n}: duplicate prediction key {key} (first at row {seen[key]})")
        seen[key] = n
        records.append(rec)
    records.sort(key=PredictionRecord.sort_key)
    return records


def load_annotations(source: Source, task: str, fmt: str | None = None) -> list[AnnotationRecord]:
    """Load pointwise or pairwise annotations; tokens are normalized to lowercase."""
    if task == "pointwise":
        return _load_pointwise(source, fmt)
    if task == "pairwise":
        return _load_pairwise(source, fmt)
    raise ValidationError(f"unknown annotation task {task!r}")


def _load_pointwise(source, fmt):
    records = []
    seen = set()
    for n, row in _iter_rows(source, POINTWISE_COLUMNS, fmt):
        label = _text(row, "label", n).lower()
        if label not in POINTWISE_LABELS:
            raise ValidationError(f"row {n}: unknown label {label!r}")
        rec = PointwiseAnnotation(_text(row, "annotator_id", n), _text(row, "argument_id", n), label)
        key = (rec.annotator_id, rec.argument_id)
        if key in seen:
            raise ValidationError(f"row {n}: duplicate annotation {key}")
        seen.add(key)
        records.append(rec)
    records.sort(key=PointwiseAnnotation.sort_key)
    return records


def _load_pairwise(source, fmt):
    records = []
    seen = set()
    for n, row in _iter_rows(source, PAIRWISE_COLUMNS, fmt):
        framing = _text(row, "framing", n).lower()
        choice = _text(row, "choice", n).lower()
        if framing not in FRAMINGS:
            raise ValidationError(f"row {n}: unknown framing {framing!r}")
        if choice not in CHOICES:
            raise ValidationError(f"row {n}: unknown choice {choice!r}")
        a, b = _text(row, "arg_i", n), _text(row, "arg_j", n)
        if a == b:
            raise ValidationError(f"row {n}: self-pair ({a}, {b})")
        rec = PairwiseAnnotation(_text(row, "annotator_id", n), a, b, framing, choice)
        key = (rec.annotator_id, min(a, b), max(a, b), framing)
        if key in seen:
            raise ValidationError(f"row {n}: duplicate annotation {key}")
        seen.add(key)
        records.append(rec)
    records.sort(key=PairwiseAnnotation.sort_key)
    return records


def load_arguments(source: Source, fmt: str | None = None) -> list[ArgumentRef]:
    refs = {}
    for n, row in _iter_rows(source, ARGUMENT_COLUMNS, fmt, required=("argument_id",)):
        argument_id = _text(row, "argument_id", n)
        if argument_id in refs:
            raise ValidationError(f"row {n}: duplicate argument_id {argument_id!r}")

        def opt(key):
            value = row.get(key)
            return None if value in (None, "") else str(value)

        refs[argument_id] = ArgumentRef(argument_id, opt("debate_id"), opt("locution"), opt("proposition"))
    return [refs[k] for k in sorted(refs)]


# -- writers (round-trip partners of the loaders) --------------------------

def format_score(score: float | None) -> str:
    return NA_TOKEN if score is None else repr(float(score))


def _write(rows: Iterable[dict], columns: tuple[str, ...], dest: Source | None, fmt: str) -> str | None:
    rows = list(rows)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(rows, indent=1, sort_keys=True) + "\n"
    else:
        raise ValidationError(f"unknown output format {fmt!r}")
    if dest is None:
        return text
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)
    return None


def dump_predictions(records, dest: Source | None = None, fmt: str = "csv"):
    rows = (
        {"model_id": r.model_id, "argument_id": r.argument_id,
         "repetition": r.repetition, "value": format_score(r.score)}
        for r in sorted(records, key=PredictionRecord.sort_key)
    )
    return _write(rows, PREDICTION_COLUMNS, dest, fmt)


def dump_annotations(records, dest: Source | None = None, fmt: str = "csv"):
    records = list(records)
    if records and isinstance(records[0], PairwiseAnnotation):
        rows = (
            {"annotator_id": r.annotator_id, "arg_i": r.arg_i, "arg_j": r.arg_j,
             "framing": r.framing, "choice": r.choice}
            for r in sorted(records, key=PairwiseAnnotation.sort_key)
        )
        return _write(rows, PAIRWISE_COLUMNS, dest, fmt)
    rows = (
        {"annotator_id": r.annotator_id, "argument_id": r.argument_id, "label": r.label}
        for r in sorted(records, key=PointwiseAnnotation.sort_key)
    )
    return _write(rows, POINTWISE_COLUMNS, dest, fmt)
