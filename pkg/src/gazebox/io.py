"""Canonical file formats, dataset adapters, splitting, and overlay rendering.

Canonical tables are comma-separated with a mandatory header row:

* fixations:   ``study_id,t_start_s,t_end_s,x_px,y_px``
* transcript:  ``study_id,sentence_index,t_start_s,t_end_s,text``
* annotations: ``study_id,center_x_px,center_y_px,semi_axis_x_px,semi_axis_y_px,labels,certainty``
* image meta:  ``study_id,width_px,height_px``

Writers quote every non-numeric field (so free text is always double-quoted
with internal quotes doubled) and print floats in shortest-repr form, which
makes ``parse(write(records)) == records`` hold exactly.

Triplet outputs are line-delimited JSON records sorted by a canonical key,
so files are byte-identical across runs and worker counts.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .errors import (
    RowError,
    SchemaError,
    TooManyRowErrorsError,
    ValidationError,
)
from .model import (
    AnnotatedEllipse,
    BoundingBox,
    DetectionTriplet,
    Fixation,
    GroundingTriplet,
    Heatmap,
    ImageMeta,
    PipelineConfig,
    SentenceSpan,
    TripletSource,
)

logger = logging.getLogger(__name__)

FIXATION_HEADER = ("study_id", "t_start_s", "t_end_s", "x_px", "y_px")
TRANSCRIPT_HEADER = ("study_id", "sentence_index", "t_start_s", "t_end_s", "text")
ANNOTATION_HEADER = (
    "study_id",
    "center_x_px",
    "center_y_px",
    "semi_axis_x_px",
    "semi_axis_y_px",
    "labels",
    "certainty",
)
META_HEADER = ("study_id", "width_px", "height_px")

#: Parsing aborts with TooManyRowErrorsError once a file accumulates more
#: malformed rows than this.
DEFAULT_ROW_ERROR_LIMIT = 100


# ---------------------------------------------------------------------------
# Row-level parsing helpers
# ---------------------------------------------------------------------------


class _RowErrors:
    """Collects per-row errors and aborts past a configurable limit."""

    def __init__(self, path, limit: int):
        self.path = str(path)
        self.limit = limit
        self.errors: list[RowError] = []

    def add(self, line_no: int, message: str) -> None:
        self.errors.append(RowError(line_no, message))
        if len(self.errors) > self.limit:
            raise TooManyRowErrorsError(self.path, self.errors)

    def as_tuple(self) -> tuple[RowError, ...]:
        return tuple(self.errors)


def _read_rows(path, expected_header: Sequence[str]):
    """Yield ``(line_no, row)`` for each data row of a canonical CSV file.

    ``line_no`` is the physical line on which the row ends (quoted fields may
    span lines). Raises SchemaError when the header row is absent or wrong.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header "
                              f"{','.join(expected_header)}") from None
        if header != list(expected_header):
            raise SchemaError(
                f"{path}: header {','.join(header)!r} does not match expected "
                f"{','.join(expected_header)!r}"
            )
        for row in reader:
            if not row:
                continue
            yield reader.line_num, row


def _float_field(raw: str, name: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{name}: not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"{name}: must be finite, got {raw!r}")
    return value


def _int_field(raw: str, name: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name}: not an integer: {raw!r}") from None


def _freeze_by_study(acc: dict[str, list]) -> Mapping[str, tuple]:
    return MappingProxyType({sid: tuple(records) for sid, records in acc.items()})


# ---------------------------------------------------------------------------
# Canonical table parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class MetaTable:
    """Parsed image-meta table: one ImageMeta per study."""

    by_study: Mapping[str, ImageMeta]
    row_errors: tuple[RowError, ...]


@dataclass(frozen=True, slots=True)
class FixationTable:
    """Parsed fixation table, grouped by study in file order.

    ``dropped_out_of_image`` counts rows whose center fell outside the image
    rectangle; those are discarded silently rather than reported as errors.
    """

    by_study: Mapping[str, tuple[Fixation, ...]]
    row_errors: tuple[RowError, ...]
    dropped_out_of_image: int


@dataclass(frozen=True, slots=True)
class TranscriptTable:
    """Parsed transcript table, grouped by study in file order."""

    by_study: Mapping[str, tuple[SentenceSpan, ...]]
    row_errors: tuple[RowError, ...]


@dataclass(frozen=True, slots=True)
class AnnotationTable:
    """Parsed ellipse-annotation table, grouped by study in file order."""

    by_study: Mapping[str, tuple[AnnotatedEllipse, ...]]
    row_errors: tuple[RowError, ...]


def parse_meta(path, *, max_row_errors: int = DEFAULT_ROW_ERROR_LIMIT) -> MetaTable:
    """Parse an image-meta CSV. Duplicate study ids keep the first row."""
    collector = _RowErrors(path, max_row_errors)
    by_study: dict[str, ImageMeta] = {}
    for line_no, row in _read_rows(path, META_HEADER):
        if len(row) != len(META_HEADER):
            collector.add(line_no, f"expected {len(META_HEADER)} fields, got {len(row)}")
            continue
        sid, width_raw, height_raw = row
        try:
            meta = ImageMeta(
                sid,
                _int_field(width_raw, "width_px"),
                _int_field(height_raw, "height_px"),
            )
        except (ValueError, ValidationError) as exc:
            collector.add(line_no, str(exc))
            continue
        if sid in by_study:
            collector.add(line_no, f"duplicate study_id {sid!r}; keeping first row")
            continue
        by_study[sid] = meta
    return MetaTable(MappingProxyType(dict(by_study)), collector.as_tuple())


def parse_fixations(
    path,
    metas: Mapping[str, ImageMeta],
    *,
    max_row_errors: int = DEFAULT_ROW_ERROR_LIMIT,
) -> FixationTable:
    """Parse a fixation CSV, dropping (and counting) out-of-image centers.

    Every row's study_id must be present in ``metas``; rows referencing
    unknown studies are reported as row errors.
    """
    collector = _RowErrors(path, max_row_errors)
    by_study: dict[str, list[Fixation]] = {}
    dropped = 0
    for line_no, row in _read_rows(path, FIXATION_HEADER):
        if len(row) != len(FIXATION_HEADER):
            collector.add(
                line_no, f"expected {len(FIXATION_HEADER)} fields, got {len(row)}"
            )
            continue
        sid, t0_raw, t1_raw, x_raw, y_raw = row
        meta = metas.get(sid)
        if meta is None:
            collector.add(line_no, f"unknown study_id {sid!r}: no image meta")
            continue
        try:
            fixation = Fixation(
                _float_field(x_raw, "x_px"),
                _float_field(y_raw, "y_px"),
                _float_field(t0_raw, "t_start_s"),
                _float_field(t1_raw, "t_end_s"),
            )
        except (ValueError, ValidationError) as exc:
            collector.add(line_no, str(exc))
            continue
        if not meta.contains_point(fixation.x_px, fixation.y_px):
            dropped += 1
            continue
        by_study.setdefault(sid, []).append(fixation)
    return FixationTable(_freeze_by_study(by_study), collector.as_tuple(), dropped)


def parse_transcript(
    path, *, max_row_errors: int = DEFAULT_ROW_ERROR_LIMIT
) -> TranscriptTable:
    """Parse a transcript CSV.

    Blank sentence text and duplicate (study_id, sentence_index) pairs are
    reported as row errors: both would poison downstream alignment.
    """
    collector = _RowErrors(path, max_row_errors)
    by_study: dict[str, list[SentenceSpan]] = {}
    seen: set[tuple[str, int]] = set()
    for line_no, row in _read_rows(path, TRANSCRIPT_HEADER):
        if len(row) != len(TRANSCRIPT_HEADER):
            collector.add(
                line_no, f"expected {len(TRANSCRIPT_HEADER)} fields, got {len(row)}"
            )
            continue
        sid, index_raw, t0_raw, t1_raw, text = row
        if not text.strip():
            collector.add(line_no, "text: must not be blank")
            continue
        try:
            span = SentenceSpan(
                _int_field(index_raw, "sentence_index"),
                text,
                _float_field(t0_raw, "t_start_s"),
                _float_field(t1_raw, "t_end_s"),
            )
        except (ValueError, ValidationError) as exc:
            collector.add(line_no, str(exc))
            continue
        key = (sid, span.sentence_index)
        if key in seen:
            collector.add(
                line_no, f"duplicate sentence_index {span.sentence_index} "
                f"for study {sid!r}"
            )
            continue
        seen.add(key)
        by_study.setdefault(sid, []).append(span)
    return TranscriptTable(_freeze_by_study(by_study), collector.as_tuple())


def parse_annotations(
    path, *, max_row_errors: int = DEFAULT_ROW_ERROR_LIMIT
) -> AnnotationTable:
    """Parse an ellipse-annotation CSV (labels ``;``-separated)."""
    collector = _RowErrors(path, max_row_errors)
    by_study: dict[str, list[AnnotatedEllipse]] = {}
    for line_no, row in _read_rows(path, ANNOTATION_HEADER):
        if len(row) != len(ANNOTATION_HEADER):
            collector.add(
                line_no, f"expected {len(ANNOTATION_HEADER)} fields, got {len(row)}"
            )
            continue
        sid, cx_raw, cy_raw, ax_raw, ay_raw, labels_raw, certainty_raw = row
        labels = tuple(part.strip() for part in labels_raw.split(";") if part.strip())
        try:
            ellipse = AnnotatedEllipse(
                _float_field(cx_raw, "center_x_px"),
                _float_field(cy_raw, "center_y_px"),
                _float_field(ax_raw, "semi_axis_x_px"),
                _float_field(ay_raw, "semi_axis_y_px"),
                labels,
                _int_field(certainty_raw, "certainty"),
            )
        except (ValueError, ValidationError) as exc:
            collector.add(line_no, str(exc))
            continue
        by_study.setdefault(sid, []).append(ellipse)
    return AnnotationTable(_freeze_by_study(by_study), collector.as_tuple())


# ---------------------------------------------------------------------------
# Canonical table writing
# ---------------------------------------------------------------------------


def _canonical_writer(fh):
    """CSV writer that quotes every non-numeric field.

    Numbers stay bare (shortest-repr floats round-trip exactly); strings —
    including free text — are always double-quoted with internal quotes
    doubled, and study ids containing delimiters stay safe.
    """
    return csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")


def _csv_text(value: str, field: str) -> str:
    """Guard a string destined for a CSV cell.

    The csv module cannot represent NUL in either direction, so such values
    could never round-trip; reject them up front with a clear error.
    """
    if "\x00" in value:
        raise ValidationError(field, "NUL character is not representable in CSV")
    return value


def write_meta(metas: Iterable[ImageMeta], path) -> int:
    """Write an image-meta CSV sorted by study_id. Returns the row count."""
    rows = sorted(metas, key=lambda m: m.study_id)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _canonical_writer(fh)
        writer.writerow(META_HEADER)
        for meta in rows:
            writer.writerow(
                [_csv_text(meta.study_id, "study_id"), meta.width_px, meta.height_px]
            )
    return len(rows)


def write_fixations(by_study: Mapping[str, Sequence[Fixation]], path) -> int:
    """Write a fixation CSV: studies sorted by id, rows in given order."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _canonical_writer(fh)
        writer.writerow(FIXATION_HEADER)
        for sid in sorted(by_study):
            _csv_text(sid, "study_id")
            for f in by_study[sid]:
                writer.writerow([sid, f.t_start_s, f.t_end_s, f.x_px, f.y_px])
                count += 1
    return count


def write_transcript(by_study: Mapping[str, Sequence[SentenceSpan]], path) -> int:
    """Write a transcript CSV: studies sorted by id, rows by sentence_index."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _canonical_writer(fh)
        writer.writerow(TRANSCRIPT_HEADER)
        for sid in sorted(by_study):
            _csv_text(sid, "study_id")
            spans = sorted(by_study[sid], key=lambda s: s.sentence_index)
            for s in spans:
                writer.writerow(
                    [
                        sid,
                        s.sentence_index,
                        s.t_start_s,
                        s.t_end_s,
                        _csv_text(s.text, "text"),
                    ]
                )
                count += 1
    return count


def write_annotations(by_study: Mapping[str, Sequence[AnnotatedEllipse]], path) -> int:
    """Write an ellipse-annotation CSV: studies sorted by id.

    Labels are joined with ``;``, so labels containing that separator are
    rejected (they could not round-trip).
    """
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _canonical_writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for sid in sorted(by_study):
            _csv_text(sid, "study_id")
            for e in by_study[sid]:
                for label in e.labels:
                    _csv_text(label, "labels")
                    if ";" in label:
                        raise ValidationError(
                            "labels", f"label {label!r} contains the ';' separator"
                        )
                writer.writerow(
                    [
                        sid,
                        e.center_x_px,
                        e.center_y_px,
                        e.semi_axis_x_px,
                        e.semi_axis_y_px,
                        ";".join(e.labels),
                        e.certainty,
                    ]
                )
                count += 1
    return count


# ---------------------------------------------------------------------------
# Triplet records (line-delimited JSON)
# ---------------------------------------------------------------------------

_TRIPLET_REQUIRED_KEYS = ("study_id", "box", "source", "config_fingerprint")
_TRIPLET_OPTIONAL_KEYS = (
    "statement",
    "label",
    "sentence_index",
    "labels",
    "certainty",
    "score",
)
_TRIPLET_ALL_KEYS = frozenset(_TRIPLET_REQUIRED_KEYS) | frozenset(_TRIPLET_OPTIONAL_KEYS)


def grounding_record(t: GroundingTriplet, config_fingerprint: str) -> dict:
    """Serializable record for one phrase-grounding triplet."""
    record = {
        "study_id": t.study_id,
        "box": [t.box.x_min, t.box.y_min, t.box.x_max, t.box.y_max],
        "statement": t.statement,
        "source": t.source.value,
        "config_fingerprint": config_fingerprint,
    }
    if t.sentence_index is not None:
        record["sentence_index"] = t.sentence_index
    return record


def detection_record(t: DetectionTriplet, config_fingerprint: str) -> dict:
    """Serializable record for one object-detection triplet."""
    return {
        "study_id": t.study_id,
        "box": [t.box.x_min, t.box.y_min, t.box.x_max, t.box.y_max],
        "label": t.label,
        "source": TripletSource.ANNOTATION.value,
        "config_fingerprint": config_fingerprint,
    }


def _canonical_triplet_record(record: Mapping, *, require_fingerprint: bool = True) -> dict:
    """Validate and normalize one triplet record.

    ``require_fingerprint=False`` admits externally produced records (for
    example model predictions) that have no pipeline configuration behind
    them; records written by this package always carry one.
    """
    out = {}
    for key, value in record.items():
        if value is None:
            continue
        if key not in _TRIPLET_ALL_KEYS:
            raise ValidationError(key, "unknown triplet record field")
        out[key] = value
    required = (
        _TRIPLET_REQUIRED_KEYS
        if require_fingerprint
        else tuple(k for k in _TRIPLET_REQUIRED_KEYS if k != "config_fingerprint")
    )
    for key in required:
        if key not in out:
            raise ValidationError(key, "missing from triplet record")
    if "statement" not in out and "label" not in out:
        raise ValidationError(
            "statement", "triplet record needs a statement or a label"
        )
    box = out["box"]
    if isinstance(box, BoundingBox):
        out["box"] = [box.x_min, box.y_min, box.x_max, box.y_max]
    else:
        b = BoundingBox(*box)  # validates shape and ordering
        out["box"] = [b.x_min, b.y_min, b.x_max, b.y_max]
    if isinstance(out["source"], TripletSource):
        out["source"] = out["source"].value
    if "labels" in out:
        out["labels"] = sorted(out["labels"])
    return out


def _triplet_sort_key(record: Mapping) -> tuple:
    return (
        record["study_id"],
        record.get("sentence_index", -1),
        record.get("label", ""),
        record.get("statement", ""),
        record["source"],
        record["box"],
    )


def write_triplets(records: Iterable[Mapping], path) -> int:
    """Write triplet records as canonical line-delimited JSON.

    Records are sorted by (study_id, sentence_index/label, statement,
    source, box) and serialized with sorted keys and fixed separators, so
    the same record set always produces byte-identical files regardless of
    input order or the number of workers that produced it.
    """
    rows = sorted(
        (_canonical_triplet_record(r) for r in records), key=_triplet_sort_key
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(
                json.dumps(row, sort_keys=True, ensure_ascii=False,
                           separators=(",", ":"))
            )
            fh.write("\n")
    return len(rows)


def read_triplets(path) -> list[dict]:
    """Read a triplet file back into records with BoundingBox boxes.

    Accepts records without a config fingerprint so externally produced
    prediction files can be evaluated.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RowError(line_no, f"invalid record: {exc}") from None
            try:
                record = _canonical_triplet_record(raw, require_fingerprint=False)
            except (ValidationError, TypeError) as exc:
                raise RowError(line_no, str(exc)) from None
            record["box"] = BoundingBox(*record["box"])
            records.append(record)
    return records


# ---------------------------------------------------------------------------
# Study bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StudyBundle:
    """Everything known about one study, keyed by its image meta.

    Child records are stored without study ids; membership in the bundle is
    what ties them to ``meta.study_id``.
    """

    meta: ImageMeta
    fixations: tuple[Fixation, ...] = ()
    sentences: tuple[SentenceSpan, ...] = ()
    ellipses: tuple[AnnotatedEllipse, ...] = ()
    image_path: str | None = None

    def __post_init__(self):
        if not isinstance(self.meta, ImageMeta):
            raise ValidationError("meta", "must be an ImageMeta")
        for name, cls in (
            ("fixations", Fixation),
            ("sentences", SentenceSpan),
            ("ellipses", AnnotatedEllipse),
        ):
            values = tuple(getattr(self, name))
            if any(not isinstance(v, cls) for v in values):
                raise ValidationError(name, f"must contain only {cls.__name__}")
            object.__setattr__(self, name, values)
        if self.image_path is not None and not isinstance(self.image_path, str):
            raise ValidationError("image_path", "must be None or a string")

    @property
    def study_id(self) -> str:
        return self.meta.study_id


def assemble_bundles(
    metas: Mapping[str, ImageMeta],
    fixations: Mapping[str, Sequence[Fixation]] | None = None,
    sentences: Mapping[str, Sequence[SentenceSpan]] | None = None,
    ellipses: Mapping[str, Sequence[AnnotatedEllipse]] | None = None,
) -> tuple[StudyBundle, ...]:
    """Join per-study tables into bundles, sorted by study id.

    The meta table is the roster: every study id appearing in a child table
    must have image meta, and studies with meta but no child records get
    empty tuples.
    """
    fixations = fixations or {}
    sentences = sentences or {}
    ellipses = ellipses or {}
    for name, table in (
        ("fixations", fixations),
        ("sentences", sentences),
        ("ellipses", ellipses),
    ):
        unknown = sorted(set(table) - set(metas))
        if unknown:
            raise ValidationError(
                name, f"study ids without image meta: {', '.join(unknown)}"
            )
    return tuple(
        StudyBundle(
            meta=metas[sid],
            fixations=tuple(fixations.get(sid, ())),
            sentences=tuple(sentences.get(sid, ())),
            ellipses=tuple(ellipses.get(sid, ())),
        )
        for sid in sorted(metas)
    )


# ---------------------------------------------------------------------------
# Dataset splitting
# ---------------------------------------------------------------------------


def split_dataset(
    study_ids: Iterable[str], ratio: float, seed: int
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Deterministic uniform train/validation split.

    The validation set receives ``ratio`` of the ids, rounded half-up using
    decimal-exact arithmetic (``0.25`` of 10 ids → 3). Both returned tuples
    are sorted; the same ids, ratio, and seed always produce the same split.
    """
    ids = sorted(study_ids)
    if len(set(ids)) != len(ids):
        raise ValidationError("study_ids", "must be unique")
    try:
        ratio_exact = Fraction(str(ratio))
    except ValueError:
        raise ValidationError("ratio", f"not a number: {ratio!r}") from None
    if not 0 <= ratio_exact <= 1:
        raise ValidationError("ratio", f"must be in [0, 1], got {ratio}")
    val_count = int(ratio_exact * len(ids) + Fraction(1, 2))
    rng = random.Random(seed)
    val = set(rng.sample(ids, val_count))
    train = tuple(sid for sid in ids if sid not in val)
    return train, tuple(sorted(val))


def write_id_list(ids: Iterable[str], path) -> int:
    """Write study ids one per line."""
    ids = list(ids)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid in ids:
            fh.write(sid)
            fh.write("\n")
    return len(ids)


def read_id_list(path) -> tuple[str, ...]:
    """Read study ids, one per line, skipping blanks."""
    with open(path, "r", encoding="utf-8") as fh:
        return tuple(line.strip() for line in fh if line.strip())


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

_CONFIG_FLOAT_FIELDS = ("psi_s", "threshold_frac", "min_area_frac")


def parse_config_file(path) -> dict[str, str]:
    """Parse a ``key=value`` config file into a string mapping.

    Blank lines and ``#`` comments are ignored. Keys are validated later by
    :func:`make_config`.
    """
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep:
                raise ValidationError(
                    "config", f"{path}: line {line_no}: expected key=value, "
                    f"got {stripped!r}"
                )
            key = key.strip()
            value = value.strip()
            if not key:
                raise ValidationError(
                    "config", f"{path}: line {line_no}: empty key"
                )
            if key in values:
                raise ValidationError(
                    "config", f"{path}: line {line_no}: duplicate key {key!r}"
                )
            values[key] = value
    return values


def _config_float(raw: str, name: str) -> float:
    """Parse a config float, accepting ``p/q`` rational spellings."""
    try:
        if "/" in raw:
            return float(Fraction(raw))
        return float(raw)
    except (ValueError, ZeroDivisionError):
        raise ValidationError(name, f"not a number: {raw!r}") from None


def make_config(values: Mapping[str, str]) -> PipelineConfig:
    """Build a PipelineConfig from string key/value pairs.

    Accepted keys are exactly the config fields. ``sigma_px`` accepts
    ``auto`` (or ``none``) for the per-image default; float fields accept
    ``p/q`` rational spellings.
    """
    kwargs: dict = {}
    for key, raw in values.items():
        if key in _CONFIG_FLOAT_FIELDS:
            kwargs[key] = _config_float(raw, key)
        elif key == "sigma_px":
            kwargs[key] = (
                None if raw.lower() in ("auto", "none") else _config_float(raw, key)
            )
        elif key == "seed":
            try:
                kwargs[key] = int(raw)
            except ValueError:
                raise ValidationError("seed", f"not an integer: {raw!r}") from None
        elif key in ("connectivity", "assignment_mode"):
            kwargs[key] = raw
        else:
            raise ValidationError(key, "unknown config key")
    return PipelineConfig(**kwargs)


# ---------------------------------------------------------------------------
# Public-dataset adapter
# ---------------------------------------------------------------------------

# Column spellings observed across the public dataset's phase layouts; the
# first present alias wins.
_ADAPTER_FIXATION_COLUMNS = {
    "t_start_s": ("timestamp_start_fixation",),
    "t_end_s": ("timestamp_end_fixation",),
    "x_px": ("x_position", "average_x_position"),
    "y_px": ("y_position", "average_y_position"),
}
_ADAPTER_WORD_COLUMNS = {
    "word": ("word",),
    "t_start_s": ("timestamp_start_word",),
    "t_end_s": ("timestamp_end_word",),
}
_ADAPTER_ELLIPSE_FIXED = ("xmin", "ymin", "xmax", "ymax", "certainty")
_SENTENCE_TERMINATORS = (".", "!", "?")


@dataclass(frozen=True, slots=True)
class SkippedStudy:
    """One study the adapter could not import, with the reason."""

    study_id: str
    reason: str


@dataclass(frozen=True, slots=True)
class ReflacxImport:
    """Adapter output: imported bundles plus a skip/warning report."""

    bundles: tuple[StudyBundle, ...]
    skipped: tuple[SkippedStudy, ...]
    warnings: tuple[str, ...]


def _pick_column(fieldnames: Sequence[str], aliases: Mapping[str, Sequence[str]],
                 path) -> dict[str, str]:
    chosen = {}
    for target, names in aliases.items():
        for name in names:
            if name in fieldnames:
                chosen[target] = name
                break
        else:
            raise SchemaError(
                f"{path}: none of {', '.join(names)} found in header "
                f"{', '.join(fieldnames)}"
            )
    return chosen


def _adapter_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no", ""):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _dict_rows(path) -> tuple[Sequence[str], list[dict]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        return tuple(reader.fieldnames), list(reader)


def _adapter_fixations(path, meta: ImageMeta) -> tuple[tuple[Fixation, ...], int]:
    fieldnames, rows = _dict_rows(path)
    cols = _pick_column(fieldnames, _ADAPTER_FIXATION_COLUMNS, path)
    fixations = []
    dropped = 0
    for row in rows:
        fixation = Fixation(
            _float_field(row[cols["x_px"]], "x_px"),
            _float_field(row[cols["y_px"]], "y_px"),
            _float_field(row[cols["t_start_s"]], "t_start_s"),
            _float_field(row[cols["t_end_s"]], "t_end_s"),
        )
        if meta.contains_point(fixation.x_px, fixation.y_px):
            fixations.append(fixation)
        else:
            dropped += 1
    return tuple(fixations), dropped


def _adapter_sentences(path) -> tuple[SentenceSpan, ...]:
    """Segment a word-level transcription into sentence spans.

    Words accumulate into the current sentence; a word ending with ``.``,
    ``!``, or ``?`` closes it. A trailing unterminated run still becomes a
    final sentence.
    """
    fieldnames, rows = _dict_rows(path)
    cols = _pick_column(fieldnames, _ADAPTER_WORD_COLUMNS, path)
    sentences: list[SentenceSpan] = []
    words: list[str] = []
    span_start: float | None = None
    span_end: float | None = None

    def close_sentence():
        nonlocal words, span_start, span_end
        if words:
            sentences.append(
                SentenceSpan(len(sentences), " ".join(words), span_start, span_end)
            )
        words = []
        span_start = None
        span_end = None

    for row in rows:
        word = row[cols["word"]].strip()
        if not word:
            continue
        t0 = _float_field(row[cols["t_start_s"]], "t_start_s")
        t1 = _float_field(row[cols["t_end_s"]], "t_end_s")
        if span_start is None:
            span_start = t0
        span_end = t1
        words.append(word)
        if word.endswith(_SENTENCE_TERMINATORS):
            close_sentence()
    close_sentence()
    for prev, nxt in zip(sentences, sentences[1:]):
        if nxt.t_start_s < prev.t_end_s:
            raise ValidationError(
                "sentences",
                f"sentence {nxt.sentence_index} starts before sentence "
                f"{prev.sentence_index} ends",
            )
    return tuple(sentences)


def _adapter_ellipses(
    path, study_id: str, warnings: list[str]
) -> tuple[AnnotatedEllipse, ...]:
    fieldnames, rows = _dict_rows(path)
    missing = [c for c in _ADAPTER_ELLIPSE_FIXED if c not in fieldnames]
    if missing:
        raise SchemaError(f"{path}: missing columns: {', '.join(missing)}")
    label_columns = [c for c in fieldnames if c not in _ADAPTER_ELLIPSE_FIXED]
    ellipses = []
    for row_no, row in enumerate(rows, start=2):
        x_min = _float_field(row["xmin"], "xmin")
        y_min = _float_field(row["ymin"], "ymin")
        x_max = _float_field(row["xmax"], "xmax")
        y_max = _float_field(row["ymax"], "ymax")
        labels = tuple(c for c in label_columns if _adapter_bool(row[c]))
        if not labels:
            warnings.append(
                f"{study_id}: ellipse at line {row_no} dropped (no labels set)"
            )
            continue
        if x_max <= x_min or y_max <= y_min:
            warnings.append(
                f"{study_id}: ellipse at line {row_no} dropped (degenerate extent)"
            )
            continue
        certainty = int(_float_field(row["certainty"], "certainty"))
        ellipses.append(
            AnnotatedEllipse(
                (x_min + x_max) / 2.0,
                (y_min + y_max) / 2.0,
                (x_max - x_min) / 2.0,
                (y_max - y_min) / 2.0,
                labels,
                certainty,
            )
        )
    return tuple(ellipses)


def import_reflacx(root, *, phase: int = 3) -> ReflacxImport:
    """Map the public eye-tracking dataset's directory layout onto bundles.

    Expects ``metadata_phase_{phase}.csv`` at the root and per-study
    directories under ``main_data/`` containing ``fixations.csv``,
    ``timestamps_transcription.csv``, and ``anomaly_location_ellipses.csv``.
    Import is best-effort per study: studies that fail validation are
    skipped and reported, never fatal to the whole import.
    """
    root = Path(root)
    metadata_path = root / f"metadata_phase_{phase}.csv"
    if not metadata_path.is_file():
        available = sorted(p.name for p in root.glob("metadata_phase_*.csv"))
        raise SchemaError(
            f"{metadata_path}: not found"
            + (f" (available: {', '.join(available)})" if available else "")
        )
    fieldnames, rows = _dict_rows(metadata_path)
    required = [c for c in ("id", "image_size_x", "image_size_y")
                if c not in fieldnames]
    if required:
        raise SchemaError(
            f"{metadata_path}: missing columns: {', '.join(required)}"
        )

    bundles: list[StudyBundle] = []
    skipped: list[SkippedStudy] = []
    warnings: list[str] = []
    seen: set[str] = set()
    total_dropped = 0
    for row in rows:
        sid = (row.get("id") or "").strip()
        if not sid:
            skipped.append(SkippedStudy("<missing id>", "blank id in metadata"))
            continue
        if sid in seen:
            skipped.append(SkippedStudy(sid, "duplicate metadata row"))
            continue
        seen.add(sid)
        discarded_raw = row.get("eye_tracking_data_discarded", "")
        try:
            if discarded_raw and _adapter_bool(discarded_raw):
                skipped.append(SkippedStudy(sid, "eye tracking data discarded"))
                continue
        except ValueError as exc:
            skipped.append(SkippedStudy(sid, str(exc)))
            continue
        study_dir = root / "main_data" / sid
        try:
            meta = ImageMeta(
                sid,
                int(float(row["image_size_x"])),
                int(float(row["image_size_y"])),
            )
            if not study_dir.is_dir():
                raise ValidationError("study_dir", f"{study_dir}: not a directory")
            fixation_path = study_dir / "fixations.csv"
            if not fixation_path.is_file():
                raise ValidationError("fixations", f"{fixation_path}: not found")
            fixations, dropped = _adapter_fixations(fixation_path, meta)
            total_dropped += dropped

            transcription_path = study_dir / "timestamps_transcription.csv"
            if transcription_path.is_file():
                sentences = _adapter_sentences(transcription_path)
            else:
                sentences = ()
                warnings.append(f"{sid}: no transcription file; sentences empty")

            ellipse_path = study_dir / "anomaly_location_ellipses.csv"
            if ellipse_path.is_file():
                ellipses = _adapter_ellipses(ellipse_path, sid, warnings)
            else:
                ellipses = ()
                warnings.append(f"{sid}: no ellipse file; annotations empty")
        except (ValidationError, SchemaError, ValueError, OSError) as exc:
            skipped.append(SkippedStudy(sid, str(exc)))
            continue
        bundles.append(
            StudyBundle(
                meta=meta,
                fixations=fixations,
                sentences=sentences,
                ellipses=ellipses,
                image_path=(row.get("image") or None),
            )
        )
    if total_dropped:
        logger.info("adapter dropped %d out-of-image fixations", total_dropped)
    bundles.sort(key=lambda b: b.study_id)
    return ReflacxImport(tuple(bundles), tuple(skipped), tuple(warnings))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

#: role -> (outline RGBA, fill RGBA or None)
_ROLE_STYLES = {
    "gt": ((46, 204, 113, 255), (46, 204, 113, 80)),
    "pred": ((66, 135, 245, 255), None),
    "et": ((255, 105, 180, 255), None),
}


def render_overlay(
    image_path,
    boxes: Sequence[tuple[BoundingBox, str]],
    out_path,
    *,
    heatmap: Heatmap | None = None,
    meta: ImageMeta | None = None,
    heatmap_alpha: float = 0.45,
) -> None:
    """Write an overlay image: boxes color-coded by role over an optional base.

    Roles: ``gt`` boxes are filled translucently, ``pred`` boxes are
    outlined, ``et`` boxes are outlined in a distinct color. The heatmap, if
    given, is alpha-blended in red under the boxes. When ``image_path`` is
    None the base canvas is black, sized from ``meta`` or the heatmap.
    """
    if not 0 <= heatmap_alpha <= 1:
        raise ValidationError("heatmap_alpha", "must be in [0, 1]")
    if image_path is not None:
        base = Image.open(image_path).convert("RGBA")
    elif meta is not None:
        base = Image.new("RGBA", (meta.width_px, meta.height_px), (0, 0, 0, 255))
    elif heatmap is not None:
        h, w = heatmap.values.shape
        base = Image.new("RGBA", (w, h), (0, 0, 0, 255))
    else:
        raise ValidationError(
            "image_path", "need an image path, image meta, or a heatmap for sizing"
        )

    if heatmap is not None:
        values = heatmap.values
        if (values.shape[1], values.shape[0]) != base.size:
            raise ValidationError(
                "heatmap", f"shape {values.shape} does not match image size "
                f"{base.size}"
            )
        peak = float(values.max())
        intensity = values / peak if peak > 0 else values
        layer = np.zeros((values.shape[0], values.shape[1], 4), dtype=np.uint8)
        layer[..., 0] = np.rint(intensity * 255).astype(np.uint8)
        layer[..., 3] = np.rint(intensity * heatmap_alpha * 255).astype(np.uint8)
        base = Image.alpha_composite(base, Image.fromarray(layer, "RGBA"))

    box_layer = Image.new("RGBA", base.size, (0, 0, 0, 0))
    draw = ImageDraw.Draw(box_layer)
    for box, role in boxes:
        if not isinstance(box, BoundingBox):
            raise ValidationError("boxes", "must contain BoundingBox values")
        try:
            outline, fill = _ROLE_STYLES[role]
        except KeyError:
            raise ValidationError(
                "boxes", f"unknown role {role!r}; expected one of "
                f"{', '.join(sorted(_ROLE_STYLES))}"
            ) from None
        # Drawing corners are inclusive; boxes are half-open.
        corners = [box.x_min, box.y_min, box.x_max - 1, box.y_max - 1]
        if fill is not None:
            draw.rectangle(corners, fill=fill)
        draw.rectangle(corners, outline=outline, width=2)
    composed = Image.alpha_composite(base, box_layer)
    out_path = Path(out_path)
    if out_path.suffix.lower() in (".jpg", ".jpeg"):
        composed = composed.convert("RGB")
    composed.save(out_path)


def write_heatmap_png(heatmap: Heatmap, path) -> None:
    """Write a heatmap as 8-bit grayscale, quantizing only at this boundary.

    The in-memory map stays float; pixel values are scaled so the peak maps
    to 255 (a no-op for already-normalized maps) and rounded once.
    """
    values = heatmap.values
    peak = float(values.max())
    scaled = values * (255.0 / peak) if peak > 0 else values
    arr = np.rint(np.clip(scaled, 0.0, 255.0)).astype(np.uint8)
    Image.fromarray(arr, "L").save(Path(path), format="PNG")
