"""Corpus-level flows: box generation, annotation repurposing, CR analysis.

Each flow maps a per-study function over bundles with an optional thread
pool and collects results in bundle order, so outputs are independent of
worker count and completion order; serialization then applies its own
canonical sort on top.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, TypeVar

from .errors import GazeboxError, StudyProcessingError, ValidationError
from .heatmap import BoxOutcome, generate_et_boxes
from .io import StudyBundle, detection_record, grounding_record
from .metrics import CrReport, EvalPair, TaggedBox, cr_report, greedy_match
from .model import (
    BoundingBox,
    GroundingTriplet,
    PipelineConfig,
    TripletSource,
)
from .repurpose import (
    LabelLexicon,
    build_od_triplets,
    build_pg_triplets,
    build_statement,
    ellipse_to_box,
    is_negative_sentence,
)

logger = logging.getLogger(__name__)

_T = TypeVar("_T")

#: Tag used for gaze-derived boxes in containment-ratio reports.
ET_SOURCE = "et"
#: Tag used for annotation-derived boxes in containment-ratio reports.
ANNOTATION_SOURCE = "annotation"


def default_workers() -> int:
    """Worker-pool size used when none is requested: available parallelism."""
    counter = getattr(os, "process_cpu_count", os.cpu_count)
    return max(1, counter() or 1)


def _map_bundles(
    fn: Callable[[StudyBundle], _T],
    bundles: Sequence[StudyBundle],
    workers: int,
) -> list[_T]:
    """Apply ``fn`` per bundle, preserving input order.

    Failures are re-raised tagged with the offending study id.
    """
    if workers < 1:
        raise ValidationError("workers", f"must be >= 1, got {workers}")

    def guarded(bundle: StudyBundle) -> _T:
        try:
            return fn(bundle)
        except StudyProcessingError:
            raise
        except GazeboxError as exc:
            raise StudyProcessingError(bundle.study_id, exc) from exc

    if workers == 1 or len(bundles) <= 1:
        return [guarded(b) for b in bundles]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, bundles))


def _ordered_fixations(bundle: StudyBundle):
    """Bundle fixations sorted by time; file order is not significant."""
    return sorted(bundle.fixations, key=lambda f: (f.t_start_s, f.t_end_s))


def _ordered_sentences(bundle: StudyBundle):
    """Bundle sentences sorted by index; overlap checks happen downstream."""
    return sorted(bundle.sentences, key=lambda s: s.sentence_index)


# ---------------------------------------------------------------------------
# Gaze-box generation flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SentenceDiagnostic:
    """A sentence that produced no box, and why."""

    study_id: str
    sentence_index: int
    outcome: BoxOutcome
    fixation_count: int


@dataclass(frozen=True, slots=True)
class GenEtResult:
    """Output of the gaze-box flow: records plus per-sentence diagnostics."""

    records: tuple[dict, ...]
    diagnostics: tuple[SentenceDiagnostic, ...]

    @property
    def box_count(self) -> int:
        return len(self.records)


def run_gen_et(
    bundles: Sequence[StudyBundle],
    cfg: PipelineConfig,
    workers: int = 1,
) -> GenEtResult:
    """Generate one gaze-derived grounding record per boxable sentence.

    Each record carries the sentence's text as its statement and the
    config fingerprint. Sentences without a box are reported as
    diagnostics, not errors.
    """
    fingerprint = cfg.fingerprint()

    def one(bundle: StudyBundle):
        sentences = _ordered_sentences(bundle)
        text_by_index = {s.sentence_index: s.text for s in sentences}
        results = generate_et_boxes(
            _ordered_fixations(bundle), sentences, bundle.meta, cfg
        )
        records, diagnostics = [], []
        for r in results:
            if r.outcome is BoxOutcome.OK:
                triplet = GroundingTriplet(
                    bundle.study_id,
                    r.box,
                    text_by_index[r.sentence_index],
                    TripletSource.ET,
                    r.sentence_index,
                )
                records.append(grounding_record(triplet, fingerprint))
            else:
                diagnostics.append(
                    SentenceDiagnostic(
                        bundle.study_id,
                        r.sentence_index,
                        r.outcome,
                        r.fixation_count,
                    )
                )
        return records, diagnostics

    records: list[dict] = []
    diagnostics: list[SentenceDiagnostic] = []
    for study_records, study_diagnostics in _map_bundles(one, bundles, workers):
        records.extend(study_records)
        diagnostics.extend(study_diagnostics)
    return GenEtResult(tuple(records), tuple(diagnostics))


# ---------------------------------------------------------------------------
# Annotation repurposing flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RepurposeResult:
    """Output of the annotation-repurposing flow."""

    pg_records: tuple[dict, ...]
    od_records: tuple[dict, ...]


def run_repurpose(
    bundles: Sequence[StudyBundle],
    lex: LabelLexicon,
    cfg: PipelineConfig,
    workers: int = 1,
) -> RepurposeResult:
    """Convert ellipse annotations into grounding and detection records."""
    fingerprint = cfg.fingerprint()

    def one(bundle: StudyBundle):
        od = build_od_triplets(bundle.study_id, bundle.ellipses, bundle.meta)
        pg = build_pg_triplets(
            bundle.study_id,
            bundle.ellipses,
            _ordered_sentences(bundle),
            bundle.meta,
            lex,
            cfg,
        )
        return (
            [grounding_record(t, fingerprint) for t in pg],
            [detection_record(t, fingerprint) for t in od],
        )

    pg_records: list[dict] = []
    od_records: list[dict] = []
    for study_pg, study_od in _map_bundles(one, bundles, workers):
        pg_records.extend(study_pg)
        od_records.extend(study_od)
    return RepurposeResult(tuple(pg_records), tuple(od_records))


# ---------------------------------------------------------------------------
# Containment-ratio flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CrAnalysis:
    """Containment of annotation boxes inside gaze boxes, with tallies.

    ``sentences_without_annotation`` counts gaze boxes whose sentence no
    annotation refers to (expected to dominate; they are excluded from the
    join rather than reported as unpairable). ``ellipses_without_statement``
    counts annotation boxes whose labels no retained sentence implies.
    """

    report: CrReport
    et_box_count: int
    annotation_box_count: int
    sentences_without_annotation: int
    ellipses_without_statement: int


def run_cr(
    bundles: Sequence[StudyBundle],
    lex: LabelLexicon,
    cfg: PipelineConfig,
    workers: int = 1,
) -> CrAnalysis:
    """How much of each annotation box falls inside the gaze box of the
    sentences that imply its labels.

    Pairing is per sentence: an annotation box whose statement spans several
    sentences contributes one sample against each of those sentences' gaze
    boxes. Annotation boxes whose implying sentence produced no gaze box
    show up in the report's unpairable list.
    """

    def one(bundle: StudyBundle):
        sid = bundle.study_id
        sentences = _ordered_sentences(bundle)
        results = generate_et_boxes(
            _ordered_fixations(bundle), sentences, bundle.meta, cfg
        )
        containers = [
            TaggedBox(sid, str(r.sentence_index), ET_SOURCE, r.box)
            for r in results
            if r.outcome is BoxOutcome.OK
        ]
        retained = [
            (s.sentence_index, s.text)
            for s in sentences
            if not is_negative_sentence(s.text)
        ]
        containeds = []
        orphan_ellipses = 0
        for e in bundle.ellipses:
            box = ellipse_to_box(e, bundle.meta)
            statement = build_statement(e.labels, retained, lex)
            if statement is None:
                orphan_ellipses += 1
                continue
            for index in statement.source_sentence_indices:
                containeds.append(
                    TaggedBox(sid, str(index), ANNOTATION_SOURCE, box)
                )
        return containers, containeds, orphan_ellipses

    containers: list[TaggedBox] = []
    containeds: list[TaggedBox] = []
    ellipses_without_statement = 0
    for study_containers, study_containeds, orphans in _map_bundles(
        one, bundles, workers
    ):
        containers.extend(study_containers)
        containeds.extend(study_containeds)
        ellipses_without_statement += orphans

    # Sentences no annotation refers to are the normal case, not a pairing
    # defect; drop them from the join so the unpairable list stays useful.
    contained_keys = {(t.study_id, t.key) for t in containeds}
    joinable = [t for t in containers if (t.study_id, t.key) in contained_keys]
    report = cr_report(joinable, containeds)
    return CrAnalysis(
        report=report,
        et_box_count=len(containers),
        annotation_box_count=len(containeds),
        sentences_without_annotation=len(containers) - len(joinable),
        ellipses_without_statement=ellipses_without_statement,
    )


# ---------------------------------------------------------------------------
# Evaluation pairing (file-level records -> EvalPairs)
# ---------------------------------------------------------------------------


def _record_score(record: Mapping) -> float:
    score = record.get("score", 0.0)
    try:
        return float(score)
    except (TypeError, ValueError):
        raise ValidationError("score", f"not a number: {score!r}") from None


def pair_by_statement(
    gt_records: Sequence[Mapping],
    pred_records: Sequence[Mapping],
) -> list[EvalPair]:
    """Join records one-to-one on (study_id, statement).

    Every ground-truth record must carry a statement, and each key must be
    unique on both sides. Ground truths without a prediction keep
    ``pred_box=None``; predictions without a ground truth are logged and
    ignored.
    """
    preds: dict[tuple[str, str], BoundingBox] = {}
    for record in pred_records:
        statement = record.get("statement")
        if statement is None:
            raise ValidationError("statement", "prediction record has none")
        key = (record["study_id"], statement)
        if key in preds:
            raise ValidationError(
                "statement", f"duplicate prediction for {key!r}"
            )
        preds[key] = record["box"]
    pairs = []
    seen: set[tuple[str, str]] = set()
    for record in gt_records:
        statement = record.get("statement")
        if statement is None:
            raise ValidationError("statement", "ground-truth record has none")
        key = (record["study_id"], statement)
        if key in seen:
            raise ValidationError(
                "statement", f"duplicate ground truth for {key!r}"
            )
        seen.add(key)
        pairs.append(
            EvalPair(
                record["study_id"],
                record["box"],
                preds.pop(key, None),
                label=record.get("label"),
                statement=statement,
            )
        )
    for key in preds:
        logger.warning("prediction without ground truth: %r", key)
    return pairs


def pair_by_label(
    gt_records: Sequence[Mapping],
    pred_records: Sequence[Mapping],
    label_gated: bool = True,
) -> list[EvalPair]:
    """Greedy per-study matching of labeled predictions to ground truths.

    Records must carry labels. Predictions may carry a ``score`` (default
    0.0) used to break IoU ties. Pairs come back grouped by study id in
    sorted order, ground truths in record order within each study.
    """
    gts_by_study: dict[str, list[tuple[BoundingBox, str]]] = {}
    for record in gt_records:
        label = record.get("label")
        if label is None:
            raise ValidationError("label", "ground-truth record has none")
        gts_by_study.setdefault(record["study_id"], []).append(
            (record["box"], label)
        )
    preds_by_study: dict[str, list[tuple[BoundingBox, str, float]]] = {}
    for record in pred_records:
        label = record.get("label")
        if label is None:
            raise ValidationError("label", "prediction record has none")
        preds_by_study.setdefault(record["study_id"], []).append(
            (record["box"], label, _record_score(record))
        )
    unknown = sorted(set(preds_by_study) - set(gts_by_study))
    for sid in unknown:
        logger.warning("predictions for study without ground truth: %r", sid)
    pairs = []
    for sid in sorted(gts_by_study):
        pairs.extend(
            greedy_match(
                sid, preds_by_study.get(sid, []), gts_by_study[sid], label_gated
            )
        )
    return pairs
