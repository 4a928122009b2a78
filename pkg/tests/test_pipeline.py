"""Corpus flows: gaze-box generation, repurposing, CR analysis, eval pairing."""

import logging

import pytest

from gazebox.errors import StudyProcessingError, ValidationError
from gazebox.heatmap import BoxOutcome
from gazebox.io import StudyBundle
from gazebox.metrics import TaggedBox
from gazebox.model import (
    AnnotatedEllipse,
    BoundingBox,
    Fixation,
    ImageMeta,
    PipelineConfig,
    SentenceSpan,
)
from gazebox.pipeline import (
    ANNOTATION_SOURCE,
    ET_SOURCE,
    default_workers,
    pair_by_label,
    pair_by_statement,
    run_cr,
    run_gen_et,
    run_repurpose,
)
from gazebox.repurpose import LabelLexicon
from gazebox.synth import SentenceSynthSpec, SynthSpec, synth_study

CFG = PipelineConfig()
LEX = LabelLexicon.parse(
    "Lesion: lesion\nCardiomegaly: heart, enlarged\nNodule: nodule\nEdema: edema"
)


def bundle(sid="s1", w=100, h=100, fixations=(), sentences=(), ellipses=()):
    return StudyBundle(
        meta=ImageMeta(sid, w, h),
        fixations=tuple(fixations),
        sentences=tuple(sentences),
        ellipses=tuple(ellipses),
    )


def clustered_bundle():
    """Fixations clustered at (40,40) during sentence 0 and (70,60) during
    sentence 1; sentences 2-3 have no fixations; sentence 3 is negative."""
    fixations = [
        Fixation(40 + (i % 3), 40 + (i % 2), 0.1 + 0.35 * i, 0.4 + 0.35 * i)
        for i in range(10)
    ] + [
        Fixation(70 + (i % 3), 60 + (i % 2), 5.1 + 0.35 * i, 5.4 + 0.35 * i)
        for i in range(10)
    ]
    sentences = (
        SentenceSpan(0, "A lesion is seen.", 0.0, 4.0),
        SentenceSpan(1, "The heart is enlarged.", 5.0, 9.0),
        SentenceSpan(2, "A nodule is here.", 10.0, 14.0),
        SentenceSpan(3, "No edema.", 15.0, 16.0),
    )
    ellipses = (
        AnnotatedEllipse(40.0, 40.0, 5.0, 5.0, ("Lesion",), 5),
        AnnotatedEllipse(20.0, 20.0, 4.0, 4.0, ("Nodule",), 3),
        AnnotatedEllipse(50.0, 50.0, 4.0, 4.0, ("Edema",), 2),
    )
    return bundle(fixations=fixations, sentences=sentences, ellipses=ellipses)


def synth_bundles(n=4):
    bundles = []
    for k in range(n):
        study = synth_study(
            SynthSpec(
                study_id=f"s{k}",
                width_px=160,
                height_px=140,
                sentences=(
                    SentenceSynthSpec(BoundingBox(20, 20, 70, 60)),
                    SentenceSynthSpec(BoundingBox(90, 70, 150, 130)),
                ),
                seed=k,
            )
        )
        bundles.append(
            StudyBundle(
                meta=study.meta,
                fixations=study.fixations,
                sentences=study.sentences,
            )
        )
    return bundles


# ---------------------------------------------------------------------------
# Gaze-box flow
# ---------------------------------------------------------------------------


class TestRunGenEt:
    def test_records_and_diagnostics(self):
        result = run_gen_et([clustered_bundle()], CFG)
        assert result.box_count == 2
        first = result.records[0]
        assert first["study_id"] == "s1"
        assert first["source"] == "ET"
        assert first["statement"] == "A lesion is seen."
        assert first["sentence_index"] == 0
        assert first["config_fingerprint"] == CFG.fingerprint()
        assert isinstance(first["box"], list) and len(first["box"]) == 4
        outcomes = {
            d.sentence_index: d.outcome for d in result.diagnostics
        }
        assert outcomes == {
            2: BoxOutcome.NO_FIXATIONS,
            3: BoxOutcome.NO_FIXATIONS,
        }
        assert all(d.fixation_count == 0 for d in result.diagnostics)

    def test_empty_mask_diagnostic(self):
        # A very narrow kernel leaves a component below the area floor.
        b = bundle(
            fixations=(Fixation(50.0, 50.0, 1.0, 1.5),),
            sentences=(SentenceSpan(0, "Text here.", 0.5, 2.0),),
        )
        result = run_gen_et([b], PipelineConfig(sigma_px=0.5))
        assert result.records == ()
        (diag,) = result.diagnostics
        assert diag.outcome is BoxOutcome.EMPTY_MASK
        assert diag.fixation_count == 1

    def test_unsorted_input_is_sorted_internally(self):
        base = clustered_bundle()
        shuffled = StudyBundle(
            meta=base.meta,
            fixations=base.fixations[::-1],
            sentences=base.sentences[::-1],
            ellipses=base.ellipses,
        )
        assert run_gen_et([shuffled], CFG) == run_gen_et([base], CFG)

    def test_study_order_preserved(self):
        bundles = synth_bundles(3)
        result = run_gen_et(bundles, CFG)
        ids = [r["study_id"] for r in result.records]
        assert ids == sorted(ids)


# ---------------------------------------------------------------------------
# Worker mapping
# ---------------------------------------------------------------------------


class TestWorkers:
    def test_results_independent_of_worker_count(self):
        bundles = synth_bundles(5)
        single = run_gen_et(bundles, CFG, workers=1)
        assert run_gen_et(bundles, CFG, workers=3) == single
        assert run_gen_et(bundles, CFG, workers=8) == single

    def test_invalid_worker_count(self):
        with pytest.raises(ValidationError):
            run_gen_et([], CFG, workers=0)

    def test_default_workers_positive(self):
        assert default_workers() >= 1

    def test_failures_tagged_with_study_id(self):
        bad = bundle(
            sid="badstudy",
            fixations=(Fixation(10.0, 10.0, 0.0, 1.0),),
            sentences=(
                SentenceSpan(0, "First.", 0.0, 2.0),
                SentenceSpan(1, "Overlapping.", 1.0, 3.0),
            ),
        )
        with pytest.raises(StudyProcessingError, match="badstudy") as info:
            run_gen_et([bad], CFG)
        assert info.value.study_id == "badstudy"
        assert info.value.__cause__ is not None

    def test_failures_tagged_under_threads(self):
        bundles = synth_bundles(3) + [
            bundle(
                sid="zbad",
                ellipses=(
                    AnnotatedEllipse(500.0, 500.0, 5.0, 5.0, ("Lesion",), 3),
                ),
            )
        ]
        with pytest.raises(StudyProcessingError, match="zbad"):
            run_repurpose(bundles, LEX, CFG, workers=4)


# ---------------------------------------------------------------------------
# Repurposing flow
# ---------------------------------------------------------------------------


class TestRunRepurpose:
    def test_two_label_ellipse_with_one_implying_sentence(self):
        lex = LabelLexicon.parse("A: alpha\nB: beta")
        b = bundle(
            sid="s2",
            sentences=(SentenceSpan(0, "The alpha area looks off.", 0.0, 2.0),),
            ellipses=(AnnotatedEllipse(50.0, 50.0, 10.0, 8.0, ("A", "B"), 4),),
        )
        result = run_repurpose([b], lex, CFG)
        assert [r["label"] for r in result.od_records] == ["A", "B"]
        assert {tuple(r["box"]) for r in result.od_records} == {(40, 42, 60, 58)}
        (pg,) = result.pg_records
        assert pg["statement"] == "The alpha area looks off."
        assert pg["box"] == [40, 42, 60, 58]
        assert pg["source"] == "ANNOTATION"
        assert "sentence_index" not in pg

    def test_negative_sentence_never_grounds(self):
        b = bundle(
            sentences=(SentenceSpan(0, "No lesion anywhere.", 0.0, 2.0),),
            ellipses=(AnnotatedEllipse(50.0, 50.0, 5.0, 5.0, ("Lesion",), 3),),
        )
        result = run_repurpose([b], LEX, CFG)
        assert result.pg_records == ()
        assert len(result.od_records) == 1

    def test_worker_count_invariance(self):
        bundles = [clustered_bundle()]
        assert run_repurpose(bundles, LEX, CFG, workers=1) == run_repurpose(
            bundles, LEX, CFG, workers=4
        )


# ---------------------------------------------------------------------------
# Containment-ratio flow
# ---------------------------------------------------------------------------


class TestRunCr:
    def test_tallies_and_report(self):
        analysis = run_cr([clustered_bundle()], LEX, CFG)
        # ET boxes exist for sentences 0 and 1; annotations pair only with
        # sentence 0 (lesion) and the boxless sentence 2 (nodule).
        assert analysis.et_box_count == 2
        assert analysis.annotation_box_count == 2
        assert analysis.sentences_without_annotation == 1
        assert analysis.ellipses_without_statement == 1  # negated edema
        (row,) = analysis.report.rows
        assert (row.container_source, row.contained_source) == (
            ET_SOURCE,
            ANNOTATION_SOURCE,
        )
        assert row.pair_count == 1
        assert row.mean_cr == 1.0  # the small lesion box sits inside the gaze box
        (entry,) = analysis.report.unpairable
        assert entry.side == "contained"
        assert entry.key == "2"

    def test_multi_sentence_statement_contributes_per_sentence(self):
        fixations = [
            Fixation(40 + (i % 3), 40.0, 0.1 + 0.3 * i, 0.35 + 0.3 * i)
            for i in range(8)
        ] + [
            Fixation(42 + (i % 3), 44.0, 5.1 + 0.3 * i, 5.35 + 0.3 * i)
            for i in range(8)
        ]
        b = bundle(
            sid="s3",
            fixations=fixations,
            sentences=(
                SentenceSpan(0, "A lesion is seen.", 0.0, 4.0),
                SentenceSpan(1, "The lesion persists.", 5.0, 9.0),
            ),
            ellipses=(AnnotatedEllipse(41.0, 42.0, 4.0, 4.0, ("Lesion",), 5),),
        )
        analysis = run_cr([b], LabelLexicon.parse("Lesion: lesion"), CFG)
        assert analysis.annotation_box_count == 2  # one sample per sentence
        (row,) = analysis.report.rows
        assert row.pair_count == 2

    def test_worker_count_invariance(self):
        bundles = [clustered_bundle()]
        assert run_cr(bundles, LEX, CFG, workers=1) == run_cr(
            bundles, LEX, CFG, workers=4
        )

    def test_no_annotations_yields_empty_report(self):
        b = bundle(
            fixations=(Fixation(40.0, 40.0, 0.5, 1.5),),
            sentences=(SentenceSpan(0, "A lesion is seen.", 0.0, 2.0),),
        )
        analysis = run_cr([b], LEX, CFG)
        assert analysis.report.rows == ()
        assert analysis.sentences_without_annotation == analysis.et_box_count


# ---------------------------------------------------------------------------
# Evaluation pairing
# ---------------------------------------------------------------------------


def gt_record(sid="s1", box=(0, 0, 10, 10), statement=None, label=None):
    record = {"study_id": sid, "box": BoundingBox(*box)}
    if statement is not None:
        record["statement"] = statement
    if label is not None:
        record["label"] = label
    return record


class TestPairByStatement:
    def test_join_and_missing_prediction(self):
        gts = [
            gt_record(statement="First.", box=(0, 0, 10, 10)),
            gt_record(statement="Second.", box=(20, 20, 30, 30)),
        ]
        preds = [gt_record(statement="First.", box=(0, 0, 10, 5))]
        pairs = pair_by_statement(gts, preds)
        assert pairs[0].pred_box == BoundingBox(0, 0, 10, 5)
        assert pairs[1].pred_box is None
        assert pairs[1].iou == 0.0
        assert [p.statement for p in pairs] == ["First.", "Second."]

    def test_duplicate_keys_rejected(self):
        dup = [gt_record(statement="Same."), gt_record(statement="Same.")]
        with pytest.raises(ValidationError):
            pair_by_statement(dup, [])
        with pytest.raises(ValidationError):
            pair_by_statement([gt_record(statement="X.")], dup)

    def test_orphan_prediction_logged_not_paired(self, caplog):
        gts = [gt_record(statement="Kept.")]
        preds = [gt_record(statement="Orphan.")]
        with caplog.at_level(logging.WARNING, logger="gazebox.pipeline"):
            pairs = pair_by_statement(gts, preds)
        assert len(pairs) == 1
        assert "Orphan." in caplog.text

    def test_statementless_record_rejected(self):
        with pytest.raises(ValidationError):
            pair_by_statement([gt_record(label="A")], [])
        with pytest.raises(ValidationError):
            pair_by_statement([gt_record(statement="X.")], [gt_record(label="A")])


class TestPairByLabel:
    def test_greedy_prefers_better_overlap(self):
        gts = [
            gt_record(label="A", box=(0, 0, 10, 10)),
            gt_record(label="A", box=(8, 0, 18, 10)),
        ]
        preds = [dict(gt_record(label="A", box=(8, 0, 18, 10)), score=0.5)]
        pairs = pair_by_label(gts, preds)
        assert pairs[0].pred_box is None
        assert pairs[1].pred_box == BoundingBox(8, 0, 18, 10)

    def test_label_gating_toggle(self):
        gts = [gt_record(label="A", box=(0, 0, 10, 10))]
        preds = [gt_record(label="B", box=(0, 0, 10, 10))]
        assert pair_by_label(gts, preds)[0].pred_box is None
        assert pair_by_label(gts, preds, label_gated=False)[0].pred_box is not None

    def test_studies_come_back_sorted(self):
        gts = [gt_record(sid="zz", label="A"), gt_record(sid="aa", label="A")]
        pairs = pair_by_label(gts, [])
        assert [p.study_id for p in pairs] == ["aa", "zz"]

    def test_bad_score_rejected(self):
        gts = [gt_record(label="A")]
        preds = [dict(gt_record(label="A"), score="high")]
        with pytest.raises(ValidationError):
            pair_by_label(gts, preds)

    def test_unlabeled_record_rejected(self):
        with pytest.raises(ValidationError):
            pair_by_label([gt_record(statement="X.")], [])

    def test_orphan_study_logged(self, caplog):
        gts = [gt_record(sid="known", label="A")]
        preds = [gt_record(sid="unknown", label="A")]
        with caplog.at_level(logging.WARNING, logger="gazebox.pipeline"):
            pairs = pair_by_label(gts, preds)
        assert len(pairs) == 1
        assert "unknown" in caplog.text


# ---------------------------------------------------------------------------
# TaggedBox construction guards
# ---------------------------------------------------------------------------


class TestTaggedBox:
    def test_rejects_blank_key(self):
        with pytest.raises(ValidationError):
            TaggedBox("s1", "", ET_SOURCE, BoundingBox(0, 0, 1, 1))
