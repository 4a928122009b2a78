"""Command-line surface: dataset flows, evaluation, rendering, utilities.

Exit codes: 0 on success, 1 when inputs fail validation, 2 on usage errors
(the argument parser's own convention).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .align import assign_fixations
from .errors import GazeboxError, ValidationError
from .heatmap import accumulate, normalize, render_fixation, render_sentence
from .io import (
    assemble_bundles,
    import_reflacx,
    make_config,
    parse_annotations,
    parse_config_file,
    parse_fixations,
    parse_meta,
    parse_transcript,
    read_id_list,
    read_triplets,
    render_overlay,
    split_dataset,
    write_annotations,
    write_fixations,
    write_heatmap_png,
    write_id_list,
    write_meta,
    write_transcript,
    write_triplets,
    DEFAULT_ROW_ERROR_LIMIT,
)
from .metrics import MetricsReport, build_report
from .model import (
    AnnotatedEllipse,
    BoundingBox,
    PipelineConfig,
    TripletSource,
    derive_seed,
)
from .pipeline import (
    default_workers,
    pair_by_label,
    pair_by_statement,
    run_cr,
    run_gen_et,
    run_repurpose,
)
from .repurpose import LabelLexicon
from .synth import JitterModel, SentenceSynthSpec, SynthSpec, synth_study

_MARKERS = (
    "alpha", "bravo", "castor", "delta", "echo", "fulcrum",
    "gimbal", "helix", "isobar", "jasper", "krypton", "lumen",
)


# ---------------------------------------------------------------------------
# Shared flag groups
# ---------------------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group(
        "pipeline configuration",
        "values from --config are applied first, individual flags override",
    )
    group.add_argument("--config", metavar="FILE",
                       help="key=value configuration file")
    group.add_argument("--psi-s", dest="psi_s", metavar="SECONDS",
                       help="look-back window prepended to each sentence")
    group.add_argument("--sigma-px", dest="sigma_px", metavar="PIXELS",
                       help="Gaussian sigma; 'auto' selects width/20")
    group.add_argument("--threshold-frac", dest="threshold_frac", metavar="FRAC",
                       help="heatmap cutoff as a fraction of the peak")
    group.add_argument("--min-area-frac", dest="min_area_frac", metavar="FRAC",
                       help="component area floor as a fraction of the image "
                            "(accepts p/q)")
    group.add_argument("--connectivity", choices=("four", "eight"),
                       help="component adjacency")
    group.add_argument("--assignment-mode", dest="assignment_mode",
                       choices=("containment", "overlap"),
                       help="fixation-to-sentence qualification rule")
    group.add_argument("--seed", metavar="N",
                       help="seed for every randomized step")


_CONFIG_FLAG_KEYS = (
    "psi_s", "sigma_px", "threshold_frac", "min_area_frac",
    "connectivity", "assignment_mode", "seed",
)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    values = dict(parse_config_file(args.config)) if args.config else {}
    for key in _CONFIG_FLAG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    return make_config(values)


def _add_workers_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workers", type=int, default=None, metavar="N",
        help="concurrent studies (default: available parallelism)",
    )


def _resolve_workers(args: argparse.Namespace) -> int:
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise ValidationError("workers", f"must be >= 1, got {workers}")
    return workers


def _add_row_error_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--max-row-errors", type=int, default=DEFAULT_ROW_ERROR_LIMIT,
        metavar="N", help="abort a file after this many malformed rows",
    )
    parser.add_argument(
        "--strict", action="store_true",
        help="treat any malformed row as a fatal validation failure",
    )


def _report_row_errors(args: argparse.Namespace, *tables) -> None:
    """Print collected row errors to stderr; fatal under --strict."""
    total = 0
    for table in tables:
        for err in table.row_errors:
            total += 1
            if total <= 20:
                print(f"warning: malformed row: {err}", file=sys.stderr)
    if total > 20:
        print(f"warning: ... and {total - 20} more malformed rows",
              file=sys.stderr)
    if total and args.strict:
        raise ValidationError("rows", f"{total} malformed rows (--strict)")


def _write_json(payload: dict, out_path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
        print(f"wrote report to {out_path}")
    else:
        print(text)


# ---------------------------------------------------------------------------
# gen-et
# ---------------------------------------------------------------------------


def _cmd_gen_et(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    workers = _resolve_workers(args)
    metas = parse_meta(args.meta, max_row_errors=args.max_row_errors)
    fixations = parse_fixations(
        args.fixations, metas.by_study, max_row_errors=args.max_row_errors
    )
    transcript = parse_transcript(
        args.transcript, max_row_errors=args.max_row_errors
    )
    _report_row_errors(args, metas, fixations, transcript)
    if fixations.dropped_out_of_image:
        print(
            f"note: dropped {fixations.dropped_out_of_image} "
            "out-of-image fixations",
            file=sys.stderr,
        )
    bundles = assemble_bundles(
        metas.by_study, fixations=fixations.by_study,
        sentences=transcript.by_study,
    )
    result = run_gen_et(bundles, cfg, workers)
    count = write_triplets(result.records, args.out)
    print(f"wrote {count} gaze box records to {args.out}")
    if result.diagnostics:
        by_outcome: dict[str, int] = {}
        for d in result.diagnostics:
            by_outcome[d.outcome.value] = by_outcome.get(d.outcome.value, 0) + 1
        detail = ", ".join(f"{k}: {v}" for k, v in sorted(by_outcome.items()))
        print(
            f"note: {len(result.diagnostics)} sentences produced no box "
            f"({detail})",
            file=sys.stderr,
        )
    return 0


# ---------------------------------------------------------------------------
# repurpose
# ---------------------------------------------------------------------------


def _load_lexicon(args: argparse.Namespace, corpus_labels=()) -> LabelLexicon:
    lex = (
        LabelLexicon.from_file(args.lexicon)
        if args.lexicon
        else LabelLexicon.default()
    )
    if getattr(args, "auto_stems", False):
        lex = lex.with_auto_stems(corpus_labels)
    return lex


def _add_lexicon_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--lexicon", metavar="FILE",
        help="label lexicon ('label: stem1, stem2' lines); "
             "default: built-in chest x-ray vocabulary",
    )
    parser.add_argument(
        "--auto-stems", action="store_true",
        help="derive stems for labels missing from the lexicon instead of "
             "failing",
    )


def _corpus_labels(bundles) -> list[str]:
    labels: set[str] = set()
    for bundle in bundles:
        for e in bundle.ellipses:
            labels.update(e.labels)
    return sorted(labels)


def _cmd_repurpose(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    workers = _resolve_workers(args)
    metas = parse_meta(args.meta, max_row_errors=args.max_row_errors)
    transcript = parse_transcript(
        args.transcript, max_row_errors=args.max_row_errors
    )
    annotations = parse_annotations(
        args.annotations, max_row_errors=args.max_row_errors
    )
    _report_row_errors(args, metas, transcript, annotations)
    bundles = assemble_bundles(
        metas.by_study, sentences=transcript.by_study,
        ellipses=annotations.by_study,
    )
    lex = _load_lexicon(args, _corpus_labels(bundles))
    result = run_repurpose(bundles, lex, cfg, workers)
    pg_count = write_triplets(result.pg_records, args.out_pg)
    od_count = write_triplets(result.od_records, args.out_od)
    print(f"wrote {pg_count} grounding records to {args.out_pg}")
    print(f"wrote {od_count} detection records to {args.out_od}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _report_payload(report: MetricsReport) -> dict:
    return {
        "pair_count": report.pair_count,
        "miou_per_box": report.miou_per_box,
        "miou_per_class": report.miou_per_class,
        "per_class_iou": dict(report.per_class_iou),
        "class_counts": dict(report.class_counts),
        "acc_at": {str(t): v for t, v in sorted(report.acc_at.items())},
        "cr": [
            {
                "container_source": row.container_source,
                "contained_source": row.contained_source,
                "mean_cr": row.mean_cr,
                "pair_count": row.pair_count,
            }
            for row in report.cr_rows
        ],
    }


def _format_table(report: MetricsReport) -> str:
    lines = []
    if report.per_class_iou:
        width = max(len("class"), *(len(lb) for lb in report.per_class_iou))
        lines.append(f"{'class':<{width}}  {'n':>5}  {'mIoU':>6}")
        lines.append("-" * (width + 15))
        for label, value in report.per_class_iou.items():
            n = report.class_counts.get(label, 0)
            lines.append(f"{label:<{width}}  {n:>5}  {value:>6.4f}")
        lines.append("-" * (width + 15))
        lines.append(
            f"{'mIoU (per class)':<{width}}  {'':>5}  "
            f"{report.miou_per_class:>6.4f}"
        )
        lines.append(
            f"{'mIoU (per box)':<{width}}  {report.pair_count:>5}  "
            f"{report.miou_per_box:>6.4f}"
        )
    else:
        lines.append(f"pairs: {report.pair_count}")
        lines.append(f"mIoU (per box): {report.miou_per_box:.4f}")
    for tau, value in sorted(report.acc_at.items()):
        lines.append(f"Acc@{tau:g}: {value:.4f}")
    for row in report.cr_rows:
        lines.append(
            f"mean CR ({row.container_source} contains "
            f"{row.contained_source}): {row.mean_cr:.4f} "
            f"over {row.pair_count} pairs"
        )
    return "\n".join(lines)


def _parse_thresholds(raw: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ValidationError("thresholds", f"not numbers: {raw!r}") from None
    if not values:
        raise ValidationError("thresholds", "need at least one")
    for v in values:
        if not 0 < v <= 1 or not math.isfinite(v):
            raise ValidationError("thresholds", f"{v} outside (0, 1]")
    return values


def _cmd_eval(args: argparse.Namespace) -> int:
    gt_records = read_triplets(args.gt)
    pred_records = read_triplets(args.pred)
    if args.mode == "statement":
        pairs = pair_by_statement(gt_records, pred_records)
    else:
        pairs = pair_by_label(
            gt_records, pred_records, label_gated=not args.no_label_gate
        )
    report = build_report(pairs, _parse_thresholds(args.thresholds))
    _write_json(_report_payload(report), args.out)
    if args.table:
        print(_format_table(report))
    return 0


# ---------------------------------------------------------------------------
# cr
# ---------------------------------------------------------------------------


def _cmd_cr(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    workers = _resolve_workers(args)
    metas = parse_meta(args.meta, max_row_errors=args.max_row_errors)
    fixations = parse_fixations(
        args.fixations, metas.by_study, max_row_errors=args.max_row_errors
    )
    transcript = parse_transcript(
        args.transcript, max_row_errors=args.max_row_errors
    )
    annotations = parse_annotations(
        args.annotations, max_row_errors=args.max_row_errors
    )
    _report_row_errors(args, metas, fixations, transcript, annotations)
    bundles = assemble_bundles(
        metas.by_study,
        fixations=fixations.by_study,
        sentences=transcript.by_study,
        ellipses=annotations.by_study,
    )
    lex = _load_lexicon(args, _corpus_labels(bundles))
    analysis = run_cr(bundles, lex, cfg, workers)
    payload = {
        "rows": [
            {
                "container_source": row.container_source,
                "contained_source": row.contained_source,
                "mean_cr": row.mean_cr,
                "pair_count": row.pair_count,
            }
            for row in analysis.report.rows
        ],
        "et_box_count": analysis.et_box_count,
        "annotation_box_count": analysis.annotation_box_count,
        "sentences_without_annotation": analysis.sentences_without_annotation,
        "ellipses_without_statement": analysis.ellipses_without_statement,
        "unpairable_count": len(analysis.report.unpairable),
    }
    _write_json(payload, args.out)
    if args.table:
        for row in analysis.report.rows:
            print(
                f"mean CR ({row.container_source} contains "
                f"{row.contained_source}): {row.mean_cr:.4f} "
                f"over {row.pair_count} pairs"
            )
    return 0


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------


_SOURCE_ROLES = {TripletSource.ET.value: "et", TripletSource.ANNOTATION.value: "gt"}


def _cmd_render(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    metas = parse_meta(args.meta, max_row_errors=args.max_row_errors)
    meta = metas.by_study.get(args.study)
    if meta is None:
        raise ValidationError("study", f"{args.study!r} not in {args.meta}")

    boxes: list[tuple[BoundingBox, str]] = []
    for path in args.triplets or ():
        for record in read_triplets(path):
            if record["study_id"] != args.study:
                continue
            role = _SOURCE_ROLES.get(record["source"], "gt")
            boxes.append((record["box"], role))
    for path in args.pred or ():
        for record in read_triplets(path):
            if record["study_id"] == args.study:
                boxes.append((record["box"], "pred"))

    heatmap = None
    if args.fixations:
        table = parse_fixations(
            args.fixations, metas.by_study, max_row_errors=args.max_row_errors
        )
        _report_row_errors(args, table)
        study_fixations = sorted(
            table.by_study.get(args.study, ()),
            key=lambda f: (f.t_start_s, f.t_end_s),
        )
        sigma_px = cfg.resolve_sigma_px(meta)
        if args.sentence is not None:
            if not args.transcript:
                raise ValidationError(
                    "transcript", "--sentence needs --transcript"
                )
            transcript = parse_transcript(
                args.transcript, max_row_errors=args.max_row_errors
            )
            _report_row_errors(args, transcript)
            sentences = sorted(
                transcript.by_study.get(args.study, ()),
                key=lambda s: s.sentence_index,
            )
            if all(s.sentence_index != args.sentence for s in sentences):
                raise ValidationError(
                    "sentence", f"index {args.sentence} not in transcript"
                )
            alignment = assign_fixations(study_fixations, sentences, cfg)
            assigned = alignment.fixations_for(args.sentence)
            if assigned:
                heatmap = normalize(
                    render_sentence(assigned, meta, sigma_px)
                ).heatmap
        elif study_fixations:
            heatmap = normalize(
                accumulate(
                    [render_fixation(f, meta, sigma_px) for f in study_fixations],
                    meta,
                )
            ).heatmap

    render_overlay(
        args.image, boxes, args.out, heatmap=heatmap, meta=meta,
        heatmap_alpha=args.heatmap_alpha,
    )
    print(f"wrote overlay to {args.out}")
    if args.heatmap_out:
        if heatmap is None:
            raise ValidationError(
                "heatmap_out", "no heatmap was rendered (need --fixations and "
                "at least one in-image fixation)"
            )
        write_heatmap_png(heatmap, args.heatmap_out)
        print(f"wrote heatmap to {args.heatmap_out}")
    return 0


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


def _cmd_split(args: argparse.Namespace) -> int:
    if args.meta:
        ids = tuple(parse_meta(args.meta).by_study)
    else:
        ids = read_id_list(args.ids)
    train, val = split_dataset(ids, args.ratio, args.seed)
    write_id_list(train, args.out_train)
    write_id_list(val, args.out_val)
    print(
        f"split {len(ids)} studies into {len(train)} train / {len(val)} val "
        f"(ratio {args.ratio}, seed {args.seed})"
    )
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _synth_marker(k: int) -> str:
    base = _MARKERS[k % len(_MARKERS)]
    round_no = k // len(_MARKERS)
    return base if round_no == 0 else f"{base}{round_no + 1}"


def _synth_targets(width: int, height: int, count: int, rng) -> list[BoundingBox]:
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    cell_w = width // cols
    cell_h = height // rows
    if cell_w < 16 or cell_h < 16:
        raise ValidationError(
            "sentences", f"image {width}x{height} too small for {count} targets"
        )
    targets = []
    for k in range(count):
        col, row = k % cols, k // cols
        bw = max(8, int(cell_w * 0.55))
        bh = max(8, int(cell_h * 0.55))
        x0 = col * cell_w + int(rng.integers(0, cell_w - bw + 1))
        y0 = row * cell_h + int(rng.integers(0, cell_h - bh + 1))
        targets.append(BoundingBox(x0, y0, x0 + bw, y0 + bh))
    return targets


def _cmd_synth(args: argparse.Namespace) -> int:
    if args.studies < 1:
        raise ValidationError("studies", "must be >= 1")
    if args.sentences < 1:
        raise ValidationError("sentences", "must be >= 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jitter = JitterModel(args.jitter)
    seed = args.seed

    metas = []
    fixations_by_study = {}
    sentences_by_study = {}
    ellipses_by_study = {}
    target_records = []
    lexicon_lines = {}
    fingerprint = f"synth-seed={seed}"

    for i in range(args.studies):
        sid = f"synth-{i:04d}"
        study_seed = derive_seed(seed, sid)
        layout_rng = np.random.default_rng(study_seed)
        targets = _synth_targets(
            args.width, args.height, args.sentences, layout_rng
        )
        plans = []
        ellipses = []
        for k, box in enumerate(targets):
            marker = _synth_marker(k)
            label = f"Target {marker}"
            lexicon_lines[label] = marker
            plans.append(
                SentenceSynthSpec(
                    target_box=box,
                    fixation_count=args.fixations_per_sentence,
                    jitter=jitter,
                    text=f"Gaze dwells on the {marker} region here.",
                )
            )
            ellipses.append(
                AnnotatedEllipse(
                    (box.x_min + box.x_max) / 2.0,
                    (box.y_min + box.y_max) / 2.0,
                    box.width / 2.0,
                    box.height / 2.0,
                    (label,),
                    int(layout_rng.integers(1, 6)),
                )
            )
            target_records.append(
                {
                    "study_id": sid,
                    "box": box,
                    "statement": plans[-1].text,
                    "label": label,
                    "sentence_index": k,
                    "source": "TARGET",
                    "config_fingerprint": fingerprint,
                }
            )
        spec = SynthSpec(
            sid, args.width, args.height, tuple(plans), seed=study_seed
        )
        study = synth_study(spec)
        metas.append(study.meta)
        fixations_by_study[sid] = study.fixations
        sentences_by_study[sid] = study.sentences
        ellipses_by_study[sid] = tuple(ellipses)

    write_meta(metas, out_dir / "meta.csv")
    write_fixations(fixations_by_study, out_dir / "fixations.csv")
    write_transcript(sentences_by_study, out_dir / "transcript.csv")
    write_annotations(ellipses_by_study, out_dir / "annotations.csv")
    write_triplets(target_records, out_dir / "targets.jsonl")
    lexicon_text = "\n".join(
        f"{label}: {stem}" for label, stem in sorted(lexicon_lines.items())
    )
    (out_dir / "lexicon.txt").write_text(lexicon_text + "\n", encoding="utf-8")
    print(
        f"wrote {args.studies} synthetic studies "
        f"({args.sentences} sentences each) to {out_dir}"
    )
    return 0


# ---------------------------------------------------------------------------
# import-reflacx
# ---------------------------------------------------------------------------


def _cmd_import_reflacx(args: argparse.Namespace) -> int:
    result = import_reflacx(args.root, phase=args.phase)
    if not result.bundles:
        raise ValidationError(
            "root", f"no studies imported from {args.root} "
            f"({len(result.skipped)} skipped)"
        )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_meta([b.meta for b in result.bundles], out_dir / "meta.csv")
    write_fixations(
        {b.study_id: b.fixations for b in result.bundles if b.fixations},
        out_dir / "fixations.csv",
    )
    write_transcript(
        {b.study_id: b.sentences for b in result.bundles if b.sentences},
        out_dir / "transcript.csv",
    )
    write_annotations(
        {b.study_id: b.ellipses for b in result.bundles if b.ellipses},
        out_dir / "annotations.csv",
    )
    print(
        f"imported {len(result.bundles)} studies to {out_dir} "
        f"(skipped {len(result.skipped)})"
    )
    for entry in result.skipped[:20]:
        print(f"skipped {entry.study_id}: {entry.reason}", file=sys.stderr)
    if len(result.skipped) > 20:
        print(f"... and {len(result.skipped) - 20} more", file=sys.stderr)
    for warning in result.warnings[:20]:
        print(f"warning: {warning}", file=sys.stderr)
    if len(result.warnings) > 20:
        print(f"... and {len(result.warnings) - 20} more warnings",
              file=sys.stderr)
    if args.report:
        payload = {
            "imported": [b.study_id for b in result.bundles],
            "skipped": [
                {"study_id": s.study_id, "reason": s.reason}
                for s in result.skipped
            ],
            "warnings": list(result.warnings),
        }
        Path(args.report).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"wrote import report to {args.report}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazebox",
        description="Gaze-derived bounding boxes, annotation repurposing, "
                    "and localization evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "gen-et",
        help="generate one gaze-derived box record per transcript sentence",
    )
    p.add_argument("--fixations", required=True, metavar="CSV")
    p.add_argument("--transcript", required=True, metavar="CSV")
    p.add_argument("--meta", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="JSONL")
    _add_config_flags(p)
    _add_workers_flag(p)
    _add_row_error_flags(p)
    p.set_defaults(handler=_cmd_gen_et)

    p = sub.add_parser(
        "repurpose",
        help="convert ellipse annotations into grounding and detection records",
    )
    p.add_argument("--annotations", required=True, metavar="CSV")
    p.add_argument("--transcript", required=True, metavar="CSV")
    p.add_argument("--meta", required=True, metavar="CSV")
    p.add_argument("--out-pg", required=True, metavar="JSONL",
                   help="grounding (box + statement) output")
    p.add_argument("--out-od", required=True, metavar="JSONL",
                   help="detection (box + label) output")
    _add_lexicon_flags(p)
    _add_config_flags(p)
    _add_workers_flag(p)
    _add_row_error_flags(p)
    p.set_defaults(handler=_cmd_repurpose)

    p = sub.add_parser(
        "eval", help="score predictions against ground-truth records"
    )
    p.add_argument("--gt", required=True, metavar="JSONL")
    p.add_argument("--pred", required=True, metavar="JSONL")
    p.add_argument("--mode", choices=("statement", "label"), required=True,
                   help="join on statements (grounding) or match by label "
                        "(detection)")
    p.add_argument("--thresholds", default="0.3,0.5", metavar="T1,T2",
                   help="accuracy cutoffs (default: 0.3,0.5)")
    p.add_argument("--no-label-gate", action="store_true",
                   help="label mode: allow cross-label matches")
    p.add_argument("--out", metavar="JSON",
                   help="write the report here instead of stdout")
    p.add_argument("--table", action="store_true",
                   help="also print a human-readable table")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser(
        "cr",
        help="measure how much of each annotation box falls inside the "
             "gaze box of its implying sentences",
    )
    p.add_argument("--fixations", required=True, metavar="CSV")
    p.add_argument("--transcript", required=True, metavar="CSV")
    p.add_argument("--annotations", required=True, metavar="CSV")
    p.add_argument("--meta", required=True, metavar="CSV")
    p.add_argument("--out", metavar="JSON",
                   help="write the report here instead of stdout")
    p.add_argument("--table", action="store_true",
                   help="also print a human-readable summary")
    _add_lexicon_flags(p)
    _add_config_flags(p)
    _add_workers_flag(p)
    _add_row_error_flags(p)
    p.set_defaults(handler=_cmd_cr)

    p = sub.add_parser("render", help="write an overlay image for one study")
    p.add_argument("--meta", required=True, metavar="CSV")
    p.add_argument("--study", required=True, metavar="ID")
    p.add_argument("--out", required=True, metavar="IMAGE")
    p.add_argument("--image", metavar="IMAGE",
                   help="base image (default: black canvas at meta size)")
    p.add_argument("--fixations", metavar="CSV",
                   help="render a fixation heatmap under the boxes")
    p.add_argument("--transcript", metavar="CSV",
                   help="needed with --sentence")
    p.add_argument("--sentence", type=int, metavar="K",
                   help="restrict the heatmap to sentence K's fixations")
    p.add_argument("--triplets", action="append", metavar="JSONL",
                   help="box records to draw (repeatable); gaze records "
                        "are outlined, annotation records filled")
    p.add_argument("--pred", action="append", metavar="JSONL",
                   help="prediction records to outline (repeatable)")
    p.add_argument("--heatmap-alpha", type=float, default=0.45,
                   metavar="A", help="heatmap blend strength (default 0.45)")
    p.add_argument("--heatmap-out", metavar="PNG",
                   help="also write the bare heatmap as 8-bit grayscale")
    _add_config_flags(p)
    _add_row_error_flags(p)
    p.set_defaults(handler=_cmd_render)

    p = sub.add_parser("split", help="deterministic train/validation split")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--meta", metavar="CSV",
                        help="take study ids from an image-meta file")
    source.add_argument("--ids", metavar="FILE",
                        help="take study ids from a one-per-line file")
    p.add_argument("--ratio", type=float, required=True,
                   help="validation fraction in [0, 1]")
    p.add_argument("--seed", type=int, metavar="N", default=0)
    p.add_argument("--out-train", required=True, metavar="FILE")
    p.add_argument("--out-val", required=True, metavar="FILE")
    p.set_defaults(handler=_cmd_split)

    p = sub.add_parser(
        "synth", help="write a seeded synthetic corpus in the canonical formats"
    )
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--studies", type=int, default=5, metavar="N")
    p.add_argument("--sentences", type=int, default=3, metavar="K")
    p.add_argument("--fixations-per-sentence", type=int, default=30,
                   metavar="M")
    p.add_argument("--width", type=int, default=512, metavar="W")
    p.add_argument("--height", type=int, default=512, metavar="H")
    p.add_argument("--jitter", choices=("uniform", "gaussian"),
                   default="uniform")
    p.add_argument("--seed", type=int, metavar="N", default=0)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser(
        "import-reflacx",
        help="map the public eye-tracking dataset onto the canonical formats",
    )
    p.add_argument("--root", required=True, metavar="DIR")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--phase", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--report", metavar="JSON",
                   help="write a JSON import report (skips and warnings)")
    p.set_defaults(handler=_cmd_import_reflacx)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except GazeboxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
