"""Gaze-to-box pipeline: sentence-aligned boxes from eye tracking,
annotation repurposing, and localization metrics.

The public surface re-exports the domain types and the main operations of
each layer; submodules stay importable directly for the long tail.
"""

from .align import (
    AlignmentResult,
    CollectionWindow,
    assign_fixations,
    collection_window,
    qualifies,
)
from .errors import (
    DimensionMismatchError,
    EllipseOutsideImageError,
    EmptyEvalSetError,
    FixationOutsideImageError,
    GazeboxError,
    MissingLabelError,
    RowError,
    SchemaError,
    StudyProcessingError,
    TooManyRowErrorsError,
    UnknownLabelError,
    UnsortedInputError,
    ValidationError,
)
from .heatmap import (
    BinaryMask,
    BoxOutcome,
    ComponentStats,
    SentenceBoxResult,
    accumulate,
    component_stats,
    enclosing_box,
    filter_components,
    generate_et_boxes,
    normalize,
    render_fixation,
    render_sentence,
    threshold_mask,
)
from .io import (
    ReflacxImport,
    SkippedStudy,
    StudyBundle,
    assemble_bundles,
    import_reflacx,
    make_config,
    parse_annotations,
    parse_config_file,
    parse_fixations,
    parse_meta,
    parse_transcript,
    read_triplets,
    render_overlay,
    split_dataset,
    write_annotations,
    write_fixations,
    write_heatmap_png,
    write_meta,
    write_transcript,
    write_triplets,
)
from .metrics import (
    CrReport,
    CrRow,
    EvalPair,
    MetricsReport,
    TaggedBox,
    UnpairableEntry,
    accuracy_at,
    build_report,
    containment_ratio,
    cr_report,
    greedy_match,
    intersection_area,
    iou,
    miou_per_box,
    miou_per_class,
)
from .model import (
    AnnotatedEllipse,
    AssignmentMode,
    BoundingBox,
    Connectivity,
    DetectionTriplet,
    Fixation,
    GroundingTriplet,
    Heatmap,
    ImageMeta,
    PipelineConfig,
    SentenceSpan,
    TripletSource,
    box_area,
    derive_seed,
    stable_study_hash,
)
from .pipeline import (
    CrAnalysis,
    GenEtResult,
    RepurposeResult,
    SentenceDiagnostic,
    default_workers,
    pair_by_label,
    pair_by_statement,
    run_cr,
    run_gen_et,
    run_repurpose,
)
from .repurpose import (
    LabelLexicon,
    Statement,
    build_od_triplets,
    build_pg_triplets,
    build_statement,
    ellipse_to_box,
    filter_negative_sentences,
    is_negative_sentence,
    pair_statement_with_box,
    sentence_implies_label,
)
from .synth import (
    JitterModel,
    SentenceSynthSpec,
    SynthSpec,
    SynthStudy,
    oracle_pixel_metrics,
    synth_study,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "GazeboxError",
    "ValidationError",
    "UnsortedInputError",
    "DimensionMismatchError",
    "FixationOutsideImageError",
    "EllipseOutsideImageError",
    "UnknownLabelError",
    "EmptyEvalSetError",
    "MissingLabelError",
    "SchemaError",
    "RowError",
    "TooManyRowErrorsError",
    "StudyProcessingError",
    # model
    "ImageMeta",
    "Fixation",
    "SentenceSpan",
    "BoundingBox",
    "box_area",
    "Heatmap",
    "AnnotatedEllipse",
    "GroundingTriplet",
    "DetectionTriplet",
    "TripletSource",
    "Connectivity",
    "AssignmentMode",
    "PipelineConfig",
    "stable_study_hash",
    "derive_seed",
    # align
    "CollectionWindow",
    "AlignmentResult",
    "collection_window",
    "qualifies",
    "assign_fixations",
    # heatmap
    "BinaryMask",
    "ComponentStats",
    "BoxOutcome",
    "SentenceBoxResult",
    "render_fixation",
    "render_sentence",
    "accumulate",
    "normalize",
    "threshold_mask",
    "component_stats",
    "filter_components",
    "enclosing_box",
    "generate_et_boxes",
    # repurpose
    "LabelLexicon",
    "Statement",
    "ellipse_to_box",
    "is_negative_sentence",
    "filter_negative_sentences",
    "sentence_implies_label",
    "build_statement",
    "pair_statement_with_box",
    "build_od_triplets",
    "build_pg_triplets",
    # metrics
    "intersection_area",
    "iou",
    "containment_ratio",
    "EvalPair",
    "accuracy_at",
    "miou_per_box",
    "miou_per_class",
    "greedy_match",
    "TaggedBox",
    "UnpairableEntry",
    "CrRow",
    "CrReport",
    "cr_report",
    "MetricsReport",
    "build_report",
    # synth
    "JitterModel",
    "SentenceSynthSpec",
    "SynthSpec",
    "SynthStudy",
    "synth_study",
    "oracle_pixel_metrics",
    # io
    "StudyBundle",
    "assemble_bundles",
    "parse_meta",
    "parse_fixations",
    "parse_transcript",
    "parse_annotations",
    "write_meta",
    "write_fixations",
    "write_transcript",
    "write_annotations",
    "write_triplets",
    "read_triplets",
    "split_dataset",
    "parse_config_file",
    "make_config",
    "import_reflacx",
    "ReflacxImport",
    "SkippedStudy",
    "render_overlay",
    "write_heatmap_png",
    # pipeline
    "default_workers",
    "GenEtResult",
    "RepurposeResult",
    "CrAnalysis",
    "SentenceDiagnostic",
    "run_gen_et",
    "run_repurpose",
    "run_cr",
    "pair_by_label",
    "pair_by_statement",
]
