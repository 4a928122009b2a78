"""Turn ellipse-annotated studies with dictated reports into triplets.

Detection triplets are mechanical: every (box, label) pair is one record.
Grounding triplets need a statement per box: sentences that deny findings
are dropped, the remainder are matched against the box's labels through a
keyword-stem lexicon, and matching sentences are concatenated in report
order. When several boxes produce the same statement, the statement is
paired with one box — highest annotator certainty, ties broken by a seeded
uniform draw.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import EllipseOutsideImageError, UnknownLabelError, ValidationError
from .model import (
    AnnotatedEllipse,
    BoundingBox,
    DetectionTriplet,
    GroundingTriplet,
    ImageMeta,
    PipelineConfig,
    SentenceSpan,
    TripletSource,
    derive_seed,
)

__all__ = [
    "LabelLexicon",
    "Statement",
    "build_od_triplets",
    "build_pg_triplets",
    "build_statement",
    "ellipse_to_box",
    "filter_negative_sentences",
    "is_negative_sentence",
    "pair_statement_with_box",
    "sentence_implies_label",
]

# Stems for the chest-radiograph label vocabularies the pipeline ships
# with; matching is case-insensitive substring search, so stems are kept
# short enough to catch inflections (atelectasis/atelectatic, ...).
_DEFAULT_STEMS: dict[str, tuple[str, ...]] = {
    "Abnormal mediastinal contour": ("mediastin",),
    "Acute fracture": ("fracture",),
    "Airway wall thickening": ("airway wall", "bronchial wall"),
    "Atelectasis": ("atelecta",),
    "Consolidation": ("consolidat",),
    "Emphysema": ("emphysema", "hyperinflat", "hyperexpan"),
    "Enlarged cardiac silhouette": ("cardiomegaly", "cardiac silhouette", "heart"),
    "Enlarged hilum": ("hilum", "hilar"),
    "Fibrosis": ("fibrosis", "fibrotic"),
    "Fracture": ("fracture",),
    "Groundglass opacity": (
        "ground glass",
        "ground-glass",
        "groundglass",
        "opacit",
    ),
    "Hiatal hernia": ("hernia",),
    "High lung volume / emphysema": (
        "emphysema",
        "hyperinflat",
        "hyperexpan",
        "lung volume",
    ),
    "Interstitial lung disease": ("interstitial",),
    "Lung nodule or mass": ("nodul", "mass"),
    "Mass": ("mass",),
    "Nodule": ("nodul",),
    "Pleural abnormality": ("pleural", "effusion"),
    "Pleural effusion": ("effusion", "pleural fluid"),
    "Pleural thickening": ("pleural thickening", "thickening"),
    "Pneumothorax": ("pneumothora",),
    "Pulmonary edema": ("edema", "vascular congestion"),
    "Quality issue": ("quality", "rotated", "underpenetrat"),
    "Support devices": ("tube", "catheter", "pacemaker", "device", "wire"),
    "Wide mediastinum": ("mediastin",),
}

_STOPWORDS = frozenset(
    {"a", "an", "and", "in", "of", "or", "the", "with", "without"}
)


def _clean_stems(label: str, stems: Iterable[str]) -> tuple[str, ...]:
    out = []
    for stem in stems:
        if not isinstance(stem, str) or not stem.strip():
            raise ValidationError("stems", f"empty stem for label {label!r}")
        out.append(stem.strip().lower())
    if not out:
        raise ValidationError("stems", f"label {label!r} has no stems")
    return tuple(out)


@dataclass(frozen=True)
class LabelLexicon:
    """Label -> lowercase keyword stems used for statement matching.

    A sentence implies a label when any of the label's stems occurs in the
    sentence, case-insensitively.
    """

    stems_by_label: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        if not self.stems_by_label:
            raise ValidationError("stems_by_label", "lexicon must not be empty")
        canonical = {
            label: _clean_stems(label, stems)
            for label, stems in self.stems_by_label.items()
        }
        object.__setattr__(self, "stems_by_label", MappingProxyType(canonical))

    def labels(self) -> tuple[str, ...]:
        return tuple(sorted(self.stems_by_label))

    def stems_for(self, label: str) -> tuple[str, ...]:
        try:
            return self.stems_by_label[label]
        except KeyError:
            raise UnknownLabelError(label) from None

    def __contains__(self, label: str) -> bool:
        return label in self.stems_by_label

    @classmethod
    def default(cls) -> "LabelLexicon":
        return cls(dict(_DEFAULT_STEMS))

    @classmethod
    def parse(cls, text: str) -> "LabelLexicon":
        """Parse ``label: stem1, stem2, ...`` lines; # starts a comment."""
        entries: dict[str, tuple[str, ...]] = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            label, sep, stems = line.partition(":")
            if not sep or not label.strip():
                raise ValidationError(
                    "lexicon", f"line {line_no}: expected 'label: stems', got {raw!r}"
                )
            entries[label.strip()] = tuple(
                s.strip() for s in stems.split(",") if s.strip()
            )
        return cls(entries)

    @classmethod
    def from_file(cls, path) -> "LabelLexicon":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def with_auto_stems(self, labels: Iterable[str]) -> "LabelLexicon":
        """Extend with entries derived from unknown labels' own words.

        For each label not already covered, the stems are its lowercased
        content words. Lets ingestion tolerate vocabulary drift without a
        hand-edited lexicon; library callers that want strictness simply
        don't use it.
        """
        extra: dict[str, tuple[str, ...]] = {}
        for label in labels:
            if label in self or label in extra:
                continue
            words = [
                w for w in re.split(r"[^a-z0-9]+", label.lower())
                if w and w not in _STOPWORDS
            ]
            if not words:
                words = [label.lower()]
            extra[label] = tuple(dict.fromkeys(words))
        if not extra:
            return self
        merged = dict(self.stems_by_label)
        merged.update(extra)
        return LabelLexicon(merged)


@dataclass(frozen=True, slots=True)
class Statement:
    """Concatenation of the report sentences implying a box's labels."""

    text: str
    implied_labels: frozenset[str]
    source_sentence_indices: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text:
            raise ValidationError("text", "must be a non-empty string")
        object.__setattr__(self, "implied_labels", frozenset(self.implied_labels))
        if not self.implied_labels:
            raise ValidationError("implied_labels", "must be non-empty")
        object.__setattr__(
            self,
            "source_sentence_indices",
            tuple(int(i) for i in self.source_sentence_indices),
        )


def ellipse_to_box(e: AnnotatedEllipse, meta: ImageMeta) -> BoundingBox:
    """Tangent box of the ellipse, clamped to the image.

    Corners are floor/ceil of the real tangent rectangle, so every pixel
    whose center lies inside the ellipse is covered.

    Raises:
        EllipseOutsideImageError: The clamped box is empty (the ellipse
            lies entirely outside the image).
    """
    x_min = max(0, math.floor(e.center_x_px - e.semi_axis_x_px))
    y_min = max(0, math.floor(e.center_y_px - e.semi_axis_y_px))
    x_max = min(meta.width_px, math.ceil(e.center_x_px + e.semi_axis_x_px))
    y_max = min(meta.height_px, math.ceil(e.center_y_px + e.semi_axis_y_px))
    if x_min >= x_max or y_min >= y_max:
        raise EllipseOutsideImageError(
            f"ellipse at ({e.center_x_px}, {e.center_y_px}) lies outside "
            f"{meta.width_px}x{meta.height_px} image"
        )
    return BoundingBox(x_min, y_min, x_max, y_max)


def is_negative_sentence(sentence: str) -> bool:
    """Whether a sentence denies findings and should be dropped.

    A sentence is negative when, case-insensitively, it contains "normal"
    without containing "abnormal", or contains the space-delimited word
    "no " (including sentence-initially). The rule is deliberately literal
    — "nodules no larger than" is dropped, "nodule" alone is not.
    """
    lowered = sentence.lower()
    if "normal" in lowered and "abnormal" not in lowered:
        return True
    return lowered.startswith("no ") or " no " in lowered


def filter_negative_sentences(sentences: Sequence[str]) -> list[str]:
    """Retained sentences, original order preserved."""
    return [s for s in sentences if not is_negative_sentence(s)]


def sentence_implies_label(sentence: str, label: str, lex: LabelLexicon) -> bool:
    """True iff any stem of ``label`` occurs in ``sentence`` (case-folded).

    Raises:
        UnknownLabelError: ``label`` has no lexicon entry.
    """
    stems = lex.stems_for(label)
    lowered = sentence.lower()
    return any(stem in lowered for stem in stems)


def build_statement(
    box_labels: Iterable[str],
    retained_sentences: Sequence[tuple[int, str]],
    lex: LabelLexicon,
) -> Statement | None:
    """Statement for a box: implying sentences joined in report order.

    Args:
        box_labels: The box's labels.
        retained_sentences: (sentence_index, text) pairs that already
            passed negative filtering, in report order.
        lex: Stem lexicon.

    Returns:
        The statement, or None when no sentence implies any label.
    """
    labels = sorted(set(box_labels))
    picked: list[tuple[int, str]] = []
    implied: set[str] = set()
    for index, text in retained_sentences:
        hits = [lb for lb in labels if sentence_implies_label(text, lb, lex)]
        if hits:
            picked.append((index, text))
            implied.update(hits)
    if not picked:
        return None
    return Statement(
        text=" ".join(text.strip() for _, text in picked),
        implied_labels=frozenset(implied),
        source_sentence_indices=tuple(index for index, _ in picked),
    )


def pair_statement_with_box(
    statement: Statement,
    candidates: Sequence[tuple[BoundingBox, int]],
    rng: random.Random,
) -> BoundingBox:
    """One box for the statement: highest certainty, seeded uniform on ties.

    The generator is consulted only when several candidates share the
    maximum certainty, so single-winner pairings never perturb the seeded
    stream.
    """
    if not candidates:
        raise ValidationError("candidates", "must be non-empty")
    top = max(c for _, c in candidates)
    best = [box for box, c in candidates if c == top]
    if len(best) == 1:
        return best[0]
    return rng.choice(best)


def build_od_triplets(
    study_id: str,
    ellipses: Sequence[AnnotatedEllipse],
    meta: ImageMeta,
) -> list[DetectionTriplet]:
    """One detection triplet per (box, label) pair, in annotation order."""
    out = []
    for e in ellipses:
        box = ellipse_to_box(e, meta)
        for label in e.labels:
            out.append(DetectionTriplet(study_id, box, label))
    return out


def build_pg_triplets(
    study_id: str,
    ellipses: Sequence[AnnotatedEllipse],
    sentences: Sequence[SentenceSpan],
    meta: ImageMeta,
    lex: LabelLexicon,
    cfg: PipelineConfig,
) -> list[GroundingTriplet]:
    """One grounding triplet per distinct statement.

    Sentences failing the negative filter are dropped; each box gets the
    statement its labels imply; boxes sharing identical statement text are
    collapsed into one triplet whose box is chosen by certainty (seeded
    tie-break on the study's derived sub-seed). Statements are emitted in
    first-occurrence (annotation) order.
    """
    retained = [
        (s.sentence_index, s.text)
        for s in sentences
        if not is_negative_sentence(s.text)
    ]
    by_text: dict[str, dict] = {}
    for e in ellipses:
        box = ellipse_to_box(e, meta)
        statement = build_statement(e.labels, retained, lex)
        if statement is None:
            continue
        slot = by_text.setdefault(
            statement.text, {"statement": statement, "candidates": []}
        )
        slot["candidates"].append((box, e.certainty))
    rng = random.Random(derive_seed(cfg.seed, study_id))
    out = []
    for slot in by_text.values():  # insertion order = first occurrence
        box = pair_statement_with_box(slot["statement"], slot["candidates"], rng)
        out.append(
            GroundingTriplet(
                study_id, box, slot["statement"].text, TripletSource.ANNOTATION
            )
        )
    return out
