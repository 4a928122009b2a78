"""Localization and explainability metrics over half-open pixel boxes.

All geometry is integer-exact: intersections and areas are integer pixel
counts, ratios are reduced rationals, and floats appear only at the API
boundary. Means over sets of ratios are likewise computed in rational
arithmetic and converted once, so decimal-exact expectations (a mean of
exactly 0.5, say) survive the trip through floating point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import EmptyEvalSetError, MissingLabelError, ValidationError
from .model import BoundingBox

__all__ = [
    "CrRow",
    "CrReport",
    "EvalPair",
    "MetricsReport",
    "TaggedBox",
    "UnpairableEntry",
    "accuracy_at",
    "build_report",
    "containment_ratio",
    "cr_report",
    "greedy_match",
    "intersection_area",
    "iou",
    "miou_per_box",
    "miou_per_class",
]

logger = logging.getLogger(__name__)


def intersection_area(a: BoundingBox, b: BoundingBox) -> int:
    """Pixel count of the overlap; 0 when disjoint."""
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def _iou_fraction(a: BoundingBox, b: BoundingBox) -> Fraction:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return Fraction(inter, union)


def _cr_fraction(container: BoundingBox, contained: BoundingBox) -> Fraction:
    return Fraction(intersection_area(container, contained), contained.area)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; symmetric, 1.0 iff the boxes are equal."""
    f = _iou_fraction(a, b)
    return f.numerator / f.denominator


def containment_ratio(container: BoundingBox, contained: BoundingBox) -> float:
    """|container ∩ contained| / |contained|; 1.0 iff contained fits inside."""
    f = _cr_fraction(container, contained)
    return f.numerator / f.denominator


@dataclass(frozen=True, slots=True)
class EvalPair:
    """One ground-truth box with its (possibly missing) prediction.

    A missing prediction scores IoU 0 everywhere rather than being
    dropped, so hard classes stay visible in the report with near-zero
    scores instead of vanishing.
    """

    study_id: str
    gt_box: BoundingBox
    pred_box: BoundingBox | None = None
    label: str | None = None
    statement: str | None = None

    def __post_init__(self):
        if not isinstance(self.study_id, str) or not self.study_id:
            raise ValidationError("study_id", "must be a non-empty string")
        if not isinstance(self.gt_box, BoundingBox):
            raise ValidationError("gt_box", "must be a BoundingBox")
        if self.pred_box is not None and not isinstance(self.pred_box, BoundingBox):
            raise ValidationError("pred_box", "must be a BoundingBox or None")
        if self.label is None and self.statement is None:
            raise ValidationError("label", "need at least one of label/statement")

    def iou_fraction(self) -> Fraction:
        if self.pred_box is None:
            return Fraction(0)
        return _iou_fraction(self.gt_box, self.pred_box)

    @property
    def iou(self) -> float:
        f = self.iou_fraction()
        return f.numerator / f.denominator


def _require_pairs(pairs: Sequence[EvalPair], op: str) -> None:
    if not pairs:
        raise EmptyEvalSetError(f"{op} is undefined on an empty pair list")


def accuracy_at(pairs: Sequence[EvalPair], tau: float) -> float:
    """Fraction of pairs whose IoU is at least ``tau``.

    The threshold is read at its decimal value, so an IoU of exactly 3/10
    passes tau=0.3.
    """
    pairs = list(pairs)
    _require_pairs(pairs, "accuracy_at")
    cutoff = Fraction(str(tau))
    hits = sum(1 for p in pairs if p.iou_fraction() >= cutoff)
    return hits / len(pairs)


def miou_per_box(pairs: Sequence[EvalPair]) -> float:
    """Arithmetic mean of per-pair IoUs (grounding convention)."""
    pairs = list(pairs)
    _require_pairs(pairs, "miou_per_box")
    total = sum((p.iou_fraction() for p in pairs), Fraction(0))
    mean = total / len(pairs)
    return mean.numerator / mean.denominator


def miou_per_class(
    pairs: Sequence[EvalPair],
) -> tuple[dict[str, float], float]:
    """Class-mean IoUs and their unweighted mean (detection convention).

    Returns:
        (per-class mean IoU keyed by label, mean of those class means).

    Raises:
        EmptyEvalSetError: No pairs.
        MissingLabelError: Some pair has no label.
    """
    pairs = list(pairs)
    _require_pairs(pairs, "miou_per_class")
    by_label: dict[str, list[Fraction]] = {}
    for p in pairs:
        if p.label is None:
            raise MissingLabelError(
                f"pair for study {p.study_id!r} has no label; per-class mIoU "
                "needs labeled pairs"
            )
        by_label.setdefault(p.label, []).append(p.iou_fraction())
    class_means = {
        label: sum(vals, Fraction(0)) / len(vals)
        for label, vals in sorted(by_label.items())
    }
    overall = sum(class_means.values(), Fraction(0)) / len(class_means)
    return (
        {label: m.numerator / m.denominator for label, m in class_means.items()},
        overall.numerator / overall.denominator,
    )


def greedy_match(
    study_id: str,
    predictions: Sequence[tuple[BoundingBox, str, float]],
    gts: Sequence[tuple[BoundingBox, str]],
    label_gated: bool = True,
) -> list[EvalPair]:
    """Pair ground-truth boxes with predictions, one prediction each.

    Candidate (gt, prediction) pairs — same label when ``label_gated``,
    positive IoU always — are consumed globally in order of IoU descending,
    then score descending, then prediction index, then gt index; so a
    prediction overlapping two ground truths goes to the better-overlapped
    one. Ground truths left over get ``pred_box=None``.

    Returns:
        One EvalPair per ground truth, in input order, carrying the gt
        label.
    """
    candidates = []
    for gi, (gt_box, gt_label) in enumerate(gts):
        for pi, (p_box, p_label, score) in enumerate(predictions):
            if label_gated and p_label != gt_label:
                continue
            f = _iou_fraction(gt_box, p_box)
            if f > 0:
                candidates.append((-f, -score, pi, gi))
    candidates.sort()
    matched_gt: dict[int, int] = {}
    used_preds: set[int] = set()
    for _, _, pi, gi in candidates:
        if gi in matched_gt or pi in used_preds:
            continue
        matched_gt[gi] = pi
        used_preds.add(pi)
    out = []
    for gi, (gt_box, gt_label) in enumerate(gts):
        pi = matched_gt.get(gi)
        pred_box = predictions[pi][0] if pi is not None else None
        out.append(EvalPair(study_id, gt_box, pred_box, label=gt_label))
    return out


@dataclass(frozen=True, slots=True)
class TaggedBox:
    """A box tagged with its provenance and a pairing key.

    ``key`` identifies what the box is about within its study — a
    statement's text, or a sentence index rendered as text — and is what
    container/contained sides are joined on.
    """

    study_id: str
    key: str
    source: str
    box: BoundingBox

    def __post_init__(self):
        for name in ("study_id", "key", "source"):
            if not isinstance(getattr(self, name), str) or not getattr(self, name):
                raise ValidationError(name, "must be a non-empty string")
        if not isinstance(self.box, BoundingBox):
            raise ValidationError("box", "must be a BoundingBox")


@dataclass(frozen=True, slots=True)
class UnpairableEntry:
    """An entry whose (study_id, key) had no partner on the other side."""

    side: str  # "container" or "contained"
    source: str
    study_id: str
    key: str


@dataclass(frozen=True, slots=True)
class CrRow:
    """Mean containment ratio for one (container, contained) source pair."""

    container_source: str
    contained_source: str
    mean_cr: float
    pair_count: int


@dataclass(frozen=True, slots=True)
class CrReport:
    rows: tuple[CrRow, ...]
    unpairable: tuple[UnpairableEntry, ...]


def cr_report(
    containers: Sequence[TaggedBox], containeds: Sequence[TaggedBox]
) -> CrReport:
    """Mean CR per (container_source, contained_source) combination.

    Sides are joined on (study_id, key); every joined pair contributes one
    CR sample. Entries with no partner are reported (and logged) rather
    than silently dropped.
    """
    by_key_containers: dict[tuple[str, str], list[TaggedBox]] = {}
    for t in containers:
        by_key_containers.setdefault((t.study_id, t.key), []).append(t)
    by_key_containeds: dict[tuple[str, str], list[TaggedBox]] = {}
    for t in containeds:
        by_key_containeds.setdefault((t.study_id, t.key), []).append(t)

    sums: dict[tuple[str, str], Fraction] = {}
    counts: dict[tuple[str, str], int] = {}
    unpairable: list[UnpairableEntry] = []

    for t in containeds:
        partners = by_key_containers.get((t.study_id, t.key), [])
        if not partners:
            unpairable.append(
                UnpairableEntry("contained", t.source, t.study_id, t.key)
            )
            continue
        for c in partners:
            combo = (c.source, t.source)
            sums[combo] = sums.get(combo, Fraction(0)) + _cr_fraction(c.box, t.box)
            counts[combo] = counts.get(combo, 0) + 1
    for t in containers:
        if (t.study_id, t.key) not in by_key_containeds:
            unpairable.append(
                UnpairableEntry("container", t.source, t.study_id, t.key)
            )

    for entry in unpairable:
        logger.warning(
            "unpairable %s entry: source=%s study=%s key=%r",
            entry.side, entry.source, entry.study_id, entry.key,
        )

    rows = []
    for combo in sorted(counts):
        mean = sums[combo] / counts[combo]
        rows.append(
            CrRow(combo[0], combo[1], mean.numerator / mean.denominator,
                  counts[combo])
        )
    return CrReport(tuple(rows), tuple(unpairable))


@dataclass(frozen=True, slots=True)
class MetricsReport:
    """Aggregated evaluation over one set of pairs."""

    per_class_iou: Mapping[str, float]
    miou_per_class: float | None
    miou_per_box: float
    acc_at: Mapping[float, float]
    class_counts: Mapping[str, int]
    pair_count: int
    cr_rows: tuple[CrRow, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "per_class_iou", MappingProxyType(dict(self.per_class_iou))
        )
        object.__setattr__(self, "acc_at", MappingProxyType(dict(self.acc_at)))
        object.__setattr__(
            self, "class_counts", MappingProxyType(dict(self.class_counts))
        )
        for v in self.per_class_iou.values():
            if not 0.0 <= v <= 1.0:
                raise ValidationError("per_class_iou", f"value {v} outside [0, 1]")
        for v in self.acc_at.values():
            if not 0.0 <= v <= 1.0:
                raise ValidationError("acc_at", f"value {v} outside [0, 1]")


def build_report(
    pairs: Sequence[EvalPair],
    thresholds: Iterable[float] = (0.3, 0.5),
    cr_rows: tuple[CrRow, ...] = (),
) -> MetricsReport:
    """Assemble the standard report: both mIoU flavors plus accuracies.

    Per-class numbers are included when every pair is labeled; with any
    unlabeled pair the per-class section is left empty (box-level numbers
    are always present).
    """
    pairs = list(pairs)
    _require_pairs(pairs, "build_report")
    all_labeled = all(p.label is not None for p in pairs)
    if all_labeled:
        per_class, per_class_mean = miou_per_class(pairs)
        counts: dict[str, int] = {}
        for p in pairs:
            counts[p.label] = counts.get(p.label, 0) + 1
        counts = dict(sorted(counts.items()))
    else:
        per_class, per_class_mean, counts = {}, None, {}
    return MetricsReport(
        per_class_iou=per_class,
        miou_per_class=per_class_mean,
        miou_per_box=miou_per_box(pairs),
        acc_at={t: accuracy_at(pairs, t) for t in thresholds},
        class_counts=counts,
        pair_count=len(pairs),
        cr_rows=cr_rows,
    )
