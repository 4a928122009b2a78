"""Fixation heatmaps and box extraction.

The per-sentence flow is: render each assigned fixation as a
duration-weighted Gaussian, sum the maps, rescale so the maximum is 255,
keep pixels at or above a fraction of that maximum, drop connected
components below an area floor, and return the single tight rectangle
enclosing everything that survives.

Floating-point discipline: maps are summed in fixation order so results are
bit-identical regardless of how work is scheduled, and the threshold and
area cutoffs are computed with exact rational arithmetic so decimal
parameters like 0.4 and 0.0025 land on exact boundaries (naive float
products such as ``0.4 * 255`` miss them by one ulp).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np
from scipy import ndimage

from .align import assign_fixations
from .errors import (
    DimensionMismatchError,
    FixationOutsideImageError,
    ValidationError,
)
from .model import (
    BoundingBox,
    Connectivity,
    Fixation,
    Heatmap,
    ImageMeta,
    PipelineConfig,
    SentenceSpan,
)

__all__ = [
    "BinaryMask",
    "BoxOutcome",
    "ComponentStats",
    "NormalizeResult",
    "SentenceBoxResult",
    "accumulate",
    "component_stats",
    "enclosing_box",
    "filter_components",
    "generate_et_boxes",
    "normalize",
    "render_fixation",
    "render_sentence",
    "threshold_mask",
]

_STRUCTURES = {
    Connectivity.FOUR: np.array(
        [[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool
    ),
    Connectivity.EIGHT: np.ones((3, 3), dtype=bool),
}


class BinaryMask:
    """Immutable boolean pixel grid, row-major shape (height_px, width_px)."""

    __slots__ = ("width_px", "height_px", "bits")

    def __init__(self, width_px: int, height_px: int, bits):
        arr = np.array(bits, dtype=bool, order="C", copy=True)
        if arr.ndim != 2:
            raise ValidationError("bits", f"expected a 2-D grid, got ndim={arr.ndim}")
        if arr.shape != (height_px, width_px):
            raise ValidationError(
                "bits",
                f"shape {arr.shape} does not match (height_px, width_px)="
                f"({height_px}, {width_px})",
            )
        arr.setflags(write=False)
        object.__setattr__(self, "width_px", int(width_px))
        object.__setattr__(self, "height_px", int(height_px))
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BinaryMask is immutable")

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width_px == other.width_px
            and self.height_px == other.height_px
            and np.array_equal(self.bits, other.bits)
        )

    __hash__ = None

    def __repr__(self):
        return f"BinaryMask({self.width_px}x{self.height_px}, set={self.count})"

    @property
    def count(self) -> int:
        """Number of set pixels."""
        return int(self.bits.sum())

    def is_subset_of(self, other: "BinaryMask") -> bool:
        if (self.width_px, self.height_px) != (other.width_px, other.height_px):
            raise DimensionMismatchError(
                f"mask {self.width_px}x{self.height_px} vs "
                f"{other.width_px}x{other.height_px}"
            )
        return not bool((self.bits & ~other.bits).any())

    @classmethod
    def zeros(cls, width_px: int, height_px: int) -> "BinaryMask":
        return cls(width_px, height_px, np.zeros((height_px, width_px), dtype=bool))


@dataclass(frozen=True, slots=True)
class ComponentStats:
    """Size and extent of one connected component of a mask."""

    component_id: int
    pixel_count: int
    box: BoundingBox

    def __post_init__(self):
        if self.pixel_count < 1:
            raise ValidationError("pixel_count", "must be >= 1")


class NormalizeResult(NamedTuple):
    heatmap: Heatmap
    is_empty: bool


class BoxOutcome(enum.Enum):
    """Why a sentence did or did not get a box."""

    OK = "ok"
    NO_FIXATIONS = "no_fixations"
    EMPTY_MASK = "empty_mask"


@dataclass(frozen=True, slots=True)
class SentenceBoxResult:
    """Per-sentence output of the box-generation pipeline."""

    sentence_index: int
    box: BoundingBox | None
    outcome: BoxOutcome
    fixation_count: int

    def __post_init__(self):
        has_box = self.box is not None
        if has_box != (self.outcome is BoxOutcome.OK):
            raise ValidationError(
                "box", f"box presence inconsistent with outcome {self.outcome}"
            )


def render_fixation(f: Fixation, meta: ImageMeta, sigma_px: float) -> Heatmap:
    """Duration-weighted isotropic Gaussian centered on one fixation.

    Pixel (i, j) — column i, row j — gets
    ``duration_s * exp(-((i+0.5-x)^2 + (j+0.5-y)^2) / (2*sigma_px^2))``,
    evaluated separably. The kernel is truncated at the image boundary with
    no renormalization of the lost mass.

    Raises:
        FixationOutsideImageError: The center lies outside the image; such
            fixations should have been dropped at ingestion.
    """
    if sigma_px <= 0:
        raise ValidationError("sigma_px", f"must be > 0, got {sigma_px}")
    if not meta.contains_point(f.x_px, f.y_px):
        raise FixationOutsideImageError(
            f"fixation center ({f.x_px}, {f.y_px}) outside "
            f"{meta.width_px}x{meta.height_px} image"
        )
    denom = 2.0 * sigma_px * sigma_px
    dx = (np.arange(meta.width_px, dtype=np.float64) + 0.5) - f.x_px
    dy = (np.arange(meta.height_px, dtype=np.float64) + 0.5) - f.y_px
    ex = np.exp(-(dx * dx) / denom)
    ey = np.exp(-(dy * dy) / denom)
    values = np.outer(ey, ex)
    values *= f.duration_s
    return Heatmap(meta.width_px, meta.height_px, values)


def accumulate(maps: Iterable[Heatmap], meta: ImageMeta | None = None) -> Heatmap:
    """Elementwise sum of heatmaps, added in list order.

    Args:
        maps: Heatmaps of equal dimensions; may be empty.
        meta: Supplies dimensions when ``maps`` is empty; otherwise must
            agree with them.

    Returns:
        The sum, or an all-zero map for an empty input.

    Raises:
        DimensionMismatchError: Dimensions disagree (among maps, or with
            ``meta``).
        ValidationError: Empty input and no ``meta`` to size the result.
    """
    maps = list(maps)
    if not maps:
        if meta is None:
            raise ValidationError(
                "maps", "empty input needs meta to size the zero map"
            )
        return Heatmap.zeros(meta.width_px, meta.height_px)
    w, h = maps[0].width_px, maps[0].height_px
    if meta is not None and (w, h) != (meta.width_px, meta.height_px):
        raise DimensionMismatchError(
            f"maps are {w}x{h} but meta is {meta.width_px}x{meta.height_px}"
        )
    total = maps[0].values.copy()
    for m in maps[1:]:
        if (m.width_px, m.height_px) != (w, h):
            raise DimensionMismatchError(
                f"map {m.width_px}x{m.height_px} does not match {w}x{h}"
            )
        total += m.values
    return Heatmap(w, h, total)


def render_sentence(
    fixations: Iterable[Fixation], meta: ImageMeta, sigma_px: float
) -> Heatmap:
    """Sum of per-fixation renders, accumulated in input order.

    Equivalent to ``accumulate([render_fixation(f, ...) for f in fixations],
    meta)`` but holds only one temporary map at a time.
    """
    total = None
    for f in fixations:
        m = render_fixation(f, meta, sigma_px)
        if total is None:
            total = m.values.copy()
        else:
            total += m.values
    if total is None:
        return Heatmap.zeros(meta.width_px, meta.height_px)
    return Heatmap(meta.width_px, meta.height_px, total)


def normalize(m: Heatmap) -> NormalizeResult:
    """Rescale so the maximum value is exactly 255.

    An all-zero map cannot be rescaled; it is returned unchanged with
    ``is_empty`` set. A map whose maximum is already 255 is returned
    unchanged so normalization is an exact fixed point.
    """
    peak = m.max_value
    if peak == 0.0:
        return NormalizeResult(m, True)
    if peak == 255.0:
        return NormalizeResult(m, False)
    # x/x == 1.0 exactly in IEEE arithmetic, so the peak lands on 255.0.
    values = (m.values / peak) * 255.0
    return NormalizeResult(Heatmap(m.width_px, m.height_px, values), False)


def threshold_mask(m: Heatmap, threshold_frac: float) -> BinaryMask:
    """Pixels at or above ``threshold_frac`` of the 255 scale.

    The cutoff is ``threshold_frac * 255`` computed exactly through the
    decimal value of ``threshold_frac``, so e.g. 0.4 gives exactly 102.0
    and a pixel valued 102.0 is included while 101.999 is not.
    """
    if not 0.0 < threshold_frac < 1.0:
        raise ValidationError(
            "threshold_frac", f"must be strictly in (0, 1), got {threshold_frac}"
        )
    cutoff = float(Fraction(str(threshold_frac)) * 255)
    return BinaryMask(m.width_px, m.height_px, m.values >= cutoff)


def _label(mask: BinaryMask, connectivity: Connectivity):
    structure = _STRUCTURES[connectivity]
    labeled, n = ndimage.label(mask.bits, structure=structure)
    return labeled, n


def component_stats(
    mask: BinaryMask, connectivity: Connectivity = Connectivity.EIGHT
) -> tuple[ComponentStats, ...]:
    """Connected components of the mask with sizes and tight boxes."""
    labeled, n = _label(mask, connectivity)
    if n == 0:
        return ()
    counts = np.bincount(labeled.ravel(), minlength=n + 1)
    slices = ndimage.find_objects(labeled)
    out = []
    for cid in range(1, n + 1):
        rows, cols = slices[cid - 1]
        out.append(
            ComponentStats(
                component_id=cid,
                pixel_count=int(counts[cid]),
                box=BoundingBox(cols.start, rows.start, cols.stop, rows.stop),
            )
        )
    return tuple(out)


def filter_components(
    mask: BinaryMask,
    meta: ImageMeta,
    min_area_frac: float,
    connectivity: Connectivity = Connectivity.EIGHT,
) -> BinaryMask:
    """Remove components strictly smaller than ``min_area_frac`` of the image.

    The floor is the exact rational product of the decimal parameter with
    the pixel dimensions, compared with strict less-than: on a 100x100
    image with the default 1/400 fraction, 24 pixels are removed and 25
    survive.
    """
    if (mask.width_px, mask.height_px) != (meta.width_px, meta.height_px):
        raise DimensionMismatchError(
            f"mask {mask.width_px}x{mask.height_px} does not match image "
            f"{meta.width_px}x{meta.height_px}"
        )
    labeled, n = _label(mask, connectivity)
    if n == 0:
        return mask
    min_area = Fraction(str(min_area_frac)) * meta.width_px * meta.height_px
    counts = np.bincount(labeled.ravel(), minlength=n + 1)
    keep = np.zeros(n + 1, dtype=bool)
    for cid in range(1, n + 1):
        keep[cid] = not (Fraction(int(counts[cid])) < min_area)
    return BinaryMask(mask.width_px, mask.height_px, keep[labeled])


def enclosing_box(mask: BinaryMask) -> BoundingBox | None:
    """Tight half-open rectangle over all set pixels; None when empty.

    A single rectangle spans every surviving component, even when they are
    far apart.
    """
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        return None
    return BoundingBox(
        int(cols.min()), int(rows.min()), int(cols.max()) + 1, int(rows.max()) + 1
    )


def generate_et_boxes(
    fixations: Iterable[Fixation],
    sentences: Iterable[SentenceSpan],
    meta: ImageMeta,
    cfg: PipelineConfig,
) -> list[SentenceBoxResult]:
    """Gaze-derived box per sentence: align, render, threshold, enclose.

    Returns one result per input sentence, in input order. Sentences with
    no assigned fixations, or whose mask is empty after thresholding and
    area filtering, yield ``box=None`` with the reason.
    """
    sentences = list(sentences)
    alignment = assign_fixations(fixations, sentences, cfg)
    sigma_px = cfg.resolve_sigma_px(meta)
    results = []
    for s in sentences:
        assigned = alignment.fixations_for(s.sentence_index)
        if not assigned:
            results.append(
                SentenceBoxResult(s.sentence_index, None, BoxOutcome.NO_FIXATIONS, 0)
            )
            continue
        summed = render_sentence(assigned, meta, sigma_px)
        normalized, is_empty = normalize(summed)
        box = None
        if not is_empty:
            mask = threshold_mask(normalized, cfg.threshold_frac)
            mask = filter_components(mask, meta, cfg.min_area_frac, cfg.connectivity)
            box = enclosing_box(mask)
        outcome = BoxOutcome.OK if box is not None else BoxOutcome.EMPTY_MASK
        results.append(SentenceBoxResult(s.sentence_index, box, outcome, len(assigned)))
    return results
