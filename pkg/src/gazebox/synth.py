"""Seeded synthetic studies and brute-force oracles for end-to-end testing.

A synthetic study plants a known target box per sentence and scatters
fixations inside it, timed inside the sentence's dictation interval so that
alignment is unambiguous by construction. The pixel-metric oracle counts
pixel memberships directly on a grid, giving an implementation-independent
reference for the analytic box metrics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import BoundingBox, Fixation, ImageMeta, SentenceSpan

__all__ = [
    "JitterModel",
    "SentenceSynthSpec",
    "SynthSpec",
    "SynthStudy",
    "oracle_pixel_metrics",
    "synth_study",
]


class JitterModel(enum.Enum):
    """How fixation positions scatter inside the target box."""

    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True, slots=True)
class SentenceSynthSpec:
    """Gaze plan for one synthetic sentence.

    ``text`` overrides the generated sentence text (useful when the corpus
    must carry lexicon-matchable words); None selects a generic default.
    """

    target_box: BoundingBox
    fixation_count: int = 30
    duration_lo_s: float = 0.2
    duration_hi_s: float = 0.8
    jitter: JitterModel = JitterModel.UNIFORM
    text: str | None = None

    def __post_init__(self):
        if not isinstance(self.target_box, BoundingBox):
            raise ValidationError("target_box", "must be a BoundingBox")
        if self.fixation_count < 1:
            raise ValidationError("fixation_count", "must be >= 1")
        if not 0 < self.duration_lo_s <= self.duration_hi_s:
            raise ValidationError(
                "duration_lo_s",
                f"need 0 < lo <= hi, got ({self.duration_lo_s}, "
                f"{self.duration_hi_s})",
            )
        if not isinstance(self.jitter, JitterModel):
            raise ValidationError("jitter", "must be a JitterModel")
        if self.text is not None and (
            not isinstance(self.text, str) or not self.text.strip()
        ):
            raise ValidationError("text", "must be None or a non-blank string")


@dataclass(frozen=True, slots=True)
class SynthSpec:
    """Full synthetic-study plan: geometry, timeline, and seed."""

    study_id: str
    width_px: int
    height_px: int
    sentences: tuple[SentenceSynthSpec, ...]
    sentence_duration_s: float = 4.0
    gap_s: float = 1.0
    first_start_s: float = 2.0
    seed: int = 0

    def __post_init__(self):
        meta = ImageMeta(self.study_id, self.width_px, self.height_px)
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise ValidationError("sentences", "need at least one sentence")
        for k, s in enumerate(self.sentences):
            if not isinstance(s, SentenceSynthSpec):
                raise ValidationError("sentences", f"entry {k} is not a plan")
            s.target_box.validate_within(meta)
            if s.duration_hi_s >= self.sentence_duration_s:
                raise ValidationError(
                    "sentence_duration_s",
                    "fixation durations must fit inside the dictation interval",
                )
        if self.sentence_duration_s <= 0:
            raise ValidationError("sentence_duration_s", "must be > 0")
        if self.gap_s < 0:
            raise ValidationError("gap_s", "must be >= 0")
        if self.first_start_s < 0:
            raise ValidationError("first_start_s", "must be >= 0")

    @property
    def meta(self) -> ImageMeta:
        return ImageMeta(self.study_id, self.width_px, self.height_px)


@dataclass(frozen=True, slots=True)
class SynthStudy:
    """Generated study plus the planted ground truth."""

    meta: ImageMeta
    fixations: tuple[Fixation, ...]
    sentences: tuple[SentenceSpan, ...]
    targets: tuple[BoundingBox, ...]


def _interior_high(lo: float, hi: float) -> float:
    """Largest float strictly below hi (keeps clipped samples in the box)."""
    return np.nextafter(hi, lo)


def synth_study(spec: SynthSpec) -> SynthStudy:
    """Generate fixations and sentence spans per the plan.

    Fixation intervals sit strictly inside their sentence's dictation
    interval, so with any non-negative look-back they qualify for — and
    first-match to — exactly their own sentence. Output is a pure function
    of its argument (one seeded generator, fixed draw order).
    """
    rng = np.random.default_rng(spec.seed)
    meta = spec.meta
    sentences = []
    fixations = []
    targets = []
    t_cursor = spec.first_start_s
    for k, plan in enumerate(spec.sentences):
        t_start = t_cursor
        t_end = t_start + spec.sentence_duration_s
        t_cursor = t_end + spec.gap_s
        text = plan.text if plan.text is not None else (
            f"synthetic finding region {k}."
        )
        sentences.append(SentenceSpan(k, text, t_start, t_end))
        targets.append(plan.target_box)
        box = plan.target_box
        for _ in range(plan.fixation_count):
            duration = rng.uniform(plan.duration_lo_s, plan.duration_hi_s)
            t0 = rng.uniform(t_start, t_end - duration)
            if plan.jitter is JitterModel.UNIFORM:
                x = rng.uniform(box.x_min, box.x_max)
                y = rng.uniform(box.y_min, box.y_max)
            else:
                cx = (box.x_min + box.x_max) / 2.0
                cy = (box.y_min + box.y_max) / 2.0
                x = rng.normal(cx, box.width / 6.0)
                y = rng.normal(cy, box.height / 6.0)
                x = min(max(x, float(box.x_min)), _interior_high(box.x_min, box.x_max))
                y = min(max(y, float(box.y_min)), _interior_high(box.y_min, box.y_max))
            fixations.append(Fixation(x, y, t0, t0 + duration))
    fixations.sort(key=lambda f: (f.t_start_s, f.t_end_s))
    return SynthStudy(meta, tuple(fixations), tuple(sentences), tuple(targets))


def oracle_pixel_metrics(
    a: BoundingBox, b: BoundingBox
) -> tuple[float, float, float]:
    """(iou, cr_a_contains_b, cr_b_contains_a) by per-pixel counting.

    Enumerates every pixel of the combined extent on a boolean grid and
    counts memberships — deliberately naive, used only as a correctness
    reference for the analytic formulas.
    """
    x_lo = min(a.x_min, b.x_min)
    y_lo = min(a.y_min, b.y_min)
    x_hi = max(a.x_max, b.x_max)
    y_hi = max(a.y_max, b.y_max)
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    in_a = (a.x_min <= xs) & (xs < a.x_max) & (a.y_min <= ys) & (ys < a.y_max)
    in_b = (b.x_min <= xs) & (xs < b.x_max) & (b.y_min <= ys) & (ys < b.y_max)
    n_a = int(in_a.sum())
    n_b = int(in_b.sum())
    n_both = int((in_a & in_b).sum())
    n_union = n_a + n_b - n_both
    return (n_both / n_union, n_both / n_b, n_both / n_a)
