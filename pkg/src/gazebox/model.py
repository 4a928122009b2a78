"""Core domain types shared across the pipeline.

All types are plain immutable values with structural equality; invariants are
enforced at construction and violations raise :class:`ValidationError` naming
the offending field.

Conventions used throughout the package:

* Pixel coordinate origin is the top-left corner, x rightward, y downward.
* Bounding boxes are half-open integer rectangles: a box covers pixels
  (x, y) with ``x_min <= x < x_max`` and ``y_min <= y < y_max``, which makes
  area and intersection arithmetic exact.
* Pixel (i, j) is sampled at continuous coordinate (i + 0.5, j + 0.5).
"""

from __future__ import annotations

import enum
import hashlib
import math
import operator
from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError

__all__ = [
    "AnnotatedEllipse",
    "AssignmentMode",
    "BoundingBox",
    "Connectivity",
    "DetectionTriplet",
    "Fixation",
    "GroundingTriplet",
    "Heatmap",
    "ImageMeta",
    "PipelineConfig",
    "SentenceSpan",
    "TripletSource",
    "box_area",
]


def _as_int(value, field: str) -> int:
    try:
        return operator.index(value)
    except TypeError:
        raise ValidationError(field, f"expected an integer, got {value!r}") from None


def _as_finite_float(value, field: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ValidationError(field, f"expected a real number, got {value!r}") from None
    if not math.isfinite(out):
        raise ValidationError(field, f"must be finite, got {out!r}")
    return out


class Connectivity(enum.Enum):
    """Pixel adjacency used for connected-component labeling."""

    FOUR = "four"
    EIGHT = "eight"


class AssignmentMode(enum.Enum):
    """How a fixation interval must relate to a collection window to qualify."""

    CONTAINMENT = "containment"
    OVERLAP = "overlap"


class TripletSource(enum.Enum):
    """Provenance of a grounding triplet's bounding box."""

    ET = "ET"
    ANNOTATION = "ANNOTATION"


@dataclass(frozen=True, slots=True)
class ImageMeta:
    """Identity and pixel dimensions of one study image.

    Attributes:
        study_id: Opaque identifier, unique within a dataset.
        width_px: Image width in pixels.
        height_px: Image height in pixels.
    """

    study_id: str
    width_px: int
    height_px: int

    def __post_init__(self):
        if not isinstance(self.study_id, str) or not self.study_id:
            raise ValidationError("study_id", "must be a non-empty string")
        object.__setattr__(self, "width_px", _as_int(self.width_px, "width_px"))
        object.__setattr__(self, "height_px", _as_int(self.height_px, "height_px"))
        if self.width_px < 1:
            raise ValidationError("width_px", f"must be >= 1, got {self.width_px}")
        if self.height_px < 1:
            raise ValidationError("height_px", f"must be >= 1, got {self.height_px}")

    @property
    def area_px(self) -> int:
        return self.width_px * self.height_px

    def contains_point(self, x_px: float, y_px: float) -> bool:
        """True iff (x, y) lies inside the half-open image rectangle."""
        return 0 <= x_px < self.width_px and 0 <= y_px < self.height_px


@dataclass(frozen=True, slots=True)
class Fixation:
    """One gaze-stability event: image-plane position plus time interval.

    Attributes:
        x_px: Horizontal pixel coordinate of the fixation center.
        y_px: Vertical pixel coordinate (downward, origin top-left).
        t_start_s: Interval start in seconds.
        t_end_s: Interval end in seconds; must exceed ``t_start_s``.
    """

    x_px: float
    y_px: float
    t_start_s: float
    t_end_s: float

    def __post_init__(self):
        for name in ("x_px", "y_px", "t_start_s", "t_end_s"):
            object.__setattr__(self, name, _as_finite_float(getattr(self, name), name))
        if not self.t_end_s > self.t_start_s:
            raise ValidationError(
                "t_end_s", f"must exceed t_start_s ({self.t_start_s}), got {self.t_end_s}"
            )

    @property
    def duration_s(self) -> float:
        return self.t_end_s - self.t_start_s


@dataclass(frozen=True, slots=True)
class SentenceSpan:
    """One dictated report sentence with its dictation interval.

    Within a study, spans must be sorted ascending by ``t_start_s`` and be
    pairwise non-overlapping; that is validated at ingestion, not here.
    """

    sentence_index: int
    text: str
    t_start_s: float
    t_end_s: float

    def __post_init__(self):
        object.__setattr__(
            self, "sentence_index", _as_int(self.sentence_index, "sentence_index")
        )
        if self.sentence_index < 0:
            raise ValidationError("sentence_index", "must be >= 0")
        if not isinstance(self.text, str):
            raise ValidationError("text", "must be a string")
        for name in ("t_start_s", "t_end_s"):
            object.__setattr__(self, name, _as_finite_float(getattr(self, name), name))
        if not self.t_end_s > self.t_start_s:
            raise ValidationError(
                "t_end_s", f"must exceed t_start_s ({self.t_start_s}), got {self.t_end_s}"
            )

    @property
    def duration_s(self) -> float:
        return self.t_end_s - self.t_start_s


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned half-open pixel rectangle.

    Covers pixels (x, y) with ``x_min <= x < x_max`` and
    ``y_min <= y < y_max``. Empty boxes are unrepresentable; "no box" is
    expressed as ``None`` wherever a box may be absent.
    """

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            object.__setattr__(self, name, _as_int(getattr(self, name), name))
        if not self.x_min < self.x_max:
            raise ValidationError(
                "x_max", f"must exceed x_min ({self.x_min}), got {self.x_max}"
            )
        if not self.y_min < self.y_max:
            raise ValidationError(
                "y_max", f"must exceed y_min ({self.y_min}), got {self.y_max}"
            )

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains_point(self, x: float, y: float) -> bool:
        """True iff the continuous point (x, y) lies in the half-open box."""
        return self.x_min <= x < self.x_max and self.y_min <= y < self.y_max

    def contains_box(self, other: "BoundingBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and other.x_max <= self.x_max
            and other.y_max <= self.y_max
        )

    def validate_within(self, meta: ImageMeta) -> "BoundingBox":
        """Check the box lies within ``meta``'s pixel grid; returns self."""
        if self.x_min < 0 or self.x_max > meta.width_px:
            raise ValidationError(
                "x_max" if self.x_max > meta.width_px else "x_min",
                f"box x-range [{self.x_min}, {self.x_max}) exceeds image width "
                f"{meta.width_px}",
            )
        if self.y_min < 0 or self.y_max > meta.height_px:
            raise ValidationError(
                "y_max" if self.y_max > meta.height_px else "y_min",
                f"box y-range [{self.y_min}, {self.y_max}) exceeds image height "
                f"{meta.height_px}",
            )
        return self

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def box_area(b: BoundingBox) -> int:
    """Pixel area of a bounding box; always positive for a valid box."""
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def _locked_grid(values, dtype, field: str) -> np.ndarray:
    # Always copy so locking never leaks a read-only flag onto caller arrays.
    arr = np.array(values, dtype=dtype, order="C", copy=True)
    if arr.ndim != 2:
        raise ValidationError(field, f"expected a 2-D grid, got ndim={arr.ndim}")
    arr.setflags(write=False)
    return arr


class Heatmap:
    """Dense per-pixel non-negative intensity grid over an image.

    Values are stored row-major as float64 with shape
    ``(height_px, width_px)`` and are treated as immutable. A "normalized"
    heatmap additionally has ``max(values) == 255`` unless all values are 0;
    values stay real throughout the pipeline, [0, 255] is a scale rather
    than a quantization.
    """

    __slots__ = ("width_px", "height_px", "values")

    def __init__(self, width_px: int, height_px: int, values):
        width_px = _as_int(width_px, "width_px")
        height_px = _as_int(height_px, "height_px")
        if width_px < 1:
            raise ValidationError("width_px", f"must be >= 1, got {width_px}")
        if height_px < 1:
            raise ValidationError("height_px", f"must be >= 1, got {height_px}")
        arr = _locked_grid(values, np.float64, "values")
        if arr.shape != (height_px, width_px):
            raise ValidationError(
                "values",
                f"shape {arr.shape} does not match (height_px, width_px)="
                f"({height_px}, {width_px})",
            )
        if not bool((arr >= 0).all()):
            raise ValidationError("values", "all values must be >= 0")
        object.__setattr__(self, "width_px", width_px)
        object.__setattr__(self, "height_px", height_px)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Heatmap is immutable")

    def __eq__(self, other):
        if not isinstance(other, Heatmap):
            return NotImplemented
        return (
            self.width_px == other.width_px
            and self.height_px == other.height_px
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"Heatmap({self.width_px}x{self.height_px}, "
            f"max={float(self.values.max()):.6g})"
        )

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @classmethod
    def zeros(cls, width_px: int, height_px: int) -> "Heatmap":
        return cls(width_px, height_px, np.zeros((height_px, width_px)))


@dataclass(frozen=True, slots=True)
class AnnotatedEllipse:
    """Axis-aligned ellipse annotation with labels and a certainty level.

    Attributes:
        center_x_px, center_y_px: Ellipse center in pixel coordinates.
        semi_axis_x_px, semi_axis_y_px: Positive semi-axes.
        labels: Non-empty label strings, stored as a sorted unique tuple.
        certainty: Annotator confidence, integer 1..5.
    """

    center_x_px: float
    center_y_px: float
    semi_axis_x_px: float
    semi_axis_y_px: float
    labels: tuple[str, ...]
    certainty: int

    def __post_init__(self):
        for name in ("center_x_px", "center_y_px", "semi_axis_x_px", "semi_axis_y_px"):
            object.__setattr__(self, name, _as_finite_float(getattr(self, name), name))
        if self.semi_axis_x_px <= 0:
            raise ValidationError("semi_axis_x_px", "must be > 0")
        if self.semi_axis_y_px <= 0:
            raise ValidationError("semi_axis_y_px", "must be > 0")
        labels = self.labels
        if isinstance(labels, str):
            raise ValidationError("labels", "must be a collection of strings")
        try:
            canonical = tuple(sorted(set(labels)))
        except TypeError:
            raise ValidationError("labels", "must be a collection of strings") from None
        if not canonical or any(not isinstance(l, str) or not l for l in canonical):
            raise ValidationError("labels", "must be a non-empty set of non-empty strings")
        object.__setattr__(self, "labels", canonical)
        object.__setattr__(self, "certainty", _as_int(self.certainty, "certainty"))
        if not 1 <= self.certainty <= 5:
            raise ValidationError("certainty", f"must be in 1..5, got {self.certainty}")

    def contains_point(self, x: float, y: float) -> bool:
        """True iff (x, y) lies inside or on the ellipse."""
        dx = (x - self.center_x_px) / self.semi_axis_x_px
        dy = (y - self.center_y_px) / self.semi_axis_y_px
        return dx * dx + dy * dy <= 1.0


@dataclass(frozen=True, slots=True)
class GroundingTriplet:
    """(image, box, statement) record for phrase grounding.

    ``sentence_index`` is present exactly when ``source`` is ``ET``: gaze
    boxes are tied to one transcript sentence, repurposed annotation boxes
    are not.
    """

    study_id: str
    box: BoundingBox
    statement: str
    source: TripletSource
    sentence_index: int | None = None

    def __post_init__(self):
        if not isinstance(self.study_id, str) or not self.study_id:
            raise ValidationError("study_id", "must be a non-empty string")
        if not isinstance(self.box, BoundingBox):
            raise ValidationError("box", "must be a BoundingBox")
        if not isinstance(self.statement, str) or not self.statement:
            raise ValidationError("statement", "must be a non-empty string")
        if not isinstance(self.source, TripletSource):
            raise ValidationError("source", "must be a TripletSource")
        if self.source is TripletSource.ET:
            if self.sentence_index is None:
                raise ValidationError("sentence_index", "required for ET triplets")
            object.__setattr__(
                self, "sentence_index", _as_int(self.sentence_index, "sentence_index")
            )
        elif self.sentence_index is not None:
            raise ValidationError(
                "sentence_index", "must be absent for non-ET triplets"
            )


@dataclass(frozen=True, slots=True)
class DetectionTriplet:
    """(image, box, label) record for object detection."""

    study_id: str
    box: BoundingBox
    label: str

    def __post_init__(self):
        if not isinstance(self.study_id, str) or not self.study_id:
            raise ValidationError("study_id", "must be a non-empty string")
        if not isinstance(self.box, BoundingBox):
            raise ValidationError("box", "must be a BoundingBox")
        if not isinstance(self.label, str) or not self.label:
            raise ValidationError("label", "must be a non-empty string")


def _parse_connectivity(value) -> Connectivity:
    if isinstance(value, Connectivity):
        return value
    text = str(value).strip().lower()
    if text in ("4", "four"):
        return Connectivity.FOUR
    if text in ("8", "eight"):
        return Connectivity.EIGHT
    raise ValidationError("connectivity", f"expected four/eight, got {value!r}")


def _parse_assignment_mode(value) -> AssignmentMode:
    if isinstance(value, AssignmentMode):
        return value
    text = str(value).strip().lower()
    if text in ("containment", "contain"):
        return AssignmentMode.CONTAINMENT
    if text == "overlap":
        return AssignmentMode.OVERLAP
    raise ValidationError("assignment_mode", f"expected containment/overlap, got {value!r}")


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Tunable constants for the box-generation pipeline.

    Attributes:
        psi_s: Look-back interval prepended to each sentence's dictation
            window when collecting fixations.
        sigma_px: Gaussian standard deviation for fixation rendering.
            ``None`` selects the per-image default ``width_px / 20``.
        threshold_frac: Heatmap cutoff as a fraction of the normalized
            maximum, strictly in (0, 1).
        min_area_frac: Connected components smaller than this fraction of
            the image area are removed; strictly in (0, 1).
        connectivity: Adjacency for component labeling.
        assignment_mode: Fixation-to-sentence qualification rule.
        seed: 64-bit unsigned seed for every randomized step.
    """

    psi_s: float = 1.5
    sigma_px: float | None = None
    threshold_frac: float = 0.4
    min_area_frac: float = 1.0 / 400.0
    connectivity: Connectivity = Connectivity.EIGHT
    assignment_mode: AssignmentMode = AssignmentMode.CONTAINMENT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "psi_s", _as_finite_float(self.psi_s, "psi_s"))
        if self.psi_s < 0:
            raise ValidationError("psi_s", f"must be >= 0, got {self.psi_s}")
        if self.sigma_px is not None:
            object.__setattr__(
                self, "sigma_px", _as_finite_float(self.sigma_px, "sigma_px")
            )
            if self.sigma_px <= 0:
                raise ValidationError("sigma_px", f"must be > 0, got {self.sigma_px}")
        for name in ("threshold_frac", "min_area_frac"):
            value = _as_finite_float(getattr(self, name), name)
            object.__setattr__(self, name, value)
            if not 0.0 < value < 1.0:
                raise ValidationError(name, f"must be strictly in (0, 1), got {value}")
        object.__setattr__(
            self, "connectivity", _parse_connectivity(self.connectivity)
        )
        object.__setattr__(
            self, "assignment_mode", _parse_assignment_mode(self.assignment_mode)
        )
        object.__setattr__(self, "seed", _as_int(self.seed, "seed"))
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed", "must fit in an unsigned 64-bit integer")

    def resolve_sigma_px(self, meta: ImageMeta) -> float:
        """The Gaussian sigma to use for ``meta``'s image."""
        if self.sigma_px is not None:
            return self.sigma_px
        return meta.width_px / 20.0

    def fingerprint(self) -> str:
        """Short stable hash of all config fields.

        Embedded in output records so downstream consumers can detect
        parameter drift between runs.
        """
        parts = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, enum.Enum):
                value = value.value
            elif isinstance(value, float):
                value = repr(value)
            parts.append(f"{f.name}={value}")
        digest = hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()
        return digest[:12]


def stable_study_hash(study_id: str) -> int:
    """Process-independent 64-bit hash of a study identifier.

    The builtin ``hash`` is salted per interpreter run, so sub-seed
    derivation uses SHA-256 instead to keep outputs byte-identical across
    runs and worker counts.
    """
    digest = hashlib.sha256(study_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_seed(seed: int, study_id: str) -> int:
    """Per-study sub-seed: the run seed XORed with a stable study hash."""
    return (seed ^ stable_study_hash(study_id)) & (2**64 - 1)
