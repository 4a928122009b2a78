"""Assign fixations to report sentences via look-back collection windows.

Each sentence owns a collection window that starts ``psi_s`` seconds before
its dictation begins and ends when dictation ends. A fixation is assigned to
the first sentence (smallest ``sentence_index``) whose window qualifies it;
fixations qualifying nowhere are kept separately so callers can account for
every input event.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import UnsortedInputError, ValidationError
from .model import AssignmentMode, Fixation, PipelineConfig, SentenceSpan

__all__ = [
    "AlignmentResult",
    "CollectionWindow",
    "assign_fixations",
    "collection_window",
    "qualifies",
]


@dataclass(frozen=True, slots=True)
class CollectionWindow:
    """Fixation-collection interval owned by one sentence.

    ``w_start_s`` may be negative when the sentence starts early; windows
    are never clamped to the recording start.
    """

    sentence_index: int
    w_start_s: float
    w_end_s: float

    def __post_init__(self):
        if not self.w_start_s < self.w_end_s:
            raise ValidationError(
                "w_end_s",
                f"must exceed w_start_s ({self.w_start_s}), got {self.w_end_s}",
            )


def collection_window(s: SentenceSpan, psi_s: float) -> CollectionWindow:
    """Window [t_start − psi_s, t_end] for sentence ``s``.

    Args:
        s: The sentence span.
        psi_s: Non-negative look-back in seconds.

    Returns:
        The sentence's collection window.
    """
    if psi_s < 0:
        raise ValidationError("psi_s", f"must be >= 0, got {psi_s}")
    return CollectionWindow(s.sentence_index, s.t_start_s - psi_s, s.t_end_s)


def qualifies(f: Fixation, w: CollectionWindow, mode: AssignmentMode) -> bool:
    """Whether fixation ``f`` may be assigned to window ``w``.

    CONTAINMENT requires the full fixation interval inside the window;
    OVERLAP requires a positive-length intersection.
    """
    if mode is AssignmentMode.CONTAINMENT:
        return w.w_start_s <= f.t_start_s and f.t_end_s <= w.w_end_s
    if mode is AssignmentMode.OVERLAP:
        return f.t_start_s < w.w_end_s and f.t_end_s > w.w_start_s
    raise ValidationError("mode", f"unknown assignment mode {mode!r}")


@dataclass(frozen=True)
class AlignmentResult:
    """Partition of the input fixations over sentences.

    Attributes:
        by_sentence: sentence_index -> fixations assigned to it, in input
            order. Has one entry per input sentence, possibly empty.
        unassigned: Fixations qualifying for no window, in input order.
    """

    by_sentence: Mapping[int, tuple[Fixation, ...]]
    unassigned: tuple[Fixation, ...]

    def fixations_for(self, sentence_index: int) -> tuple[Fixation, ...]:
        return self.by_sentence[sentence_index]

    @property
    def assigned_count(self) -> int:
        return sum(len(v) for v in self.by_sentence.values())


def _check_fixations_sorted(fixations: list[Fixation]) -> None:
    for i in range(1, len(fixations)):
        if fixations[i].t_start_s < fixations[i - 1].t_start_s:
            raise UnsortedInputError(
                f"fixations must be sorted by t_start_s; index {i} "
                f"({fixations[i].t_start_s}) precedes index {i - 1} "
                f"({fixations[i - 1].t_start_s})"
            )


def _check_sentences_sorted(sentences: list[SentenceSpan]) -> None:
    by_time = sorted(range(len(sentences)), key=lambda k: sentences[k].t_start_s)
    if by_time != list(range(len(sentences))):
        raise UnsortedInputError("sentences must be sorted by t_start_s")
    for i in range(1, len(sentences)):
        if sentences[i].t_start_s < sentences[i - 1].t_end_s:
            raise UnsortedInputError(
                f"sentence intervals overlap: index {i - 1} ends at "
                f"{sentences[i - 1].t_end_s}, index {i} starts at "
                f"{sentences[i].t_start_s}"
            )
    seen = set()
    for s in sentences:
        if s.sentence_index in seen:
            raise ValidationError(
                "sentence_index", f"duplicate sentence_index {s.sentence_index}"
            )
        seen.add(s.sentence_index)


def assign_fixations(
    fixations: Iterable[Fixation],
    sentences: Iterable[SentenceSpan],
    cfg: PipelineConfig,
) -> AlignmentResult:
    """Partition fixations over sentence collection windows.

    Each fixation goes to the qualifying sentence with the smallest
    ``sentence_index``; a fixation qualifying for no window is unassigned.

    Args:
        fixations: Sorted ascending by ``t_start_s``.
        sentences: Sorted ascending by ``t_start_s``, pairwise
            non-overlapping, with unique sentence indices.
        cfg: Supplies ``psi_s`` and ``assignment_mode``.

    Returns:
        An :class:`AlignmentResult` partitioning every input fixation.

    Raises:
        UnsortedInputError: Either input violates its ordering precondition.
    """
    fixations = list(fixations)
    sentences = list(sentences)
    _check_fixations_sorted(fixations)
    _check_sentences_sorted(sentences)

    # First-match scans run in index order, which may differ from time order.
    by_index = sorted(sentences, key=lambda s: s.sentence_index)
    windows = [collection_window(s, cfg.psi_s) for s in by_index]

    assigned: dict[int, list[Fixation]] = {s.sentence_index: [] for s in sentences}
    unassigned: list[Fixation] = []
    for f in fixations:
        for w in windows:
            if qualifies(f, w, cfg.assignment_mode):
                assigned[w.sentence_index].append(f)
                break
        else:
            unassigned.append(f)

    frozen = {k: tuple(v) for k, v in assigned.items()}
    return AlignmentResult(MappingProxyType(frozen), tuple(unassigned))
