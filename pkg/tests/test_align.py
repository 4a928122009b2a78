"""Unit and property tests for fixation-to-sentence alignment."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazebox.align import (
    AlignmentResult,
    CollectionWindow,
    assign_fixations,
    collection_window,
    qualifies,
)
from gazebox.errors import UnsortedInputError, ValidationError
from gazebox.model import AssignmentMode, Fixation, PipelineConfig, SentenceSpan


def fx(t0, t1, x=50.0, y=50.0):
    return Fixation(x, y, t0, t1)


class TestCollectionWindow:
    def test_default_lookback(self):
        w = collection_window(SentenceSpan(0, "s", 10.0, 14.0), 1.5)
        assert w == CollectionWindow(0, 8.5, 14.0)

    def test_zero_lookback(self):
        w = collection_window(SentenceSpan(0, "s", 10.0, 14.0), 0.0)
        assert (w.w_start_s, w.w_end_s) == (10.0, 14.0)

    def test_window_may_precede_zero(self):
        w = collection_window(SentenceSpan(0, "s", 0.5, 2.0), 1.5)
        assert w.w_start_s == -1.0

    def test_rejects_negative_lookback(self):
        with pytest.raises(ValidationError):
            collection_window(SentenceSpan(0, "s", 0.5, 2.0), -0.1)


class TestQualifies:
    W = CollectionWindow(0, 8.5, 14.0)

    def test_contained(self):
        f = fx(13.6, 13.9)
        assert qualifies(f, self.W, AssignmentMode.CONTAINMENT)
        assert qualifies(f, self.W, AssignmentMode.OVERLAP)

    def test_straddles_end(self):
        f = fx(13.8, 14.2)
        assert not qualifies(f, self.W, AssignmentMode.CONTAINMENT)
        assert qualifies(f, self.W, AssignmentMode.OVERLAP)

    def test_disjoint(self):
        f = fx(7.0, 8.0)
        assert not qualifies(f, self.W, AssignmentMode.CONTAINMENT)
        assert not qualifies(f, self.W, AssignmentMode.OVERLAP)

    def test_touching_boundary_is_not_overlap(self):
        # Zero-measure contact does not count as overlap.
        f = fx(14.0, 14.5)
        assert not qualifies(f, self.W, AssignmentMode.OVERLAP)
        f2 = fx(8.0, 8.5)
        assert not qualifies(f2, self.W, AssignmentMode.OVERLAP)

    def test_exact_containment_boundaries(self):
        f = fx(8.5, 14.0)
        assert qualifies(f, self.W, AssignmentMode.CONTAINMENT)


class TestAssignFixations:
    SENTENCES = [SentenceSpan(0, "a", 10.0, 14.0), SentenceSpan(1, "b", 15.0, 18.0)]

    def test_first_match_wins(self):
        # Windows [8.5,14] and [13.5,18] both contain [13.6,13.9].
        res = assign_fixations([fx(13.6, 13.9)], self.SENTENCES, PipelineConfig())
        assert len(res.by_sentence[0]) == 1
        assert res.by_sentence[1] == ()
        assert res.unassigned == ()

    def test_single_window_match(self):
        res = assign_fixations([fx(14.5, 15.0)], self.SENTENCES, PipelineConfig())
        assert res.by_sentence[0] == ()
        assert len(res.by_sentence[1]) == 1

    def test_unassigned_before_all_windows(self):
        res = assign_fixations([fx(7.0, 8.0)], self.SENTENCES, PipelineConfig())
        assert res.assigned_count == 0
        assert len(res.unassigned) == 1

    def test_empty_inputs(self):
        res = assign_fixations([], [], PipelineConfig())
        assert res.by_sentence == {}
        assert res.unassigned == ()
        res2 = assign_fixations([], self.SENTENCES, PipelineConfig())
        assert set(res2.by_sentence) == {0, 1}

    def test_unsorted_fixations_rejected(self):
        with pytest.raises(UnsortedInputError):
            assign_fixations(
                [fx(13.0, 13.5), fx(12.0, 12.5)], self.SENTENCES, PipelineConfig()
            )

    def test_overlapping_sentences_rejected(self):
        bad = [SentenceSpan(0, "a", 10.0, 14.0), SentenceSpan(1, "b", 13.5, 18.0)]
        with pytest.raises(UnsortedInputError):
            assign_fixations([], bad, PipelineConfig())

    def test_unsorted_sentences_rejected(self):
        bad = [SentenceSpan(0, "a", 15.0, 18.0), SentenceSpan(1, "b", 10.0, 14.0)]
        with pytest.raises(UnsortedInputError):
            assign_fixations([], bad, PipelineConfig())

    def test_duplicate_sentence_index_rejected(self):
        bad = [SentenceSpan(0, "a", 10.0, 14.0), SentenceSpan(0, "b", 15.0, 18.0)]
        with pytest.raises(ValidationError):
            assign_fixations([], bad, PipelineConfig())

    def test_overlap_mode_straddler(self):
        cfg = PipelineConfig(assignment_mode=AssignmentMode.OVERLAP)
        res = assign_fixations([fx(13.8, 14.2)], self.SENTENCES, cfg)
        assert len(res.by_sentence[0]) == 1  # window 0 is first match

    def test_order_preserved_within_sentence(self):
        fixes = [fx(10.0, 10.2), fx(10.5, 10.7), fx(11.0, 11.2)]
        res = assign_fixations(fixes, self.SENTENCES, PipelineConfig())
        assert res.by_sentence[0] == tuple(fixes)


# -- property tests -----------------------------------------------------------

def _studies():
    def build(starts, durations, fix_params):
        t = 0.0
        sentences = []
        for i, (gap, dur) in enumerate(zip(starts, durations)):
            t += gap
            sentences.append(SentenceSpan(i, f"s{i}", t, t + dur))
            t += dur
        fixations = sorted(
            (fx(t0, t0 + d) for t0, d in fix_params), key=lambda f: f.t_start_s
        )
        return fixations, sentences

    n = st.shared(st.integers(0, 5), key="n")
    starts = n.flatmap(lambda k: st.lists(
        st.floats(0.0, 3.0, allow_nan=False), min_size=k, max_size=k))
    durations = n.flatmap(lambda k: st.lists(
        st.floats(0.5, 5.0, allow_nan=False), min_size=k, max_size=k))
    fix_params = st.lists(
        st.tuples(st.floats(0.0, 40.0, allow_nan=False),
                  st.floats(0.05, 2.0, allow_nan=False)),
        max_size=30,
    )
    return st.builds(build, starts, durations, fix_params)


@given(_studies(), st.sampled_from(list(AssignmentMode)))
@settings(max_examples=150, deadline=None)
def test_partition_property(study, mode):
    fixations, sentences = study
    res = assign_fixations(
        fixations, sentences, PipelineConfig(assignment_mode=mode)
    )
    total = res.assigned_count + len(res.unassigned)
    assert total == len(fixations)
    flattened = [f for fs in res.by_sentence.values() for f in fs]
    flattened += list(res.unassigned)
    assert sorted(flattened, key=lambda f: (f.t_start_s, f.t_end_s)) == sorted(
        fixations, key=lambda f: (f.t_start_s, f.t_end_s)
    )


@given(_studies(), st.floats(0.0, 3.0), st.floats(0.0, 3.0),
       st.sampled_from(list(AssignmentMode)))
@settings(max_examples=150, deadline=None)
def test_monotone_lookback(study, psi_a, psi_b, mode):
    fixations, sentences = study
    lo, hi = sorted((psi_a, psi_b))
    res_lo = assign_fixations(
        fixations, sentences, PipelineConfig(psi_s=lo, assignment_mode=mode)
    )
    res_hi = assign_fixations(
        fixations, sentences, PipelineConfig(psi_s=hi, assignment_mode=mode)
    )
    # Growing the look-back never orphans a previously assigned fixation.
    assert res_hi.assigned_count >= res_lo.assigned_count
    assert len(res_hi.unassigned) <= len(res_lo.unassigned)
