import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from osca.annotation import (
    AuditReport,
    BoundingBox,
    CriticalFrame,
    FrameCheck,
    SegmentAnnotation,
    Status,
    annotate_segment,
    annotate_segments,
    check_frame_eligibility,
    check_pnr_order,
)
from osca.core import StateChange

from tests.helpers import EIGHT_EXPECTED, eight_segment_video, seg

S = StateChange


@pytest.mark.parametrize(
    "prev_pnr, cur_pnr, ok",
    [(120, 90, False), (None, 50, True), (90, 90, True), (90, 120, True)],
)
def test_check_pnr_order(prev_pnr, cur_pnr, ok):
    prev = None if prev_pnr is None else seg("p", 0, 200, prev_pnr, S.DEPOSIT)
    assert check_pnr_order(prev, seg("c", 0, 200, cur_pnr, S.REMOVE)) is ok


@pytest.mark.parametrize(
    "occluded, w, h, expected",
    [
        (False, 9, 11, FrameCheck.REJECTED_AREA),
        (False, 10, 10, FrameCheck.ACCEPT),
        (True, 50, 50, FrameCheck.REJECTED_OCCLUSION),
        (True, 2, 2, FrameCheck.REJECTED_OCCLUSION),
    ],
)
def test_check_frame_eligibility(occluded, w, h, expected):
    frame = CriticalFrame(0, BoundingBox(0, 0, w, h), occluded)
    assert check_frame_eligibility(frame) is expected


def test_clean_segment_annotated():
    ann = annotate_segment(seg("x", 0, 100, 50, S.DEPOSIT))
    assert ann.status is Status.ANNOTATED
    assert (str(ann.pre_label), str(ann.post_label)) == ("pre_deposit", "post_deposit")


def test_small_box_rejected_by_area_only():
    ann = annotate_segment(seg("x", 0, 100, 50, S.DEPOSIT, pre_box=(5, 5)))
    assert ann.status is Status.REJECTED_AREA
    assert ann.pre_label is None and ann.post_label is None
    assert ann.rejected_frames == ((0, "rejected_area"),)


def test_pnr_before_predecessor_rejected():
    prev = seg("p", 0, 200, 120, S.DEPOSIT)
    ann = annotate_segment(seg("x", 10, 200, 60, S.REMOVE), prev)
    assert ann.status is Status.REJECTED_PNR_ORDER


def test_no_osc_segment_is_an_error():
    with pytest.raises(ValueError):
        annotate_segment(seg("x", 0, 10, None, S.NO_OSC))


def test_three_clean_segments():
    segs = [seg(f"s{i}", 100 * i, 100 * i + 90, 100 * i + 40, S.DEFORM) for i in range(3)]
    anns, report = annotate_segments(segs)
    assert [a.status for a in anns] == [Status.ANNOTATED] * 3
    assert report == AuditReport(total=3, annotated=3)


def test_rejected_segment_does_not_move_pointer():
    segs = [
        seg("s1", 0, 200, 100, S.DEPOSIT),
        seg("s2", 10, 200, 80, S.REMOVE),
        seg("s3", 20, 200, 90, S.REMOVE),
    ]
    anns, _ = annotate_segments(segs)
    # s3 (pnr 90) is compared with s1 (pnr 100), not with the rejected s2 (pnr 80)
    assert [a.status for a in anns] == [
        Status.ANNOTATED, Status.REJECTED_PNR_ORDER, Status.REJECTED_PNR_ORDER
    ]


def test_empty_video():
    anns, report = annotate_segments([])
    assert anns == [] and report == AuditReport()


def test_misordered_segments_name_the_offender():
    segs = [seg("s1", 100, 200, 150, S.DEPOSIT), seg("late", 50, 200, 160, S.REMOVE)]
    with pytest.raises(ValueError, match="late"):
        annotate_segments(segs)


def test_eight_segment_fixture():
    anns, report = annotate_segments(eight_segment_video())
    got = [
        (a.segment_id, a.status, a.pre_label and str(a.pre_label), a.post_label and str(a.post_label))
        for a in anns
    ]
    assert got == EIGHT_EXPECTED
    assert report.to_dict() == {
        "total": 7, "annotated": 4, "rejected_pnr_order": 1,
        "rejected_occlusion": 1, "rejected_area": 1, "skipped_no_osc": 1,
    }
    # s7's pre frame is occluded while its post frame is under-area:
    # the occlusion stage wins
    s7 = anns[5]
    assert s7.rejected_frames == ((310, "rejected_occlusion"),)


def test_annotation_serialization_round_trip():
    anns, _ = annotate_segments(eight_segment_video())
    for a in anns:
        assert SegmentAnnotation.from_dict(json.loads(json.dumps(a.to_dict()))) == a


frame_st = st.builds(
    lambda occ, w, h: (occ, w, h),
    st.booleans(), st.integers(0, 40), st.integers(0, 40),
)


@st.composite
def videos(draw):
    n = draw(st.integers(0, 12))
    segs, start = [], 0
    for i in range(n):
        start += draw(st.integers(0, 30))
        length = draw(st.integers(1, 100))
        state = draw(st.sampled_from(list(StateChange)))
        pnr = None if state is S.NO_OSC else start + draw(st.integers(0, length - 1))
        (po, pw, ph), (qo, qw, qh) = draw(frame_st), draw(frame_st)
        segs.append(seg(f"s{i}", start, start + length - 1, pnr, state,
                        pre_box=(pw, ph), post_box=(qw, qh), pre_occ=po, post_occ=qo))
    return segs


@given(videos())
def test_pipeline_properties(segs):
    anns, report = annotate_segments(segs)
    anns2, report2 = annotate_segments(segs)
    assert json.dumps([a.to_dict() for a in anns]) == json.dumps([a.to_dict() for a in anns2])
    assert report == report2

    by_id = {s.segment_id: s for s in segs}
    accepted = [by_id[a.segment_id] for a in anns if a.status is Status.ANNOTATED]
    pnrs = [s.pnr_frame for s in accepted]
    assert pnrs == sorted(pnrs)
    for a in anns:
        s = by_id[a.segment_id]
        if a.status is Status.ANNOTATED:
            assert a.pre_label.base is a.post_label.base is s.state_change
        else:
            assert a.pre_label is None and a.post_label is None
        if a.status is Status.REJECTED_AREA:
            assert not s.pre_frame.occluded and not s.post_frame.occluded
    assert report.total == len(anns)
    assert report.total + report.skipped_no_osc == len(segs)
    assert report.annotated + report.rejected_pnr_order + report.rejected_occlusion + report.rejected_area == report.total
