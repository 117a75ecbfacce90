"""Frame-level pre/post super-annotation of state-changing segments.

Each candidate segment passes four stages in order: PNR ordering against
the last accepted segment, occlusion of the critical frames, bounding-box
area, and finally labeling.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

from .core import ActionLabel, FrameStateLabel, Phase, StateChange, frame_label

if TYPE_CHECKING:
    from .corpus import ActivityVideo

AREA_THRESHOLD = 100


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box size: {self.w}x{self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def within(self, width: float, height: float) -> bool:
        return (
            self.x >= 0 and self.y >= 0
            and self.x + self.w <= width and self.y + self.h <= height
        )

    def to_list(self) -> list:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class CriticalFrame:
    frame_index: int
    box: BoundingBox
    occluded: bool = False
    object_class: Optional[int] = None


@dataclass(frozen=True)
class Segment:
    segment_id: str
    start_frame: int
    end_frame: int
    pnr_frame: Optional[int]
    action: ActionLabel
    state_change: StateChange
    pre_frame: Optional[CriticalFrame] = None
    post_frame: Optional[CriticalFrame] = None

    def __post_init__(self):
        object.__setattr__(self, "state_change", StateChange(self.state_change))
        if self.start_frame > self.end_frame:
            raise ValueError(f"{self.segment_id}: start_frame > end_frame")
        if self.state_change is not StateChange.NO_OSC:
            if self.pnr_frame is None:
                raise ValueError(f"{self.segment_id}: state-changing segment needs a PNR frame")
            if not self.start_frame <= self.pnr_frame <= self.end_frame:
                raise ValueError(f"{self.segment_id}: PNR frame outside [start, end]")
        for name in ("pre_frame", "post_frame"):
            cf = getattr(self, name)
            if cf is not None and not self.start_frame <= cf.frame_index <= self.end_frame:
                raise ValueError(f"{self.segment_id}: {name} outside [start, end]")


class Status(str, Enum):
    ANNOTATED = "annotated"
    REJECTED_PNR_ORDER = "rejected_pnr_order"
    REJECTED_OCCLUSION = "rejected_occlusion"
    REJECTED_AREA = "rejected_area"

    def __str__(self) -> str:
        return self.value


class FrameCheck(str, Enum):
    ACCEPT = "accept"
    REJECTED_OCCLUSION = "rejected_occlusion"
    REJECTED_AREA = "rejected_area"


@dataclass(frozen=True)
class SegmentAnnotation:
    segment_id: str
    status: Status
    pre_label: Optional[FrameStateLabel] = None
    post_label: Optional[FrameStateLabel] = None
    # (frame_index, reason) for every critical frame that failed
    rejected_frames: tuple[tuple[int, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "status": self.status.value,
            "pre_label": None if self.pre_label is None else str(self.pre_label),
            "post_label": None if self.post_label is None else str(self.post_label),
            "rejected_frames": [[i, r] for i, r in self.rejected_frames],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentAnnotation":
        return cls(
            segment_id=d["segment_id"],
            status=Status(d["status"]),
            pre_label=None if d.get("pre_label") is None else FrameStateLabel.parse(d["pre_label"]),
            post_label=None if d.get("post_label") is None else FrameStateLabel.parse(d["post_label"]),
            rejected_frames=tuple((int(i), str(r)) for i, r in d.get("rejected_frames", [])),
        )


@dataclass
class AuditReport:
    total: int = 0
    annotated: int = 0
    rejected_pnr_order: int = 0
    rejected_occlusion: int = 0
    rejected_area: int = 0
    skipped_no_osc: int = 0

    def record(self, status: Status) -> None:
        self.total += 1
        setattr(self, status.value, getattr(self, status.value) + 1)

    def __add__(self, other: "AuditReport") -> "AuditReport":
        return AuditReport(**{k: v + getattr(other, k) for k, v in asdict(self).items()})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k:<20} {v}" for k, v in asdict(self).items()) + "\n"


def check_pnr_order(prev_annotated: Optional[Segment], current: Segment) -> bool:
    """False iff the previously accepted segment's PNR lies strictly after ours."""
    if prev_annotated is None:
        return True
    return not prev_annotated.pnr_frame > current.pnr_frame


def check_frame_eligibility(frame: CriticalFrame, area_threshold: float = AREA_THRESHOLD) -> FrameCheck:
    if frame.occluded:
        return FrameCheck.REJECTED_OCCLUSION
    if frame.box.area < area_threshold:
        return FrameCheck.REJECTED_AREA
    return FrameCheck.ACCEPT


def annotate_segment(
    segment: Segment,
    prev_annotated: Optional[Segment] = None,
    area_threshold: float = AREA_THRESHOLD,
) -> SegmentAnnotation:
    if segment.state_change is StateChange.NO_OSC:
        raise ValueError(f"{segment.segment_id}: no_osc segments are not annotated")
    if segment.pre_frame is None or segment.post_frame is None:
        raise ValueError(f"{segment.segment_id}: missing pre/post critical frame")

    if not check_pnr_order(prev_annotated, segment):
        return SegmentAnnotation(segment.segment_id, Status.REJECTED_PNR_ORDER)

    frames = (segment.pre_frame, segment.post_frame)
    # every frame goes through the occlusion stage before any area check
    for stage, status in (
        (FrameCheck.REJECTED_OCCLUSION, Status.REJECTED_OCCLUSION),
        (FrameCheck.REJECTED_AREA, Status.REJECTED_AREA),
    ):
        failed = tuple(
            (f.frame_index, stage.value)
            for f in frames
            if check_frame_eligibility(f, area_threshold) is stage
        )
        if failed:
            return SegmentAnnotation(segment.segment_id, status, rejected_frames=failed)

    return SegmentAnnotation(
        segment.segment_id,
        Status.ANNOTATED,
        pre_label=frame_label(Phase.PRE, segment.state_change),
        post_label=frame_label(Phase.POST, segment.state_change),
    )


def annotate_segments(
    segments: Sequence[Segment], area_threshold: float = AREA_THRESHOLD
) -> tuple[list[SegmentAnnotation], AuditReport]:
    """Run the pipeline over one video's segments, in order.

    No-OSC segments are skipped (counted in ``skipped_no_osc`` only). The
    PNR comparison is always against the most recently *accepted* segment.
    """
    for a, b in zip(segments, segments[1:]):
        if b.start_frame < a.start_frame:
            raise ValueError(
                f"segment {b.segment_id!r} starts before its predecessor {a.segment_id!r}"
            )
    annotations = []
    report = AuditReport()
    prev: Optional[Segment] = None
    for seg in segments:
        if seg.state_change is StateChange.NO_OSC:
            report.skipped_no_osc += 1
            continue
        ann = annotate_segment(seg, prev, area_threshold)
        report.record(ann.status)
        if ann.status is Status.ANNOTATED:
            prev = seg
        annotations.append(ann)
    return annotations, report


def annotate_video(
    video: "ActivityVideo", area_threshold: float = AREA_THRESHOLD
) -> tuple[list[SegmentAnnotation], AuditReport]:
    return annotate_segments(video.segments, area_threshold)
