"""Object state-change anticipation: annotation, corpora, models and evaluation."""

from .core import (
    ALL_FRAME_LABELS,
    NUM_STATES,
    STATE_CLASSES,
    ActionLabel,
    FrameStateLabel,
    LabelVocabulary,
    Phase,
    StateChange,
    frame_label,
    inverse_of,
    same_state,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_FRAME_LABELS",
    "NUM_STATES",
    "STATE_CLASSES",
    "ActionLabel",
    "FrameStateLabel",
    "LabelVocabulary",
    "Phase",
    "StateChange",
    "frame_label",
    "inverse_of",
    "same_state",
]
