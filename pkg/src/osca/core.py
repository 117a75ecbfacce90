"""Label vocabularies and the inverse state-change algebra."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence


class StateChange(str, Enum):
    """The nine anticipation targets, in canonical index order."""

    ACTIVATE = "activate"
    DEACTIVATE = "deactivate"
    DEPOSIT = "deposit"
    REMOVE = "remove"
    CONSTRUCT = "construct"
    DECONSTRUCT = "deconstruct"
    DEFORM = "deform"
    OTHER = "other"
    NO_OSC = "no_osc"

    @property
    def index(self) -> int:
        return STATE_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> "StateChange":
        return STATE_CLASSES[i]

    @classmethod
    def parse(cls, text: str) -> "StateChange":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown state change class: {text!r}") from None

    def __str__(self) -> str:
        return self.value


STATE_CLASSES: tuple[StateChange, ...] = tuple(StateChange)
STATE_INDEX = {s: i for i, s in enumerate(STATE_CLASSES)}
NUM_STATES = len(STATE_CLASSES)
# classes that can label a frame (everything except no_osc)
FRAME_BASES: tuple[StateChange, ...] = STATE_CLASSES[:-1]

_INVERSE_PAIRS = (
    (StateChange.ACTIVATE, StateChange.DEACTIVATE),
    (StateChange.DEPOSIT, StateChange.REMOVE),
    (StateChange.CONSTRUCT, StateChange.DECONSTRUCT),
)
_INVERSE = {a: b for a, b in _INVERSE_PAIRS} | {b: a for a, b in _INVERSE_PAIRS}


def inverse_of(s: StateChange) -> Optional[StateChange]:
    """Return the class that undoes ``s``, or None for deform/other/no_osc."""
    return _INVERSE.get(StateChange(s))


class Phase(str, Enum):
    PRE = "pre"
    POST = "post"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, order=True)
class FrameStateLabel:
    """A pre_X / post_X label attached to a single critical frame."""

    phase: Phase
    base: StateChange

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        object.__setattr__(self, "base", StateChange(self.base))
        if self.base is StateChange.NO_OSC:
            raise ValueError("no_osc cannot label a frame")

    def __str__(self) -> str:
        return f"{self.phase.value}_{self.base.value}"

    @classmethod
    def parse(cls, text: str) -> "FrameStateLabel":
        phase, sep, base = text.strip().lower().partition("_")
        if not sep or phase not in ("pre", "post"):
            raise ValueError(f"malformed frame label: {text!r}")
        return cls(Phase(phase), StateChange.parse(base))


def frame_label(phase: Phase | str, base: StateChange | str) -> FrameStateLabel:
    return FrameStateLabel(Phase(phase), StateChange(base))


ALL_FRAME_LABELS: tuple[FrameStateLabel, ...] = tuple(
    FrameStateLabel(p, b) for p in Phase for b in FRAME_BASES
)


def same_state(a: FrameStateLabel, b: FrameStateLabel) -> bool:
    """True when two frame labels denote the same object state.

    pre_X and post_Y coincide when Y undoes X (pre_remove == post_deposit).
    """
    if a == b:
        return True
    if a.phase == b.phase:
        return False
    pre, post = (a, b) if a.phase is Phase.PRE else (b, a)
    return inverse_of(pre.base) is post.base


@dataclass(frozen=True, order=True)
class ActionLabel:
    verb: int
    noun: int


@dataclass(frozen=True)
class LabelVocabulary:
    """Frozen verb and noun vocabularies; state classes are fixed."""

    verbs: tuple[str, ...]
    nouns: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "verbs", tuple(self.verbs))
        object.__setattr__(self, "nouns", tuple(self.nouns))
        for name, words in (("verbs", self.verbs), ("nouns", self.nouns)):
            if len(set(words)) != len(words):
                dupes = sorted({w for w in words if words.count(w) > 1})
                raise ValueError(f"duplicate {name}: {dupes}")

    @property
    def state_classes(self) -> tuple[StateChange, ...]:
        return STATE_CLASSES

    @property
    def num_verbs(self) -> int:
        return len(self.verbs)

    @property
    def num_nouns(self) -> int:
        return len(self.nouns)

    @cached_property
    def _verb_ids(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.verbs)}

    @cached_property
    def _noun_ids(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nouns)}

    def verb_index(self, verb: str) -> int:
        try:
            return self._verb_ids[verb]
        except KeyError:
            raise KeyError(f"unknown verb: {verb!r}") from None

    def noun_index(self, noun: str) -> int:
        try:
            return self._noun_ids[noun]
        except KeyError:
            raise KeyError(f"unknown noun: {noun!r}") from None

    def action(self, verb: str, noun: str) -> ActionLabel:
        return ActionLabel(self.verb_index(verb), self.noun_index(noun))

    def render(self, action: ActionLabel) -> str:
        return f"{self.verbs[action.verb]} {self.nouns[action.noun]}"

    def check(self, action: ActionLabel) -> None:
        if not (0 <= action.verb < self.num_verbs and 0 <= action.noun < self.num_nouns):
            raise IndexError(
                f"action ({action.verb}, {action.noun}) outside vocabulary "
                f"of {self.num_verbs} verbs / {self.num_nouns} nouns"
            )

    def to_dict(self) -> dict:
        return {"verbs": list(self.verbs), "nouns": list(self.nouns)}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelVocabulary":
        return cls(tuple(d["verbs"]), tuple(d["nouns"]))

    def fingerprint(self) -> str:
        payload = json.dumps(
            {**self.to_dict(), "states": [s.value for s in STATE_CLASSES]},
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def state_indices(states: Sequence[StateChange]) -> list[int]:
    return [STATE_INDEX[StateChange(s)] for s in states]
