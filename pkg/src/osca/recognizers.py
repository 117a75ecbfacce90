"""Sources for the action/state histories consumed at inference time.

* oracle: ground-truth histories.
* noisy: ground truth with uniform label corruption at a fixed rate.
* composed: state changes inferred from simulated (or supplied) pre/post
  frame classifier outputs by :func:`compose_state_change`.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    ALL_FRAME_LABELS,
    NUM_STATES,
    STATE_CLASSES,
    STATE_INDEX,
    ActionLabel,
    FrameStateLabel,
    Phase,
    StateChange,
    frame_label,
    inverse_of,
)
from .corpus import ActivityVideo, DecisionSample

Histories = tuple[tuple[ActionLabel, ...], tuple[StateChange, ...]]


@dataclass(frozen=True)
class NoiseSpec:
    action_rate: float = 0.0
    state_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for k in ("action_rate", "state_rate"):
            v = getattr(self, k)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{k} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class FramePrediction:
    label: FrameStateLabel
    confidence: Optional[float] = None


def oracle_histories(sample: DecisionSample) -> Histories:
    return tuple(sample.action_history), tuple(sample.state_history)


def corrupt_history(tokens: Sequence[int], rate: float, vocab_size: int, rng: np.random.Generator) -> list[int]:
    """Replace each token, with probability ``rate``, by a uniform draw from the other labels."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    tokens = [int(t) for t in tokens]
    if rate == 0.0:
        return tokens
    if vocab_size < 2:
        raise ValueError("corruption needs at least two labels")
    for t in tokens:
        if not 0 <= t < vocab_size:
            raise ValueError(f"token {t} outside vocabulary of size {vocab_size}")
    flip = rng.random(len(tokens)) < rate
    draws = rng.integers(0, vocab_size - 1, size=len(tokens))
    # shifting draws at or above the original skips it, giving V-1 equiprobable labels
    return [(d + (d >= t)) if f else t for t, f, d in zip(tokens, flip, draws)]


def compose_state_change(pre_pred: FrameStateLabel, post_pred: FrameStateLabel) -> StateChange:
    """Segment-level state change from the two frame classifiers' outputs."""
    if pre_pred.phase is Phase.PRE and post_pred.phase is Phase.POST:
        if pre_pred.base is post_pred.base:
            return pre_pred.base
        if inverse_of(pre_pred.base) is post_pred.base:
            return StateChange.NO_OSC
    return post_pred.base


def video_rng(seed: int, video_id: str, stream: int) -> np.random.Generator:
    key = (zlib.crc32(video_id.encode()), stream)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# ---------------------------------------------------------------------------
# recognizer specs


@dataclass(frozen=True)
class OracleRecognizer:
    def __str__(self) -> str:
        return "oracle"


@dataclass(frozen=True)
class NoisyRecognizer:
    noise: NoiseSpec

    def __str__(self) -> str:
        n = self.noise
        return f"noisy({n.action_rate}, {n.state_rate}, {n.seed})"


@dataclass(frozen=True)
class ComposedRecognizer:
    """Two simulated frame classifiers plus an optional action error rate."""

    accuracy_pre: float = 1.0
    accuracy_post: float = 1.0
    seed: int = 0
    action_rate: float = 0.0

    def __post_init__(self):
        for k in ("accuracy_pre", "accuracy_post", "action_rate"):
            v = getattr(self, k)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{k} must lie in [0, 1], got {v}")

    def __str__(self) -> str:
        return f"composed({self.accuracy_pre}, {self.accuracy_post}, {self.seed}, {self.action_rate})"


RecognizerSpec = OracleRecognizer | NoisyRecognizer | ComposedRecognizer

_SPEC_RE = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def parse_recognizer(text: str) -> RecognizerSpec:
    """Parse ``oracle``, ``noisy(a, s[, seed])`` or ``composed(pre, post[, seed[, action_rate]])``."""
    m = _SPEC_RE.match(text or "")
    if not m:
        raise ValueError(f"malformed recognizer spec: {text!r}")
    name, args = m.group(1).lower(), m.group(2)
    try:
        vals = [float(a) for a in args.split(",")] if args and args.strip() else []
    except ValueError:
        raise ValueError(f"non-numeric recognizer arguments: {text!r}") from None
    if name == "oracle" and not vals:
        return OracleRecognizer()
    if name == "noisy" and len(vals) in (2, 3):
        seed = int(vals[2]) if len(vals) == 3 else 0
        return NoisyRecognizer(NoiseSpec(vals[0], vals[1], seed))
    if name == "composed" and len(vals) in (2, 3, 4):
        seed = int(vals[2]) if len(vals) >= 3 else 0
        action_rate = vals[3] if len(vals) == 4 else 0.0
        return ComposedRecognizer(vals[0], vals[1], seed, action_rate)
    raise ValueError(f"unknown recognizer spec: {text!r}")


def true_frame_labels(video: ActivityVideo, rng: np.random.Generator) -> list[tuple[FrameStateLabel, FrameStateLabel]]:
    """Ground-truth (pre, post) frame labels per segment.

    A no-change segment shows the same state at both ends, rendered as
    pre_X / post_inverse(X) for a random paired class X.
    """
    paired = [s for s in STATE_CLASSES if inverse_of(s) is not None]
    out = []
    for seg in video.segments:
        if seg.state_change is StateChange.NO_OSC:
            x = paired[int(rng.integers(len(paired)))]
            out.append((frame_label(Phase.PRE, x), frame_label(Phase.POST, inverse_of(x))))
        else:
            out.append((frame_label(Phase.PRE, seg.state_change), frame_label(Phase.POST, seg.state_change)))
    return out


def simulate_frame_classifier(
    truth: FrameStateLabel, accuracy: float, rng: np.random.Generator
) -> FramePrediction:
    if rng.random() < accuracy:
        return FramePrediction(truth)
    others = [lab for lab in ALL_FRAME_LABELS if lab != truth]
    return FramePrediction(others[int(rng.integers(len(others)))])


def recognize_segments(
    video: ActivityVideo,
    spec: RecognizerSpec,
    action_vocab: Sequence[ActionLabel],
    frame_predictions: Optional[Mapping[str, tuple[FramePrediction, FramePrediction]]] = None,
) -> Histories:
    """One recognized (action, state) token per segment of the video.

    Noise is drawn once per (video, seed): the history at decision point n is
    the length-n prefix of this sequence.
    """
    actions = tuple(video.actions)
    states = tuple(video.states)
    if isinstance(spec, OracleRecognizer):
        return actions, states

    action_ids = {a: i for i, a in enumerate(action_vocab)}

    def corrupt_actions(rate: float, seed: int) -> tuple[ActionLabel, ...]:
        if rate == 0.0:
            return actions
        try:
            ids = [action_ids[a] for a in actions]
        except KeyError as e:
            raise ValueError(f"action {e.args[0]} missing from the action vocabulary") from None
        noisy = corrupt_history(ids, rate, len(action_vocab), video_rng(seed, video.video_id, 0))
        return tuple(action_vocab[i] for i in noisy)

    if isinstance(spec, NoisyRecognizer):
        n = spec.noise
        state_ids = [STATE_INDEX[s] for s in states]
        noisy_states = corrupt_history(state_ids, n.state_rate, NUM_STATES, video_rng(n.seed, video.video_id, 1))
        return corrupt_actions(n.action_rate, n.seed), tuple(STATE_CLASSES[i] for i in noisy_states)

    if isinstance(spec, ComposedRecognizer):
        rng = video_rng(spec.seed, video.video_id, 2)
        truth = true_frame_labels(video, rng)
        composed = []
        for seg, (pre_true, post_true) in zip(video.segments, truth):
            if frame_predictions is not None and seg.segment_id in frame_predictions:
                pre_p, post_p = frame_predictions[seg.segment_id]
            else:
                pre_p = simulate_frame_classifier(pre_true, spec.accuracy_pre, rng)
                post_p = simulate_frame_classifier(post_true, spec.accuracy_post, rng)
            composed.append(compose_state_change(pre_p.label, post_p.label))
        return corrupt_actions(spec.action_rate, spec.seed), tuple(composed)

    raise ValueError(f"unknown recognizer spec: {spec!r}")


def recognized_histories(
    video: ActivityVideo,
    spec: RecognizerSpec,
    action_vocab: Sequence[ActionLabel],
    frame_predictions=None,
    max_history: Optional[int] = None,
) -> list[Histories]:
    """Histories for decision points n = 1 .. len(segments) - 1."""
    acts, sts = recognize_segments(video, spec, action_vocab, frame_predictions)
    out = []
    for n in range(1, len(video.segments)):
        lo = 0 if max_history is None else max(0, n - max_history)
        out.append((acts[lo:n], sts[lo:n]))
    return out
