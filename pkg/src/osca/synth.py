"""Synthetic procedural-activity corpora.

State-change sequences follow a first-order Markov chain; each segment draws
a (verb, noun) from a per-state sub-vocabulary and a ``T x D`` feature block
blended from a class centre and isotropic noise.
"""

from __future__ import annotations

import bisect
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .annotation import BoundingBox, CriticalFrame, Segment
from .core import NUM_STATES, STATE_CLASSES, ActionLabel, LabelVocabulary, StateChange
from .corpus import ActivityVideo, Corpus

# per-class clip counts of the egocentric benchmark (train and test), canonical order
BENCHMARK_TRAIN_COUNTS = {
    StateChange.ACTIVATE: 4017,
    StateChange.DEACTIVATE: 1492,
    StateChange.DEPOSIT: 14984,
    StateChange.REMOVE: 15338,
    StateChange.CONSTRUCT: 4186,
    StateChange.DECONSTRUCT: 1773,
    StateChange.DEFORM: 4400,
    StateChange.OTHER: 15667,
    StateChange.NO_OSC: 2066,
}
BENCHMARK_TEST_COUNTS = {
    StateChange.ACTIVATE: 1888,
    StateChange.DEACTIVATE: 617,
    StateChange.DEPOSIT: 7613,
    StateChange.REMOVE: 7608,
    StateChange.CONSTRUCT: 2289,
    StateChange.DECONSTRUCT: 966,
    StateChange.DEFORM: 2149,
    StateChange.OTHER: 8715,
    StateChange.NO_OSC: 1284,
}

# preferred successors used to shape default transition matrices
DEFAULT_SUCCESSORS = {
    StateChange.ACTIVATE: (StateChange.DEPOSIT, StateChange.REMOVE),
    StateChange.DEACTIVATE: (StateChange.REMOVE,),
    StateChange.DEPOSIT: (StateChange.REMOVE, StateChange.ACTIVATE),
    StateChange.REMOVE: (StateChange.DEPOSIT, StateChange.OTHER),
    StateChange.CONSTRUCT: (StateChange.DEFORM,),
    StateChange.DECONSTRUCT: (StateChange.CONSTRUCT,),
    StateChange.DEFORM: (StateChange.OTHER,),
    StateChange.OTHER: (StateChange.DEPOSIT, StateChange.DEACTIVATE),
    StateChange.NO_OSC: (StateChange.ACTIVATE, StateChange.DECONSTRUCT),
}


def counts_to_priors(counts: dict) -> np.ndarray:
    v = np.array([counts[s] for s in STATE_CLASSES], dtype=float)
    return v / v.sum()


def benchmark_priors() -> np.ndarray:
    return counts_to_priors(BENCHMARK_TRAIN_COUNTS)


def balanced_transition_matrix(
    priors: Sequence[float],
    successors: Optional[dict] = None,
    strength: float = 20.0,
    iters: int = 5000,
    tol: float = 1e-13,
) -> np.ndarray:
    """Row-stochastic matrix shaped by ``successors`` whose stationary law is ``priors``.

    Sinkhorn-scales the affinity ``1 + strength * [j in successors(i)]`` into a
    flow matrix with both marginals equal to ``priors``, then normalizes rows.
    """
    pi = np.asarray(priors, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("priors must be strictly positive")
    pi = pi / pi.sum()
    successors = DEFAULT_SUCCESSORS if successors is None else successors
    K = np.ones((NUM_STATES, NUM_STATES))
    for src, dsts in successors.items():
        for dst in dsts:
            K[StateChange(src).index, StateChange(dst).index] += strength
    a = np.ones(NUM_STATES)
    b = np.ones(NUM_STATES)
    for _ in range(iters):
        a = pi / (K @ b)
        b = pi / (K.T @ a)
        flow = a[:, None] * K * b[None, :]
        if np.abs(flow.sum(axis=1) - pi).max() < tol:
            break
    P = flow / flow.sum(axis=1, keepdims=True)
    return P


@dataclass
class SynthConfig:
    num_videos: int = 300
    segments_per_video: tuple[int, int] = (8, 24)
    # None selects the benchmark training-class frequencies
    class_priors: Optional[list[float]] = None
    # None selects balanced_transition_matrix(class_priors)
    transition_matrix: Optional[list[list[float]]] = None
    verbs_per_state: int = 4
    nouns_per_state: int = 6
    # probability that a segment's verb/noun comes from the pooled vocabulary
    # instead of its own state's sub-vocabulary
    action_ambiguity: float = 0.0
    feature_dim: int = 256
    time_steps: int = 8
    feature_informativeness: float = 0.3
    occlusion_rate: float = 0.0
    small_box_rate: float = 0.0
    frame_size: tuple[int, int] = (1920, 1080)
    seed: int = 0

    def errors(self) -> list[str]:
        errs = []
        if self.num_videos < 1:
            errs.append("num_videos must be >= 1")
        lo, hi = self.segments_per_video
        if lo < 1 or hi < lo:
            errs.append(f"segments_per_video must satisfy 1 <= lo <= hi, got {(lo, hi)}")
        for name in ("verbs_per_state", "nouns_per_state", "feature_dim", "time_steps"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be >= 1")
        for name in ("action_ambiguity", "feature_informativeness", "occlusion_rate", "small_box_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                errs.append(f"{name} must lie in [0, 1], got {v}")
        if self.class_priors is not None:
            p = np.asarray(self.class_priors, dtype=float)
            if p.shape != (NUM_STATES,):
                errs.append(f"class_priors must have {NUM_STATES} entries")
            elif np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                errs.append(f"class_priors must be nonnegative and sum to 1 (sum={p.sum():.12g})")
        if self.transition_matrix is not None:
            P = np.asarray(self.transition_matrix, dtype=float)
            if P.shape != (NUM_STATES, NUM_STATES):
                errs.append(f"transition_matrix must be {NUM_STATES}x{NUM_STATES}")
            else:
                for i, row in enumerate(P):
                    if np.any(row < 0):
                        errs.append(f"transition_matrix row {i} has negative entries")
                    elif row.sum() == 0:
                        errs.append(f"transition_matrix row {i} is all zero")
                    elif abs(row.sum() - 1.0) > 1e-9:
                        errs.append(f"transition_matrix row {i} sums to {row.sum():.12g}, not 1")
        return errs

    def validate(self) -> "SynthConfig":
        errs = self.errors()
        if errs:
            raise ValueError("invalid SynthConfig:\n  " + "\n  ".join(errs))
        return self

    def priors(self) -> np.ndarray:
        if self.class_priors is None:
            return benchmark_priors()
        return np.asarray(self.class_priors, dtype=float)

    def transitions(self) -> np.ndarray:
        if self.transition_matrix is None:
            return balanced_transition_matrix(self.priors())
        return np.asarray(self.transition_matrix, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segments_per_video"] = list(self.segments_per_video)
        d["frame_size"] = list(self.frame_size)
        return d


def synthetic_vocabulary(cfg: SynthConfig) -> LabelVocabulary:
    verbs = [f"{s.value}_v{j}" for s in STATE_CLASSES for j in range(cfg.verbs_per_state)]
    nouns = [f"{s.value}_n{j}" for s in STATE_CLASSES for j in range(cfg.nouns_per_state)]
    return LabelVocabulary(tuple(verbs), tuple(nouns))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def class_centres(cfg: SynthConfig) -> np.ndarray:
    """Unit-norm class centres, so separability does not grow with D."""
    c = _rng(cfg.seed, 0).standard_normal((NUM_STATES, cfg.feature_dim))
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def _cumulative(p) -> list[float]:
    c = np.cumsum(p).tolist()
    c[-1] = 1.0  # guard against round-off below 1
    return c


def sample_state_sequence(rng: np.random.Generator, length: int, priors, P) -> list[int]:
    """First state from ``priors``, then ``length - 1`` Markov steps under ``P``."""
    u = rng.random(length).tolist()
    first = _cumulative(priors)
    rows = [_cumulative(r) for r in np.asarray(P)]
    seq = [bisect.bisect_right(first, u[0])]
    for x in u[1:]:
        seq.append(bisect.bisect_right(rows[seq[-1]], x))
    return seq


def generate_video(
    cfg: SynthConfig,
    index: int,
    centres: Optional[np.ndarray] = None,
    transitions: Optional[np.ndarray] = None,
) -> ActivityVideo:
    """The ``index``-th video; depends only on (cfg, index)."""
    rng = _rng(cfg.seed, 1, index)
    centres = class_centres(cfg) if centres is None else centres
    priors = cfg.priors()
    P = cfg.transitions() if transitions is None else transitions
    lo, hi = cfg.segments_per_video
    length = int(rng.integers(lo, hi + 1))
    states = sample_state_sequence(rng, length, priors, P)

    vps, nps = cfg.verbs_per_state, cfg.nouns_per_state
    alpha = cfg.feature_informativeness
    width, height = cfg.frame_size
    segments, features = [], []
    cursor = int(rng.integers(0, 60))
    for k, s in enumerate(states):
        if rng.random() < cfg.action_ambiguity:
            verb = int(rng.integers(NUM_STATES * vps))
            noun = int(rng.integers(NUM_STATES * nps))
        else:
            verb = s * vps + int(rng.integers(vps))
            noun = s * nps + int(rng.integers(nps))
        seg_len = int(rng.integers(30, 151))
        start, end = cursor, cursor + seg_len - 1
        state = STATE_CLASSES[s]
        pnr = pre = post = None
        if state is not StateChange.NO_OSC:
            pnr = start + int(rng.integers(seg_len // 4, 3 * seg_len // 4 + 1))
            frames = []
            for idx in (start, end):
                if rng.random() < cfg.small_box_rate:
                    w, h = int(rng.integers(1, 10)), int(rng.integers(1, 10))
                else:
                    w, h = int(rng.integers(20, 301)), int(rng.integers(20, 301))
                x, y = int(rng.integers(0, width - w)), int(rng.integers(0, height - h))
                frames.append(
                    CriticalFrame(
                        idx,
                        BoundingBox(x, y, w, h),
                        occluded=bool(rng.random() < cfg.occlusion_rate),
                        object_class=noun,
                    )
                )
            pre, post = frames
        segments.append(
            Segment(
                segment_id=f"s{k:04d}",
                start_frame=start,
                end_frame=end,
                pnr_frame=pnr,
                action=ActionLabel(verb, noun),
                state_change=state,
                pre_frame=pre,
                post_frame=post,
            )
        )
        noise = rng.standard_normal((cfg.time_steps, cfg.feature_dim))
        block = alpha * centres[s][None, :] + (1.0 - alpha) * noise
        features.append(block.astype(np.float32))
        cursor = end + 1 + int(rng.integers(0, 31))
    return ActivityVideo(f"vid{index:05d}", tuple(segments), tuple(features))


def generate_synthetic(cfg: SynthConfig) -> Corpus:
    cfg.validate()
    centres, P = class_centres(cfg), cfg.transitions()
    videos = tuple(generate_video(cfg, i, centres, P) for i in range(cfg.num_videos))
    return Corpus(synthetic_vocabulary(cfg), videos, {}, feature_source="synthetic")
