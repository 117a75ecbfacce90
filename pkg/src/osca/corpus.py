"""Corpus data model, on-disk format, decision samples and splits.

On-disk layout
--------------
``<name>.jsonl`` holds one JSON object per line:

* line 1, ``{"kind": "vocab", "format_version": 1, "verbs": [...],
  "nouns": [...], "features": "<sidecar file name or null>",
  "feature_source": "synthetic" | "precomputed_file"}``
* one ``{"kind": "video", "video_id", "split", "segments": [...]}`` per
  video; each segment is ``{"segment_id", "start", "end", "pnr", "verb",
  "noun", "state_change", "pre_frame", "post_frame"}`` where a critical
  frame is ``{"idx", "box": [x, y, w, h], "occluded"}``. ``verb``/``noun``
  are vocabulary strings (integer indices are accepted on load).
* one ``{"kind": "features", "video_id", "segment_id", "offset", "T", "D"}``
  index record per segment when a sidecar exists.

The sidecar is a flat file of little-endian float32 values. Segment
features are stored row-major as a ``T x D`` block starting at byte
``offset``; blocks are written back to back in record order.
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .annotation import BoundingBox, CriticalFrame, Segment
from .core import (
    NUM_STATES,
    STATE_INDEX,
    ActionLabel,
    LabelVocabulary,
    StateChange,
)

FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")
FEATURE_DTYPE = np.dtype("<f4")


class CorpusFormatError(ValueError):
    """Schema violation in a corpus file."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(eq=False)
class ActivityVideo:
    video_id: str
    segments: tuple[Segment, ...]
    # one (T, D) float32 array per segment, or None for annotation-only corpora
    features: Optional[tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        self.segments = tuple(self.segments)
        if self.features is not None:
            self.features = tuple(self.features)
            if len(self.features) != len(self.segments):
                raise ValueError(
                    f"{self.video_id}: {len(self.features)} feature blocks for "
                    f"{len(self.segments)} segments"
                )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActivityVideo):
            return NotImplemented
        if self.video_id != other.video_id or self.segments != other.segments:
            return False
        if (self.features is None) != (other.features is None):
            return False
        if self.features is None:
            return True
        return all(np.array_equal(a, b) for a, b in zip(self.features, other.features))

    @property
    def states(self) -> list[StateChange]:
        return [s.state_change for s in self.segments]

    @property
    def actions(self) -> list[ActionLabel]:
        return [s.action for s in self.segments]


@dataclass(eq=False)
class Corpus:
    vocabulary: LabelVocabulary
    videos: tuple[ActivityVideo, ...]
    split_assignment: dict[str, str] = field(default_factory=dict)
    feature_source: str = "synthetic"

    def __post_init__(self):
        self.videos = tuple(self.videos)
        ids = [v.video_id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate video ids in corpus")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and self.videos == other.videos
            and self.split_assignment == other.split_assignment
            and self.feature_source == other.feature_source
        )

    @property
    def feature_dim(self) -> Optional[int]:
        for v in self.videos:
            if v.features:
                return int(v.features[0].shape[1])
        return None

    @property
    def num_segments(self) -> int:
        return sum(len(v.segments) for v in self.videos)

    def select(self, split: Optional[str | Iterable[str]] = None) -> list[ActivityVideo]:
        """Videos of one split (or several); all videos when ``split`` is None."""
        if split is None:
            return list(self.videos)
        wanted = {split} if isinstance(split, str) else set(split)
        if not self.split_assignment:
            raise ValueError("corpus has no split assignment")
        return [v for v in self.videos if self.split_assignment.get(v.video_id) in wanted]

    def action_pairs(self) -> list[ActionLabel]:
        """Distinct (verb, noun) pairs observed anywhere in the corpus, sorted."""
        return sorted({s.action for v in self.videos for s in v.segments})


@dataclass(eq=False)
class DecisionSample:
    """One anticipation point: segments 1..n observed, segment n+1 is the target."""

    video_id: str
    decision_index: int
    visual_window: np.ndarray
    action_history: tuple[ActionLabel, ...]
    state_history: tuple[StateChange, ...]
    target: StateChange


# ---------------------------------------------------------------------------
# decision samples


def build_decision_samples(
    video: ActivityVideo, window: int = 1, max_history: Optional[int] = None
) -> list[DecisionSample]:
    if window < 1:
        raise ValueError("window must be >= 1")
    n_seg = len(video.segments)
    if n_seg < 2:
        return []
    if video.features is None:
        raise ValueError(f"{video.video_id}: no features; cannot build decision samples")
    samples = []
    for n in range(1, n_seg):
        lo = max(0, n - window)
        visual = np.concatenate(video.features[lo:n], axis=0)
        hist_lo = 0 if max_history is None else max(0, n - max_history)
        samples.append(
            DecisionSample(
                video_id=video.video_id,
                decision_index=n,
                visual_window=visual,
                action_history=tuple(s.action for s in video.segments[hist_lo:n]),
                state_history=tuple(s.state_change for s in video.segments[hist_lo:n]),
                target=video.segments[n].state_change,
            )
        )
    return samples


def corpus_samples(
    corpus: Corpus,
    split: Optional[str] = None,
    window: int = 1,
    max_history: Optional[int] = None,
) -> list[DecisionSample]:
    out = []
    for v in corpus.select(split):
        out.extend(build_decision_samples(v, window, max_history))
    return out


# ---------------------------------------------------------------------------
# splits and priors


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n items."""
    exact = [r * n for r in ratios]
    counts = [math.floor(x) for x in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split(
    corpus: Corpus,
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
    names: Sequence[str] = SPLITS,
) -> Corpus:
    """Assign whole videos to splits. Pure function of (video ids, ratios, seed)."""
    if len(ratios) != len(names):
        raise ValueError(f"{len(ratios)} ratios for {len(names)} split names")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be positive and sum to 1, got {list(ratios)}")
    ids = sorted(v.video_id for v in corpus.videos)
    if len(ids) < len(names):
        raise ValueError(f"{len(ids)} videos cannot fill {len(names)} splits")
    perm = np.random.default_rng(seed).permutation(len(ids))
    counts = _apportion(len(ids), ratios)
    assignment = {}
    pos = 0
    for name, c in zip(names, counts):
        for i in perm[pos : pos + c]:
            assignment[ids[i]] = name
        pos += c
    return replace(corpus, split_assignment=assignment)


def class_priors(corpus: Corpus, split: Optional[str] = None) -> np.ndarray:
    """Empirical distribution of decision-sample targets (segments 2..n)."""
    counts = np.zeros(NUM_STATES)
    for v in corpus.select(split):
        for seg in v.segments[1:]:
            counts[STATE_INDEX[seg.state_change]] += 1
    if counts.sum() == 0:
        raise ValueError(f"split {split!r} has no decision samples")
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# file io


def _frame_to_json(cf: Optional[CriticalFrame]) -> Optional[dict]:
    if cf is None:
        return None
    d = {"idx": cf.frame_index, "box": cf.box.to_list(), "occluded": cf.occluded}
    if cf.object_class is not None:
        d["object_class"] = cf.object_class
    return d


def _segment_to_json(seg: Segment, vocab: LabelVocabulary) -> dict:
    return {
        "segment_id": seg.segment_id,
        "start": seg.start_frame,
        "end": seg.end_frame,
        "pnr": seg.pnr_frame,
        "verb": vocab.verbs[seg.action.verb],
        "noun": vocab.nouns[seg.action.noun],
        "state_change": seg.state_change.value,
        "pre_frame": _frame_to_json(seg.pre_frame),
        "post_frame": _frame_to_json(seg.post_frame),
    }


def sidecar_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".features.bin")


def save_corpus(corpus: Corpus, path: str | os.PathLike) -> Path:
    """Write ``path`` (jsonl) plus a float32 sidecar when features exist."""
    path = Path(path)
    vocab = corpus.vocabulary
    has_features = any(v.features is not None for v in corpus.videos)
    side = sidecar_path(path)
    header = {
        "kind": "vocab",
        "format_version": FORMAT_VERSION,
        **vocab.to_dict(),
        "features": side.name if has_features else None,
        "feature_source": corpus.feature_source,
    }
    lines = [json.dumps(header)]
    index_lines = []
    offset = 0
    blocks = []
    for v in corpus.videos:
        lines.append(
            json.dumps(
                {
                    "kind": "video",
                    "video_id": v.video_id,
                    "split": corpus.split_assignment.get(v.video_id),
                    "segments": [_segment_to_json(s, vocab) for s in v.segments],
                }
            )
        )
        if v.features is None:
            continue
        for seg, feat in zip(v.segments, v.features):
            block = np.ascontiguousarray(feat, dtype=FEATURE_DTYPE)
            T, D = block.shape
            index_lines.append(
                json.dumps(
                    {
                        "kind": "features",
                        "video_id": v.video_id,
                        "segment_id": seg.segment_id,
                        "offset": offset,
                        "T": T,
                        "D": D,
                    }
                )
            )
            blocks.append(block.tobytes())
            offset += block.nbytes
    path.write_text("\n".join(lines + index_lines) + "\n")
    if has_features:
        with open(side, "wb") as f:
            for b in blocks:
                f.write(b)
    return path


def _require(rec: dict, key: str, line: int, types) -> object:
    if key not in rec:
        raise CorpusFormatError("missing required field", line, key)
    val = rec[key]
    if types is not None and not isinstance(val, types):
        raise CorpusFormatError(f"expected {types}, got {type(val).__name__}", line, key)
    return val


def _parse_frame(d, line: int, where: str) -> Optional[CriticalFrame]:
    if d is None:
        return None
    if not isinstance(d, dict):
        raise CorpusFormatError("critical frame must be an object", line, where)
    box = d.get("box")
    if not (isinstance(box, list) and len(box) == 4):
        raise CorpusFormatError("box must be [x, y, w, h]", line, f"{where}.box")
    try:
        bb = BoundingBox(*(float(x) for x in box))
    except (TypeError, ValueError) as e:
        raise CorpusFormatError(str(e), line, f"{where}.box") from None
    idx = _require(d, "idx", line, int)
    return CriticalFrame(
        frame_index=idx,
        box=bb,
        occluded=bool(d.get("occluded", False)),
        object_class=d.get("object_class"),
    )


def _lookup(vocab_index, value, line: int, fld: str) -> int:
    if isinstance(value, bool):
        raise CorpusFormatError("expected vocabulary entry", line, fld)
    if isinstance(value, int):
        return value
    try:
        return vocab_index(value)
    except KeyError as e:
        raise CorpusFormatError(str(e), line, fld) from None


def _parse_segment(d: dict, vocab: LabelVocabulary, line: int, pos: int) -> Segment:
    where = f"segments[{pos}]"
    if not isinstance(d, dict):
        raise CorpusFormatError("segment must be an object", line, where)
    verb = _lookup(vocab.verb_index, _require(d, "verb", line, (str, int)), line, f"{where}.verb")
    noun = _lookup(vocab.noun_index, _require(d, "noun", line, (str, int)), line, f"{where}.noun")
    action = ActionLabel(verb, noun)
    try:
        vocab.check(action)
    except IndexError as e:
        raise CorpusFormatError(str(e), line, f"{where}.verb/noun") from None
    state_text = _require(d, "state_change", line, str)
    try:
        state = StateChange.parse(state_text)
    except ValueError as e:
        raise CorpusFormatError(str(e), line, f"{where}.state_change") from None
    pnr = d.get("pnr")
    if pnr is not None and not isinstance(pnr, int):
        raise CorpusFormatError("expected int or null", line, f"{where}.pnr")
    try:
        return Segment(
            segment_id=str(_require(d, "segment_id", line, (str, int))),
            start_frame=_require(d, "start", line, int),
            end_frame=_require(d, "end", line, int),
            pnr_frame=pnr,
            action=action,
            state_change=state,
            pre_frame=_parse_frame(d.get("pre_frame"), line, f"{where}.pre_frame"),
            post_frame=_parse_frame(d.get("post_frame"), line, f"{where}.post_frame"),
        )
    except ValueError as e:
        if isinstance(e, CorpusFormatError):
            raise
        raise CorpusFormatError(str(e), line, where) from None


def load_corpus(path: str | os.PathLike, mmap: bool = False) -> Corpus:
    """Read and validate a corpus file (and its feature sidecar).

    With ``mmap=True`` feature blocks are read-only views into a memory map
    of the sidecar instead of in-memory copies.
    """
    path = Path(path)
    records = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"invalid JSON ({e.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise CorpusFormatError("record must be an object", lineno)
            records.append((lineno, rec))
    if not records:
        raise CorpusFormatError("no records")

    lineno, header = records[0]
    if header.get("kind") != "vocab":
        raise CorpusFormatError("first record must be the vocab header", lineno, "kind")
    version = header.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise CorpusFormatError(f"unsupported format version {version}", lineno, "format_version")
    try:
        vocab = LabelVocabulary(
            tuple(_require(header, "verbs", lineno, list)),
            tuple(_require(header, "nouns", lineno, list)),
        )
    except ValueError as e:
        if isinstance(e, CorpusFormatError):
            raise
        raise CorpusFormatError(str(e), lineno, "verbs/nouns") from None

    video_recs = []
    index: dict[tuple[str, str], tuple[int, dict]] = {}
    for lineno, rec in records[1:]:
        kind = rec.get("kind")
        if kind == "video":
            video_recs.append((lineno, rec))
        elif kind == "features":
            key = (
                str(_require(rec, "video_id", lineno, (str, int))),
                str(_require(rec, "segment_id", lineno, (str, int))),
            )
            for k in ("offset", "T", "D"):
                _require(rec, k, lineno, int)
            if rec["T"] < 1 or rec["D"] < 1:
                raise CorpusFormatError("T and D must be >= 1", lineno, "T/D")
            if key in index:
                raise CorpusFormatError(f"duplicate feature record for {key}", lineno)
            index[key] = (lineno, rec)
        elif kind == "vocab":
            raise CorpusFormatError("vocab header may only appear once", lineno, "kind")
        else:
            raise CorpusFormatError(f"unknown record kind {kind!r}", lineno, "kind")

    side_name = header.get("features")
    blob = None
    if side_name is not None:
        side = path.parent / side_name
        if not side.exists():
            raise CorpusFormatError(f"feature sidecar {side} not found", records[0][0], "features")
        if mmap:
            blob = np.memmap(side, dtype=FEATURE_DTYPE, mode="r")
        else:
            blob = np.fromfile(side, dtype=FEATURE_DTYPE)

    feature_dim = None
    videos = []
    split_assignment = {}
    for lineno, rec in video_recs:
        vid = str(_require(rec, "video_id", lineno, (str, int)))
        seg_recs = _require(rec, "segments", lineno, list)
        segments = tuple(_parse_segment(d, vocab, lineno, i) for i, d in enumerate(seg_recs))
        for i, (a, b) in enumerate(zip(segments, segments[1:])):
            if b.start_frame < a.start_frame:
                raise CorpusFormatError(
                    f"segment {b.segment_id!r} starts before its predecessor",
                    lineno,
                    f"segments[{i + 1}].start",
                )
        sp = rec.get("split")
        if sp is not None:
            if not isinstance(sp, str):
                raise CorpusFormatError("split must be a string", lineno, "split")
            split_assignment[vid] = sp
        features = None
        if blob is not None:
            feats = []
            for seg in segments:
                key = (vid, seg.segment_id)
                if key not in index:
                    raise CorpusFormatError(
                        f"no feature record for segment {seg.segment_id!r}", lineno, "segments"
                    )
                iline, irec = index.pop(key)
                T, D, off = irec["T"], irec["D"], irec["offset"]
                if feature_dim is None:
                    feature_dim = D
                elif D != feature_dim:
                    raise CorpusFormatError(
                        f"feature dimension mismatch: D={D}, corpus uses D={feature_dim}", iline, "D"
                    )
                if off % FEATURE_DTYPE.itemsize:
                    raise CorpusFormatError("offset not aligned to float32", iline, "offset")
                start = off // FEATURE_DTYPE.itemsize
                if start + T * D > blob.shape[0]:
                    raise CorpusFormatError("feature block runs past end of sidecar", iline, "offset")
                block = blob[start : start + T * D].reshape(T, D)
                if not mmap:
                    block = block.copy()
                if not np.all(np.isfinite(block)):
                    raise CorpusFormatError("non-finite feature values", iline, "offset")
                feats.append(block)
            features = tuple(feats)
        videos.append(ActivityVideo(vid, segments, features))
    if index:
        (iline, irec), *_ = index.values()
        raise CorpusFormatError(
            f"feature record for unknown segment {irec['video_id']}/{irec['segment_id']}", iline
        )
    if not videos:
        raise CorpusFormatError("no video records")
    try:
        return Corpus(
            vocab,
            tuple(videos),
            split_assignment,
            feature_source=header.get("feature_source", "precomputed_file"),
        )
    except ValueError as e:
        raise CorpusFormatError(str(e)) from None


def state_counts(corpus: Corpus, split: Optional[str] = None) -> Counter:
    return Counter(s.state_change for v in corpus.select(split) for s in v.segments)
