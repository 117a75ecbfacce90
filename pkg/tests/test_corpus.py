import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osca.core import StateChange
from osca.corpus import (
    ActivityVideo,
    Corpus,
    CorpusFormatError,
    _apportion,
    build_decision_samples,
    class_priors,
    load_corpus,
    save_corpus,
    sidecar_path,
    split,
)

from tests.helpers import seg, tiny_corpus

S = StateChange


def test_round_trip(tmp_path):
    corpus = tiny_corpus()
    path = save_corpus(corpus, tmp_path / "c.jsonl")
    assert sidecar_path(path).exists()
    again = load_corpus(path)
    assert again == corpus
    for a, b in zip(corpus.videos, again.videos):
        for fa, fb in zip(a.features, b.features):
            assert fa.tobytes() == fb.tobytes()


def test_golden_contents(tmp_path):
    path = save_corpus(tiny_corpus(feature_dim=3, time_steps=1), tmp_path / "g.jsonl")
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert [r["kind"] for r in lines] == ["vocab", "video", "video"] + ["features"] * 5
    assert lines[0]["verbs"] == ["open", "close", "put"]
    first = lines[1]["segments"][0]
    assert (first["verb"], first["noun"], first["state_change"]) == ("open", "door", "activate")
    assert lines[1]["segments"][1]["pre_frame"] is None
    assert [r["offset"] for r in lines[3:]] == [0, 12, 24, 36, 48]
    blob = np.fromfile(sidecar_path(path), dtype="<f4")
    assert blob.tolist()[:6] == [0, 1, 2, 1, 2, 3]


def test_mmap_load_matches(tmp_path):
    path = save_corpus(tiny_corpus(), tmp_path / "c.jsonl")
    assert load_corpus(path, mmap=True) == load_corpus(path)


def test_empty_file(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    with pytest.raises(CorpusFormatError, match="no records"):
        load_corpus(p)


def test_dimension_mismatch(tmp_path):
    path = save_corpus(tiny_corpus(), tmp_path / "c.jsonl")
    lines = path.read_text().splitlines()
    rec = json.loads(lines[-1])
    rec["D"], rec["T"] = 2, 4
    lines[-1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusFormatError, match="dimension mismatch") as e:
        load_corpus(path)
    assert e.value.line == len(lines)


def test_missing_field_reports_line(tmp_path):
    path = save_corpus(tiny_corpus(), tmp_path / "c.jsonl")
    lines = path.read_text().splitlines()
    rec = json.loads(lines[2])
    del rec["segments"][0]["state_change"]
    lines[2] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusFormatError) as e:
        load_corpus(path)
    assert e.value.line == 3 and e.value.field == "state_change"
    assert str(e.value).count("line 3") == 1


def test_unknown_verb(tmp_path):
    path = save_corpus(tiny_corpus(), tmp_path / "c.jsonl")
    text = path.read_text().replace('"verb": "close"', '"verb": "fly"')
    path.write_text(text)
    with pytest.raises(CorpusFormatError, match="verb"):
        load_corpus(path)


def _video(n, T=1, D=2, vid="v"):
    segs = [seg(f"s{i}", 10 * i, 10 * i + 5, 10 * i + 2, S.DEPOSIT) for i in range(n)]
    feats = [np.full((T, D), i, dtype=np.float32) for i in range(n)]
    return ActivityVideo(vid, tuple(segs), tuple(feats))


def test_window_two_on_five_segments():
    samples = build_decision_samples(_video(5), window=2)
    assert [s.decision_index for s in samples] == [1, 2, 3, 4]
    assert [s.visual_window[:, 0].tolist() for s in samples] == [[0], [0, 1], [1, 2], [2, 3]]
    assert [len(s.action_history) for s in samples] == [1, 2, 3, 4]


def test_targets_follow_history():
    v = tiny_corpus().videos[0]
    samples = build_decision_samples(v)
    assert [s.target for s in samples] == [S.NO_OSC, S.DEPOSIT]
    assert samples[1].state_history == (S.ACTIVATE, S.NO_OSC)


def test_short_videos_give_no_samples():
    assert build_decision_samples(_video(1)) == []
    assert build_decision_samples(_video(0)) == []


@pytest.mark.parametrize("n, ratios, expected", [
    (10, (0.6, 0.2, 0.2), [6, 2, 2]),
    (3, (1 / 3, 1 / 3, 1 / 3), [1, 1, 1]),
    (7, (0.6, 0.2, 0.2), [4, 2, 1]),
])
def test_apportion(n, ratios, expected):
    assert _apportion(n, ratios) == expected


def _many(n):
    return Corpus(tiny_corpus().vocabulary, tuple(_video(3, vid=f"vid{i:03d}") for i in range(n)))


def test_split_sizes_and_determinism():
    c = split(_many(10), seed=4)
    names = list(c.split_assignment.values())
    assert [names.count(k) for k in ("train", "val", "test")] == [6, 2, 2]
    assert split(_many(10), seed=4).split_assignment == c.split_assignment
    tiny = split(_many(3), ratios=(1 / 3, 1 / 3, 1 / 3))
    assert sorted(tiny.split_assignment.values()) == ["test", "train", "val"]


def test_split_ignores_video_order():
    c = _many(12)
    rev = Corpus(c.vocabulary, tuple(reversed(c.videos)))
    assert split(c, seed=1).split_assignment == split(rev, seed=1).split_assignment


def test_split_rejects_bad_input():
    with pytest.raises(ValueError):
        split(_many(2))
    with pytest.raises(ValueError):
        split(_many(10), ratios=(0.5, 0.5, 0.5))


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 60), st.integers(0, 10_000))
def test_split_partitions_videos(n, seed):
    c = split(_many(n), seed=seed)
    assert set(c.split_assignment) == {v.video_id for v in c.videos}
    groups = [c.select(k) for k in ("train", "val", "test")]
    assert sum(len(g) for g in groups) == n
    for g, r in zip(groups, (0.6, 0.2, 0.2)):
        assert abs(len(g) - r * n) < 1


def test_class_priors_match_counts():
    c = tiny_corpus()
    p = class_priors(c)
    # targets: no_osc, deposit (v1), deposit (v2)
    expected = np.zeros(9)
    expected[S.NO_OSC.index] = 1 / 3
    expected[S.DEPOSIT.index] = 2 / 3
    np.testing.assert_allclose(p, expected)
    assert class_priors(c, "test")[S.DEPOSIT.index] == 1.0
