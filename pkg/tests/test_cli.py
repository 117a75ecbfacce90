import hashlib
import json

import pytest
import yaml

from osca.cli import EXIT_CONFIG, EXIT_DATA, compose_table, run

SMALL = {
    "synth": {"num_videos": 24, "segments_per_video": [4, 8], "feature_dim": 6, "time_steps": 2,
              "class_priors": [1 / 9] * 8 + [1 - 8 / 9]},
    "encoder": {"hidden_size": 8, "mlp_sizes": [8], "embedding_dim": 4},
    "fusion_sizes": [16, 9],
    "train": {"epochs": 2, "learning_rate": 0.01, "batch_size": 16},
    "noise_seeds": [0, 1],
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(SMALL))
    return p


def digest(directory):
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(directory.iterdir())
    }


def pipeline(root, config, monkeypatch):
    # relative paths, so the resolved configs of two runs can match byte for byte
    root.mkdir()
    monkeypatch.chdir(root)
    c = ["--config", str(config), "--seed", "3"]
    assert run(["synth", *c, "--out", "data"]) == 0
    corpus = "data/corpus.jsonl"
    assert run(["train", *c, "--corpus", corpus, "--out", "train"]) == 0
    ckpt = "train/model.ckpt"
    assert run(["eval", *c, "--corpus", corpus, "--checkpoint", ckpt, "--out", "eval"]) == 0
    assert run(["sweep", *c, "--corpus", corpus, "--checkpoint", ckpt, "--out", "sweep"]) == 0
    assert run(["stats", *c, "--corpus", corpus, "--out", "stats"]) == 0
    assert run(["annotate", *c, "--corpus", corpus, "--out", "annotate"]) == 0
    return {d: digest(root / d) for d in ("data", "train", "eval", "sweep", "stats", "annotate")}


def test_reruns_are_byte_identical(tmp_path, config, monkeypatch):
    a = pipeline(tmp_path / "a", config, monkeypatch)
    b = pipeline(tmp_path / "b", config, monkeypatch)
    assert a == b
    for d in a.values():
        assert "config.resolved.yaml" in d
    resolved = yaml.safe_load((tmp_path / "a" / "train" / "config.resolved.yaml").read_text())
    assert resolved["seed"] == 3 and resolved["train"]["epochs"] == 2


def test_sweep_table_shape(tmp_path, config, monkeypatch):
    pipeline(tmp_path / "a", config, monkeypatch)
    lines = (tmp_path / "a" / "sweep" / "sweep.csv").read_text().splitlines()
    header = lines[0].split(",")
    for col in ("action_noise", "state_noise", "top1", "top5", "f1", "stddev"):
        assert col in header
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["0", "0"], ["0.25", "0.25"], ["0.5", "0.5"], ["0.75", "0.75"]]


def test_untrained_eval_is_at_chance(tmp_path, config):
    assert run(["synth", "--config", str(config), "--out", str(tmp_path / "d")]) == 0
    assert run(["eval", "--config", str(config), "--corpus", str(tmp_path / "d" / "corpus.jsonl"),
                "--out", str(tmp_path / "e")]) == 0
    m = json.loads((tmp_path / "e" / "metrics.json").read_text())
    present = 9 - len(m["absent_classes"])
    assert m["top1_macc"] == pytest.approx(100 / present)


def test_inputs_are_not_modified(tmp_path, config):
    assert run(["synth", "--config", str(config), "--out", str(tmp_path / "d")]) == 0
    before = digest(tmp_path / "d")
    corpus = str(tmp_path / "d" / "corpus.jsonl")
    assert run(["split", "--corpus", corpus, "--seed", "9", "--out", str(tmp_path / "s")]) == 0
    assert run(["stats", "--corpus", corpus, "--out", str(tmp_path / "t"), "--no-plots"]) == 0
    assert digest(tmp_path / "d") == before
    # writing next to the input is refused
    assert run(["split", "--corpus", corpus, "--out", str(tmp_path / "d")]) == EXIT_CONFIG
    assert digest(tmp_path / "d") == before


def test_config_errors_are_all_reported(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({
        "synth": {"num_videos": 0, "seed": 4},
        "train": {"learning_rate": -1},
        "split_ratios": [0.5, 0.5, 0.5],
        "window": 0,
        "recognizer": "telepathy",
        "colour": "blue",
    }))
    assert run(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    for needle in ("num_videos", "top-level seed", "learning_rate", "split_ratios", "window",
                   "telepathy", "colour"):
        assert needle in err
    assert not (tmp_path / "o").exists()


def test_flags_override_config(tmp_path, config):
    out = tmp_path / "o"
    assert run(["compose-check", "--config", str(config), "--out", str(out), "--streams", "vid,state",
                "--window", "2", "--noise", "0.1,0.2"]) == 0
    resolved = yaml.safe_load((out / "config.resolved.yaml").read_text())
    assert resolved["streams"] == ["vid", "state"]
    assert resolved["window"] == 2
    assert resolved["noise_levels"] == [[0.1, 0.2]]


@pytest.mark.parametrize("argv", [["--streams", "state"], ["--noise", "half"], ["--streams", "vid,audio"]])
def test_bad_flags(tmp_path, argv):
    assert run(["compose-check", "--out", str(tmp_path / "o"), *argv]) == EXIT_CONFIG


def test_data_errors(tmp_path, config):
    missing = str(tmp_path / "nope.jsonl")
    assert run(["stats", "--corpus", missing, "--out", str(tmp_path / "o")]) == EXIT_DATA
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run(["stats", "--corpus", str(empty), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert run(["train", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_compose_table_is_complete():
    lines = compose_table().splitlines()
    assert len(lines) == 17
    assert all(len(ln.split(",")) == 17 for ln in lines)
    row = dict(zip(lines[0].split(",")[1:], lines[1].split(",")[1:]))
    assert lines[1].startswith("pre_activate,")
    assert row["post_activate"] == "activate" and row["post_deactivate"] == "no_osc"
