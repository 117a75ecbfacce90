"""Command-line workflow: annotate, synth, split, train, eval, sweep, stats, compose-check.

Every command reads an optional YAML config (``--config``), applies flag
overrides (flags win), validates the result and writes the resolved config
to ``<out>/config.resolved.yaml`` before doing any work.

Exit status: 0 success, 2 config/usage error, 3 input data error,
4 training failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import annotation, evaluation, metrics
from .core import ALL_FRAME_LABELS, NUM_STATES, STATE_CLASSES, FrameStateLabel
from .corpus import CorpusFormatError, class_priors, corpus_samples, load_corpus, save_corpus, split
from .model import (
    STREAMS,
    EncoderConfig,
    ModelConfig,
    TrainConfig,
    TrainingError,
    build_model,
    check_vocabulary,
    load_checkpoint,
    save_checkpoint,
    train,
    write_history_csv,
)
from .recognizers import NoiseSpec, NoisyRecognizer, compose_state_change, parse_recognizer
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger("osca")

COMMANDS = ("annotate", "synth", "split", "train", "eval", "sweep", "stats", "compose-check")
EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n  ".join(["invalid configuration:", *problems]))


class DataError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    corpus: Optional[str] = None
    checkpoint: Optional[str] = None
    out: str = "runs/latest"
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    split_ratios: tuple[float, ...] = (0.6, 0.2, 0.2)
    streams: tuple[str, ...] = STREAMS
    window: int = 1
    max_history: Optional[int] = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion_sizes: tuple[int, ...] = (256, NUM_STATES)
    train: TrainConfig = field(default_factory=TrainConfig)
    recognizer: str = "oracle"
    noise_levels: tuple[tuple[float, float], ...] = evaluation.DEFAULT_NOISE_LEVELS
    noise_seeds: tuple[int, ...] = (0, 1, 2)
    plots: bool = True

    def errors(self) -> list[str]:
        errs = [f"synth: {e}" for e in self.synth.errors()]
        errs += [f"train: {e}" for e in self.train.errors()]
        if len(self.split_ratios) != 3 or any(r <= 0 for r in self.split_ratios) \
                or abs(sum(self.split_ratios) - 1.0) > 1e-9:
            errs.append(f"split_ratios must be three positive numbers summing to 1, got {list(self.split_ratios)}")
        unknown = [s for s in self.streams if s not in STREAMS]
        if unknown:
            errs.append(f"unknown streams {unknown}; choose from {list(STREAMS)}")
        if "vid" not in self.streams:
            errs.append("the visual stream 'vid' is always required")
        if self.window < 1:
            errs.append("window must be >= 1")
        if self.max_history is not None and self.max_history < 1:
            errs.append("max_history must be >= 1 or null")
        if self.fusion_sizes[-1:] != (NUM_STATES,) or any(s < 1 for s in self.fusion_sizes):
            errs.append(f"fusion_sizes must be positive and end in {NUM_STATES}")
        if self.encoder.hidden_size < 1 or self.encoder.embedding_dim < 1 \
                or not self.encoder.mlp_sizes or any(s < 1 for s in self.encoder.mlp_sizes):
            errs.append("encoder sizes must be positive and mlp_sizes nonempty")
        try:
            parse_recognizer(self.recognizer)
        except ValueError as e:
            errs.append(f"recognizer: {e}")
        for lvl in self.noise_levels:
            if len(lvl) != 2 or not all(0.0 <= x <= 1.0 for x in lvl):
                errs.append(f"noise level {list(lvl)} must be an (action, state) pair in [0, 1]")
        if not self.noise_seeds:
            errs.append("noise_seeds must be nonempty")
        return errs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth"] = self.synth.to_dict()
        del d["synth"]["seed"]
        del d["train"]["seed"]
        d["split_ratios"] = list(self.split_ratios)
        d["streams"] = list(self.streams)
        d["encoder"]["mlp_sizes"] = list(self.encoder.mlp_sizes)
        d["fusion_sizes"] = list(self.fusion_sizes)
        d["noise_levels"] = [list(x) for x in self.noise_levels]
        d["noise_seeds"] = list(self.noise_seeds)
        return d

    def model_config(self, corpus) -> ModelConfig:
        return ModelConfig(
            feature_dim=corpus.feature_dim,
            num_verbs=corpus.vocabulary.num_verbs,
            num_nouns=corpus.vocabulary.num_nouns,
            streams=self.streams,
            encoder=self.encoder,
            fusion_sizes=self.fusion_sizes,
        )


def _section(cls, raw, name: str, problems: list[str], seeded: bool):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"{name}: expected a mapping")
        return cls()
    known = {f.name for f in fields(cls)}
    if seeded:
        known.discard("seed")
    for k in sorted(set(raw) - known):
        hint = " (set the top-level seed instead)" if k == "seed" else ""
        problems.append(f"{name}: unknown key {k!r}{hint}")
    kwargs = {k: v for k, v in raw.items() if k in known}
    for k in ("segments_per_video", "frame_size", "mlp_sizes"):
        if k in kwargs and isinstance(kwargs[k], list):
            kwargs[k] = tuple(kwargs[k])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        problems.append(f"{name}: {e}")
        return cls()


def build_config(raw: Optional[dict], args: argparse.Namespace) -> ExperimentConfig:
    """Merge a config mapping with command-line overrides and validate everything."""
    raw = dict(raw or {})
    problems: list[str] = []
    top = {f.name for f in fields(ExperimentConfig)}
    for k in sorted(set(raw) - top):
        problems.append(f"unknown key {k!r}")
    synth = _section(SynthConfig, raw.pop("synth", None), "synth", problems, seeded=True)
    enc = _section(EncoderConfig, raw.pop("encoder", None), "encoder", problems, seeded=False)
    tcfg = _section(TrainConfig, raw.pop("train", None), "train", problems, seeded=True)
    kwargs = {k: v for k, v in raw.items() if k in top}

    overrides = {
        "corpus": args.corpus, "checkpoint": args.checkpoint, "out": args.out, "seed": args.seed,
        "window": args.window, "recognizer": args.recognizer,
    }
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if args.streams is not None:
        kwargs["streams"] = [s.strip() for s in args.streams.split(",") if s.strip()]
    if args.noise is not None:
        try:
            a, s = (float(x) for x in args.noise.split(","))
            kwargs["noise_levels"] = [(a, s)]
        except ValueError:
            problems.append(f"--noise expects 'action_rate,state_rate', got {args.noise!r}")
    if args.no_plots:
        kwargs["plots"] = False

    for k in ("split_ratios", "streams", "fusion_sizes", "noise_seeds"):
        if k in kwargs and kwargs[k] is not None:
            kwargs[k] = tuple(kwargs[k])
    if "noise_levels" in kwargs:
        kwargs["noise_levels"] = tuple(tuple(x) for x in kwargs["noise_levels"])
    try:
        cfg = ExperimentConfig(synth=synth, encoder=enc, train=tcfg, **kwargs)
    except TypeError as e:
        raise ConfigError(problems + [str(e)]) from None
    if not isinstance(cfg.seed, int):
        problems.append(f"seed must be an integer, got {cfg.seed!r}")
    else:
        cfg.synth.seed = cfg.seed
        cfg.train.seed = cfg.seed
    try:
        problems += cfg.errors()
    except (TypeError, ValueError) as e:
        problems.append(str(e))
    if problems:
        raise ConfigError(problems)
    return cfg


# ---------------------------------------------------------------------------
# io helpers


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _write_json(path: Path, obj) -> Path:
    return _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _prepare_out(cfg: ExperimentConfig, inputs: list[Optional[str]]) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in inputs:
        if p is not None and Path(p).resolve().parent == out.resolve():
            raise ConfigError([f"output directory {out} contains input {p}; choose a different --out"])
    _write(out / "config.resolved.yaml", yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    return out


def _load_corpus(cfg: ExperimentConfig, need_splits: bool = False, need_features: bool = False):
    if cfg.corpus is None:
        raise ConfigError(["this command needs a corpus (--corpus or 'corpus:' in the config)"])
    try:
        corpus = load_corpus(cfg.corpus)
    except FileNotFoundError:
        raise DataError(f"corpus file not found: {cfg.corpus}") from None
    if need_splits and not corpus.split_assignment:
        raise DataError(f"{cfg.corpus} has no split assignment; run `osca split` first")
    if need_features and corpus.feature_dim is None:
        raise DataError(f"{cfg.corpus} has no feature sidecar")
    return corpus


def _load_model(cfg: ExperimentConfig, corpus):
    if cfg.checkpoint is None:
        log.warning("no checkpoint given: evaluating an untrained model (uniform predictions)")
        return build_model(cfg.model_config(corpus), corpus.vocabulary, cfg.seed)
    try:
        model, _ = load_checkpoint(cfg.checkpoint)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {cfg.checkpoint}") from None
    try:
        check_vocabulary(model, corpus.vocabulary)
    except ValueError as e:
        raise DataError(str(e)) from None
    if model.cfg.feature_dim != corpus.feature_dim:
        raise DataError(f"checkpoint expects D={model.cfg.feature_dim}, corpus has D={corpus.feature_dim}")
    return model


def _plot(out: Path, name: str, draw) -> None:
    """Render one static figure if matplotlib is available."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.info("matplotlib not installed; skipping %s", name)
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    fig.tight_layout()
    fig.savefig(out / name, dpi=100, metadata={"Software": None})
    plt.close(fig)
    log.info("wrote %s", out / name)


# ---------------------------------------------------------------------------
# commands


def cmd_annotate(cfg: ExperimentConfig) -> None:
    corpus = _load_corpus(cfg)
    out = _prepare_out(cfg, [cfg.corpus])
    lines, total = [], annotation.AuditReport()
    for v in corpus.videos:
        anns, report = annotation.annotate_video(v)
        total = total + report
        lines += [json.dumps({"video_id": v.video_id, **a.to_dict()}, sort_keys=True) for a in anns]
    _write(out / "annotations.jsonl", "\n".join(lines) + ("\n" if lines else ""))
    _write_json(out / "audit.json", total.to_dict())
    _write(out / "audit.txt", total.to_text())
    print(total.to_text())


def cmd_synth(cfg: ExperimentConfig) -> None:
    out = _prepare_out(cfg, [])
    corpus = split(generate_synthetic(cfg.synth), cfg.split_ratios, cfg.seed)
    path = save_corpus(corpus, out / "corpus.jsonl")
    print(f"{len(corpus.videos)} videos, {corpus.num_segments} segments -> {path}")


def cmd_split(cfg: ExperimentConfig) -> None:
    corpus = _load_corpus(cfg)
    out = _prepare_out(cfg, [cfg.corpus])
    corpus = split(corpus, cfg.split_ratios, cfg.seed)
    save_corpus(corpus, out / "corpus.jsonl")
    sizes = {k: len(corpus.select(k)) for k in ("train", "val", "test")}
    _write_json(out / "split.json", {"seed": cfg.seed, "ratios": list(cfg.split_ratios), "videos": sizes})
    print(" ".join(f"{k}={n}" for k, n in sizes.items()))


def cmd_train(cfg: ExperimentConfig) -> None:
    corpus = _load_corpus(cfg, need_splits=True, need_features=True)
    out = _prepare_out(cfg, [cfg.corpus, cfg.checkpoint])
    tr = corpus_samples(corpus, "train", cfg.window, cfg.max_history)
    va = corpus_samples(corpus, "val", cfg.window, cfg.max_history)
    if not tr:
        raise DataError("training split has no decision samples")
    model, history = train(tr, va, cfg.model_config(corpus), cfg.train, corpus.vocabulary)
    save_checkpoint(model, out / "model.ckpt", seed=cfg.seed)
    write_history_csv(history, out / "history.csv")
    best = min(history, key=lambda r: (r["val_loss"], r["epoch"]))
    _write_json(out / "train_summary.json", {"best_epoch": best["epoch"], **{k: best[k] for k in best if k != "epoch"}})
    if cfg.plots:
        def draw(ax):
            ep = [r["epoch"] for r in history]
            ax.plot(ep, [r["train_loss"] for r in history], label="train")
            ax.plot(ep, [r["val_loss"] for r in history], label="val")
            ax.set_xlabel("epoch")
            ax.set_ylabel("cross-entropy")
            ax.legend()
        _plot(out, "loss.png", draw)
    print(f"best epoch {best['epoch']}: val_loss {best['val_loss']:.4f} val_top1 {best['val_top1']:.2f}")


def cmd_eval(cfg: ExperimentConfig, noise_flag: bool) -> None:
    corpus = _load_corpus(cfg, need_splits=True, need_features=True)
    out = _prepare_out(cfg, [cfg.corpus, cfg.checkpoint])
    model = _load_model(cfg, corpus)
    spec = parse_recognizer(cfg.recognizer)
    if noise_flag:
        a, s = cfg.noise_levels[0]
        spec = NoisyRecognizer(NoiseSpec(a, s, cfg.seed))
    probs, targets = evaluation.predict_corpus(model, corpus, "test", spec, cfg.window, cfg.max_history)
    if len(targets) == 0:
        raise DataError("test split has no decision samples")
    report = metrics.evaluate(probs, targets)
    _write_json(out / "metrics.json", {"recognizer": str(spec), **report.to_dict()})
    names = [s.value for s in STATE_CLASSES]
    cm = metrics.confusion(probs, targets)
    _write(out / "confusion.csv", evaluation.grid_csv(cm, names, names))
    print(report.summary())


def cmd_sweep(cfg: ExperimentConfig) -> None:
    corpus = _load_corpus(cfg, need_splits=True, need_features=True)
    out = _prepare_out(cfg, [cfg.corpus, cfg.checkpoint])
    model = _load_model(cfg, corpus)
    rows = evaluation.noise_sweep(
        model, corpus, cfg.noise_levels, cfg.noise_seeds, "test", cfg.window, cfg.max_history
    )
    text = evaluation.sweep_csv(rows)
    _write(out / "sweep.csv", text)
    if cfg.plots:
        def draw(ax):
            x = [f"({r.action_noise:.0%}, {r.state_noise:.0%})" for r in rows]
            for key in ("top1", "top5", "f1"):
                m = np.array([getattr(r, key) for r in rows])
                ax.errorbar(x, m[:, 0], yerr=m[:, 1], marker="o", capsize=3, label=key)
            ax.set_xlabel("noise (action, state)")
            ax.set_ylabel("%")
            ax.legend()
        _plot(out, "sweep.png", draw)
    print(text, end="")


def cmd_stats(cfg: ExperimentConfig) -> None:
    corpus = _load_corpus(cfg)
    out = _prepare_out(cfg, [cfg.corpus])
    names = [s.value for s in STATE_CLASSES]
    tm = evaluation.transition_matrix(corpus)
    _write(out / "transitions_counts.csv", evaluation.grid_csv(tm.counts, names, names))
    _write(out / "transitions.csv", evaluation.grid_csv(tm.normalized, names, names, "{:.6f}"))
    h = evaluation.state_histograms(corpus)
    vocab = corpus.vocabulary
    _write(out / "verb_state.csv", evaluation.grid_csv(h.verb_state[h.verb_order], [vocab.verbs[i] for i in h.verb_order], names))
    _write(out / "noun_state.csv", evaluation.grid_csv(h.noun_state[h.noun_order], [vocab.nouns[i] for i in h.noun_order], names))
    try:
        pri = class_priors(corpus)
    except ValueError as e:
        raise DataError(str(e)) from None
    _write(out / "priors.csv", "state,prior\n" + "".join(f"{n},{p:.6f}\n" for n, p in zip(names, pri)))
    _write_json(out / "stats.json", {
        "videos": len(corpus.videos),
        "segments": corpus.num_segments,
        "empty_transition_rows": tm.empty_rows,
        "mean_states_per_verb": float(h.states_per_verb[h.verb_state.sum(axis=1) > 0].mean()),
        "mean_states_per_noun": float(h.states_per_noun[h.noun_state.sum(axis=1) > 0].mean()),
    })
    if cfg.plots:
        def heat(ax):
            im = ax.imshow(tm.normalized, cmap="viridis", vmin=0, vmax=1)
            ax.set_xticks(range(NUM_STATES), names, rotation=60, ha="right", fontsize=7)
            ax.set_yticks(range(NUM_STATES), names, fontsize=7)
            ax.set_xlabel("next state change")
            ax.figure.colorbar(im, ax=ax)
        _plot(out, "transitions.png", heat)

        def bars(ax):
            ax.bar(names, pri)
            ax.tick_params(axis="x", rotation=60, labelsize=7)
            ax.set_ylabel("prior")
        _plot(out, "priors.png", bars)
    print(f"{len(corpus.videos)} videos, {corpus.num_segments} segments, {int(tm.counts.sum())} transitions")


def compose_table() -> str:
    labels = [str(x) for x in ALL_FRAME_LABELS]
    lines = ["pre_pred\\post_pred," + ",".join(labels)]
    for a in ALL_FRAME_LABELS:
        row = [compose_state_change(a, b).value for b in ALL_FRAME_LABELS]
        lines.append(str(a) + "," + ",".join(row))
    return "\n".join(lines) + "\n"


def cmd_compose_check(cfg: ExperimentConfig) -> None:
    out = _prepare_out(cfg, [])
    text = compose_table()
    _write(out / "compose_table.csv", text)
    print(text, end="")


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (synthesis, split, training, noise)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--corpus", help="input corpus .jsonl")
    common.add_argument("--checkpoint", help="model checkpoint for eval/sweep")
    common.add_argument("--streams", help="comma list from vid,action,state")
    common.add_argument("--noise", help="'action_rate,state_rate' (eval: noisy recognizer; sweep: single level)")
    common.add_argument("--window", type=int, help="visual window in segments")
    common.add_argument("--recognizer", help="oracle | noisy(a,s[,seed]) | composed(pre,post[,seed])")
    common.add_argument("--no-plots", action="store_true", help="skip figure generation")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="osca", description="Object state-change anticipation toolkit.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "annotate": "run the annotation audit over a corpus",
        "synth": "generate a synthetic corpus (split included)",
        "split": "reassign video-level train/val/test splits",
        "train": "train one model variant",
        "eval": "score a checkpoint on the test split",
        "sweep": "history-noise sweep on the test split",
        "stats": "transition matrix, label/state histograms, priors",
        "compose-check": "print the 16x16 state-composition table",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def run(argv: Optional[list[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        raw = None
        if args.config:
            try:
                raw = yaml.safe_load(Path(args.config).read_text())
            except FileNotFoundError:
                raise ConfigError([f"config file not found: {args.config}"]) from None
            except yaml.YAMLError as e:
                raise ConfigError([f"{args.config}: {e}"]) from None
            if raw is not None and not isinstance(raw, dict):
                raise ConfigError([f"{args.config}: top level must be a mapping"])
        cfg = build_config(raw, args)
        handlers = {
            "annotate": cmd_annotate,
            "synth": cmd_synth,
            "split": cmd_split,
            "train": cmd_train,
            "eval": lambda c: cmd_eval(c, args.noise is not None),
            "sweep": cmd_sweep,
            "stats": cmd_stats,
            "compose-check": cmd_compose_check,
        }
        handlers[args.command](cfg)
        return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CorpusFormatError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as e:
        print(f"training error: {e}", file=sys.stderr)
        return EXIT_TRAINING
    except Exception as e:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
