"""Three-stream state-change anticipation network.

A visual encoder over the recent feature window and two lexical encoders
over the action (verb, noun) and state-change histories. Each stream is a
bidirectional LSTM followed by an MLP; the enabled stream outputs are
concatenated and classified by a fusion MLP with a softmax output.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from . import metrics
from .core import NUM_STATES, STATE_INDEX, ActionLabel, LabelVocabulary, StateChange
from .corpus import DecisionSample

log = logging.getLogger(__name__)

STREAMS = ("vid", "action", "state")
VARIANTS = {
    "VID-A": ("vid",),
    "VNLP(O-Action)": ("vid", "action"),
    "VNLP(O-State)": ("vid", "state"),
    "VNLP(O-Action,O-State)": ("vid", "action", "state"),
}
PROB_EPS = 1e-12
CHECKPOINT_MAGIC = b"OSCACKPT"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class EncoderConfig:
    hidden_size: int = 128
    mlp_sizes: tuple[int, ...] = (128,)
    embedding_dim: int = 64


@dataclass
class ModelConfig:
    feature_dim: int
    num_verbs: int
    num_nouns: int
    streams: tuple[str, ...] = STREAMS
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion_sizes: tuple[int, ...] = (256, NUM_STATES)

    def __post_init__(self):
        self.streams = tuple(s for s in STREAMS if s in set(self.streams))
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        self.encoder.mlp_sizes = tuple(self.encoder.mlp_sizes)
        self.fusion_sizes = tuple(self.fusion_sizes)

    def errors(self) -> list[str]:
        errs = []
        if not self.streams:
            errs.append("at least one stream must be enabled")
        if self.fusion_sizes[-1:] != (NUM_STATES,):
            errs.append(f"last fusion size must be {NUM_STATES}")
        sizes = [self.feature_dim, self.num_verbs, self.num_nouns, self.encoder.hidden_size,
                 self.encoder.embedding_dim, *self.encoder.mlp_sizes, *self.fusion_sizes]
        if any(s < 1 for s in sizes):
            errs.append("all sizes must be >= 1")
        if not self.encoder.mlp_sizes:
            errs.append("encoder mlp_sizes must be nonempty")
        return errs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["streams"] = list(self.streams)
        d["fusion_sizes"] = list(self.fusion_sizes)
        d["encoder"]["mlp_sizes"] = list(self.encoder.mlp_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        return cls(**d)


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-4
    epochs: int = 30
    seed: int = 0
    weight_decay: float = 0.0

    def errors(self) -> list[str]:
        errs = []
        for k in ("batch_size", "learning_rate", "epochs"):
            if getattr(self, k) <= 0:
                errs.append(f"{k} must be positive")
        if self.weight_decay < 0:
            errs.append("weight_decay must be >= 0")
        return errs


def _mlp(sizes: Sequence[int], in_dim: int, final_activation: bool) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, width in enumerate(sizes):
        layers.append(nn.Linear(in_dim, width))
        if final_activation or i < len(sizes) - 1:
            layers.append(nn.ReLU())
        in_dim = width
    return nn.Sequential(*layers)


class SequenceEncoder(nn.Module):
    """BiLSTM over a padded batch; final forward/backward states feed an MLP."""

    def __init__(self, input_size: int, cfg: EncoderConfig):
        super().__init__()
        self.lstm = nn.LSTM(input_size, cfg.hidden_size, batch_first=True, bidirectional=True)
        self.mlp = _mlp(cfg.mlp_sizes, 2 * cfg.hidden_size, final_activation=True)
        self.out_dim = cfg.mlp_sizes[-1]

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, (h, _) = self.lstm(packed)
        return self.mlp(torch.cat([h[0], h[1]], dim=1))


class AnticipationModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vocabulary_fingerprint: str = ""):
        super().__init__()
        errs = cfg.errors()
        if errs:
            raise ValueError("invalid ModelConfig: " + "; ".join(errs))
        self.cfg = cfg
        self.vocabulary_fingerprint = vocabulary_fingerprint
        enc, emb = cfg.encoder, cfg.encoder.embedding_dim
        width = 0
        if "vid" in cfg.streams:
            self.visual = SequenceEncoder(cfg.feature_dim, enc)
            width += self.visual.out_dim
        if "action" in cfg.streams:
            # last row of each table is the UNK token
            self.verb_embedding = nn.Embedding(cfg.num_verbs + 1, emb)
            self.noun_embedding = nn.Embedding(cfg.num_nouns + 1, emb)
            self.action_encoder = SequenceEncoder(2 * emb, enc)
            width += self.action_encoder.out_dim
        if "state" in cfg.streams:
            self.state_embedding = nn.Embedding(NUM_STATES, emb)
            self.state_encoder = SequenceEncoder(emb, enc)
            width += self.state_encoder.out_dim
        self.head = _mlp(cfg.fusion_sizes, width, final_activation=False)
        # start from uniform predictions
        last = self.head[-1]
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)

    @property
    def streams(self) -> tuple[str, ...]:
        return self.cfg.streams

    def encode_visual(self, window: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if window.shape[-1] != self.cfg.feature_dim:
            raise ValueError(f"feature dim {window.shape[-1]} != trained {self.cfg.feature_dim}")
        return self.visual(window, lengths)

    def encode_action_history(self, verbs, nouns, lengths) -> torch.Tensor:
        x = torch.cat([self.verb_embedding(verbs), self.noun_embedding(nouns)], dim=-1)
        return self.action_encoder(x, lengths)

    def encode_state_history(self, states, lengths) -> torch.Tensor:
        return self.state_encoder(self.state_embedding(states), lengths)

    def fuse_logits(self, v=None, a=None, s=None) -> torch.Tensor:
        parts = {"vid": v, "action": a, "state": s}
        missing = [k for k in self.streams if parts[k] is None]
        if missing:
            raise ValueError(f"missing stream outputs: {missing}")
        x = torch.cat([parts[k] for k in self.streams], dim=-1)
        if x.shape[-1] != self.head[0].in_features:
            raise ValueError(f"fused width {x.shape[-1]} != {self.head[0].in_features}")
        return self.head(x)

    def fuse_predict(self, v=None, a=None, s=None) -> torch.Tensor:
        return torch.softmax(self.fuse_logits(v, a, s), dim=-1)

    def forward(self, batch: "Batch") -> torch.Tensor:
        """Logits for a batch."""
        v = a = s = None
        if "vid" in self.streams:
            v = self.encode_visual(batch.visual, batch.visual_len)
        if "action" in self.streams:
            a = self.encode_action_history(batch.verbs, batch.nouns, batch.hist_len)
        if "state" in self.streams:
            s = self.encode_state_history(batch.states, batch.hist_len)
        return self.fuse_logits(v, a, s)


def _lengths(n: int) -> torch.Tensor:
    return torch.tensor([n], dtype=torch.long)


@torch.no_grad()
def encode_visual(window, model: AnticipationModel) -> torch.Tensor:
    """Embed one ``(T, D)`` feature window."""
    w = torch.as_tensor(np.asarray(window, dtype=np.float32))
    if w.ndim != 2:
        raise ValueError(f"window must be (T, D), got shape {tuple(w.shape)}")
    return model.encode_visual(w[None], _lengths(w.shape[0]))[0]


@torch.no_grad()
def encode_action_history(history: Sequence[ActionLabel], model: AnticipationModel, strict: bool = True) -> torch.Tensor:
    cfg = model.cfg
    verbs = [EncodedSamples._index(a.verb, cfg.num_verbs, strict, "verb") for a in history]
    nouns = [EncodedSamples._index(a.noun, cfg.num_nouns, strict, "noun") for a in history]
    if not verbs:
        raise ValueError("empty action history")
    return model.encode_action_history(
        torch.tensor([verbs]), torch.tensor([nouns]), _lengths(len(verbs))
    )[0]


@torch.no_grad()
def encode_state_history(history: Sequence[StateChange], model: AnticipationModel) -> torch.Tensor:
    if not history:
        raise ValueError("empty state history")
    idx = torch.tensor([[STATE_INDEX[StateChange(s)] for s in history]])
    return model.encode_state_history(idx, _lengths(len(history)))[0]


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    visual: torch.Tensor
    visual_len: torch.Tensor
    verbs: torch.Tensor
    nouns: torch.Tensor
    states: torch.Tensor
    hist_len: torch.Tensor
    targets: torch.Tensor

    def __len__(self) -> int:
        return self.targets.shape[0]


Histories = tuple[Sequence[ActionLabel], Sequence[StateChange]]


class EncodedSamples:
    """Decision samples packed once into padded tensors."""

    def __init__(
        self,
        samples: Sequence[DecisionSample],
        cfg: ModelConfig,
        histories: Optional[Sequence[Histories]] = None,
        strict: bool = True,
    ):
        if histories is not None and len(histories) != len(samples):
            raise ValueError(f"{len(histories)} histories for {len(samples)} samples")
        n = len(samples)
        t_max = max((s.visual_window.shape[0] for s in samples), default=1)
        h_max = max(
            (len(histories[i][0]) if histories else len(s.action_history) for i, s in enumerate(samples)),
            default=1,
        )
        h_max = max(h_max, 1)
        visual = np.zeros((n, t_max, cfg.feature_dim), dtype=np.float32)
        verbs = np.zeros((n, h_max), dtype=np.int64)
        nouns = np.zeros((n, h_max), dtype=np.int64)
        states = np.zeros((n, h_max), dtype=np.int64)
        vlen = np.zeros(n, dtype=np.int64)
        hlen = np.zeros(n, dtype=np.int64)
        targets = np.zeros(n, dtype=np.int64)
        for i, s in enumerate(samples):
            w = s.visual_window
            if w.ndim != 2 or w.shape[1] != cfg.feature_dim:
                raise ValueError(
                    f"{s.video_id}@{s.decision_index}: window shape {w.shape}, "
                    f"expected (T, {cfg.feature_dim})"
                )
            visual[i, : w.shape[0]] = w
            vlen[i] = w.shape[0]
            acts, sts = histories[i] if histories else (s.action_history, s.state_history)
            if len(acts) != len(sts) or len(acts) < 1:
                raise ValueError(f"{s.video_id}@{s.decision_index}: bad history lengths")
            hlen[i] = len(acts)
            for j, act in enumerate(acts):
                verbs[i, j] = self._index(act.verb, cfg.num_verbs, strict, "verb")
                nouns[i, j] = self._index(act.noun, cfg.num_nouns, strict, "noun")
            states[i, : len(sts)] = [STATE_INDEX[StateChange(x)] for x in sts]
            targets[i] = STATE_INDEX[s.target]
        self.visual = torch.from_numpy(visual)
        self.visual_len = torch.from_numpy(vlen)
        self.verbs = torch.from_numpy(verbs)
        self.nouns = torch.from_numpy(nouns)
        self.states = torch.from_numpy(states)
        self.hist_len = torch.from_numpy(hlen)
        self.targets = torch.from_numpy(targets)

    @staticmethod
    def _index(i: int, size: int, strict: bool, what: str) -> int:
        if 0 <= i < size:
            return i
        if strict:
            raise IndexError(f"{what} index {i} outside vocabulary of size {size}")
        return size  # UNK

    def __len__(self) -> int:
        return self.targets.shape[0]

    def batch(self, idx: torch.Tensor) -> Batch:
        vlen, hlen = self.visual_len[idx], self.hist_len[idx]
        tv, th = int(vlen.max()), int(hlen.max())
        return Batch(
            visual=self.visual[idx, :tv],
            visual_len=vlen,
            verbs=self.verbs[idx, :th],
            nouns=self.nouns[idx, :th],
            states=self.states[idx, :th],
            hist_len=hlen,
            targets=self.targets[idx],
        )

    def batches(self, batch_size: int, order: Optional[torch.Tensor] = None):
        order = torch.arange(len(self)) if order is None else order
        for lo in range(0, len(self), batch_size):
            yield self.batch(order[lo : lo + batch_size])


# ---------------------------------------------------------------------------
# objective


def loss(predictions, targets, eps: float = PROB_EPS):
    """Mean categorical cross-entropy of probability rows against class targets.

    Accepts tensors (differentiable) or array-likes (returns a float).
    """
    as_tensor = isinstance(predictions, torch.Tensor)
    p = predictions if as_tensor else torch.as_tensor(np.asarray(predictions, dtype=np.float64))
    if p.ndim == 1:
        p = p[None, :]
    t = torch.as_tensor(metrics.as_targets(targets), dtype=torch.long)
    if p.shape[0] != t.shape[0] or t.shape[0] == 0:
        raise ValueError(f"{p.shape[0]} predictions for {t.shape[0]} targets")
    picked = p.gather(1, t[:, None]).squeeze(1)
    value = -torch.log(picked.clamp_min(eps)).mean()
    return value if as_tensor else float(value)


# ---------------------------------------------------------------------------
# training and inference


def build_model(cfg: ModelConfig, vocabulary: Optional[LabelVocabulary] = None, seed: int = 0):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return AnticipationModel(cfg, vocabulary.fingerprint() if vocabulary else "")


@torch.no_grad()
def predict_logits(model: AnticipationModel, data: EncodedSamples, batch_size: int = 512) -> torch.Tensor:
    model.eval()
    out = [model(b) for b in data.batches(batch_size)]
    return torch.cat(out) if out else torch.zeros(0, NUM_STATES)


def _evaluate(model, data: EncodedSamples) -> dict:
    logits = predict_logits(model, data)
    lval = float(F.cross_entropy(logits, data.targets))
    probs = torch.softmax(logits, dim=-1).numpy()
    t = data.targets.numpy()
    return {
        "loss": lval,
        "top1": metrics.topk_mean_accuracy(probs, t, 1),
        "top5": metrics.topk_mean_accuracy(probs, t, 5),
        "f1": metrics.macro_f1(probs, t),
    }


def train(
    train_samples: Sequence[DecisionSample],
    val_samples: Sequence[DecisionSample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    vocabulary: Optional[LabelVocabulary] = None,
) -> tuple[AnticipationModel, list[dict]]:
    """Mini-batch Adam on the cross-entropy objective.

    Returns the parameters with the lowest validation loss (earliest epoch on
    ties; epoch 0 is the untrained model) and one history row per epoch.
    Validation falls back to the training set when ``val_samples`` is empty.
    """
    if not train_samples:
        raise ValueError("empty training set")
    errs = train_cfg.errors()
    if errs:
        raise ValueError("invalid TrainConfig: " + "; ".join(errs))
    model = build_model(model_cfg, vocabulary, train_cfg.seed)
    train_set = EncodedSamples(train_samples, model_cfg)
    val_set = EncodedSamples(val_samples, model_cfg) if val_samples else train_set
    opt = torch.optim.Adam(
        model.parameters(), lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay
    )
    gen = torch.Generator().manual_seed(train_cfg.seed)

    def row(epoch, train_loss):
        ev = _evaluate(model, val_set)
        return {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": ev["loss"],
            "val_top1": ev["top1"],
            "val_top5": ev["top5"],
            "val_f1": ev["f1"],
        }

    history = [row(0, _evaluate(model, train_set)["loss"])]
    best_loss, best_state = history[0]["val_loss"], copy.deepcopy(model.state_dict())
    for epoch in range(1, train_cfg.epochs + 1):
        model.train()
        order = torch.randperm(len(train_set), generator=gen)
        total = 0.0
        for step, batch in enumerate(train_set.batches(train_cfg.batch_size, order)):
            logits = model(batch)
            # log-softmax form of the clamped cross-entropy; identical away from the clamp
            batch_loss = F.cross_entropy(logits, batch.targets)
            if not torch.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss {batch_loss.item()} at epoch {epoch}, step {step}; "
                    f"logit range [{logits.min().item():.3g}, {logits.max().item():.3g}]"
                )
            opt.zero_grad()
            batch_loss.backward()
            opt.step()
            total += batch_loss.item() * len(batch)
        history.append(row(epoch, total / len(train_set)))
        log.info(
            "epoch %d train_loss %.4f val_loss %.4f val_top1 %.2f",
            epoch, history[-1]["train_loss"], history[-1]["val_loss"], history[-1]["val_top1"],
        )
        if history[-1]["val_loss"] < best_loss:
            best_loss, best_state = history[-1]["val_loss"], copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return model, history


def predict_proba(
    model: AnticipationModel,
    samples: Sequence[DecisionSample],
    histories: Optional[Sequence[Histories]] = None,
    batch_size: int = 512,
) -> np.ndarray:
    """Class probabilities, ``(N, 9)``. ``histories`` replaces the oracle histories."""
    if not samples:
        return np.zeros((0, NUM_STATES))
    data = EncodedSamples(samples, model.cfg, histories, strict=False)
    logits = predict_logits(model, data, batch_size)
    return torch.softmax(logits.double(), dim=-1).numpy()


def predict(
    sample: DecisionSample,
    model: AnticipationModel,
    recognized_histories: Optional[Histories] = None,
) -> np.ndarray:
    hist = None if recognized_histories is None else [recognized_histories]
    return predict_proba(model, [sample], hist)[0]


def check_vocabulary(model: AnticipationModel, vocabulary: LabelVocabulary) -> None:
    fp = vocabulary.fingerprint()
    if model.vocabulary_fingerprint and model.vocabulary_fingerprint != fp:
        raise ValueError(
            f"checkpoint vocabulary {model.vocabulary_fingerprint} does not match corpus {fp}"
        )


# ---------------------------------------------------------------------------
# checkpoints: MAGIC | u64 header length | JSON header | float32 LE tensors


def save_checkpoint(model: AnticipationModel, path, seed: Optional[int] = None) -> Path:
    path = Path(path)
    tensors, offset, blobs = [], 0, []
    for name, t in model.state_dict().items():
        arr = np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps(
        {
            "format_version": CHECKPOINT_VERSION,
            "model_cfg": model.cfg.to_dict(),
            "vocabulary_fingerprint": model.vocabulary_fingerprint,
            "seed": seed,
            "dtype": "<f4",
            "tensors": tensors,
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)
    return path


def load_checkpoint(path) -> tuple[AnticipationModel, dict]:
    data = Path(path).read_bytes()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack("<Q", data[pos : pos + 8])
    pos += 8
    header = json.loads(data[pos : pos + hlen])
    pos += hlen
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    model = AnticipationModel(ModelConfig.from_dict(header["model_cfg"]), header["vocabulary_fingerprint"])
    payload = np.frombuffer(data, dtype="<f4", offset=pos)
    state = {}
    for rec in header["tensors"]:
        start = rec["offset"] // 4
        size = math.prod(rec["shape"])
        state[rec["name"]] = torch.from_numpy(payload[start : start + size].reshape(rec["shape"]).copy())
    model.load_state_dict(state)
    model.eval()
    return model, header


def write_history_csv(history: list[dict], path) -> None:
    cols = ["epoch", "train_loss", "val_loss", "val_top1", "val_top5", "val_f1"]
    lines = [",".join(cols)]
    for r in history:
        lines.append(",".join(str(r["epoch"]) if c == "epoch" else f"{r[c]:.6f}" for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")
