"""Corpus statistics and model evaluation under different history sources."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .core import NUM_STATES, STATE_CLASSES, STATE_INDEX
from .corpus import Corpus, build_decision_samples
from .model import AnticipationModel, predict_proba
from .recognizers import (
    NoiseSpec,
    NoisyRecognizer,
    OracleRecognizer,
    RecognizerSpec,
    recognized_histories,
)

DEFAULT_NOISE_LEVELS = ((0.0, 0.0), (0.25, 0.25), (0.5, 0.5), (0.75, 0.75))


@dataclass
class TransitionMatrix:
    counts: np.ndarray
    normalized: np.ndarray
    # rows with no outgoing transitions (left as zeros in ``normalized``)
    empty_rows: list[str] = field(default_factory=list)


def transition_matrix(corpus: Corpus, split: Optional[str] = None) -> TransitionMatrix:
    """Counts of consecutive (state_n, state_n+1) pairs within each video."""
    counts = np.zeros((NUM_STATES, NUM_STATES), dtype=np.int64)
    for v in corpus.select(split):
        for a, b in zip(v.segments, v.segments[1:]):
            counts[STATE_INDEX[a.state_change], STATE_INDEX[b.state_change]] += 1
    rows = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, rows, out=np.zeros(counts.shape), where=rows > 0)
    empty = [STATE_CLASSES[i].value for i in range(NUM_STATES) if rows[i, 0] == 0]
    return TransitionMatrix(counts, normalized, empty)


@dataclass
class StateHistograms:
    verb_state: np.ndarray  # (num_verbs, 9)
    noun_state: np.ndarray  # (num_nouns, 9)
    verb_order: list[int]  # descending frequency, ties by index
    noun_order: list[int]

    @property
    def states_per_verb(self) -> np.ndarray:
        return (self.verb_state > 0).sum(axis=1)

    @property
    def states_per_noun(self) -> np.ndarray:
        return (self.noun_state > 0).sum(axis=1)


def _freq_order(table: np.ndarray) -> list[int]:
    totals = table.sum(axis=1)
    return sorted(range(len(totals)), key=lambda i: (-totals[i], i))


def state_histograms(corpus: Corpus, split: Optional[str] = None) -> StateHistograms:
    vocab = corpus.vocabulary
    verb_state = np.zeros((vocab.num_verbs, NUM_STATES), dtype=np.int64)
    noun_state = np.zeros((vocab.num_nouns, NUM_STATES), dtype=np.int64)
    for v in corpus.select(split):
        for seg in v.segments:
            s = STATE_INDEX[seg.state_change]
            verb_state[seg.action.verb, s] += 1
            noun_state[seg.action.noun, s] += 1
    return StateHistograms(verb_state, noun_state, _freq_order(verb_state), _freq_order(noun_state))


# ---------------------------------------------------------------------------
# model evaluation


def predict_corpus(
    model: AnticipationModel,
    corpus: Corpus,
    split: Optional[str] = "test",
    recognizer: RecognizerSpec = OracleRecognizer(),
    window: int = 1,
    max_history: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and targets for every decision point of a split."""
    samples, histories = [], []
    use_oracle = isinstance(recognizer, OracleRecognizer)
    action_vocab = corpus.action_pairs()
    for v in corpus.select(split):
        s = build_decision_samples(v, window, max_history)
        samples.extend(s)
        if not use_oracle:
            histories.extend(recognized_histories(v, recognizer, action_vocab, max_history=max_history))
    probs = predict_proba(model, samples, None if use_oracle else histories)
    return probs, metrics.as_targets([s.target for s in samples])


def evaluate_model(model, corpus, split="test", recognizer: RecognizerSpec = OracleRecognizer(), window=1, max_history=None):
    probs, targets = predict_corpus(model, corpus, split, recognizer, window, max_history)
    if len(targets) == 0:
        raise ValueError(f"split {split!r} has no decision samples")
    return metrics.evaluate(probs, targets)


@dataclass
class SweepRow:
    action_noise: float
    state_noise: float
    reports: list[metrics.MetricsReport]

    def _stat(self, key: str) -> tuple[float, float]:
        vals = np.array([getattr(r, key) for r in self.reports])
        return float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0

    @property
    def top1(self) -> tuple[float, float]:
        return self._stat("top1_macc")

    @property
    def top5(self) -> tuple[float, float]:
        return self._stat("top5_macc")

    @property
    def f1(self) -> tuple[float, float]:
        return self._stat("macro_f1")


def noise_sweep(
    model: AnticipationModel,
    corpus: Corpus,
    levels: Sequence[tuple[float, float]] = DEFAULT_NOISE_LEVELS,
    seeds: Sequence[int] = (0, 1, 2),
    split: Optional[str] = "test",
    window: int = 1,
    max_history: Optional[int] = None,
) -> list[SweepRow]:
    """Evaluate with uniformly corrupted histories at each (action, state) rate."""
    rows = []
    for a_rate, s_rate in levels:
        reports = []
        for seed in seeds:
            spec = NoisyRecognizer(NoiseSpec(a_rate, s_rate, seed))
            reports.append(evaluate_model(model, corpus, split, spec, window, max_history))
        rows.append(SweepRow(a_rate, s_rate, reports))
    return rows


# ---------------------------------------------------------------------------
# tables


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["action_noise,state_noise,top1,top5,f1,top1_std,top5_std,f1_std,stddev"]
    for r in rows:
        (t1, t1s), (t5, t5s), (f, fs) = r.top1, r.top5, r.f1
        lines.append(
            f"{r.action_noise:g},{r.state_noise:g},{t1:.4f},{t5:.4f},{f:.4f},"
            f"{t1s:.4f},{t5s:.4f},{fs:.4f},{t1s:.4f}"
        )
    return "\n".join(lines) + "\n"


def grid_csv(matrix: np.ndarray, row_labels: Sequence[str], col_labels: Sequence[str], fmt: str = "{}") -> str:
    lines = ["," + ",".join(col_labels)]
    for label, row in zip(row_labels, matrix):
        lines.append(label + "," + ",".join(fmt.format(x) for x in row))
    return "\n".join(lines) + "\n"


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text)
    return path
