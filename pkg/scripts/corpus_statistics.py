"""Generate a large corpus with the recorded per-class counts as priors and
check how closely the class frequencies and transitions follow the generator.

    python scripts/corpus_statistics.py --segments 100000
"""

import argparse

import numpy as np

from osca.core import STATE_CLASSES
from osca.evaluation import transition_matrix
from osca.synth import SynthConfig, generate_synthetic


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--segments", type=int, default=100_000)
    p.add_argument("--per-video", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = SynthConfig(
        num_videos=args.segments // args.per_video,
        segments_per_video=(args.per_video, args.per_video),
        feature_dim=1,
        time_steps=1,
        seed=args.seed,
    )
    corpus = generate_synthetic(cfg)
    states = np.array([s.state_change.index for v in corpus.videos for s in v.segments])
    freq = np.bincount(states, minlength=len(STATE_CLASSES)) / len(states)
    tm = transition_matrix(corpus)
    l1 = np.abs(tm.normalized - cfg.transitions()).sum(axis=1)
    rows = tm.counts.sum(axis=1)
    print(f"{'class':<12} {'prior':>7} {'freq':>7} {'row n':>7} {'row L1':>7}")
    for i, s in enumerate(STATE_CLASSES):
        print(f"{s.value:<12} {cfg.priors()[i]:7.4f} {freq[i]:7.4f} {rows[i]:7d} {l1[i]:7.4f}")


if __name__ == "__main__":
    main()
