"""History-noise sweep: train the full model per seed, then corrupt its histories.

    python scripts/noise_robustness.py --seeds 0 1 2 --out runs/noise

Noise draws are tied to the run seed, so each seed contributes one
evaluation per level; the pooled CSV reports the mean and spread over seeds.
"""

import argparse
import logging
from pathlib import Path

from osca.evaluation import DEFAULT_NOISE_LEVELS, sweep_csv
from osca.experiments import mean_sweep, run_noise_sweeps, run_variants

FULL = "VNLP(O-Action,O-State)"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--num-videos", type=int, default=300)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--out", default="runs/noise")
    p.add_argument("--plot", action="store_true", help="also write sweep.png (needs matplotlib)")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = run_variants(
        args.seeds,
        variants={FULL: ("vid", "action", "state")},
        synth_overrides={"num_videos": args.num_videos},
        train_overrides={"epochs": args.epochs},
    )
    per_seed = run_noise_sweeps(runs, FULL, DEFAULT_NOISE_LEVELS)
    for r, rows in zip(runs, per_seed):
        (out / f"sweep_seed{r.seed}.csv").write_text(sweep_csv(rows))
    pooled = mean_sweep(per_seed)
    text = sweep_csv(pooled)
    (out / "sweep.csv").write_text(text)
    print(text, end="")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        x = [f"{r.action_noise:.0%}" for r in pooled]
        for key in ("top1", "top5", "f1"):
            vals = [getattr(r, key) for r in pooled]
            ax.errorbar(x, [m for m, _ in vals], yerr=[s for _, s in vals], marker="o", capsize=3, label=key)
        ax.set_xlabel("history noise (action = state)")
        ax.set_ylabel("%")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "sweep.png", dpi=100, metadata={"Software": None})


if __name__ == "__main__":
    main()
