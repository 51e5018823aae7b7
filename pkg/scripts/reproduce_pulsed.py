"""Pulsed-mode nerve run at N = 1000 plus a single-shot floor estimate.

    python3 scripts/reproduce_pulsed.py [--seed S] [--out DIR]
"""

import argparse
import math

from nervemag.config import ExperimentConfig
from nervemag.experiments import run_pulsed_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/pulsed")
    args = p.parse_args()

    cfg = ExperimentConfig().with_run(seed=args.seed, out_dir=args.out)
    report = run_pulsed_experiment(cfg)
    print(report.summary())

    single = run_pulsed_experiment(cfg.with_run(n_avg=1, null_repeats=400), out_dir=False)
    ratio = single["noise_floor"] / report["noise_floor"]
    print(f"single-shot floor {single['noise_floor'] * 1e15:.2f} pT ms, "
          f"floor ratio N=1/N=1000 {ratio:.1f} (sqrt(1000) = {math.sqrt(1000):.1f})")


if __name__ == "__main__":
    main()
