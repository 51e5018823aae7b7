"""Continuous-mode nerve recovery with 5000 averages and the sensitivity floors.

    python3 scripts/reproduce_continuous.py [--seed S] [--out DIR] [--seeds K]
"""

import argparse

import numpy as np

from nervemag.config import ExperimentConfig
from nervemag.experiments import run_continuous_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/continuous")
    p.add_argument("--seeds", type=int, default=0, help="extra seeds for a ptp spread")
    args = p.parse_args()

    base = ExperimentConfig().with_run(mode="continuous", seed=args.seed)
    nerve = run_continuous_experiment(base.with_run(n_avg=5000, out_dir=args.out))
    print(nerve.summary())

    single = run_continuous_experiment(base.with_run(scenario="null", n_avg=1, null_repeats=600),
                                       out_dir=False)
    avg = run_continuous_experiment(base.with_run(scenario="calibration", n_avg=1000,
                                                  null_repeats=64), out_dir=False)
    print(f"single-shot sensitivity {single['noise_floor'] * 1e15:.0f} fT/sqrt(Hz), "
          f"N=1000 {avg['noise_floor'] * 1e15:.1f} fT/sqrt(Hz)")

    if args.seeds:
        ptp = [run_continuous_experiment(base.with_run(seed=s, n_avg=5000, null_repeats=0),
                                         out_dir=False)["peak_to_peak"] * 1e12
               for s in range(args.seeds)]
        print(f"ptp over {args.seeds} seeds: mean {np.mean(ptp):.2f} pT, "
              f"std {np.std(ptp):.2f} pT, range {min(ptp):.2f}-{max(ptp):.2f} pT")


if __name__ == "__main__":
    main()
