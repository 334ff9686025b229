#!/usr/bin/env python3
"""Cross-validate both pose classifiers on synthetic datasets across jitter
levels, to see where the nearest-neighbor and linear models start to diverge.

Usage: python scripts/pose_benchmark.py [--n 1103] [--seed 7]
"""

import argparse

from shopwatch.classify import kfold_cv
from shopwatch.posegen import PoseGeneratorParams, generate_pose_dataset


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=1103)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--folds", type=int, default=10)
    args = parser.parse_args()

    print(f"n={args.n}, folds={args.folds}, seed={args.seed}")
    print(f"{'sigma':>6} {'kNN':>8} {'best k':>7} {'linear':>8} {'selected':>9}")
    for sigma in (0.5, 1.0, 2.0, 4.0, 8.0, 12.0, 16.0):
        data = generate_pose_dataset(
            PoseGeneratorParams(jitter_sigma=sigma), args.n, seed=args.seed
        )
        report = kfold_cv(data, fold_count=args.folds, seed=args.seed)
        print(
            f"{sigma:>6.1f} {report.knn.mean_accuracy:>8.4f} "
            f"{report.knn.params['k']:>7} {report.linear.mean_accuracy:>8.4f} "
            f"{report.selected_kind:>9}"
        )


if __name__ == "__main__":
    main()
