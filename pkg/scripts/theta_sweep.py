"""Sweep the blending weight and report mean Spearman gain over the baseline.

    python3 scripts/theta_sweep.py --seeds 5
"""

import argparse

import numpy as np
from scipy.stats import spearmanr

from fiqa_opt.datamodel import OptimConfig, validate_bundle
from fiqa_opt.rankopt import optimize_labels
from fiqa_opt.synth import SynthConfig, generate_synthetic


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--thetas", type=float, nargs="+",
                        default=[0.001, 0.01, 0.05, 0.1, 0.3, 1.0])
    parser.add_argument("--clusters", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=10)
    args = parser.parse_args()

    datasets = []
    for seed in range(args.seeds):
        data = generate_synthetic(SynthConfig(seed=seed))
        bundle = validate_bundle(data.records, data.baseline)
        truth = [data.truth[i] for i in bundle.image_ids]
        datasets.append((seed, bundle, truth, spearmanr(bundle.scores, truth).statistic))

    print(f"{'theta':>8} {'mean gain':>10} {'wins':>6}")
    for theta in args.thetas:
        gains = []
        for seed, bundle, truth, base_rho in datasets:
            cfg = OptimConfig(clusters=args.clusters, theta=theta, repeats=args.repeats, seed=seed)
            out = optimize_labels(bundle, cfg).entries
            rho = spearmanr([out[i] for i in bundle.image_ids], truth).statistic
            gains.append(rho - base_rho)
        print(f"{theta:>8g} {np.mean(gains):>10.4f} {sum(g > 0 for g in gains):>3}/{len(gains)}")


if __name__ == "__main__":
    main()
