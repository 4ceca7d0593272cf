"""Baseline vs optimized vs distilled quality on seeded synthetic datasets.

Prints one row per seed with the Spearman correlation against the true quality
and the ERC AUC (x1000) at the chosen FMR, then the column means.

    python3 scripts/scaled_experiment.py --seeds 10
"""

import argparse

import numpy as np
from scipy.stats import spearmanr

from fiqa_opt.datamodel import OptimConfig, validate_bundle
from fiqa_opt.distill import TrainConfig, normalize_scores, train_regressor
from fiqa_opt.evalharness import build_verification_pairs, erc_curve
from fiqa_opt.rankopt import optimize_labels
from fiqa_opt.synth import SynthConfig, generate_synthetic


def run_seed(seed, args):
    data = generate_synthetic(SynthConfig(identities=args.identities,
                                          images_per_identity=args.images_per_identity,
                                          dimension=args.dimension,
                                          baseline_corruption=args.corruption, seed=seed))
    bundle = validate_bundle(data.records, data.baseline)
    ids = bundle.image_ids
    truth = np.array([data.truth[i] for i in ids])
    config = OptimConfig(clusters=args.clusters, theta=args.theta, repeats=args.repeats, seed=seed)
    optimized = optimize_labels(bundle, config).entries
    scores = {"baseline": bundle.scores, "optimized": np.array([optimized[i] for i in ids])}
    if args.distill:
        model = train_regressor(bundle, normalize_scores(optimized), TrainConfig(seed=seed))
        scores["distilled"] = model.predict_batch(bundle.vectors)
    pairs = build_verification_pairs(bundle, seed)
    row = {}
    for name, q in scores.items():
        row[name] = (spearmanr(q, truth).statistic,
                     erc_curve(pairs, q, fmr_target=args.fmr_target).auc * 1000)
    return row


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--identities", type=int, default=50)
    parser.add_argument("--images-per-identity", type=int, default=40)
    parser.add_argument("--dimension", type=int, default=64)
    parser.add_argument("--corruption", type=float, default=0.3)
    parser.add_argument("--clusters", type=int, default=5)
    parser.add_argument("--theta", type=float, default=0.05)
    parser.add_argument("--repeats", type=int, default=10)
    parser.add_argument("--fmr-target", type=float, default=1e-3)
    parser.add_argument("--distill", action="store_true", help="also train and score a head")
    args = parser.parse_args()

    rows = [run_seed(seed, args) for seed in range(args.seeds)]
    names = list(rows[0])
    header = f"{'seed':>4} " + " ".join(f"{n + ' rho':>14} {n + ' AUC':>14}" for n in names)
    print(header)
    for seed, row in enumerate(rows):
        print(f"{seed:>4} " + " ".join(f"{row[n][0]:>14.4f} {row[n][1]:>14.2f}" for n in names))
    means = {n: np.mean([r[n] for r in rows], axis=0) for n in names}
    print(f"{'mean':>4} " + " ".join(f"{means[n][0]:>14.4f} {means[n][1]:>14.2f}" for n in names))


if __name__ == "__main__":
    main()
