"""Command-line front end: ``synth``, ``optimize``, ``train``, ``predict``, ``evaluate``.

Exit codes: 0 success, 1 usage or validation error, 2 IO error. Diagnostics
go to standard error only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import distill, evalharness, rankopt
from .datamodel import (
    DataError,
    OptimConfig,
    dump_quality_scores,
    load_embeddings,
    load_quality_scores,
    validate_bundle,
    write_embeddings,
    write_quality_scores,
)
from .hashing import file_digest
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger("fiqa_opt")

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _image_range(text: str):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return int(lo), int(hi)
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fiqa-opt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def shared(p):
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", required=True, help="output path ('-' for stdout where CSV)")

    p = sub.add_parser("synth", help="generate a synthetic dataset into a directory")
    shared(p)
    p.add_argument("--identities", type=int, default=50)
    p.add_argument("--images-per-identity", type=_image_range, default=40,
                   help="count or LO:HI range")
    p.add_argument("--dimension", type=int, default=64)
    p.add_argument("--noise-floor", type=float, default=0.1)
    p.add_argument("--noise-ceil", type=float, default=1.5)
    p.add_argument("--baseline-corruption", type=float, default=0.3)
    p.add_argument("--format", choices=("femb", "csv"), default="femb")

    p = sub.add_parser("optimize", help="optimize baseline quality labels")
    shared(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--clusters", type=int, default=20)
    p.add_argument("--theta", type=float, default=0.001)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--scatter", help="optional CSV image_id,baseline_rank,mean_opt_index")

    p = sub.add_parser("train", help="train a regression head on quality labels")
    shared(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scores", required=True)
    defaults = distill.TrainConfig()
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--hidden-width", type=int, default=defaults.hidden_width)

    p = sub.add_parser("predict", help="predict qualities with a trained model")
    shared(p)
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)

    p = sub.add_parser("evaluate", help="ERC curve and AUC of a quality CSV")
    shared(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--fmr-target", type=float, default=1e-3)
    p.add_argument("--genuine-cap", type=int, default=50)
    p.add_argument("--impostors", type=int, default=None, help="default 10*N")
    return parser


def _emit_text(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(out).write_text(text, encoding="utf-8")


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_bundle(emb_path, score_path):
    records = load_embeddings(emb_path)
    scores = load_quality_scores(score_path)
    bundle = validate_bundle(records, scores)
    log.info("loaded %d images, %d identities, dim %d",
             bundle.n_images, bundle.n_identities, bundle.dimension)
    return bundle


def cmd_synth(args):
    config = SynthConfig(
        identities=args.identities,
        images_per_identity=args.images_per_identity,
        dimension=args.dimension,
        noise_floor=args.noise_floor,
        noise_ceil=args.noise_ceil,
        baseline_corruption=args.baseline_corruption,
        seed=args.seed,
    )
    if args.out == "-":
        raise UsageError("synth writes a directory; --out - is not supported")
    ds = generate_synthetic(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emb = out / ("embeddings.csv" if args.format == "csv" else "embeddings.femb")
    write_embeddings(emb, ds.records, fmt=args.format)
    write_quality_scores(out / "truth.csv", ds.truth)
    write_quality_scores(out / "baseline.csv", ds.baseline)
    log.info("wrote %d synthetic images to %s", len(ds.records), out)
    return asdict(config), {}, [str(emb), str(out / "truth.csv"), str(out / "baseline.csv")]


def cmd_optimize(args):
    config = OptimConfig(clusters=args.clusters, theta=args.theta,
                         repeats=args.repeats, seed=args.seed)
    bundle = _load_bundle(args.embeddings, args.scores)
    result = rankopt.optimize_labels(bundle, config, threads=args.threads)
    log.info("optimized %d labels over %d repetitions", bundle.n_images, config.repeats)
    _emit_text(args.out, dump_quality_scores(result.entries))
    outputs = [args.out]
    if args.out != "-":
        sidecar = f"{args.out}.sidecar.json"
        _write_json(sidecar, {
            "theta": config.theta,
            "repeats": config.repeats,
            "clusters": config.clusters,
            "seed": config.seed,
            "N": bundle.n_images,
            "L_per_repetition": list(result.pairs_per_repetition),
        })
        outputs.append(sidecar)
    if args.scatter:
        lines = ["image_id,baseline_rank,mean_opt_index"]
        lines += [f"{i},{result.baseline_rank[i]!r},{result.mean_opt_index[i]!r}"
                  for i in bundle.image_ids]
        Path(args.scatter).write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append(args.scatter)
    inputs = {args.embeddings: file_digest(args.embeddings), args.scores: file_digest(args.scores)}
    return asdict(config), inputs, outputs


def cmd_train(args):
    config = distill.TrainConfig(learning_rate=args.learning_rate, epochs=args.epochs,
                                 batch_size=args.batch_size, hidden_width=args.hidden_width,
                                 seed=args.seed)
    if args.out == "-":
        raise UsageError("train writes a model file; --out - is not supported")
    bundle = _load_bundle(args.embeddings, args.scores)
    labels = distill.normalize_scores(bundle.qualities)
    model = distill.train_regressor(bundle, labels, config)
    log.info("trained %s head, final L1 %.6f", model.architecture, model.loss_trace[-1])
    distill.save_model(args.out, model)
    trace = f"{args.out}.loss.csv"
    distill.write_loss_trace(trace, model)
    inputs = {args.embeddings: file_digest(args.embeddings), args.scores: file_digest(args.scores)}
    return asdict(config), inputs, [args.out, trace]


def cmd_predict(args):
    model = distill.load_model(args.model)
    records = load_embeddings(args.embeddings)
    if not records:
        raise DataError("no embeddings to score")
    x = np.stack([r.vector for r in records]).astype(np.float64)
    preds = model.predict_batch(x)
    table = {r.image_id: float(p) for r, p in zip(records, preds)}
    _emit_text(args.out, dump_quality_scores(table))
    log.info("predicted %d qualities", len(table))
    inputs = {args.model: file_digest(args.model), args.embeddings: file_digest(args.embeddings)}
    return {"seed": args.seed}, inputs, [args.out]


def cmd_evaluate(args):
    bundle = _load_bundle(args.embeddings, args.scores)
    pairs = evalharness.build_verification_pairs(bundle, args.seed, genuine_cap=args.genuine_cap,
                                                 impostor_count=args.impostors)
    curve = evalharness.erc_curve(pairs, bundle.scores, fmr_target=args.fmr_target)
    lines = ["drop_rate,fnmr"]
    lines += [f"{float(d)!r},{float(f)!r}" for d, f in zip(curve.drop_rates, curve.fnmr_values)]
    _emit_text(args.out, "\n".join(lines) + "\n")
    doc = evalharness.summary(curve)
    log.info("ERC AUC %.6f (x1000: %.2f) at threshold %.6f", curve.auc, doc["auc_x1000"],
             curve.threshold)
    outputs = [args.out]
    if args.out != "-":
        path = f"{args.out}.summary.json"
        _write_json(path, doc)
        outputs.append(path)
    config = {"seed": args.seed, "fmr_target": args.fmr_target,
              "genuine_cap": args.genuine_cap, "impostors": args.impostors}
    inputs = {args.embeddings: file_digest(args.embeddings), args.scores: file_digest(args.scores)}
    return config, inputs, outputs


COMMANDS = {
    "synth": cmd_synth,
    "optimize": cmd_optimize,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(name)s %(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.threads < 1:
        print("fiqa-opt: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    started = time.perf_counter()
    try:
        config, inputs, outputs = COMMANDS[args.command](args)
    except (DataError, UsageError) as exc:
        print(f"fiqa-opt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"fiqa-opt {args.command}: IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.out != "-":
        _write_json(f"{args.out.rstrip('/')}.manifest.json", {
            "subcommand": args.command,
            "config": config,
            "inputs": inputs,
            "outputs": outputs,
            "duration_seconds": time.perf_counter() - started,
        })
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
