"""Command line entry point: ``ldfa {fit,transform,evaluate,visualize}``."""

import argparse
import logging
import sys

from . import io, pipeline


def _cmd_fit(args):
    cfg = pipeline.load_config(args.config) if args.config else pipeline.PipelineConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.mode is not None:
        overrides["mode"] = args.mode
    if overrides:
        cfg = pipeline.PipelineConfig(**{**cfg.to_dict(), **overrides})
    x, labels, normalizer = io.load_features(args.input, args.labels)
    archive, emb = pipeline.fit(cfg, x, normalizer, threads=args.threads)
    for note in emb.warnings:
        print(f"warning: {note}", file=sys.stderr)
    if args.model:
        archive.save(args.model)
    if args.output:
        io.write_embedding(args.output, emb.h)
    if args.metrics and labels is not None:
        rows = pipeline.evaluate(emb.h, labels, "cluster", seeds=[cfg.seed])
        with open(args.metrics, "w") as f:
            f.write(pipeline.format_metrics(rows))
    return 0


def _cmd_transform(args):
    archive = pipeline.ModelArchive.load(args.model)
    x, _, _ = io.load_features(args.input, normalizer=archive.normalizer)
    out = pipeline.transform(archive, x)
    io.write_embedding(args.output, out)
    return 0


def _cmd_evaluate(args):
    emb = io.read_embedding(args.input)
    labels = io.read_labels(args.labels)
    seeds = range(args.seed, args.seed + args.runs)
    rows = pipeline.evaluate(emb, labels, args.task, seeds=seeds, train_fraction=args.split)
    text = pipeline.format_metrics(rows)
    if args.metrics:
        with open(args.metrics, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_visualize(args):
    emb = io.read_embedding(args.input)
    labels = io.read_labels(args.labels)
    sidecar = pipeline.visualize(emb, labels, args.output)
    print(f"wrote {args.output} and {sidecar}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ldfa", description="Local deep-feature alignment")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="learn an embedding of a feature file")
    p.add_argument("--input", required=True, help="CSV (one sample per row) or IDX image file")
    p.add_argument("--labels", help="labels, one per line, or IDX label file")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--model", help="where to write the model archive")
    p.add_argument("--output", help="where to write the training embedding (CSV)")
    p.add_argument("--metrics", help="where to write clustering metrics (needs --labels)")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=pipeline.MODES)
    p.add_argument("--threads", type=int, default=pipeline.default_threads())
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("transform", help="embed new samples with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("evaluate", help="purity or 1-NN accuracy of an embedding")
    p.add_argument("--input", required=True, help="embedding CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--task", required=True, choices=("cluster", "classify"))
    p.add_argument("--metrics", help="report path; stdout if omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--split", type=float, default=0.7, help="per-class training fraction")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("visualize", help="2-D scatter plot as SVG")
    p.add_argument("--input", required=True, help="embedding CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--output", required=True, help="SVG path; a .csv sidecar is written next to it")
    p.set_defaults(func=_cmd_visualize)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
