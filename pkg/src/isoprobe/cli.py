"""Command-line interface: ``isoprobe {measure,transform,cluster,eval,layers,project}``.

Tabular output is CSV with a header row, single objects are JSON, logs go to stderr.
Exit codes: 0 success, 1 I/O error, 2 contract violation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from isoprobe.errors import ContractError, IsoprobeWarning, NumericalError
from isoprobe.evaluation import EvalResult, evaluate, layer_report, write_layer_csv
from isoprobe.geometry import isotropy_score, project_2d
from isoprobe.store import (
    frequency_buckets,
    load_dump,
    load_sts_dataset,
    select_indices,
    write_binary_dump,
)
from isoprobe.transforms import (
    DEFAULT_D,
    DEFAULT_K,
    DEFAULT_SEED,
    SELECTORS,
    apply_pipeline,
    kmeans,
    parse_pipeline,
)

log = logging.getLogger("isoprobe")

EXIT_OK, EXIT_IO, EXIT_CONTRACT, EXIT_NUMERIC = 0, 1, 2, 3


def _layer_arg(text):
    if text == "all":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"layer must be an integer or 'all', got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("layer must be >= 0")
    return value


def _emit(text: str, output) -> None:
    if output is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(output).write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _defaults(args) -> dict:
    return {"k": args.k, "D": args.remove, "selector": args.selector, "seed": args.seed}


def _selection(dump, args):
    cls_only = True if args.scope == "cls" else None
    return select_indices(dump, layer=args.layer, cls_only=cls_only)


def cmd_measure(args) -> int:
    dump = load_dump(args.input)
    idx = _selection(dump, args)
    report = isotropy_score(dump.vectors[idx])
    _emit(_json(report.to_dict()), args.output)
    return EXIT_OK


def cmd_transform(args) -> int:
    if args.output is None:
        raise ContractError("transform needs --output for the binary dump")
    dump = load_dump(args.input)
    steps = parse_pipeline(args.pipeline, _defaults(args))
    idx = _selection(dump, args)
    vectors = dump.vectors[idx].copy()
    layers = dump.layers[idx]
    # each layer is its own embedding space and is transformed independently
    for layer in sorted(set(layers.tolist())):
        rows = np.flatnonzero(layers == layer)
        log.info("layer %d: applying %d step(s) to %d rows", layer, len(steps), rows.size)
        vectors[rows] = apply_pipeline(vectors[rows], steps)
    write_binary_dump(dump.subset(idx).with_vectors(vectors), args.output)
    return EXIT_OK


def cmd_cluster(args) -> int:
    dump = load_dump(args.input)
    idx = _selection(dump, args)
    assignment = kmeans(dump.vectors[idx], args.k, args.seed)
    log.info(
        "k=%d inertia=%r iterations=%d", assignment.k, assignment.inertia, assignment.iterations
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "token", "layer", "sentence_id", "position", "cluster"])
    for row, label in zip(idx, assignment.labels):
        rec = dump.records[row]
        writer.writerow([int(row), rec.token, rec.layer, rec.sentence_id, rec.position, int(label)])
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    dump = load_dump(args.input)
    dataset = load_sts_dataset(args.sts, dump)
    layer = args.layer
    if layer is None:
        layers = dump.layer_ids()
        if len(layers) != 1:
            raise ContractError(f"dump has layers {layers}; choose one with --layer")
        layer = layers[0]
    result: EvalResult = evaluate(dump, dataset, layer, parse_pipeline(args.pipeline, _defaults(args)))
    if args.format == "csv":
        buf = io.StringIO()
        result.write_csv(buf)
        _emit(buf.getvalue(), args.output)
    else:
        _emit(_json(result.to_dict()), args.output)
    return EXIT_OK


def _load_many(path):
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))
        if not files:
            raise ContractError(f"no dump files in directory {path}")
        return [load_dump(p) for p in files]
    return [load_dump(path)]


def cmd_layers(args) -> int:
    dumps = _load_many(args.input)
    rows = layer_report(dumps)
    if args.format == "json":
        _emit(_json([r.to_dict() for r in rows]), args.output)
    else:
        buf = io.StringIO()
        write_layer_csv(rows, buf)
        _emit(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_project(args) -> int:
    dump = load_dump(args.input)
    idx = _selection(dump, args)
    coords = project_2d(dump.vectors[idx])
    buckets = frequency_buckets(dump.frequencies[idx], args.buckets, args.unknown_zero)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["token", "bucket", "x", "y"])
    for row, bucket, (x, y) in zip(idx, buckets, coords):
        writer.writerow([dump.records[row].token, int(bucket), repr(float(x)), repr(float(y))])
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


COMMANDS = {
    "measure": cmd_measure,
    "transform": cmd_transform,
    "cluster": cmd_cluster,
    "eval": cmd_eval,
    "layers": cmd_layers,
    "project": cmd_project,
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--input", required=True, help="dump file (TSV or binary) or directory")
    shared.add_argument("--output", help="output path (default: stdout)")
    shared.add_argument("--seed", type=int, default=DEFAULT_SEED)
    shared.add_argument("--layer", type=_layer_arg, default=None, help="layer id or 'all'")
    shared.add_argument("--scope", choices=("all", "cls"), default="all")
    shared.add_argument("--k", type=int, default=DEFAULT_K, help="number of clusters")
    shared.add_argument("--remove", type=int, default=DEFAULT_D, help="directions to remove")
    shared.add_argument("--selector", choices=SELECTORS, default="top")
    shared.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    shared.add_argument("--pipeline", help="JSON transform pipeline")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="isoprobe", description="Embedding-space isotropy measurement and transforms."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("measure", parents=[shared], help="isotropy report as JSON")
    sub.add_parser("transform", parents=[shared], help="apply a pipeline, write a binary dump")
    sub.add_parser("cluster", parents=[shared], help="k-means labels as CSV")
    p_eval = sub.add_parser("eval", parents=[shared], help="STS Spearman evaluation")
    p_eval.add_argument("--sts", required=True, help="STS pairs file (sent_a,sent_b,gold)")
    p_eval.add_argument("--format", choices=("json", "csv"), default="json")
    p_layers = sub.add_parser("layers", parents=[shared], help="per-layer isotropy CSV")
    p_layers.add_argument("--format", choices=("json", "csv"), default="csv")
    p_project = sub.add_parser("project", parents=[shared], help="2-D PCA coordinates CSV")
    p_project.add_argument("--buckets", type=int, default=5, help="frequency buckets")
    p_project.add_argument(
        "--unknown-zero", action="store_true", help="put unknown frequencies in bucket 0"
    )
    return parser


def _show_warning(message, category, filename, lineno, file=None, line=None):
    log.warning("%s", message)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return _run(args)
    finally:
        log.removeHandler(handler)


def _run(args) -> int:
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_CONTRACT
    try:
        with contextlib.ExitStack() as stack:
            stack.enter_context(threadpool_limits(limits=args.threads))
            stack.enter_context(warnings.catch_warnings())
            warnings.simplefilter("always", IsoprobeWarning)
            warnings.showwarning = _show_warning
            return COMMANDS[args.command](args)
    except ContractError as exc:
        log.error("%s", exc)
        return EXIT_CONTRACT
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (OSError, UnicodeDecodeError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
