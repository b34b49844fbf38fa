"""Command-line entry point: datagen, train, generate, eval, serve.

Exit codes: 0 success, 1 usage problems, 2 unusable input data (datasets,
graphs, checkpoints), 3 unexpected runtime failures. Errors print a single
line on stderr; LAYOUTFORGE_LOG (error|info|debug) controls extra logging.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .boxes import layout_to_json
from .data import ShapesConfig, generate_shapes_dataset, load_dataset, \
    save_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DegenerateInputError,
    EvaluationError,
    GenerationError,
    LayoutForgeError,
    PlacementError,
)
from .pipeline import Pipeline
from .pnm import read_ppm, write_pgm, write_ppm
from .scenegraph import GraphParseError, parse_scene_graph
from .server import ModelService, make_server
from .train import (
    TrainConfig,
    evaluate,
    load_train_config,
    run_curriculum,
    split_samples,
    train_stage,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

_DATA_ERRORS = (GraphParseError, DatasetError, DegenerateInputError,
                GenerationError, CheckpointError, EvaluationError,
                PlacementError)

log = logging.getLogger("layoutforge.cli")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="layoutforge",
                     description="Scene-graph layout generation: datasets, "
                                 "training, inference, and serving.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    datagen = sub.add_parser("datagen", help="write a synthetic dataset")
    dsub = datagen.add_subparsers(dest="dataset", metavar="dataset")
    shapes = dsub.add_parser("shapes", help="colored geometric shapes scenes")
    shapes.add_argument("--count", type=int, required=True,
                        help="number of samples")
    shapes.add_argument("--size", type=int, default=64,
                        help="canvas side in pixels (default 64)")
    shapes.add_argument("--out", required=True, help="output directory")
    shapes.add_argument("--seed", type=int, default=0, help="generation seed")

    train = sub.add_parser("train", help="train one stage or the curriculum")
    train.add_argument("--stage", required=True,
                       choices=("box", "seg", "img", "joint"))
    train.add_argument("--mode", choices=("progressive", "scratch"),
                       help="joint curriculum mode (default from config)")
    train.add_argument("--data", required=True, help="dataset directory")
    train.add_argument("--config", help="key=value training config file")
    train.add_argument("--out", required=True, help="checkpoint to write")
    train.add_argument("--seed", type=int, help="override the config seed")

    generate = sub.add_parser("generate",
                              help="run the pipeline on one scene graph")
    generate.add_argument("--ckpt", required=True, help="trained checkpoint")
    generate.add_argument("--graph", required=True, help="scene graph file")
    generate.add_argument("--patch", help="conditioning patch (PPM)")
    generate.add_argument("--patch-at", metavar="X,Y",
                          help="patch placement on the canvas (default 0,0)")
    generate.add_argument("--out", required=True, help="output directory")
    generate.add_argument("--seed", type=int, default=0,
                          help="accepted for interface symmetry; "
                               "generation is deterministic")

    ev = sub.add_parser("eval", help="score a checkpoint on held-out data")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True, help="dataset directory")
    ev.add_argument("--out", required=True, help="metric CSV to write")
    ev.add_argument("--seed", type=int, default=0,
                    help="accepted for interface symmetry")

    serve = sub.add_parser("serve", help="HTTP inference service")
    serve.add_argument("--ckpt", required=True)
    serve.add_argument("--addr", default="127.0.0.1:8000",
                       metavar="HOST:PORT")
    serve.add_argument("--ui", help="static frontend directory")
    serve.add_argument("--seed", type=int, default=0,
                       help="accepted for interface symmetry")
    return parser


# ------------------------------------------------------------------ commands


def _cmd_datagen(args) -> int:
    if args.dataset != "shapes":
        raise UsageError("choose a dataset: shapes")
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    cfg = ShapesConfig(canvas=args.size, seed=args.seed)
    samples = generate_shapes_dataset(cfg, args.count)
    save_dataset(samples, args.out, cfg.vocabulary())
    log.info("wrote %d samples to %s", args.count, args.out)
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = dataclasses.replace(
            cfg, schedule=dataclasses.replace(cfg.schedule, mode=args.mode))
    cfg = dataclasses.replace(cfg, data_dir=str(args.data))
    samples, vocab = load_dataset(args.data)
    train_split, _ = split_samples(samples)
    epochs_dir = Path(f"{args.out}.epochs")
    epochs_dir.mkdir(parents=True, exist_ok=True)
    if args.stage == "joint":
        pipeline, report = run_curriculum(cfg, train_split, vocab,
                                          checkpoint_dir=epochs_dir)
    else:
        pipeline, report = train_stage(args.stage, cfg, train_split, vocab,
                                       checkpoint_dir=epochs_dir)
    pipeline.save(args.out)
    Path(f"{args.out}.train.csv").write_text(report.to_csv())
    Path(f"{args.out}.train.json").write_text(report.summary_json())
    log.info("trained %s in %.1fs, wrote %s", args.stage,
             report.wall_clock_s, args.out)
    return EXIT_OK


def _read_graph_file(path, vocab):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetError(f"cannot read graph file {path}: {e}") from e
    return parse_scene_graph(text, vocab)


def _parse_patch_at(value: str) -> tuple[int, int]:
    try:
        x, y = value.split(",")
        return int(x), int(y)
    except ValueError:
        raise UsageError(f"--patch-at expects X,Y integers, "
                         f"got '{value}'") from None


def _cmd_generate(args) -> int:
    pipeline = Pipeline.load(args.ckpt)
    graph = _read_graph_file(args.graph, pipeline.vocab)
    if args.patch_at and not args.patch:
        raise UsageError("--patch-at requires --patch")
    patch = read_ppm(args.patch) if args.patch else None
    offset = _parse_patch_at(args.patch_at) if args.patch_at else (0, 0)
    result = pipeline.generate(graph, patch, offset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "boxes.json").write_text(
        layout_to_json(result.boxes, pipeline.vocab.categories) + "\n")
    write_pgm(out / "seg.pgm", result.labels)
    write_ppm(out / "image.ppm", result.image)
    log.info("wrote boxes.json, seg.pgm, image.ppm to %s", out)
    return EXIT_OK


def _flatten_metrics(metrics: dict) -> list[tuple[str, object]]:
    rows = []
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, dict):
            rows += [(f"{key}.{name}", value[name]) for name in sorted(value)]
        else:
            rows.append((key, value))
    return rows


def _cmd_eval(args) -> int:
    pipeline = Pipeline.load(args.ckpt)
    samples, vocab = load_dataset(args.data)
    if vocab != pipeline.vocab:
        raise DatasetError("dataset vocabulary does not match the "
                           "checkpoint's")
    _, held = split_samples(samples)
    metrics = evaluate(pipeline, held)
    lines = ["metric,value"]
    lines += [f"{name},{value!r}" for name, value in
              _flatten_metrics(metrics)]
    Path(args.out).write_text("\n".join(lines) + "\n")
    log.info("wrote %s", args.out)
    return EXIT_OK


def _cmd_serve(args) -> int:
    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise UsageError(f"--addr expects HOST:PORT, got '{args.addr}'")
    service = ModelService.from_checkpoint(args.ckpt)
    httpd = make_server(service, host, int(port_text), args.ui)
    host_out, port_out = httpd.server_address[:2]
    print(f"serving on http://{host_out}:{port_out}", file=sys.stderr)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return EXIT_OK


_COMMANDS = {"datagen": _cmd_datagen, "train": _cmd_train,
             "generate": _cmd_generate, "eval": _cmd_eval,
             "serve": _cmd_serve}

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


def _one_line(message) -> str:
    return " ".join(str(message).split()) or "unknown error"


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
        level=_LOG_LEVELS.get(os.environ.get("LAYOUTFORGE_LOG", "error"),
                              logging.ERROR))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help prints and exits through here
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.command is None:
        print("usage error: missing command "
              "(datagen|train|generate|eval|serve)", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config error: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as e:
        print(f"data error: {_one_line(e)}", file=sys.stderr)
        return EXIT_DATA
    except LayoutForgeError as e:
        print(f"runtime error: {_one_line(e)}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports, not raises
        log.exception("unexpected failure")
        print(f"runtime error: {_one_line(e)}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
