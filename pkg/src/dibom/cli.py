"""Command-line entry point: one subcommand per experiment family."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from pydantic import ValidationError

from dibom import __version__
from dibom.config import ExperimentConfig, load_config, preset_names
from dibom.datagen import IntrinsicKind, IntrinsicSpec, dumps_dataset, gen_dataset
from dibom.experiments import ConfigError, run
from dibom.training import NumericalAbort

log = logging.getLogger("dibom")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SUBCOMMANDS = {
    "train": "train",
    "compare": "compare",
    "fbe": "fbe",
    "landscape": "landscape",
    "teleport": "teleport",
    "corrupt": "corruption",
    "barren": "barren",
    "params": "params",
}


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON config file or preset name")
    p.add_argument("--seed", type=int, action="append", help="run seed (repeatable); replaces the config's seeds")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
    p.add_argument("--fast", action="store_true", help="reduced FBE profile (k=20, m=5)")
    p.add_argument("--timing", action="store_true", help="record wall-clock columns (breaks byte-identical reruns)")
    p.add_argument("--max-iters", type=int, help="override training.max_iters")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dibom", description="Deep Ising Born machine experiments")
    parser.add_argument("--version", action="version", version=f"dibom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name, help=f"run the {SUBCOMMANDS[name]} experiment"))
    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    gen = ds_sub.add_parser("gen", help="generate a dataset file")
    gen.add_argument("--intrinsic", required=True, choices=[k.value for k in IntrinsicKind])
    gen.add_argument("--L", type=int, help="layer count for layered intrinsic unitaries")
    gen.add_argument("--n", type=int, default=2)
    gen.add_argument("--N", type=int, default=20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--product-inputs", action="store_true")
    gen.add_argument("--out", required=True, help="output JSON path")
    sub.add_parser("presets", help="list shipped preset configs")
    return parser


def resolve_config(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    source = args.config or experiment
    cfg = load_config(source)
    if cfg.experiment != experiment:
        raise ConfigError(f"config is for experiment {cfg.experiment!r}, not {experiment!r}")
    updates = {}
    if args.seed:
        updates["seeds"] = args.seed
    if args.max_iters is not None:
        updates["training"] = {**cfg.training.model_dump(), "max_iters": args.max_iters}
    if updates:
        cfg = ExperimentConfig.model_validate({**cfg.model_dump(), **updates})
    return cfg


def meta_document(cfg: ExperimentConfig, summary: dict, args: argparse.Namespace) -> str:
    meta = {
        "artifact_version": __version__,
        "experiment": cfg.experiment,
        "seeds": cfg.seeds,
        "config": cfg.model_dump(mode="json"),
        "flags": {"fast": args.fast, "timing": args.timing, "threads": args.threads},
        "results": summary,
    }
    if cfg.experiment == "fbe" and args.fast:
        meta["fbe_profile_note"] = "fast profile: k=20 unitaries and m=5 states instead of the configured k and m"
    return json.dumps(meta, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _run_experiment(args: argparse.Namespace) -> int:
    experiment = SUBCOMMANDS[args.command]
    try:
        cfg = resolve_config(args, experiment)
    except (ValidationError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(cfg, fast=args.fast, timing=args.timing, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out_dir = Path(args.out_dir)
    for name, text in sorted(result.files.items()):
        write_atomic(out_dir / name, text)
    write_atomic(out_dir / "meta.json", meta_document(cfg, result.summary, args))
    log.info("wrote %d files to %s", len(result.files) + 1, out_dir)
    return EXIT_OK


def _dataset_gen(args: argparse.Namespace) -> int:
    try:
        spec = IntrinsicSpec(args.intrinsic, args.L)
        ds = gen_dataset(spec, args.n, args.N, args.seed, product_inputs=args.product_inputs)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_atomic(Path(args.out), dumps_dataset(ds) + "\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.command == "dataset":
        return _dataset_gen(args)
    return _run_experiment(args)


if __name__ == "__main__":
    sys.exit(main())
