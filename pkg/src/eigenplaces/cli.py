"""Command-line interface: one subcommand per pipeline stage.

Exit codes: 0 success, 2 config error, 3 input error, 4 stage failure.
Configuration comes from a JSON file with flag overrides (flags > env >
file > defaults); EIGENPLACES_OUTPUT_DIR overrides the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, EigenplacesError, InputError
from .pipeline import (
    STAGE_FUNCTIONS,
    PipelineConfig,
    load_config,
    run_pipeline,
)
from .synth import SynthConfig, generate_corpus, write_ground_truth_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_STAGE = 4

_STAGE_COMMANDS = {
    "ingest": "ingest",
    "cluster-towers": "cluster_towers",
    "features": "features",
    "eigen": "eigen",
    "cluster": "cluster",
    "select-k": "select_k",
    "label": "label",
    "baseline": "baseline",
    "evaluate": "evaluate",
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--trace", help="trace CSV path")
    parser.add_argument("--towers", help="tower registry CSV path")
    parser.add_argument("--ground-truth", dest="ground_truth", help="ground truth CSV path")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    parser.add_argument("--timezone", help="IANA timezone for local hours")
    parser.add_argument("--radius-km", dest="radius_km", type=float)
    parser.add_argument("--eigen-k", dest="eigen_k", type=int)
    parser.add_argument("--cluster-k", dest="cluster_k", help="cluster count or 'auto'")
    parser.add_argument("--fcm-m", dest="fcm_m", type=float)
    parser.add_argument(
        "--fcm-mode",
        dest="fcm_mode",
        choices=["balanced", "max_inference", "max_accuracy", "all"],
    )
    parser.add_argument("--seed", type=int)
    parser.add_argument(
        "--feature-space",
        dest="feature_space",
        choices=["reconstructed", "raw_nhp", "coefficients"],
    )
    parser.add_argument("--threads", type=int)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "trace",
            "towers",
            "ground_truth",
            "output_dir",
            "timezone",
            "radius_km",
            "eigen_k",
            "cluster_k",
            "fcm_m",
            "fcm_mode",
            "seed",
            "feature_space",
            "threads",
        )
    }
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eigenplaces",
        description="Infer home/work/third-place labels from mobility traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for command in _STAGE_COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} stage")
        _add_config_flags(p)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--config", help="synth config JSON")
    p.add_argument("--out", required=True, help="directory for trace/towers/truth CSVs")
    p.add_argument("--seed", type=int, help="override rng_seed")
    p.add_argument("--agents", type=int, help="override n_agents")
    p.add_argument("--days", type=int, help="override days")
    return parser


def _cmd_synth(args: argparse.Namespace) -> int:
    import os

    data: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read synth config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"synth config is not valid JSON: {exc}") from exc
    if args.seed is not None:
        data["rng_seed"] = args.seed
    if args.agents is not None:
        data["n_agents"] = args.agents
    if args.days is not None:
        data["days"] = args.days
    config = SynthConfig.from_dict(data)
    records, registry, ground_truth, _ = generate_corpus(config)
    os.makedirs(args.out, exist_ok=True)
    from .artifacts import write_registry_csv, write_trace_records_csv

    write_trace_records_csv(os.path.join(args.out, "trace.csv"), records)
    write_registry_csv(os.path.join(args.out, "towers.csv"), registry)
    write_ground_truth_csv(ground_truth, os.path.join(args.out, "ground_truth.csv"))
    print(
        f"synth: {len(records)} records, {len(registry)} towers, "
        f"{len(ground_truth.home)} users -> {args.out}"
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        config = _config_from_args(args)
        if args.command == "pipeline":
            config.validate()
            manifest = run_pipeline(config)
            for stage in manifest["stages"]:
                print(f"{stage['name']}: {stage['seconds']:.3f}s {stage['info']}")
            return EXIT_OK
        config.validate()
        stage_name = _STAGE_COMMANDS[args.command]
        info = STAGE_FUNCTIONS[stage_name](config)
        print(f"{stage_name}: {info}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EigenplacesError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
