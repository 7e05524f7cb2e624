"""Command-line entry point.

Subcommands:
  generate   write seeded synthetic beam CSVs
  train      run one federated experiment from a config file
  compare    train fed_kan and fed_mlp on identical data and report both

Exit codes: 0 success, 2 configuration problem, 3 I/O problem, 4 numeric
failure (non-finite loss).  FEDBEAM_LOG controls log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .data import BeamSeries, default_profiles, generate_synthetic, load_csv, render_csv
from .errors import (
    ConfigurationError,
    ContractViolationError,
    IncompatibleWeightsError,
    IngestionError,
    NumericsError,
)
from .federation import ExperimentReport, FederationConfig, run_experiment
from .model import KIND_FED_KAN, KIND_FED_MLP, ModelConfig
from .report import render_comparison_csv, render_experiment_csv, summary_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Parsed contents of a --config JSON document."""

    model: ModelConfig
    federation: FederationConfig
    window_hours: int
    train_fraction: float
    beam_files: tuple[str, ...] | None
    synthetic: dict | None
    out_dir: str


def _parse_data_section(raw: dict) -> tuple[int, float, tuple[str, ...] | None, dict | None]:
    known = {"window_hours", "train_fraction", "beam_files", "synthetic"}
    extra = set(raw) - known
    if extra:
        raise ConfigurationError(f"unknown data config keys: {sorted(extra)}")
    window_hours = int(raw.get("window_hours", 5))
    if window_hours < 1:
        raise ConfigurationError(f"window_hours must be >= 1, got {window_hours}")
    train_fraction = float(raw.get("train_fraction", 0.8))
    beam_files = raw.get("beam_files")
    synthetic = raw.get("synthetic")
    if (beam_files is None) == (synthetic is None):
        raise ConfigurationError(
            "data config needs exactly one of 'beam_files' or 'synthetic'"
        )
    if beam_files is not None:
        if not isinstance(beam_files, list) or not beam_files:
            raise ConfigurationError("'beam_files' must be a non-empty list of paths")
        beam_files = tuple(str(p) for p in beam_files)
    if synthetic is not None:
        syn_known = {"seed", "hours", "beams"}
        syn_extra = set(synthetic) - syn_known
        if syn_extra:
            raise ConfigurationError(f"unknown synthetic keys: {sorted(syn_extra)}")
        synthetic = {
            "seed": int(synthetic.get("seed", 7)),
            "hours": int(synthetic.get("hours", 743)),
            "beams": int(synthetic.get("beams", 4)),
        }
        if synthetic["hours"] < 1 or synthetic["beams"] < 1:
            raise ConfigurationError(
                f"synthetic hours and beams must be >= 1, got {synthetic}"
            )
    return window_hours, train_fraction, beam_files, synthetic


def load_run_config(path: str, require_kind: bool) -> RunConfig:
    """Read and validate a config document.

    A compare run supplies the kind itself, so 'kind' may be omitted there;
    a train run must name one.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise IngestionError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a JSON object")
    known = {"model", "federation", "data", "out_dir"}
    extra = set(raw) - known
    if extra:
        raise ConfigurationError(f"unknown config sections: {sorted(extra)}")

    model_raw = dict(raw.get("model", {}))
    if "kind" not in model_raw:
        if require_kind:
            raise ConfigurationError("model config must name a kind for 'train'")
        model_raw["kind"] = KIND_FED_KAN
    model = ModelConfig.from_dict(model_raw)
    federation = FederationConfig.from_dict(raw.get("federation", {}))
    window_hours, train_fraction, beam_files, synthetic = _parse_data_section(
        raw.get("data", {})
    )
    out_dir = str(raw.get("out_dir", "."))
    return RunConfig(
        model=model,
        federation=federation,
        window_hours=window_hours,
        train_fraction=train_fraction,
        beam_files=beam_files,
        synthetic=synthetic,
        out_dir=out_dir,
    )


def _load_beams(config: RunConfig) -> list[BeamSeries]:
    if config.beam_files is not None:
        beams = []
        for i, path in enumerate(config.beam_files):
            beams.append(load_csv(path, beam_id=f"beam-{i + 1:02d}"))
        return beams
    settings = config.synthetic
    profiles = default_profiles(settings["beams"])
    return [generate_synthetic(settings["seed"], settings["hours"], p) for p in profiles]


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    fed = config.federation
    if args.seed is not None:
        fed = dataclasses.replace(fed, seed=args.seed)
    if args.availability is not None:
        fed = dataclasses.replace(fed, availability_prob=args.availability)
    fed.validate()
    out_dir = args.out if args.out is not None else config.out_dir
    return dataclasses.replace(config, federation=fed, out_dir=out_dir)


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_generate(args: argparse.Namespace) -> int:
    if args.hours < 1 or args.beams < 1:
        raise ConfigurationError(
            f"hours and beams must be >= 1, got hours={args.hours} beams={args.beams}"
        )
    out_dir = Path(args.out)
    profiles = default_profiles(args.beams)
    rendered = [
        (out_dir / f"beam-{p.index + 1:02d}.csv", render_csv(generate_synthetic(args.seed, args.hours, p)))
        for p in profiles
    ]
    out_dir.mkdir(parents=True, exist_ok=True)
    for path, text in rendered:
        _write_text(path, text)
        print(f"wrote {path}")
    return EXIT_OK


def _run_one(
    config: RunConfig, kind: str, beams: list[BeamSeries], parallel: bool
) -> ExperimentReport:
    model = dataclasses.replace(config.model, kind=kind)
    model.validate()
    return run_experiment(
        model,
        config.federation,
        beams,
        window_hours=config.window_hours,
        train_fraction=config.train_fraction,
        parallel=parallel,
    )


def cmd_train(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_run_config(args.config, require_kind=True), args)
    beams = _load_beams(config)
    report = run_experiment(
        config.model,
        config.federation,
        beams,
        window_hours=config.window_hours,
        train_fraction=config.train_fraction,
        parallel=args.parallel_clients,
    )
    text = render_experiment_csv(report)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"report_{config.model.kind}.csv"
    _write_text(out_path, text)
    print(f"wrote {out_path}")
    print(f"final average test loss ({config.model.kind}): {report.final_avg_test_loss:.6f}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_run_config(args.config, require_kind=False), args)
    beams = _load_beams(config)
    kan_report = _run_one(config, KIND_FED_KAN, beams, args.parallel_clients)
    mlp_report = _run_one(config, KIND_FED_MLP, beams, args.parallel_clients)

    kan_text = render_experiment_csv(kan_report)
    mlp_text = render_experiment_csv(mlp_report)
    comparison_text = render_comparison_csv(kan_report, mlp_report)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in (
        ("report_fed_kan.csv", kan_text),
        ("report_fed_mlp.csv", mlp_text),
        ("comparison.csv", comparison_text),
    ):
        _write_text(out_dir / name, text)
        print(f"wrote {out_dir / name}")
    print(summary_table(kan_report, mlp_report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedbeam",
        description="Federated KAN / MLP forecasting of per-beam traffic composition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write synthetic beam CSVs")
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--hours", type=int, default=743)
    gen.add_argument("--beams", type=int, default=4)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_generate)

    for name, func in (("train", cmd_train), ("compare", cmd_compare)):
        cmd = sub.add_parser(name, help=f"{name} from a config file")
        cmd.add_argument("--config", required=True, help="path to a JSON run config")
        cmd.add_argument("--seed", type=int, default=None, help="override federation seed")
        cmd.add_argument("--out", default=None, help="override output directory")
        cmd.add_argument(
            "--parallel-clients",
            action="store_true",
            help="train clients of a round in a thread pool",
        )
        cmd.add_argument(
            "--availability",
            type=float,
            default=None,
            help="override client availability probability",
        )
        cmd.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("FEDBEAM_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ContractViolationError, IncompatibleWeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
