"""The ``mtmct`` command line.

Subcommands:

* ``sct`` writes every camera's single-camera trajectories.
* ``zones`` writes every camera's zones.
* ``clm-train`` learns a camera link model from ground truth.
* ``track`` runs the whole pipeline and writes global tracks and a run report.
* ``eval`` scores predicted tracks against ground truth.
* ``synth`` writes a synthetic scenario.

Diagnostics go to stderr. Failures exit with status 1 after printing a single
``error: <ErrorClass>: <message>`` line; usage errors exit with status 2.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from loguru import logger

from mtmct_tracker import __version__
from mtmct_tracker.clm import CameraLinkModel, train_model
from mtmct_tracker.config import PipelineConfig
from mtmct_tracker.errors import MtmctError
from mtmct_tracker.evaluation import (
    evaluate,
    evaluate_per_camera,
    write_per_camera_csv,
)
from mtmct_tracker.ingest import parse_ground_truth, parse_track_file
from mtmct_tracker.mtmct_logging import set_up_logging
from mtmct_tracker.pipeline import (
    load_inputs,
    load_sct_tracks,
    run_sct_stage,
    run_zone_stage,
    track,
    write_json,
    write_sct_outputs,
    write_track_outputs,
)
from mtmct_tracker.synth import (
    NoiseSpec,
    ScenarioSpec,
    chain_scenario,
    generate,
    write_scenario,
)
from mtmct_tracker.zones import write_zones

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RunManifest:
    """What a run was given, recorded next to its outputs."""

    subcommand: str
    inputs: Dict[str, Optional[str]]
    config: Optional[str]
    out: str
    stages: Tuple[str, ...]
    seed: int
    version: str = __version__
    options: Dict[str, object] = field(default_factory=dict)

    def write(self, out_dir: Path) -> None:
        document = asdict(self)
        document["stages"] = list(self.stages)
        write_json(out_dir / MANIFEST_NAME, document)


def _load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_json(path)


def _sct(args: argparse.Namespace) -> None:
    config = _load_config(args.config)
    out = Path(args.out)
    trajectories = run_sct_stage(load_inputs(args.input, config), config, args.jobs)
    paths = write_sct_outputs(trajectories, out)
    logger.info("wrote {} single-camera track files", len(paths))
    RunManifest(
        "sct", {"in": args.input}, args.config, args.out, ("ingest", "sct"), args.seed
    ).write(out)


def _zones(args: argparse.Namespace) -> None:
    config = _load_config(args.config)
    out = Path(args.out)
    sct_tracks = None if args.from_sct is None else load_sct_tracks(args.from_sct)
    camera_inputs = load_inputs(args.input, config)
    zones = run_zone_stage(camera_inputs, config, sct_tracks, args.jobs)
    write_zones(out / "zones.csv", [z for c in sorted(zones) for z in zones[c]])
    stages = ("ingest", "sct", "zones") if sct_tracks is None else ("ingest", "zones")
    RunManifest(
        "zones",
        {"in": args.input, "from_sct": args.from_sct},
        args.config,
        args.out,
        stages,
        args.seed,
    ).write(out)


def _clm_train(args: argparse.Namespace) -> None:
    config = _load_config(args.config)
    model = train_model(parse_ground_truth(args.gt), config)
    model.write_json(args.out)
    RunManifest(
        "clm-train",
        {"gt": args.gt},
        args.config,
        args.out,
        ("clm-train",),
        args.seed,
    ).write(Path(args.out).parent)


def _track(args: argparse.Namespace) -> None:
    config = _load_config(args.config)
    out = Path(args.out)
    model = None if args.clm is None else CameraLinkModel.from_json(args.clm)
    sct_tracks = None if args.from_sct is None else load_sct_tracks(args.from_sct)
    camera_inputs = load_inputs(args.input, config)
    result = track(camera_inputs, config, model, sct_tracks, args.jobs)
    write_track_outputs(result, out)
    stages: List[str] = ["ingest"]
    if sct_tracks is None:
        stages.append("sct")
    stages.append("zones")
    if config.reconnect:
        stages.append("reconnect")
    stages.extend(["fusion", "mtmct"])
    RunManifest(
        "track",
        {"in": args.input, "clm": args.clm, "from_sct": args.from_sct},
        args.config,
        args.out,
        tuple(stages),
        args.seed,
        options={"jobs": args.jobs},
    ).write(out)


def _eval(args: argparse.Namespace) -> None:
    iou_threshold = args.iou
    if iou_threshold is None:
        iou_threshold = _load_config(args.config).eval_iou
    predicted = parse_track_file(args.pred)
    ground_truth = parse_track_file(args.gt)
    report = evaluate(predicted, ground_truth, iou_threshold)
    if args.per_camera is not None:
        reports = evaluate_per_camera(predicted, ground_truth, iou_threshold)
        write_per_camera_csv(args.per_camera, reports)
    document = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        Path(args.out).write_text(document, encoding="utf-8")
    sys.stdout.write(document)
    # Without a file output there is no directory to record the run in.
    written = args.out if args.out is not None else args.per_camera
    if written is not None:
        RunManifest(
            "eval",
            {"pred": args.pred, "gt": args.gt},
            args.config,
            written,
            ("eval",),
            args.seed,
            options={"iou": iou_threshold},
        ).write(Path(written).parent)


def _synth(args: argparse.Namespace) -> None:
    if args.spec is not None:
        spec = ScenarioSpec.from_json(args.spec)
        if args.seed_given:
            spec = spec.replace(seed=args.seed)
    else:
        spec = chain_scenario(
            seed=args.seed,
            camera_count=args.cameras,
            vehicle_count=args.vehicles,
            noise=NoiseSpec(
                sigma_box=args.sigma_box,
                miss_rate=args.miss_rate,
                fp_rate=args.fp_rate,
                sigma_emb=args.sigma_emb,
                flip_rate=args.flip_rate,
            ),
        )
    out = write_scenario(generate(spec), args.out)
    RunManifest(
        "synth", {"spec": args.spec}, None, args.out, ("synth",), spec.seed
    ).write(out)


def _add_jobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--jobs", type=int, default=1, help="Cameras to process in parallel."
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser of every subcommand."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level", default="INFO", help="Diagnostic log level (default INFO)."
    )
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed of every random draw (default 0).",
    )

    parser = argparse.ArgumentParser(
        prog="mtmct",
        description="Multi-target multi-camera vehicle tracking.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    handlers: Dict[str, Callable[[argparse.Namespace], None]] = {}

    sct = subparsers.add_parser(
        "sct", parents=[common], help="Single-camera tracking."
    )
    sct.add_argument("--in", dest="input", required=True, help="Input directory.")
    sct.add_argument("--config", help="Pipeline configuration JSON.")
    sct.add_argument("--out", required=True, help="Output directory.")
    _add_jobs(sct)
    handlers["sct"] = _sct

    zones = subparsers.add_parser("zones", parents=[common], help="Build zones.")
    zones.add_argument("--in", dest="input", required=True, help="Input directory.")
    zones.add_argument("--config", help="Pipeline configuration JSON.")
    zones.add_argument("--from-sct", help="Directory of an earlier sct run.")
    zones.add_argument("--out", required=True, help="Output directory.")
    _add_jobs(zones)
    handlers["zones"] = _zones

    clm = subparsers.add_parser(
        "clm-train", parents=[common], help="Learn a camera link model."
    )
    clm.add_argument("--gt", required=True, help="Ground-truth track CSV.")
    clm.add_argument("--config", help="Pipeline configuration JSON.")
    clm.add_argument("--out", required=True, help="Model JSON to write.")
    handlers["clm-train"] = _clm_train

    tracking = subparsers.add_parser(
        "track", parents=[common], help="Run the full pipeline."
    )
    tracking.add_argument(
        "--in", dest="input", required=True, help="Input directory."
    )
    tracking.add_argument("--config", help="Pipeline configuration JSON.")
    tracking.add_argument("--clm", help="Camera link model JSON.")
    tracking.add_argument("--from-sct", help="Directory of an earlier sct run.")
    tracking.add_argument("--out", required=True, help="Output directory.")
    _add_jobs(tracking)
    handlers["track"] = _track

    scoring = subparsers.add_parser(
        "eval", parents=[common], help="Score predicted tracks."
    )
    scoring.add_argument("--pred", required=True, help="Predicted track CSV.")
    scoring.add_argument("--gt", required=True, help="Ground-truth track CSV.")
    scoring.add_argument("--iou", type=float, help="IOU threshold of a match.")
    scoring.add_argument("--config", help="Configuration supplying eval_iou.")
    scoring.add_argument("--per-camera", help="CSV of per-camera scores to write.")
    scoring.add_argument("--out", help="Also write the report JSON here.")
    handlers["eval"] = _eval

    synth = subparsers.add_parser(
        "synth", parents=[common], help="Write a synthetic scenario."
    )
    synth.add_argument("--spec", help="Scenario spec JSON. Default: a camera chain.")
    synth.add_argument("--out", required=True, help="Output directory.")
    synth.add_argument("--cameras", type=int, default=4)
    synth.add_argument("--vehicles", type=int, default=20)
    synth.add_argument("--sigma-box", type=float, default=1.0)
    synth.add_argument("--miss-rate", type=float, default=0.02)
    synth.add_argument("--fp-rate", type=float, default=0.0)
    synth.add_argument("--sigma-emb", type=float, default=0.05)
    synth.add_argument("--flip-rate", type=float, default=0.05)
    handlers["synth"] = _synth

    parser.set_defaults(handlers=handlers)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit status."""
    args = build_parser().parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        set_up_logging(args.log_level)
        args.handlers[args.subcommand](args)
    except (MtmctError, OSError) as exc:
        message = " ".join(str(exc).split())
        sys.stderr.write(f"error: {type(exc).__name__}: {message}\n")
        return 1
    return 0


def main() -> None:
    """Console script entry point."""
    sys.exit(run())
