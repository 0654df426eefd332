# app.py - command line entry point for the robot sketch toolchain

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from robot_sketch.config import load_config
from robot_sketch.diffusion_losses import AffineDenoiser, LossWeights, NoiseSchedule
from robot_sketch.errors import SketchError
from robot_sketch.fine_tune import (
    DEFAULT_STEP_SIZE,
    SchedulePhase,
    fine_tune,
    load_dataset,
    render_loss_csv,
    synthetic_pairs,
    theta_payload,
)
from robot_sketch.lora_math import load_merge_request, run_merge_request
from robot_sketch.metrics import compare_runs, load_report, render_comparison_json, render_comparison_text
from robot_sketch.pipeline import run_pipeline, run_plan, write_outputs

logger = logging.getLogger("robot_sketch.app")

# Flag name -> PipelineConfig field
PIPELINE_FLAGS = {
    "binarize": "binarize",
    "invert": "invert",
    "no_thinning": "thinning",
    "max_turn_deg": "max_turn_deg",
    "min_path_px": "min_path_px",
    "tangent_window": "tangent_window",
    "mm_per_pixel": "mm_per_pixel",
    "origin_x": "origin_x",
    "origin_y": "origin_y",
    "flip_y": "flip_y",
    "rdp_epsilon": "rdp_epsilon",
    "max_err": "max_err",
    "corner_deg": "corner_deg",
    "start_x": "start_x",
    "start_y": "start_y",
    "max_passes": "max_passes",
    "flatten_tol": "flatten_tol",
    "workspace_width": "workspace_width",
    "workspace_height": "workspace_height",
    "draw_feed": "draw_feed",
    "travel_feed": "travel_feed",
    "lift_seconds": "lift_seconds",
    "seed": "seed",
}


def configure_logging(verbose: bool, quiet: bool) -> None:
    level_name = os.getenv("SKETCH_LOG_LEVEL", "INFO").upper()
    if verbose:
        level_name = "DEBUG"
    elif quiet:
        level_name = "WARNING"
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _pipeline_overrides(args: argparse.Namespace, **extra) -> Dict[str, object]:
    overrides: Dict[str, object] = {}
    for flag, name in PIPELINE_FLAGS.items():
        value = getattr(args, flag, None)
        if flag == "no_thinning":
            value = False if value else None
        elif isinstance(value, bool) and not value:
            value = None
        overrides[name] = value
    overrides.update(extra)
    return overrides


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-o", "--output-dir", help="directory for output files (default: current directory)")
    parser.add_argument("--config", help="TOML file with pipeline settings")
    parser.add_argument("--binarize", help="'otsu', 'fixed:<t>' or a threshold 0-255")
    parser.add_argument("--invert", action="store_true", help="treat light lines on dark paper as ink")
    parser.add_argument("--no-thinning", action="store_true", help="input is already a 1-px skeleton")
    parser.add_argument("--max-turn-deg", type=float, help="largest turn continued through a junction (0 disables)")
    parser.add_argument("--min-path-px", type=int)
    parser.add_argument("--tangent-window", type=int)
    parser.add_argument("--mm-per-pixel", type=float)
    parser.add_argument("--origin-x", type=float)
    parser.add_argument("--origin-y", type=float)
    parser.add_argument("--flip-y", action="store_true")
    parser.add_argument("--rdp-epsilon", type=float)
    parser.add_argument("--max-err", type=float, help="curve fit tolerance in mm")
    parser.add_argument("--corner-deg", type=float)
    parser.add_argument("--start-x", type=float)
    parser.add_argument("--start-y", type=float)
    parser.add_argument("--max-passes", type=int, help="2-opt passes")
    parser.add_argument("--flatten-tol", type=float)
    parser.add_argument("--workspace-width", type=float)
    parser.add_argument("--workspace-height", type=float)
    parser.add_argument("--draw-feed", type=float)
    parser.add_argument("--travel-feed", type=float)
    parser.add_argument("--lift-seconds", type=float)
    parser.add_argument("--seed", type=int)


def cmd_trace(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, _pipeline_overrides(args, input_path=args.input, output_dir=args.output_dir))
    outputs = run_pipeline(cfg)
    report = outputs.report
    logger.info("✅ Traced %d strokes (%.1f mm ink, continuity %.2f)", report.stroke_count, report.total_ink, report.continuity_score)
    for path in outputs.files.values():
        logger.info("   wrote %s", path)
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, _pipeline_overrides(args, output_dir=args.output_dir))
    outputs = run_plan(args.input, cfg)
    logger.info("✅ Planned %d strokes, %.1f mm travel", outputs.report.stroke_count, outputs.report.total_travel)
    return 0


def cmd_merge_lora(args: argparse.Namespace) -> int:
    request = load_merge_request(args.input)
    payload = run_merge_request(request)
    output = Path(args.output) if args.output else Path(args.input).with_suffix(".merged.json")
    write_outputs({output: json.dumps(payload, indent=2) + "\n"})
    logger.info("✅ Merged %d adapter(s) into %s", len(request.adapters), output)
    return 0


def _phases(phase_iterations: int, augment: int) -> List[SchedulePhase]:
    return [
        SchedulePhase(1, phase_iterations, LossWeights(0.5, 0.5, 0.5, 0.5)),
        SchedulePhase(phase_iterations + 1, 2 * phase_iterations, LossWeights(0.5, 0.5, 0.8, 0.2), augment),
    ]


def cmd_train_toy(args: argparse.Namespace) -> int:
    if args.dataset:
        dataset = load_dataset(args.dataset)
        stem = Path(args.dataset).stem
    else:
        dataset = synthetic_pairs(args.synthetic_pairs, args.image_side, args.condition_dim, args.seed)
        stem = "synthetic"
    image_dim, condition_dim = dataset[0].image_dim, dataset[0].condition_dim
    den = AffineDenoiser.initial(image_dim, condition_dim, np.random.default_rng(args.seed))
    result = fine_tune(
        den,
        dataset,
        NoiseSchedule.linear(args.timesteps),
        _phases(args.phase_iterations, args.augment),
        step_size=args.step_size,
        seed=args.seed,
        batch_size=args.batch_size,
        detach_generation=args.detach_generation,
    )
    out = Path(args.output_dir or ".")
    write_outputs({
        out / f"{stem}.loss.csv": render_loss_csv(result.curve),
        out / f"{stem}.theta.json": json.dumps(theta_payload(result, image_dim, condition_dim), indent=2) + "\n",
    })
    logger.info(
        "✅ Trained %d iterations: loss %.4g -> %.4g",
        len(result.curve), result.curve[0].total, result.curve[-1].total,
    )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    rows = compare_runs(load_report(args.report_a), load_report(args.report_b))
    text = render_comparison_json(rows) if args.json else render_comparison_text(rows)
    if args.output:
        write_outputs({Path(args.output): text})
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robot-sketch", description="Line art to robot pen strokes")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    trace = sub.add_parser("trace", help="image -> SVG + motion program + report")
    trace.add_argument("input", help="PGM or any Pillow-readable image")
    _add_pipeline_flags(trace)
    trace.set_defaults(handler=cmd_trace)

    plan = sub.add_parser("plan", help="SVG -> motion program + report")
    plan.add_argument("input", help="SVG made of M/L/C/Z paths")
    _add_pipeline_flags(plan)
    plan.set_defaults(handler=cmd_plan)

    merge = sub.add_parser("merge-lora", help="merge adapters into a base matrix")
    merge.add_argument("input", help="merge request JSON")
    merge.add_argument("-o", "--output", help="merged matrix JSON")
    merge.set_defaults(handler=cmd_merge_lora)

    train = sub.add_parser("train-toy", help="fine-tune the affine toy denoiser")
    train.add_argument("dataset", nargs="?", help="dataset JSON (default: synthetic pairs)")
    train.add_argument("-o", "--output-dir")
    train.add_argument("--synthetic-pairs", type=int, default=5)
    train.add_argument("--image-side", type=int, default=8)
    train.add_argument("--condition-dim", type=int, default=16)
    train.add_argument("--timesteps", type=int, default=10)
    train.add_argument("--phase-iterations", type=int, default=500)
    train.add_argument("--augment", type=int, default=0, help="generated pairs added when the second phase starts")
    train.add_argument("--step-size", type=float, default=DEFAULT_STEP_SIZE)
    train.add_argument("--batch-size", type=int, default=1)
    train.add_argument("--detach-generation", action="store_true")
    train.add_argument("--seed", type=int, default=0)
    train.set_defaults(handler=cmd_train_toy)

    compare = sub.add_parser("compare", help="field-by-field comparison of two reports")
    compare.add_argument("report_a")
    compare.add_argument("report_b")
    compare.add_argument("--json", action="store_true")
    compare.add_argument("-o", "--output")
    compare.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except SketchError as e:
        logger.error("❌ %s", e)
        return e.exit_code
    except Exception as e:
        logger.exception("❌ Unexpected error: %s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
