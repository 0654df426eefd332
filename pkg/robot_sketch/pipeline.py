# Pipeline
"""
End-to-end runs: image -> strokes -> plan -> SVG + motion program + report,
and SVG -> plan -> motion program + report.

Each stage runs inside `stage()`, which times it with the performance monitor
and wraps failures in StageError carrying the stage name. Output files are
written through temporary files and renamed into place; on failure nothing
from the run is left behind.
"""

from __future__ import annotations

import io
import logging
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import PipelineConfig
from .errors import RasterError, StageError, SvgParseError
from .metrics import VectorFriendlinessReport, compute_metrics
from .performance_monitor import get_performance_monitor
from .program_emit import MotionProgram, emit_program, emit_svg, parse_svg, render_program, svg_canvas_size
from .raster_trace import (
    BinaryRaster,
    GrayRaster,
    PixelPath,
    SkeletonGraph,
    binarize,
    build_skeleton_graph,
    extract_paths,
    read_pgm,
    thin,
)
from .stroke_fit import Polyline, Stroke, polylines_to_strokes, to_workspace
from .stroke_plan import StrokePlan, plan_strokes

logger = logging.getLogger(__name__)


@contextmanager
def stage(run: str, name: str) -> Iterator[None]:
    try:
        with get_performance_monitor().timed(run, name):
            yield
    except StageError:
        raise
    except Exception as e:
        logger.debug("stage %s failed", name, exc_info=True)
        raise StageError(name, e) from e


def decode_image(data: bytes) -> GrayRaster:
    """PGM (P5) directly; any other format through Pillow, converted to 8-bit gray."""
    if data[:2] == b"P5":
        return read_pgm(data)
    try:
        with Image.open(io.BytesIO(data)) as image:
            gray = np.asarray(image.convert("L"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise RasterError(f"cannot decode image: {e}")
    return GrayRaster.from_array(gray)


@dataclass
class TraceResult:
    gray: GrayRaster
    binary: BinaryRaster
    skeleton: BinaryRaster
    graph: SkeletonGraph
    paths: List[PixelPath]
    polylines: List[Polyline]
    strokes: List[Stroke]
    plan: StrokePlan
    program: MotionProgram
    report: VectorFriendlinessReport
    workspace: Tuple[float, float]
    svg_text: str = ""
    program_text: str = ""


def trace_raster(gray: GrayRaster, cfg: PipelineConfig, run: str = "trace") -> TraceResult:
    """Every in-memory stage of a trace run; no files are touched."""
    if cfg.invert:
        gray = gray.inverted()
    with stage(run, "binarize"):
        binary = binarize(gray, cfg.binarize_policy())
    with stage(run, "thin"):
        skeleton = thin(binary) if cfg.thinning else binary
    with stage(run, "graph"):
        graph = build_skeleton_graph(skeleton)
    with stage(run, "paths"):
        paths = extract_paths(graph, cfg.max_turn_deg, cfg.min_path_px, cfg.tangent_window)
    with stage(run, "fit"):
        polylines = [to_workspace(p, cfg.mm_per_pixel, cfg.origin, cfg.flip_y, gray.height) for p in paths]
        strokes = polylines_to_strokes(polylines, cfg.rdp_epsilon, cfg.max_err, cfg.corner_deg)
    with stage(run, "plan"):
        workspace = cfg.workspace_for(gray.width, gray.height)
        plan = plan_strokes(strokes, cfg.start, cfg.max_passes)
    with stage(run, "emit"):
        header = cfg.header(workspace)
        program = emit_program(plan, strokes, header, cfg.flatten_tol, cfg.lift_seconds)
        ordered = [strokes[item.index].reversed() if item.reversed else strokes[item.index] for item in plan.items]
        svg_text = emit_svg(ordered, workspace)
        program_text = render_program(program)
    with stage(run, "metrics"):
        report = compute_metrics(plan, strokes, header, cfg.long_stroke_mm, cfg.lift_seconds)
    return TraceResult(
        gray, binary, skeleton, graph, paths, polylines, strokes, plan, program, report, workspace,
        svg_text, program_text,
    )


def write_outputs(outputs: Mapping[Path, str]) -> List[Path]:
    """
    Write every file through a temporary sibling and rename into place.
    If any write fails, temporaries and files already renamed are removed.
    """
    staged: List[Tuple[str, Path]] = []
    placed: List[Path] = []
    try:
        for path, text in outputs.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        for tmp, path in staged:
            os.replace(tmp, path)
            placed.append(path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        for path in placed:
            if path.exists():
                path.unlink()
        raise
    return placed


@dataclass
class RunOutputs:
    files: Dict[str, Path] = field(default_factory=dict)
    report: Optional[VectorFriendlinessReport] = None
    svg_text: str = ""
    program_text: str = ""


def _output_paths(cfg: PipelineConfig, stem: str, kinds: Sequence[str]) -> Dict[str, Path]:
    out = Path(cfg.output_dir)
    suffix = {"svg": ".svg", "program": ".program", "report": ".report.json"}
    return {kind: out / f"{stem}{suffix[kind]}" for kind in kinds}


def run_pipeline(cfg: PipelineConfig) -> RunOutputs:
    """Trace cfg.input_path and write <stem>.svg, <stem>.program and <stem>.report.json to cfg.output_dir."""
    monitor = get_performance_monitor()
    source = Path(cfg.input_path)
    with stage("trace", "decode"):
        if not source.is_file():
            raise RasterError(f"input image not found: {source}")
        gray = decode_image(source.read_bytes())
    result = trace_raster(gray, cfg)
    paths = _output_paths(cfg, source.stem, ("svg", "program", "report"))
    with stage("trace", "write"):
        write_outputs({
            paths["svg"]: result.svg_text,
            paths["program"]: result.program_text,
            paths["report"]: result.report.to_json(),
        })
    logger.info(
        "traced %s: %d strokes, %.1f mm ink, %.1f mm travel",
        source.name, result.report.stroke_count, result.report.total_ink, result.report.total_travel,
    )
    logger.debug("stage timings: %s", monitor.get_summary().get("trace", {}))
    return RunOutputs(paths, result.report, result.svg_text, result.program_text)


def run_plan(svg_path: Union[str, Path], cfg: PipelineConfig) -> RunOutputs:
    """Plan the strokes of an SVG document and write <stem>.program and <stem>.report.json."""
    source = Path(svg_path)
    with stage("plan", "decode"):
        if not source.is_file():
            raise RasterError(f"input SVG not found: {source}")
        try:
            text = source.read_bytes().decode("utf-8")
        except UnicodeDecodeError as e:
            raise SvgParseError(f"{source}: invalid UTF-8 at byte {e.start}", offset=e.start)
        strokes = parse_svg(text)
        canvas = svg_canvas_size(text) or (cfg.workspace_width, cfg.workspace_height)
    with stage("plan", "plan"):
        workspace = (cfg.workspace_width or canvas[0], cfg.workspace_height or canvas[1])
        plan = plan_strokes(strokes, cfg.start, cfg.max_passes)
    with stage("plan", "emit"):
        header = cfg.header(workspace)
        program = emit_program(plan, strokes, header, cfg.flatten_tol, cfg.lift_seconds)
        program_text = render_program(program)
    with stage("plan", "metrics"):
        report = compute_metrics(plan, strokes, header, cfg.long_stroke_mm, cfg.lift_seconds)
    paths = _output_paths(cfg, source.stem, ("program", "report"))
    with stage("plan", "write"):
        write_outputs({paths["program"]: program_text, paths["report"]: report.to_json()})
    logger.info("planned %s: %d strokes, %.1f mm travel", source.name, report.stroke_count, report.total_travel)
    return RunOutputs(paths, report, "", program_text)
