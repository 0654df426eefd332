# Robot Sketch Module
"""
Line art to robot strokes: tracing, curve fitting, stroke planning and
motion-program emission, plus the low-rank merge and pair-wise fine-tuning
math behind the vector-friendly rendering.
"""

from .config import PipelineConfig, load_config
from .errors import InvariantViolation, SketchError, StageError
from .metrics import VectorFriendlinessReport, compare_runs, compute_metrics
from .pipeline import run_pipeline, run_plan, trace_raster
from .program_emit import MotionProgram, emit_program, emit_svg, parse_program, parse_svg, render_program
from .raster_trace import binarize, build_skeleton_graph, extract_paths, read_pgm, thin
from .stroke_fit import Stroke, fit_stroke, simplify, stroke_length
from .stroke_plan import StrokePlan, greedy_plan, plan_strokes, two_opt_improve

__all__ = [
    'PipelineConfig', 'load_config',
    'SketchError', 'InvariantViolation', 'StageError',
    'VectorFriendlinessReport', 'compare_runs', 'compute_metrics',
    'run_pipeline', 'run_plan', 'trace_raster',
    'MotionProgram', 'emit_program', 'emit_svg', 'parse_program', 'parse_svg', 'render_program',
    'binarize', 'build_skeleton_graph', 'extract_paths', 'read_pgm', 'thin',
    'Stroke', 'fit_stroke', 'simplify', 'stroke_length',
    'StrokePlan', 'greedy_plan', 'plan_strokes', 'two_opt_improve',
]
