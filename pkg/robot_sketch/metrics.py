# Metrics
"""
Vector-friendliness report for a planned drawing and comparison of two runs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

from .errors import ConfigError
from .program_emit import DEFAULT_LIFT_SECONDS, ProgramHeader, pen_lift_count
from .stroke_fit import Stroke, stroke_length
from .stroke_plan import StrokePlan

logger = logging.getLogger(__name__)

LONG_STROKE_MM = 10.0


@dataclass(frozen=True)
class VectorFriendlinessReport:
    stroke_count: int
    total_ink: float
    total_travel: float
    mean_segments_per_stroke: float
    mean_stroke_length: float
    continuity_score: float
    estimated_draw_seconds: float
    pen_lift_count: int = 0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "VectorFriendlinessReport":
        names = {f.name for f in fields(cls)}
        missing = names - set(data) - {"pen_lift_count"}
        if missing:
            raise ConfigError(f"report is missing {', '.join(sorted(missing))}")
        return cls(**{name: data[name] for name in names if name in data})


def load_report(source: Union[str, Path]) -> VectorFriendlinessReport:
    try:
        return VectorFriendlinessReport.from_dict(json.loads(Path(source).read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: invalid JSON ({e})")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"{source}: cannot read report ({e})")


def continuity_score(lengths: Sequence[float], threshold: float = LONG_STROKE_MM) -> float:
    """Share of ink carried by strokes at least `threshold` long; 1.0 when there is no ink."""
    ink = math.fsum(lengths)
    if ink <= 0.0:
        return 1.0
    return min(1.0, math.fsum(length for length in lengths if length >= threshold) / ink)


def estimate_draw_seconds(
    total_ink: float,
    total_travel: float,
    lifts: int,
    header: ProgramHeader,
    lift_seconds: float = DEFAULT_LIFT_SECONDS,
) -> float:
    return total_ink / header.draw_feed + total_travel / header.travel_feed + lifts * lift_seconds


def compute_metrics(
    plan: StrokePlan,
    strokes: Sequence[Stroke],
    header: ProgramHeader,
    long_stroke_mm: float = LONG_STROKE_MM,
    lift_seconds: float = DEFAULT_LIFT_SECONDS,
) -> VectorFriendlinessReport:
    lengths = [stroke_length(strokes[item.index]) for item in plan.items]
    count = len(lengths)
    lifts = pen_lift_count(plan)
    if count == 0:
        return VectorFriendlinessReport(0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0)
    segments = sum(len(strokes[item.index].segments) for item in plan.items)
    return VectorFriendlinessReport(
        stroke_count=count,
        total_ink=plan.total_ink,
        total_travel=plan.total_travel,
        mean_segments_per_stroke=segments / count,
        mean_stroke_length=math.fsum(lengths) / count,
        continuity_score=continuity_score(lengths, long_stroke_mm),
        estimated_draw_seconds=estimate_draw_seconds(plan.total_ink, plan.total_travel, lifts, header, lift_seconds),
        pen_lift_count=lifts,
    )


@dataclass(frozen=True)
class FieldDelta:
    field: str
    a: float
    b: float
    delta: float
    ratio: Optional[float]


def compare_runs(report_a: VectorFriendlinessReport, report_b: VectorFriendlinessReport) -> List[FieldDelta]:
    """Per field: delta = b - a and ratio = b / a (None when a is 0)."""
    rows = []
    for f in fields(VectorFriendlinessReport):
        a = getattr(report_a, f.name)
        b = getattr(report_b, f.name)
        rows.append(FieldDelta(f.name, a, b, b - a, None if a == 0 else b / a))
    return rows


def render_comparison_text(rows: Sequence[FieldDelta]) -> str:
    width = max(len(row.field) for row in rows)
    lines = [f"{'field'.ljust(width)}  {'a':>12}  {'b':>12}  {'delta':>12}  {'ratio':>8}"]
    for row in rows:
        ratio = "-" if row.ratio is None else f"{row.ratio:.4f}"
        lines.append(f"{row.field.ljust(width)}  {row.a:>12.4f}  {row.b:>12.4f}  {row.delta:>12.4f}  {ratio:>8}")
    return "\n".join(lines) + "\n"


def render_comparison_json(rows: Sequence[FieldDelta]) -> str:
    return json.dumps([asdict(row) for row in rows], indent=2) + "\n"
