# Program Emitter
"""
Serialization of strokes and plans: SVG path documents and the line-oriented
pen-motion program, plus parsers for both so outputs can be verified by
round trip.

Motion program grammar (UTF-8, LF line endings, '#' starts a comment):

    UNITS mm
    WORKSPACE <width> <height>
    PEN_UP_Z <z>
    PEN_DOWN_Z <z>
    DRAW_FEED <mm/s>
    TRAVEL_FEED <mm/s>
    BEGIN
    PENUP | PENDOWN | MOVE <x> <y> | DOT <x> <y>     one per line
    END
    # <trailer key> <value>                           after END

Numbers are printed with four decimals.
"""

from __future__ import annotations

import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import svgwrite

from .errors import ConfigError, ProgramError, SvgParseError
from .stroke_fit import CubicBezier, Point, Stroke
from .stroke_plan import StrokePlan

logger = logging.getLogger(__name__)

DEFAULT_FLATTEN_TOL = 0.2
DEFAULT_LIFT_SECONDS = 0.3
SVG_STROKE_WIDTH = 0.35

PENUP = "PENUP"
PENDOWN = "PENDOWN"
MOVE = "MOVE"
DOT = "DOT"
OPCODES = (PENUP, PENDOWN, MOVE, DOT)

HEADER_KEYS = ("UNITS", "WORKSPACE", "PEN_UP_Z", "PEN_DOWN_Z", "DRAW_FEED", "TRAVEL_FEED")


def fmt(value: float) -> str:
    """Four-decimal rendering with negative zero folded to zero."""
    text = f"{value:.4f}"
    return "0.0000" if text == "-0.0000" else text


def quantize(value: float) -> float:
    return float(fmt(value)) + 0.0


# ---------------------------------------------------------------------------
# Flattening
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlattenedStroke:
    points: np.ndarray
    closed: bool = False

    def __len__(self) -> int:
        return len(self.points)


def _control_within(ctrl: np.ndarray, tol: float) -> bool:
    a, b = ctrl[0], ctrl[3]
    ab = b - a
    denom = float(ab @ ab)
    for p in (ctrl[1], ctrl[2]):
        if denom == 0.0:
            dist = float(np.hypot(*(p - a)))
        else:
            t = min(1.0, max(0.0, float((p - a) @ ab) / denom))
            dist = float(np.hypot(*(p - (a + t * ab))))
        if dist > tol:
            return False
    return True


def _split_half(ctrl: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p0, p1, p2, p3 = ctrl
    p01, p12, p23 = (p0 + p1) / 2, (p1 + p2) / 2, (p2 + p3) / 2
    p012, p123 = (p01 + p12) / 2, (p12 + p23) / 2
    mid = (p012 + p123) / 2
    return np.array([p0, p01, p012, mid]), np.array([mid, p123, p23, p3])


def flatten(stroke: Stroke, tol: float = DEFAULT_FLATTEN_TOL, max_depth: int = 24) -> FlattenedStroke:
    """
    Adaptive de Casteljau subdivision. A piece becomes a chord once both inner
    control points lie within tol of it; the convex hull then bounds the curve
    within tol of the chord.
    """
    if not tol > 0:
        raise ConfigError(f"flatten tolerance must be positive, got {tol}")
    points: List[np.ndarray] = [np.array(stroke.start, dtype=np.float64)]
    for segment in stroke.segments:
        stack = [(segment.control_points(), 0)]
        while stack:
            ctrl, depth = stack.pop()
            if depth >= max_depth or _control_within(ctrl, tol):
                if not np.array_equal(ctrl[3], points[-1]):
                    points.append(ctrl[3])
                continue
            left, right = _split_half(ctrl)
            stack.append((right, depth + 1))
            stack.append((left, depth + 1))
        # joints are exact
        points[-1] = np.array(segment.p3, dtype=np.float64)
    return FlattenedStroke(np.array(points, dtype=np.float64).reshape(-1, 2), stroke.closed)


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def stroke_path_data(stroke: Stroke) -> str:
    parts = [f"M {fmt(stroke.start[0])} {fmt(stroke.start[1])}"]
    for seg in stroke.segments:
        parts.append(
            "C " + " ".join(f"{fmt(p[0])} {fmt(p[1])}" for p in (seg.p1, seg.p2, seg.p3))
        )
    if stroke.closed:
        parts.append("Z")
    return " ".join(parts)


def emit_svg(strokes: Sequence[Stroke], canvas: Tuple[float, float]) -> str:
    """One <path> per stroke, in order, with millimetre user units."""
    width, height = canvas
    drawing = svgwrite.Drawing(
        size=(f"{fmt(width)}mm", f"{fmt(height)}mm"),
        viewBox=f"0 0 {fmt(width)} {fmt(height)}",
        debug=False,
    )
    for stroke in strokes:
        drawing.add(
            drawing.path(
                d=stroke_path_data(stroke),
                fill="none",
                stroke="black",
                stroke_width=SVG_STROKE_WIDTH,
                stroke_linecap="round",
                stroke_linejoin="round",
            )
        )
    return '<?xml version="1.0" encoding="utf-8" ?>\n' + drawing.tostring() + "\n"


_PATH_TOKEN = re.compile(
    r"(?P<space>[\s,]+)"
    r"|(?P<command>[A-Za-z])"
    r"|(?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
)
_ARITY = {"M": 2, "L": 2, "C": 6, "Z": 0}
_UNSUPPORTED = set("AaQqSsTtHhVv")


def _tokenize_path(data: str) -> List[Tuple[str, object, int]]:
    tokens = []
    pos = 0
    while pos < len(data):
        match = _PATH_TOKEN.match(data, pos)
        if match is None:
            raise SvgParseError(f"malformed number at path-data offset {pos}: {data[pos:pos + 12]!r}", offset=pos)
        kind = match.lastgroup
        if kind == "command":
            letter = match.group()
            if letter in _UNSUPPORTED:
                raise SvgParseError(
                    f"unsupported path command '{letter}' at path-data offset {pos}", offset=pos, command=letter
                )
            if letter.upper() not in _ARITY:
                raise SvgParseError(
                    f"unknown path command '{letter}' at path-data offset {pos}", offset=pos, command=letter
                )
            tokens.append(("command", letter, pos))
        elif kind == "number":
            try:
                tokens.append(("number", float(match.group()), pos))
            except ValueError:
                raise SvgParseError(f"malformed number {match.group()!r} at path-data offset {pos}", offset=pos)
        pos = match.end()
    return tokens


def parse_path_data(data: str) -> List[Stroke]:
    """
    Strokes from one path's d attribute. Supports M m C c L l Z z; lines become
    cubics with control points at the chord thirds; each subpath is a stroke.
    """
    tokens = _tokenize_path(data)
    strokes: List[Stroke] = []
    segments: List[CubicBezier] = []
    current: Point = (0.0, 0.0)
    subpath_start: Point = (0.0, 0.0)
    closed = False

    def finish():
        nonlocal segments, closed
        if segments:
            strokes.append(Stroke(tuple(segments), closed))
        segments = []
        closed = False

    index = 0
    command: Optional[str] = None
    command_pos = 0
    while index < len(tokens):
        kind, value, pos = tokens[index]
        if kind == "command":
            command, command_pos = value, pos
            index += 1
            if command in "Zz":
                if current != subpath_start:
                    segments.append(CubicBezier.line(current, subpath_start))
                    current = segments[-1].p3
                closed = bool(segments)
                finish()
                current = subpath_start
                continue
            if index >= len(tokens) or tokens[index][0] != "number":
                raise SvgParseError(f"command '{command}' at path-data offset {pos} has no coordinates", offset=pos)
        elif command is None or command in "Zz":
            raise SvgParseError(f"number at path-data offset {pos} outside any path command", offset=pos)

        arity = _ARITY[command.upper()]
        values = tokens[index:index + arity]
        if len(values) < arity or any(t[0] != "number" for t in values):
            raise SvgParseError(
                f"command '{command}' at path-data offset {command_pos} expects {arity} numbers", offset=command_pos
            )
        nums = [float(t[1]) for t in values]
        index += arity
        relative = command.islower()
        ox, oy = current if relative else (0.0, 0.0)
        upper = command.upper()
        if upper == "M":
            finish()
            current = (nums[0] + ox, nums[1] + oy)
            subpath_start = current
            # further pairs after a moveto are implicit linetos
            command = "l" if relative else "L"
        elif upper == "L":
            target = (nums[0] + ox, nums[1] + oy)
            segments.append(CubicBezier.line(current, target))
            current = segments[-1].p3
        else:
            p1 = (nums[0] + ox, nums[1] + oy)
            p2 = (nums[2] + ox, nums[3] + oy)
            p3 = (nums[4] + ox, nums[5] + oy)
            segments.append(CubicBezier(current, p1, p2, p3))
            current = segments[-1].p3
    finish()
    return strokes


def parse_svg(text: str) -> List[Stroke]:
    """Strokes from every <path> element in document order."""
    try:
        root = ET.fromstring(text.encode("utf-8") if isinstance(text, str) else text)
    except ET.ParseError as e:
        raise SvgParseError(f"malformed SVG document: {e}")
    strokes: List[Stroke] = []
    paths = [node for node in root.iter() if node.tag.rsplit("}", 1)[-1] == "path"]
    for number, element in enumerate(paths):
        try:
            strokes.extend(parse_path_data(element.get("d", "")))
        except SvgParseError as e:
            raise SvgParseError(f"path {number}: {e}", offset=e.offset, command=e.command) from e
    return strokes


def svg_canvas_size(text: str) -> Optional[Tuple[float, float]]:
    """Width and height from the root viewBox, if present."""
    try:
        root = ET.fromstring(text.encode("utf-8") if isinstance(text, str) else text)
    except ET.ParseError as e:
        raise SvgParseError(f"malformed SVG document: {e}")
    box = root.get("viewBox")
    if not box:
        return None
    try:
        values = [float(v) for v in re.split(r"[\s,]+", box.strip())]
    except ValueError:
        raise SvgParseError(f"malformed viewBox {box!r}")
    if len(values) != 4:
        raise SvgParseError(f"malformed viewBox {box!r}")
    return values[2], values[3]


# ---------------------------------------------------------------------------
# Motion program
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProgramHeader:
    units: str = "mm"
    workspace: Tuple[float, float] = (300.0, 300.0)
    pen_up_z: float = 5.0
    pen_down_z: float = 0.0
    draw_feed: float = 50.0
    travel_feed: float = 150.0

    def __post_init__(self):
        if self.units != "mm":
            raise ProgramError(f"unsupported units '{self.units}', expected 'mm'")
        if self.draw_feed <= 0 or self.travel_feed <= 0:
            raise ProgramError("feeds must be positive")
        if self.workspace[0] <= 0 or self.workspace[1] <= 0:
            raise ProgramError(f"workspace must be positive, got {self.workspace}")

    def quantized(self) -> "ProgramHeader":
        return ProgramHeader(
            self.units,
            (quantize(self.workspace[0]), quantize(self.workspace[1])),
            quantize(self.pen_up_z),
            quantize(self.pen_down_z),
            quantize(self.draw_feed),
            quantize(self.travel_feed),
        )

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.workspace[0] and 0.0 <= y <= self.workspace[1]


@dataclass(frozen=True)
class Instruction:
    op: str
    x: Optional[float] = None
    y: Optional[float] = None

    def render(self) -> str:
        if self.op in (MOVE, DOT):
            return f"{self.op} {fmt(self.x)} {fmt(self.y)}"
        return self.op


@dataclass(frozen=True)
class MotionProgram:
    header: ProgramHeader
    instructions: Tuple[Instruction, ...]
    trailer: Tuple[Tuple[str, float], ...] = field(default_factory=tuple)

    def trailer_value(self, key: str) -> Optional[float]:
        return dict(self.trailer).get(key)


def pen_lift_count(plan: StrokePlan) -> int:
    """Lifts for a plan: one per item plus the final one; none for an empty plan."""
    return len(plan.items) + 1 if plan.items else 0


def estimated_motion_seconds(plan: StrokePlan, header: ProgramHeader) -> float:
    return plan.total_ink / header.draw_feed + plan.total_travel / header.travel_feed


def emit_program(
    plan: StrokePlan,
    strokes: Sequence[Stroke],
    header: ProgramHeader,
    tol: float = DEFAULT_FLATTEN_TOL,
    lift_seconds: float = DEFAULT_LIFT_SECONDS,
) -> MotionProgram:
    """
    For each planned item: PENUP, MOVE to its entry point, PENDOWN, one MOVE per
    flattened point; a dot is PENUP, MOVE, DOT. A final PENUP closes the program.
    """
    header = header.quantized()
    instructions: List[Instruction] = []
    for item in plan.items:
        if not 0 <= item.index < len(strokes):
            raise ProgramError(f"plan refers to stroke {item.index}, but only {len(strokes)} strokes exist")
        stroke = strokes[item.index]
        pts = flatten(stroke, tol).points
        if item.reversed:
            pts = pts[::-1]
        coords: List[Tuple[float, float]] = []
        for x, y in pts.tolist():
            q = (quantize(x), quantize(y))
            if not header.contains(*q):
                raise ProgramError(
                    f"stroke {item.index} point ({fmt(x)}, {fmt(y)}) lies outside workspace "
                    f"{fmt(header.workspace[0])} x {fmt(header.workspace[1])}"
                )
            if not coords or coords[-1] != q:
                coords.append(q)
        instructions.append(Instruction(PENUP))
        instructions.append(Instruction(MOVE, *coords[0]))
        if stroke.is_dot:
            instructions.append(Instruction(DOT, *coords[0]))
            continue
        instructions.append(Instruction(PENDOWN))
        instructions.extend(Instruction(MOVE, x, y) for x, y in coords[1:])
    instructions.append(Instruction(PENUP))

    motion = estimated_motion_seconds(plan, header)
    trailer = (
        ("estimated_motion_seconds", quantize(motion)),
        ("estimated_draw_seconds", quantize(motion + pen_lift_count(plan) * lift_seconds)),
    )
    return MotionProgram(header, tuple(instructions), trailer)


def render_program(program: MotionProgram) -> str:
    h = program.header
    lines = [
        "# robot_sketch motion program",
        f"UNITS {h.units}",
        f"WORKSPACE {fmt(h.workspace[0])} {fmt(h.workspace[1])}",
        f"PEN_UP_Z {fmt(h.pen_up_z)}",
        f"PEN_DOWN_Z {fmt(h.pen_down_z)}",
        f"DRAW_FEED {fmt(h.draw_feed)}",
        f"TRAVEL_FEED {fmt(h.travel_feed)}",
        "BEGIN",
    ]
    lines.extend(instruction.render() for instruction in program.instructions)
    lines.append("END")
    lines.extend(f"# {key} {fmt(value)}" for key, value in program.trailer)
    return "\n".join(lines) + "\n"


def _parse_number(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ProgramError(f"malformed number {text!r}", line)
    if not math.isfinite(value):
        raise ProgramError(f"non-finite number {text!r}", line)
    return value + 0.0


def parse_program(text: str) -> MotionProgram:
    """Parse and validate a motion program; errors carry the 1-based line number."""
    header: Dict[str, Tuple[List[str], int]] = {}
    instructions: List[Instruction] = []
    trailer: List[Tuple[str, float]] = []
    section = "header"
    pen_down = False
    positioned = False
    workspace: Tuple[float, float] = (0.0, 0.0)
    lines = text.split("\n")

    for number, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("#") or not stripped:
            if section == "trailer" and stripped.startswith("#"):
                parts = stripped[1:].split()
                if len(parts) == 2:
                    trailer.append((parts[0], _parse_number(parts[1], number)))
            continue
        content = stripped.split("#", 1)[0].split()
        word = content[0]

        if section == "header":
            if word == "BEGIN":
                missing = [key for key in HEADER_KEYS if key not in header]
                if missing:
                    raise ProgramError(f"header is missing {', '.join(missing)}", number)
                section = "body"
                values, at = header["WORKSPACE"]
                workspace = (_parse_number(values[0], at), _parse_number(values[1], at))
                continue
            if word not in HEADER_KEYS:
                raise ProgramError(f"unknown header key '{word}'", number)
            if word in header:
                raise ProgramError(f"duplicate header key '{word}'", number)
            expected = 2 if word == "WORKSPACE" else 1
            if len(content) - 1 != expected:
                raise ProgramError(f"header key '{word}' expects {expected} value(s)", number)
            header[word] = (content[1:], number)
            continue

        if section == "trailer":
            raise ProgramError(f"unexpected '{word}' after END", number)

        if word == "END":
            section = "trailer"
            continue
        if word not in OPCODES:
            raise ProgramError(f"unknown opcode '{word}'", number)
        arity = 2 if word in (MOVE, DOT) else 0
        if len(content) - 1 != arity:
            raise ProgramError(f"opcode '{word}' expects {arity} argument(s)", number)
        if not instructions and word != PENUP:
            raise ProgramError(f"program must begin with PENUP, found '{word}'", number)

        if word == PENUP:
            pen_down = False
            instructions.append(Instruction(PENUP))
            continue
        if word == PENDOWN:
            if pen_down:
                raise ProgramError("PENDOWN issued while the pen is already down", number)
            if not positioned:
                raise ProgramError("PENDOWN before any MOVE established a position", number)
            pen_down = True
            instructions.append(Instruction(PENDOWN))
            continue

        x = _parse_number(content[1], number)
        y = _parse_number(content[2], number)
        if not (0.0 <= x <= workspace[0] and 0.0 <= y <= workspace[1]):
            raise ProgramError(f"{word} {content[1]} {content[2]} lies outside the workspace", number)
        if word == DOT:
            if pen_down:
                raise ProgramError("DOT issued while the pen is down", number)
            if not positioned:
                raise ProgramError("DOT before any MOVE established a position", number)
        else:
            positioned = True
        instructions.append(Instruction(word, x, y))

    if section == "header":
        raise ProgramError("missing BEGIN", len(lines))
    if section == "body":
        raise ProgramError("missing END", len(lines))

    try:
        parsed_header = ProgramHeader(
            units=header["UNITS"][0][0],
            workspace=workspace,
            pen_up_z=_parse_number(header["PEN_UP_Z"][0][0], header["PEN_UP_Z"][1]),
            pen_down_z=_parse_number(header["PEN_DOWN_Z"][0][0], header["PEN_DOWN_Z"][1]),
            draw_feed=_parse_number(header["DRAW_FEED"][0][0], header["DRAW_FEED"][1]),
            travel_feed=_parse_number(header["TRAVEL_FEED"][0][0], header["TRAVEL_FEED"][1]),
        )
    except ProgramError as e:
        raise ProgramError(f"invalid header: {e}")
    return MotionProgram(parsed_header, tuple(instructions), tuple(trailer))


def program_ink_length(program: MotionProgram) -> float:
    """Sum of pen-down move lengths."""
    total = 0.0
    pen_down = False
    last: Optional[Tuple[float, float]] = None
    for instruction in program.instructions:
        if instruction.op == PENUP:
            pen_down = False
        elif instruction.op == PENDOWN:
            pen_down = True
        elif instruction.op == MOVE:
            here = (instruction.x, instruction.y)
            if pen_down and last is not None:
                total += math.hypot(here[0] - last[0], here[1] - last[1])
            last = here
    return total


def program_estimated_draw_seconds(program: MotionProgram) -> Optional[float]:
    return program.trailer_value("estimated_draw_seconds")
