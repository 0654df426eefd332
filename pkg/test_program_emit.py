import numpy as np
import pytest

from robot_sketch import shapes
from robot_sketch.errors import ConfigError, ProgramError, SvgParseError
from robot_sketch.program_emit import (
    DOT,
    MOVE,
    PENDOWN,
    PENUP,
    Instruction,
    ProgramHeader,
    emit_program,
    emit_svg,
    flatten,
    fmt,
    parse_path_data,
    parse_program,
    parse_svg,
    program_estimated_draw_seconds,
    program_ink_length,
    render_program,
    stroke_path_data,
    svg_canvas_size,
)
from robot_sketch.stroke_fit import CubicBezier, Polyline, Stroke, fit_stroke
from robot_sketch.stroke_plan import build_plan, PlanItem, greedy_plan, plan_strokes

HEADER = ProgramHeader(workspace=(100.0, 100.0))


def straight(a, b) -> Stroke:
    return Stroke((CubicBezier.line(a, b),))


def quarter_circle(r: float) -> Stroke:
    k = 0.5523 * r
    return Stroke((CubicBezier((r, 0.0), (r, k), (k, r), (0.0, r)),))


def flatten_deviation(stroke: Stroke, points: np.ndarray, samples: int = 10000) -> float:
    curve = np.vstack([s.evaluate(np.linspace(0.0, 1.0, samples)) for s in stroke.segments])
    a, b = points[:-1], points[1:]
    ab = b - a
    denom = np.where((ab ** 2).sum(axis=1) == 0.0, 1.0, (ab ** 2).sum(axis=1))
    t = np.clip(np.einsum("sij,ij->si", curve[:, None, :] - a[None], ab) / denom, 0.0, 1.0)
    nearest = a[None] + t[..., None] * ab[None]
    return float(np.linalg.norm(curve[:, None, :] - nearest, axis=2).min(axis=1).max())


def corpus_strokes(count: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    strokes = [fit_stroke(shapes.smooth_polyline(rng), max_err=0.3) for _ in range(count)]
    square = np.array([[10.0, 10.0], [20.0, 10.0], [20.0, 20.0], [10.0, 20.0]])
    strokes.append(fit_stroke(Polyline(square, closed=True)))
    strokes.append(Stroke.dot((5.0, 5.0)))
    return strokes


# ---------------------------------------------------------------------------
# flatten
# ---------------------------------------------------------------------------

def test_flatten_straight_cubic_gives_endpoints():
    flat = flatten(straight((0.0, 0.0), (30.0, 0.0)), 0.2)
    assert flat.points.tolist() == [[0.0, 0.0], [30.0, 0.0]]


def test_flatten_quarter_circle_within_tolerance():
    stroke = quarter_circle(50.0)
    flat = flatten(stroke, 0.1)
    assert len(flat) > 2
    assert flat.points[0].tolist() == [50.0, 0.0]
    assert flat.points[-1].tolist() == [0.0, 50.0]
    assert flatten_deviation(stroke, flat.points) <= 0.1


def test_flatten_huge_tolerance_gives_chord():
    assert len(flatten(quarter_circle(2.0), 1000.0)) == 2


def test_flatten_is_sound_on_random_strokes():
    rng = np.random.default_rng(6)
    for _ in range(20):
        ctrl = rng.uniform(0.0, 40.0, size=(4, 2))
        stroke = Stroke((CubicBezier.from_array(ctrl),))
        tol = float(rng.uniform(0.05, 1.0))
        assert flatten_deviation(stroke, flatten(stroke, tol).points, 2000) <= tol + 1e-9


def test_flatten_rejects_bad_tolerance():
    with pytest.raises(ConfigError):
        flatten(straight((0.0, 0.0), (1.0, 0.0)), 0.0)


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def test_svg_for_empty_list_has_no_paths():
    text = emit_svg([], (100.0, 50.0))
    assert "<path" not in text
    assert parse_svg(text) == []
    assert svg_canvas_size(text) == (100.0, 50.0)
    assert 'width="100.0000mm"' in text


def test_svg_path_data_for_straight_cubic():
    stroke = Stroke((CubicBezier((0.0, 0.0), (10.0, 0.0), (20.0, 0.0), (30.0, 0.0)),))
    expected = "M 0.0000 0.0000 C 10.0000 0.0000 20.0000 0.0000 30.0000 0.0000"
    assert stroke_path_data(stroke) == expected
    assert f'd="{expected}"' in emit_svg([stroke], (100.0, 100.0))


def test_svg_round_trip_on_corpus():
    strokes = corpus_strokes()
    parsed = parse_svg(emit_svg(strokes, (100.0, 100.0)))
    assert len(parsed) == len(strokes)
    for original, back in zip(strokes, parsed):
        assert back.closed == original.closed
        assert len(back.segments) == len(original.segments)
        for a, b in zip(original.segments, back.segments):
            assert np.abs(a.control_points() - b.control_points()).max() <= 1e-3


def test_parse_lines_become_exact_cubics():
    (stroke,) = parse_path_data("M 0 0 L 3 0")
    (segment,) = stroke.segments
    assert segment.p1 == (1.0, 0.0)
    assert segment.p2 == (2.0, 0.0)


def test_parse_relative_commands_and_subpaths():
    strokes = parse_path_data("m 1 1 l 2 0 c 1 0 1 1 1 2 z M 10 10 L 12 10")
    assert len(strokes) == 2
    first, second = strokes
    assert first.closed
    assert first.start == (1.0, 1.0)
    assert first.segments[1].p3 == (4.0, 3.0)
    assert first.end == (1.0, 1.0)
    assert second.start == (10.0, 10.0) and second.end == (12.0, 10.0)


def test_parse_rejects_arc_with_offset():
    with pytest.raises(SvgParseError) as excinfo:
        parse_path_data("M 0 0 A 1 1 0 0 0 5 5")
    assert excinfo.value.command == "A"
    assert excinfo.value.offset == 6
    assert "A" in str(excinfo.value)


def test_svg_errors_name_the_path_and_its_data_offset():
    svg = (
        '<svg xmlns="http://www.w3.org/2000/svg">'
        '<path d="M 0 0 L 5 5"/><path d="M 1 1 Q 2 2 3 3"/></svg>'
    )
    with pytest.raises(SvgParseError) as excinfo:
        parse_svg(svg)
    assert excinfo.value.offset == 6
    assert excinfo.value.command == "Q"
    assert str(excinfo.value).startswith("path 1: ")
    assert "path-data offset 6" in str(excinfo.value)


def test_parse_rejects_malformed_input():
    with pytest.raises(SvgParseError):
        parse_path_data("M 0 0 L 3 x")
    with pytest.raises(SvgParseError):
        parse_path_data("M 0 0 C 1 1 2 2")
    with pytest.raises(SvgParseError):
        parse_svg("<svg><path d='M 0 0'></svg")


# ---------------------------------------------------------------------------
# Motion program
# ---------------------------------------------------------------------------

def test_empty_plan_is_a_single_penup():
    program = emit_program(greedy_plan([]), [], HEADER)
    assert program.instructions == (Instruction(PENUP),)
    assert program.trailer_value("estimated_draw_seconds") == 0.0


def test_single_straight_stroke_program():
    strokes = [straight((0.0, 0.0), (30.0, 0.0))]
    program = emit_program(greedy_plan(strokes), strokes, HEADER, lift_seconds=0.3)
    assert [i.render() for i in program.instructions] == [
        "PENUP", "MOVE 0.0000 0.0000", "PENDOWN", "MOVE 30.0000 0.0000", "PENUP",
    ]
    assert program.trailer_value("estimated_motion_seconds") == pytest.approx(30.0 / 50.0)
    assert program.trailer_value("estimated_draw_seconds") == pytest.approx(0.6 + 2 * 0.3)


def test_rendered_program_layout():
    strokes = [straight((0.0, 0.0), (30.0, 0.0))]
    text = render_program(emit_program(greedy_plan(strokes), strokes, HEADER))
    lines = text.splitlines()
    assert lines[lines.index("BEGIN") - 6:lines.index("BEGIN")] == [
        "UNITS mm",
        "WORKSPACE 100.0000 100.0000",
        "PEN_UP_Z 5.0000",
        "PEN_DOWN_Z 0.0000",
        "DRAW_FEED 50.0000",
        "TRAVEL_FEED 150.0000",
    ]
    assert "END" in lines
    assert lines[-1].startswith("# estimated_draw_seconds")
    assert text.endswith("\n")


def test_dot_program():
    strokes = [Stroke.dot((5.0, 5.0))]
    program = emit_program(greedy_plan(strokes), strokes, HEADER)
    assert program.instructions == (
        Instruction(PENUP), Instruction(MOVE, 5.0, 5.0), Instruction(DOT, 5.0, 5.0), Instruction(PENUP),
    )


def test_reversed_item_runs_backwards():
    strokes = [straight((0.0, 0.0), (30.0, 0.0))]
    plan = build_plan(strokes, (40.0, 0.0), [PlanItem(0, True)])
    program = emit_program(plan, strokes, HEADER)
    moves = [(i.x, i.y) for i in program.instructions if i.op == MOVE]
    assert moves == [(30.0, 0.0), (0.0, 0.0)]


def test_program_round_trip_is_exact():
    strokes = corpus_strokes(seed=3)
    program = emit_program(plan_strokes(strokes), strokes, HEADER)
    text = render_program(program)
    parsed = parse_program(text)
    assert parsed == program
    assert render_program(parsed) == text


def test_out_of_workspace_names_stroke():
    strokes = [straight((10.0, 10.0), (20.0, 10.0)), straight((-1.0, 0.0), (5.0, 0.0))]
    with pytest.raises(ProgramError) as excinfo:
        emit_program(build_plan(strokes, (0.0, 0.0), [PlanItem(0), PlanItem(1)]), strokes, HEADER)
    assert "stroke 1" in str(excinfo.value)
    assert "-1.0000" in str(excinfo.value)


def program_text(*body: str) -> str:
    head = [
        "UNITS mm", "WORKSPACE 100 100", "PEN_UP_Z 5", "PEN_DOWN_Z 0",
        "DRAW_FEED 50", "TRAVEL_FEED 150", "BEGIN",
    ]
    return "\n".join(head + list(body) + ["END"]) + "\n"


def test_parse_rejects_double_pendown_at_its_line():
    text = program_text("PENUP", "MOVE 1 1", "PENDOWN", "PENDOWN", "PENUP")
    with pytest.raises(ProgramError) as excinfo:
        parse_program(text)
    assert excinfo.value.line == 11


def test_parse_rejects_unknown_opcode():
    with pytest.raises(ProgramError) as excinfo:
        parse_program(program_text("PENUP", "JUMP 1 1"))
    assert "JUMP" in str(excinfo.value)
    assert excinfo.value.line == 9


@pytest.mark.parametrize(
    "body",
    [
        ("MOVE 1 1", "PENUP"),
        ("PENUP", "PENDOWN"),
        ("PENUP", "MOVE 101 1"),
        ("PENUP", "MOVE 1 1", "PENDOWN", "DOT 1 1"),
        ("PENUP", "MOVE 1"),
    ],
)
def test_parse_rejects_invariant_violations(body):
    with pytest.raises(ProgramError):
        parse_program(program_text(*body))


def test_parse_rejects_missing_sections():
    with pytest.raises(ProgramError):
        parse_program("UNITS mm\nBEGIN\nPENUP\nEND\n")
    with pytest.raises(ProgramError):
        parse_program(program_text("PENUP").replace("END\n", ""))


def test_program_ink_matches_plan_ink():
    rng = np.random.default_rng(10)
    strokes = [fit_stroke(shapes.smooth_polyline(rng, length=60.0), max_err=0.2) for _ in range(5)]
    plan = plan_strokes(strokes)
    program = parse_program(render_program(emit_program(plan, strokes, HEADER, tol=0.2)))
    assert program_ink_length(program) == pytest.approx(plan.total_ink, rel=0.01)
    assert program_estimated_draw_seconds(program) is not None


def test_fmt_folds_negative_zero():
    assert fmt(-0.00001) == "0.0000"
    assert fmt(12.34567) == "12.3457"
