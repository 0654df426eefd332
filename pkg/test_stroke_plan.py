import itertools
import math

import numpy as np
import pytest

from robot_sketch.errors import PlanError
from robot_sketch.stroke_fit import CubicBezier, Stroke, stroke_length
from robot_sketch.stroke_plan import (
    PlanItem,
    build_plan,
    greedy_plan,
    optimal_plan,
    plan_strokes,
    travel_cost,
    two_opt_improve,
)


def segment(a, b) -> Stroke:
    return Stroke((CubicBezier.line(a, b),))


def random_strokes(rng: np.random.Generator, n: int, extent: float = 100.0):
    strokes = []
    for _ in range(n):
        a = tuple(rng.uniform(0.0, extent, size=2))
        b = tuple(np.asarray(a) + rng.uniform(-15.0, 15.0, size=2))
        strokes.append(segment(a, b))
    return strokes


def brute_force_travel(strokes, start) -> float:
    best = math.inf
    n = len(strokes)
    for order in itertools.permutations(range(n)):
        for flips in itertools.product((False, True), repeat=n):
            items = [PlanItem(i, f) for i, f in zip(order, flips)]
            best = min(best, build_plan(strokes, start, items).total_travel)
    return best


def assert_permutation(plan, n):
    assert sorted(plan.order()) == list(range(n))


def test_empty_plan():
    plan = greedy_plan([], (3.0, 4.0))
    assert plan.items == ()
    assert plan.total_travel == 0.0
    assert plan.total_ink == 0.0
    assert travel_cost(plan, []) == 0.0
    assert two_opt_improve(plan, []) is plan


def test_single_stroke_plan():
    strokes = [segment((3.0, 4.0), (10.0, 4.0))]
    plan = greedy_plan(strokes, (0.0, 0.0))
    assert plan.items == (PlanItem(0, False),)
    assert plan.total_travel == pytest.approx(5.0)
    assert travel_cost(plan, strokes) == pytest.approx(5.0)
    assert plan.travel == (((0.0, 0.0), (3.0, 4.0)),)


def test_greedy_two_strokes():
    strokes = [segment((0.0, 0.0), (10.0, 0.0)), segment((11.0, 0.0), (21.0, 0.0))]
    plan = greedy_plan(strokes, (0.0, 0.0))
    assert plan.items == (PlanItem(0, False), PlanItem(1, False))
    assert plan.total_travel == pytest.approx(1.0)
    assert plan.total_travel == pytest.approx(brute_force_travel(strokes, (0.0, 0.0)))


def test_greedy_enters_at_nearer_end():
    strokes = [segment((10.0, 0.0), (1.0, 0.0))]
    plan = greedy_plan(strokes, (0.0, 0.0))
    assert plan.items == (PlanItem(0, True),)
    assert plan.total_travel == pytest.approx(1.0)


def test_greedy_ties_go_to_lower_index_then_forward():
    strokes = [segment((5.0, 0.0), (5.0, 9.0)), segment((-5.0, 0.0), (-5.0, -9.0))]
    plan = greedy_plan(strokes, (0.0, 0.0))
    assert plan.items[0] == PlanItem(0, False)

    # both ends at distance 3
    diagonal = [segment((3.0, 0.0), (0.0, 3.0))]
    assert greedy_plan(diagonal, (0.0, 0.0)).items == (PlanItem(0, False),)


def test_ink_is_orientation_independent():
    rng = np.random.default_rng(1)
    strokes = random_strokes(rng, 6)
    expected = math.fsum(stroke_length(s) for s in strokes)
    for plan in (greedy_plan(strokes), plan_strokes(strokes), optimal_plan(strokes)):
        assert plan.total_ink == pytest.approx(expected)


def test_two_opt_leaves_optimal_plan_alone():
    strokes = [segment((0.0, 0.0), (10.0, 0.0)), segment((11.0, 0.0), (21.0, 0.0))]
    plan = greedy_plan(strokes)
    improved = two_opt_improve(plan, strokes)
    assert improved.items == plan.items
    assert improved.total_travel == plan.total_travel


def test_two_opt_untangles_crossing_order():
    strokes = [segment((10.0 * k, 0.0), (10.0 * k + 1.0, 0.0)) for k in range(4)]
    bad = build_plan(strokes, (0.0, 0.0), [PlanItem(0), PlanItem(2), PlanItem(1), PlanItem(3)])
    assert bad.total_travel == pytest.approx(49.0)
    improved = two_opt_improve(bad, strokes)
    assert improved.total_travel < bad.total_travel
    assert improved.total_travel == pytest.approx(brute_force_travel(strokes, (0.0, 0.0)))
    assert improved.total_travel == pytest.approx(27.0)
    assert_permutation(improved, 4)


def test_two_opt_never_increases_travel():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(1, 10))
        strokes = random_strokes(rng, n)
        order = rng.permutation(n)
        flips = rng.random(n) < 0.5
        plan = build_plan(strokes, (0.0, 0.0), [PlanItem(int(i), bool(f)) for i, f in zip(order, flips)])
        improved = two_opt_improve(plan, strokes, max_passes=int(rng.integers(1, 5)))
        assert improved.total_travel <= plan.total_travel + 1e-12
        assert_permutation(improved, n)


def test_small_plans_usually_match_optimum():
    rng = np.random.default_rng(7)
    exact = 0
    trials = 200
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        strokes = random_strokes(rng, n)
        planned = plan_strokes(strokes)
        best = optimal_plan(strokes).total_travel
        assert planned.total_travel >= best - 1e-9
        assert planned.total_travel <= greedy_plan(strokes).total_travel + 1e-12
        exact += planned.total_travel <= best + 1e-9
    assert exact >= 0.9 * trials


def test_plans_up_to_eight_strokes_are_near_optimal():
    rng = np.random.default_rng(12)
    close = 0
    trials = 200
    for _ in range(trials):
        n = int(rng.integers(1, 9))
        strokes = random_strokes(rng, n)
        planned = plan_strokes(strokes, max_passes=50)
        best = optimal_plan(strokes).total_travel
        close += planned.total_travel <= 1.05 * best + 1e-9
    assert close >= 0.95 * trials


def test_optimal_plan_matches_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        strokes = random_strokes(rng, n)
        start = tuple(rng.uniform(0.0, 100.0, size=2))
        plan = optimal_plan(strokes, start)
        assert_permutation(plan, n)
        assert plan.total_travel == pytest.approx(brute_force_travel(strokes, start), abs=1e-9)


def test_optimal_plan_size_limit():
    strokes = [Stroke.dot((float(k), 0.0)) for k in range(13)]
    with pytest.raises(PlanError):
        optimal_plan(strokes)


def test_travel_cost_matches_bookkeeping():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(0, 12))
        strokes = random_strokes(rng, n)
        items = [PlanItem(int(i), bool(rng.random() < 0.5)) for i in rng.permutation(n)]
        plan = build_plan(strokes, tuple(rng.uniform(0.0, 50.0, size=2)), items)
        assert travel_cost(plan, strokes) == pytest.approx(plan.total_travel, abs=1e-9)
        expected = sum(math.dist(a, b) for a, b in plan.travel)
        assert plan.total_travel == pytest.approx(expected, abs=1e-9)


def test_travel_cost_rejects_unknown_stroke():
    strokes = [segment((0.0, 0.0), (1.0, 0.0))]
    plan = build_plan(strokes, (0.0, 0.0), [PlanItem(0)])
    with pytest.raises(PlanError):
        travel_cost(plan, [])
    with pytest.raises(PlanError):
        build_plan(strokes, (0.0, 0.0), [PlanItem(3)])


def test_dots_plan_like_zero_length_strokes():
    strokes = [Stroke.dot((5.0, 0.0)), Stroke.dot((1.0, 0.0))]
    plan = plan_strokes(strokes)
    assert plan.order() == [1, 0]
    assert plan.total_travel == pytest.approx(5.0)
    assert plan.total_ink == 0.0


def test_reversal_traces_the_same_curve():
    stroke = Stroke((
        CubicBezier((0.0, 0.0), (3.0, 8.0), (9.0, -4.0), (12.0, 2.0)),
        CubicBezier((12.0, 2.0), (14.0, 5.0), (18.0, 9.0), (20.0, 0.0)),
    ))
    back = stroke.reversed()
    assert (back.start, back.end) == (stroke.end, stroke.start)
    t = np.linspace(0.0, 1.0, 2001)
    forward = np.vstack([s.evaluate(t) for s in stroke.segments])
    backward = np.vstack([s.evaluate(t) for s in back.segments])[::-1]
    assert np.abs(forward - backward).max() < 1e-9


def test_forced_first_item_opens_the_greedy_tour():
    strokes = [segment((1.0, 0.0), (2.0, 0.0)), segment((50.0, 0.0), (40.0, 0.0))]
    plan = greedy_plan(strokes, (0.0, 0.0), first=PlanItem(1, True))
    assert plan.items == (PlanItem(1, True), PlanItem(0, True))
    assert plan.total_travel == pytest.approx(40.0 + 48.0)
    with pytest.raises(PlanError):
        greedy_plan(strokes, first=PlanItem(5, False))


def test_restarts_never_lose_to_a_single_greedy_start():
    rng = np.random.default_rng(21)
    for _ in range(60):
        strokes = random_strokes(rng, int(rng.integers(2, 10)))
        single = two_opt_improve(greedy_plan(strokes), strokes)
        planned = plan_strokes(strokes)
        assert planned.total_travel <= single.total_travel + 1e-12
        assert_permutation(planned, len(strokes))
        assert plan_strokes(strokes) == planned
    single_start = plan_strokes(strokes, opening_strokes=0)
    assert single_start == two_opt_improve(greedy_plan(strokes), strokes)
