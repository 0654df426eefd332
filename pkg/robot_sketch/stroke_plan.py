# Stroke Planning
"""
Ordering and orienting strokes to minimize pen-up travel on an open tour
that starts at a fixed pen position.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvariantViolation, PlanError
from .stroke_fit import Point, Stroke, stroke_length

logger = logging.getLogger(__name__)

DEFAULT_TWO_OPT_PASSES = 50
IMPROVEMENT_EPS = 1e-9
OPTIMAL_PLAN_LIMIT = 12
MULTI_START_STROKES = 6
MULTI_START_LIMIT = 50


@dataclass(frozen=True)
class PlanItem:
    index: int
    reversed: bool = False


@dataclass(frozen=True)
class StrokePlan:
    start: Point
    items: Tuple[PlanItem, ...]
    travel: Tuple[Tuple[Point, Point], ...]
    total_travel: float
    total_ink: float

    def order(self) -> List[int]:
        return [item.index for item in self.items]


class _Endpoints:
    """Start/end coordinates and lengths of a stroke list as arrays."""

    def __init__(self, strokes: Sequence[Stroke], lengths: Optional[Sequence[float]] = None):
        self.count = len(strokes)
        self.starts = np.array([s.start for s in strokes], dtype=np.float64).reshape(-1, 2)
        self.ends = np.array([s.end for s in strokes], dtype=np.float64).reshape(-1, 2)
        self.lengths = [stroke_length(s) for s in strokes] if lengths is None else list(lengths)

    def entry(self, item: PlanItem) -> Point:
        return tuple(self.ends[item.index]) if item.reversed else tuple(self.starts[item.index])

    def exit(self, item: PlanItem) -> Point:
        return tuple(self.starts[item.index]) if item.reversed else tuple(self.ends[item.index])


def _distance(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def _check_items(items: Sequence[PlanItem], count: int) -> None:
    for item in items:
        if not 0 <= item.index < count:
            raise PlanError(f"plan refers to stroke {item.index}, but only {count} strokes exist")


def _assemble(start: Point, items: Sequence[PlanItem], ends: _Endpoints) -> StrokePlan:
    _check_items(items, ends.count)
    travel = []
    total = 0.0
    pen = (float(start[0]), float(start[1]))
    for item in items:
        entry = ends.entry(item)
        travel.append((pen, entry))
        total += _distance(pen, entry)
        pen = ends.exit(item)
    ink = math.fsum(ends.lengths[item.index] for item in items)
    return StrokePlan((float(start[0]), float(start[1])), tuple(items), tuple(travel), total, ink)


def build_plan(strokes: Sequence[Stroke], start: Point, items: Sequence[PlanItem]) -> StrokePlan:
    return _assemble(start, items, _Endpoints(strokes))


def travel_cost(plan: StrokePlan, strokes: Sequence[Stroke]) -> float:
    """Pen-up distance recomputed from scratch."""
    _check_items(plan.items, len(strokes))
    ends = _Endpoints(strokes, lengths=[0.0] * len(strokes))
    total = 0.0
    pen = plan.start
    for item in plan.items:
        total += _distance(pen, ends.entry(item))
        pen = ends.exit(item)
    return total


def greedy_plan(
    strokes: Sequence[Stroke],
    start: Point = (0.0, 0.0),
    first: Optional[PlanItem] = None,
) -> StrokePlan:
    """
    Nearest-endpoint tour: from the current pen position pick the unvisited
    stroke with the closest endpoint and enter there. Ties go to the lower
    stroke index, then to forward orientation. `first` forces the opening item.
    """
    ends = _Endpoints(strokes)
    if first is not None:
        _check_items([first], ends.count)
    pen = np.array(start, dtype=np.float64)
    open_mask = np.ones(ends.count, dtype=bool)
    items: List[PlanItem] = []
    for _ in range(ends.count):
        if first is not None and not items:
            item = first
        else:
            d_start = np.where(open_mask, np.hypot(*(ends.starts - pen).T), np.inf)
            d_end = np.where(open_mask, np.hypot(*(ends.ends - pen).T), np.inf)
            index = int(np.argmin(np.minimum(d_start, d_end)))
            item = PlanItem(index, bool(d_end[index] < d_start[index]))
        items.append(item)
        open_mask[item.index] = False
        pen = np.array(ends.exit(item))
    plan = _assemble(start, items, ends)
    logger.debug("greedy plan: %d strokes, travel %.3f mm", len(items), plan.total_travel)
    return plan


def _reversal_deltas(prev: np.ndarray, entries: np.ndarray, exits: np.ndarray, i: int) -> np.ndarray:
    """Travel change of reversing positions i..j, for every j >= i."""
    n = len(entries)
    js = np.arange(i, n)
    before = prev if i == 0 else exits[i - 1]
    gain = np.hypot(*(exits[js] - before).T) - np.hypot(*(entries[i] - before))
    has_next = js + 1 < n
    following = entries[np.minimum(js + 1, n - 1)]
    tail_new = np.hypot(*(following - entries[i]).T)
    tail_old = np.hypot(*(following - exits[js]).T)
    return gain + np.where(has_next, tail_new - tail_old, 0.0)


def two_opt_improve(
    plan: StrokePlan,
    strokes: Sequence[Stroke],
    max_passes: int = DEFAULT_TWO_OPT_PASSES,
) -> StrokePlan:
    """
    First-improvement 2-opt on the open tour. A move reverses items i..j and
    flips each one's orientation (i == j flips a single stroke). Scan order is
    increasing i, then j; after a move the scan resumes at (i, j + 1).
    """
    ends = _Endpoints(strokes)
    items = list(plan.items)
    _check_items(items, ends.count)
    n = len(items)
    if n == 0:
        return plan
    start = np.array(plan.start, dtype=np.float64)
    entries = np.array([ends.entry(item) for item in items], dtype=np.float64)
    exits = np.array([ends.exit(item) for item in items], dtype=np.float64)
    expected = sorted(item.index for item in items)

    moves = 0
    for pass_number in range(max_passes):
        improved = False
        for i in range(n):
            j_from = i
            while j_from < n:
                deltas = _reversal_deltas(start, entries, exits, i)[j_from - i:]
                hits = np.flatnonzero(deltas < -IMPROVEMENT_EPS)
                if hits.size == 0:
                    break
                j = j_from + int(hits[0])
                segment = items[i:j + 1]
                items[i:j + 1] = [PlanItem(item.index, not item.reversed) for item in reversed(segment)]
                entries[i:j + 1], exits[i:j + 1] = exits[i:j + 1][::-1].copy(), entries[i:j + 1][::-1].copy()
                if sorted(item.index for item in items) != expected:
                    raise InvariantViolation(f"2-opt move ({i}, {j}) lost a stroke")
                moves += 1
                improved = True
                j_from = j + 1
        if not improved:
            break

    result = _assemble(plan.start, items, ends)
    logger.debug("2-opt: %d moves, travel %.3f -> %.3f mm", moves, plan.total_travel, result.total_travel)
    if result.total_travel > plan.total_travel:
        return plan
    return result


def optimal_plan(strokes: Sequence[Stroke], start: Point = (0.0, 0.0)) -> StrokePlan:
    """
    Exact minimum-travel plan by dynamic programming over (visited set, last
    stroke, orientation). Same optimum as enumerating all n! * 2^n plans.
    """
    ends = _Endpoints(strokes)
    n = ends.count
    if n > OPTIMAL_PLAN_LIMIT:
        raise PlanError(f"optimal_plan supports at most {OPTIMAL_PLAN_LIMIT} strokes, got {n}")
    if n == 0:
        return _assemble(start, [], ends)

    # orientation 0 = forward (enter at start), 1 = reversed
    entry = np.stack([ends.starts, ends.ends], axis=1)  # (n, 2, 2)
    exit_ = np.stack([ends.ends, ends.starts], axis=1)
    origin = np.array(start, dtype=np.float64)
    first_leg = np.hypot(*(entry - origin).transpose(2, 0, 1))  # (n, 2)
    # hop[k, o, m, p]: from exit of (k, o) to entry of (m, p)
    diff = entry[None, None, :, :, :] - exit_[:, :, None, None, :]
    hop = np.hypot(diff[..., 0], diff[..., 1])

    size = 1 << n
    cost = np.full((size, n, 2), np.inf)
    parent = np.full((size, n, 2, 2), -1, dtype=np.int64)
    for k in range(n):
        cost[1 << k, k] = first_leg[k]
    for mask in range(1, size):
        here = cost[mask]
        if not np.isfinite(here).any():
            continue
        for m in range(n):
            if mask & (1 << m):
                continue
            options = here[:, :, None] + hop[:, :, m, :]  # (k, o, p)
            flat = options.reshape(-1, 2)
            best = np.argmin(flat, axis=0)
            target = mask | (1 << m)
            for p in (0, 1):
                value = flat[best[p], p]
                if value < cost[target, m, p]:
                    cost[target, m, p] = value
                    parent[target, m, p] = divmod(int(best[p]), 2)

    full = size - 1
    last, orient = divmod(int(np.argmin(cost[full].reshape(-1))), 2)
    order: List[PlanItem] = []
    mask = full
    while last >= 0:
        order.append(PlanItem(last, bool(orient)))
        prev_last, prev_orient = parent[mask, last, orient]
        mask &= ~(1 << last)
        last, orient = int(prev_last), int(prev_orient)
    return _assemble(start, order[::-1], ends)


def _opening_items(strokes: Sequence[Stroke], start: Point, count: int) -> List[PlanItem]:
    """Both orientations of the `count` strokes whose nearer endpoint is closest to start."""
    ends = _Endpoints(strokes, lengths=[0.0] * len(strokes))
    pen = np.array(start, dtype=np.float64)
    near = np.minimum(np.hypot(*(ends.starts - pen).T), np.hypot(*(ends.ends - pen).T))
    nearest = np.argsort(near, kind="stable")[:count]
    return [PlanItem(int(index), flipped) for index in nearest for flipped in (False, True)]


def plan_strokes(
    strokes: Sequence[Stroke],
    start: Point = (0.0, 0.0),
    max_passes: int = DEFAULT_TWO_OPT_PASSES,
    opening_strokes: int = MULTI_START_STROKES,
) -> StrokePlan:
    """
    Greedy tour refined by 2-opt, restarted with each opening item drawn from
    the `opening_strokes` nearest strokes (both orientations). The plain greedy
    start goes first; a later start wins only with strictly less travel.
    Inputs above MULTI_START_LIMIT strokes use the plain start only.
    """
    best = two_opt_improve(greedy_plan(strokes, start), strokes, max_passes)
    if len(strokes) > MULTI_START_LIMIT:
        opening_strokes = 0
    for first in _opening_items(strokes, start, opening_strokes):
        candidate = two_opt_improve(greedy_plan(strokes, start, first), strokes, max_passes)
        if candidate.total_travel < best.total_travel - IMPROVEMENT_EPS:
            best = candidate
    logger.debug("planned %d strokes, travel %.3f mm", len(best.items), best.total_travel)
    return best
