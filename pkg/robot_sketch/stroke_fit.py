# Stroke Fitting
"""
Pixel paths to resolution-independent strokes: mapping into millimetre
workspace coordinates, Ramer-Douglas-Peucker simplification and least-squares
cubic Bezier fitting with corner splitting.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import PathError
from .raster_trace import PixelPath

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

DEFAULT_MAX_ERR = 0.35
DEFAULT_CORNER_DEG = 100.0
NEWTON_ROUNDS = 4
LENGTH_TOLERANCE = 1e-6


def _point(value) -> Point:
    return (float(value[0]) + 0.0, float(value[1]) + 0.0)


@dataclass(frozen=True)
class CubicBezier:
    p0: Point
    p1: Point
    p2: Point
    p3: Point

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3"):
            value = _point(getattr(self, name))
            if not (math.isfinite(value[0]) and math.isfinite(value[1])):
                raise PathError(f"control point {name} is not finite: {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, points: np.ndarray) -> "CubicBezier":
        return cls(*(tuple(row) for row in np.asarray(points, dtype=np.float64)))

    @classmethod
    def line(cls, start: Point, end: Point) -> "CubicBezier":
        """Exact straight segment with control points at the chord thirds."""
        a = np.asarray(start, dtype=np.float64)
        d = np.asarray(end, dtype=np.float64) - a
        return cls(start, tuple(a + d / 3.0), tuple(a + 2.0 * d / 3.0), end)

    def control_points(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2, self.p3], dtype=np.float64)

    def evaluate(self, t) -> np.ndarray:
        """Points at parameters t (scalar or array), shape (..., 2)."""
        return _bezier_eval(self.control_points(), np.asarray(t, dtype=np.float64))

    def reversed(self) -> "CubicBezier":
        return CubicBezier(self.p3, self.p2, self.p1, self.p0)


@dataclass(frozen=True)
class Stroke:
    """G0-continuous chain of cubic segments, drawn with the pen down."""

    segments: Tuple[CubicBezier, ...]
    closed: bool = False

    def __post_init__(self):
        segments = tuple(self.segments)
        if not segments:
            raise PathError("a stroke needs at least one segment")
        for index, (a, b) in enumerate(zip(segments, segments[1:])):
            if a.p3 != b.p0:
                raise PathError(f"segments {index} and {index + 1} are not joined: {a.p3} != {b.p0}")
        if self.closed and segments[-1].p3 != segments[0].p0:
            raise PathError("closed stroke does not end where it starts")
        object.__setattr__(self, "segments", segments)

    @classmethod
    def dot(cls, point: Point) -> "Stroke":
        p = _point(point)
        return cls((CubicBezier(p, p, p, p),))

    @property
    def start(self) -> Point:
        return self.segments[0].p0

    @property
    def end(self) -> Point:
        return self.segments[-1].p3

    @property
    def is_dot(self) -> bool:
        only = self.segments[0]
        return len(self.segments) == 1 and only.p0 == only.p1 == only.p2 == only.p3

    def reversed(self) -> "Stroke":
        return reverse_stroke(self)


@dataclass(frozen=True, eq=False)
class Polyline:
    """
    Millimetre polyline. Closed polylines do not repeat their first point.
    A single point is allowed only as an isolated-dot marker.
    """

    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(pts) == 0:
            raise PathError("polyline needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise PathError("polyline coordinates must be finite")
        if len(pts) > 1 and np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise PathError("polyline has consecutive duplicate points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "closed", bool(self.closed) and len(pts) >= 3)

    @property
    def is_dot(self) -> bool:
        return len(self.points) == 1

    def __len__(self) -> int:
        return len(self.points)


def _bezier_eval(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = t[..., None]
    mt = 1.0 - t
    return (
        mt ** 3 * ctrl[0]
        + 3.0 * mt ** 2 * t * ctrl[1]
        + 3.0 * mt * t ** 2 * ctrl[2]
        + t ** 3 * ctrl[3]
    )


def _bezier_prime(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = t[..., None]
    mt = 1.0 - t
    return (
        3.0 * mt ** 2 * (ctrl[1] - ctrl[0])
        + 6.0 * mt * t * (ctrl[2] - ctrl[1])
        + 3.0 * t ** 2 * (ctrl[3] - ctrl[2])
    )


def _bezier_second(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = t[..., None]
    return 6.0 * (1.0 - t) * (ctrl[2] - 2.0 * ctrl[1] + ctrl[0]) + 6.0 * t * (ctrl[3] - 2.0 * ctrl[2] + ctrl[1])


def _dedupe(points: np.ndarray) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(points[1:] != points[:-1], axis=1)
    return points[keep]


def to_workspace(
    path: PixelPath,
    scale: float,
    origin: Point = (0.0, 0.0),
    flip_y: bool = False,
    image_height: Optional[int] = None,
) -> Polyline:
    """Affine map from pixel (x, y) to millimetres; flip_y maps y to origin_y + (height - 1 - y) * scale."""
    if not scale > 0:
        raise PathError(f"scale must be positive, got {scale}")
    pixels = np.asarray(path.points, dtype=np.float64)
    xs = origin[0] + pixels[:, 0] * scale
    if flip_y:
        if image_height is None:
            raise PathError("flip_y needs the image height")
        ys = origin[1] + (image_height - 1 - pixels[:, 1]) * scale
    else:
        ys = origin[1] + pixels[:, 1] * scale
    points = _dedupe(np.column_stack([xs, ys]) + 0.0)
    closed = path.closed
    if closed and len(points) > 1 and np.array_equal(points[0], points[-1]):
        points = points[:-1]
    if len(points) < 2 and not path.is_dot:
        raise PathError(f"path starting at pixel {path.points[0]} collapses to fewer than 2 distinct points")
    return Polyline(points, closed)


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points to the closed segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def _rdp_keep(points: np.ndarray, epsilon: float) -> np.ndarray:
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        dists = _segment_distances(points[lo + 1:hi], points[lo], points[hi])
        k = int(np.argmax(dists))
        if dists[k] > epsilon:
            mid = lo + 1 + k
            keep[mid] = True
            stack.append((mid, hi))
            stack.append((lo, mid))
    return keep


def simplify(line: Polyline, epsilon: float) -> Polyline:
    """
    Ramer-Douglas-Peucker. Closed polylines are cut at the point farthest from
    their first point, both halves simplified, and rejoined.
    """
    if epsilon < 0:
        raise PathError(f"epsilon must be >= 0, got {epsilon}")
    pts = line.points
    if line.is_dot or len(pts) <= 2:
        return line
    if not line.closed:
        return Polyline(pts[_rdp_keep(pts, epsilon)], False)

    far = int(np.argmax(np.linalg.norm(pts - pts[0], axis=1)))
    first = pts[:far + 1]
    second = np.vstack([pts[far:], pts[:1]])
    kept = np.vstack([first[_rdp_keep(first, epsilon)][:-1], second[_rdp_keep(second, epsilon)][:-1]])
    return Polyline(kept, True)


def _interior_angles(pts: np.ndarray) -> np.ndarray:
    """Angle in degrees at each interior vertex between its two neighbours (180 = straight)."""
    before = pts[:-2] - pts[1:-1]
    after = pts[2:] - pts[1:-1]
    cross = before[:, 0] * after[:, 1] - before[:, 1] * after[:, 0]
    dot = np.einsum("ij,ij->i", before, after)
    return np.degrees(np.arctan2(np.abs(cross), dot))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.hypot(v[0], v[1]))
    return v / norm if norm > 0 else v


def _chord_parameters(pts: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    u = np.concatenate([[0.0], np.cumsum(steps)])
    return u / u[-1]


def _generate_bezier(pts: np.ndarray, u: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    first, last = pts[0], pts[-1]
    mt = 1.0 - u
    a1 = (3.0 * mt ** 2 * u)[:, None] * left
    a2 = (3.0 * mt * u ** 2)[:, None] * right
    c00 = float(np.einsum("ij,ij->", a1, a1))
    c01 = float(np.einsum("ij,ij->", a1, a2))
    c11 = float(np.einsum("ij,ij->", a2, a2))
    base = _bezier_eval(np.array([first, first, last, last]), u)
    rest = pts - base
    x0 = float(np.einsum("ij,ij->", a1, rest))
    x1 = float(np.einsum("ij,ij->", a2, rest))

    det = c00 * c11 - c01 * c01
    alpha_l = 0.0 if det == 0 else (x0 * c11 - x1 * c01) / det
    alpha_r = 0.0 if det == 0 else (c00 * x1 - c01 * x0) / det

    chord = float(np.linalg.norm(last - first))
    epsilon = 1.0e-6 * chord
    if alpha_l < epsilon or alpha_r < epsilon:
        alpha_l = alpha_r = chord / 3.0
    return np.array([first, first + left * alpha_l, last + right * alpha_r, last])


def _newton_reparameterize(ctrl: np.ndarray, pts: np.ndarray, u: np.ndarray) -> np.ndarray:
    d = _bezier_eval(ctrl, u) - pts
    d1 = _bezier_prime(ctrl, u)
    d2 = _bezier_second(ctrl, u)
    numerator = np.einsum("ij,ij->i", d, d1)
    denominator = np.einsum("ij,ij->i", d1, d1) + np.einsum("ij,ij->i", d, d2)
    safe = np.where(denominator == 0.0, 1.0, denominator)
    step = np.where(denominator == 0.0, 0.0, numerator / safe)
    return np.clip(u - step, 0.0, 1.0)


def _max_error(ctrl: np.ndarray, pts: np.ndarray, u: np.ndarray) -> Tuple[float, int]:
    dists = np.linalg.norm(_bezier_eval(ctrl, u) - pts, axis=1)
    inner = dists[1:-1]
    if inner.size == 0:
        return float(dists.max()), len(pts) // 2
    k = int(np.argmax(inner)) + 1
    return float(dists.max()), k


def _fit_run(pts: np.ndarray, max_err: float) -> List[np.ndarray]:
    """Fit one corner-free run; returns control point arrays in order."""
    if len(pts) == 2:
        return [CubicBezier.line(tuple(pts[0]), tuple(pts[1])).control_points()]

    out: List[np.ndarray] = []
    left0 = _unit(pts[1] - pts[0])
    right0 = _unit(pts[-2] - pts[-1])
    stack = [(0, len(pts) - 1, left0, right0)]
    while stack:
        lo, hi, left, right = stack.pop()
        piece = pts[lo:hi + 1]
        if len(piece) == 2:
            ctrl = CubicBezier.line(tuple(piece[0]), tuple(piece[1])).control_points()
            out.append(ctrl)
            continue
        u = _chord_parameters(piece)
        ctrl = _generate_bezier(piece, u, left, right)
        error, split = _max_error(ctrl, piece, u)
        if error > max_err and error < 4.0 * max_err:
            for _ in range(NEWTON_ROUNDS):
                u = _newton_reparameterize(ctrl, piece, u)
                ctrl = _generate_bezier(piece, u, left, right)
                error, split = _max_error(ctrl, piece, u)
                if error <= max_err:
                    break
        if error <= max_err:
            out.append(ctrl)
            continue
        centre = _unit(piece[split - 1] - piece[split + 1])
        if not centre.any():
            centre = _unit(piece[split - 1] - piece[split])
        stack.append((lo + split, hi, -centre, right))
        stack.append((lo, lo + split, left, centre))
    return out


def _seam_index(pts: np.ndarray) -> int:
    """Vertex of a closed polyline with the sharpest turn."""
    ring = np.vstack([pts[-1:], pts, pts[:1]])
    return int(np.argmin(_interior_angles(ring)))


def fit_stroke(line: Polyline, max_err: float = DEFAULT_MAX_ERR, corner_deg: float = DEFAULT_CORNER_DEG) -> Stroke:
    """
    Least-squares cubic fitting: chord-length parameters, tangent-constrained
    control points, up to four Newton reparameterization rounds, split at the
    worst point when still out of tolerance. Vertices whose interior angle is
    below corner_deg become segment joints. Closed lines get their seam at the
    sharpest vertex.
    """
    if not max_err > 0:
        raise PathError(f"max_err must be positive, got {max_err}")
    if line.is_dot:
        return Stroke.dot(tuple(line.points[0]))
    pts = line.points
    if line.closed:
        seam = _seam_index(pts)
        pts = np.vstack([pts[seam:], pts[:seam], pts[seam:seam + 1]])

    cuts = [0]
    if len(pts) > 2:
        cuts.extend((np.flatnonzero(_interior_angles(pts) < corner_deg) + 1).tolist())
    cuts.append(len(pts) - 1)

    segments: List[CubicBezier] = []
    for lo, hi in zip(cuts, cuts[1:]):
        for ctrl in _fit_run(pts[lo:hi + 1], max_err):
            segments.append(CubicBezier.from_array(ctrl))
    return Stroke(tuple(segments), line.closed)


def _segment_lengths(ctrl: np.ndarray, tolerance: float = LENGTH_TOLERANCE, max_depth: int = 48) -> float:
    """Arc length of stacked cubics (k, 4, 2) by vectorized adaptive subdivision."""
    total = 0.0
    pending = ctrl
    for depth in range(max_depth + 1):
        if len(pending) == 0:
            break
        poly = np.linalg.norm(np.diff(pending, axis=1), axis=2).sum(axis=1)
        chord = np.linalg.norm(pending[:, 3] - pending[:, 0], axis=1)
        done = (poly - chord < tolerance) | (depth == max_depth)
        total += float(((poly[done] + chord[done]) / 2.0).sum())
        pending = pending[~done]
        if len(pending):
            p0, p1, p2, p3 = pending[:, 0], pending[:, 1], pending[:, 2], pending[:, 3]
            p01, p12, p23 = (p0 + p1) / 2, (p1 + p2) / 2, (p2 + p3) / 2
            p012, p123 = (p01 + p12) / 2, (p12 + p23) / 2
            mid = (p012 + p123) / 2
            left = np.stack([p0, p01, p012, mid], axis=1)
            right = np.stack([mid, p123, p23, p3], axis=1)
            pending = np.concatenate([left, right])
    return total


def segment_length(segment: CubicBezier) -> float:
    return _segment_lengths(segment.control_points()[None])


def stroke_length(stroke: Stroke) -> float:
    """Sum of segment arc lengths in mm."""
    return float(sum(segment_length(segment) for segment in stroke.segments))


def reverse_stroke(stroke: Stroke) -> Stroke:
    return Stroke(tuple(segment.reversed() for segment in reversed(stroke.segments)), stroke.closed)


def polylines_to_strokes(
    lines: Sequence[Polyline],
    rdp_epsilon: float,
    max_err: float = DEFAULT_MAX_ERR,
    corner_deg: float = DEFAULT_CORNER_DEG,
) -> List[Stroke]:
    """Simplify and fit each line, keeping input order."""
    strokes = [fit_stroke(simplify(line, rdp_epsilon), max_err, corner_deg) for line in lines]
    logger.debug(
        "fitted %d strokes with %d segments", len(strokes), sum(len(s.segments) for s in strokes)
    )
    return strokes
