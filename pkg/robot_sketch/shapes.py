# Synthetic Shapes
"""
Programmatic line art for tests, benchmarks and demos. Every figure is a
GrayRaster with white paper (255) and black ink (0).

Crossings are drawn so that lines meet at a single pixel (diagonals cross on
the pixel grid), which keeps the skeleton free of 2x2 blocks.
"""

from typing import Dict, List, Tuple

import numpy as np

from .raster_trace import GrayRaster
from .stroke_fit import Polyline

PAPER = 255
INK = 0


def canvas(width: int, height: int) -> np.ndarray:
    return np.full((height, width), PAPER, dtype=np.uint8)


def draw_line(image: np.ndarray, start: Tuple[int, int], end: Tuple[int, int]) -> None:
    """One pixel per step along the major axis, so the line is 8-connected and 1 px thin."""
    (x0, y0), (x1, y1) = start, end
    steps = max(abs(x1 - x0), abs(y1 - y0)) + 1
    xs = np.rint(np.linspace(x0, x1, steps)).astype(int)
    ys = np.rint(np.linspace(y0, y1, steps)).astype(int)
    image[ys, xs] = INK


def draw_circle(image: np.ndarray, center: Tuple[int, int], radius: int) -> None:
    """Midpoint circle."""
    cx, cy = center
    x, y, err = radius, 0, 1 - radius
    while x >= y:
        for dx, dy in ((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)):
            image[cy + dy, cx + dx] = INK
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1


def draw_ring(image: np.ndarray, center: Tuple[int, int], radius: float, thickness: float) -> None:
    rows, cols = np.indices(image.shape)
    dist = np.hypot(cols - center[0], rows - center[1])
    image[np.abs(dist - radius) <= thickness / 2.0] = INK


def draw_bar(image: np.ndarray, top_left: Tuple[int, int], bottom_right: Tuple[int, int]) -> None:
    (x0, y0), (x1, y1) = top_left, bottom_right
    image[y0:y1 + 1, x0:x1 + 1] = INK


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def blank_page(width: int = 64, height: int = 64) -> GrayRaster:
    return GrayRaster.from_array(canvas(width, height))


def circle(radius: int = 20, margin: int = 8) -> GrayRaster:
    size = 2 * (radius + margin) + 1
    image = canvas(size, size)
    draw_circle(image, (radius + margin, radius + margin), radius)
    return GrayRaster.from_array(image)


def _centered(arm: int, margin: int) -> Tuple[np.ndarray, int]:
    size = 2 * (arm + margin) + 1
    return canvas(size, size), arm + margin


def plus(arm: int = 24, margin: int = 8) -> GrayRaster:
    image, c = _centered(arm, margin)
    draw_line(image, (c - arm, c), (c + arm, c))
    draw_line(image, (c, c - arm), (c, c + arm))
    return GrayRaster.from_array(image)


def cross(arm: int = 24, margin: int = 8) -> GrayRaster:
    """X: two diagonals through one centre pixel."""
    image, c = _centered(arm, margin)
    draw_line(image, (c - arm, c - arm), (c + arm, c + arm))
    draw_line(image, (c - arm, c + arm), (c + arm, c - arm))
    return GrayRaster.from_array(image)


def star(arm: int = 24, margin: int = 8) -> GrayRaster:
    """Six arms: the horizontal plus both diagonals."""
    image, c = _centered(arm, margin)
    draw_line(image, (c - arm, c), (c + arm, c))
    draw_line(image, (c - arm, c - arm), (c + arm, c + arm))
    draw_line(image, (c - arm, c + arm), (c + arm, c - arm))
    return GrayRaster.from_array(image)


def tee(arm: int = 24, margin: int = 8) -> GrayRaster:
    image, c = _centered(arm, margin)
    draw_line(image, (c - arm, c), (c + arm, c))
    draw_line(image, (c, c), (c, c + arm))
    return GrayRaster.from_array(image)


def grid(lines: int = 4, spacing: int = 16, margin: int = 10) -> GrayRaster:
    """lines x lines straight lines crossing at single pixels."""
    extent = (lines - 1) * spacing
    size = extent + 2 * margin + 1
    image = canvas(size, size)
    for k in range(lines):
        offset = margin + k * spacing
        draw_line(image, (margin, offset), (margin + extent, offset))
        draw_line(image, (offset, margin), (offset, margin + extent))
    return GrayRaster.from_array(image)


def junction_corpus(arm: int = 24) -> Dict[str, GrayRaster]:
    """Straight crossings only."""
    return {
        "cross": cross(arm),
        "plus": plus(arm),
        "grid": grid(),
        "star": star(arm),
    }


def line_art(size: int = 512, cell: int = 128, seed: int = 0) -> GrayRaster:
    """
    Portrait-sized sheet tiled with figures: thick rings and bars that thin
    down to curves, 1-px circles and straight crossings. Figures never touch.
    """
    rng = np.random.default_rng(seed)
    image = canvas(size, size)
    half = cell // 2
    for row in range(size // cell):
        for col in range(size // cell):
            cx, cy = col * cell + half, row * cell + half
            kind = int(rng.integers(6))
            arm = int(rng.integers(half // 2, half - 12))
            if kind == 0:
                draw_ring(image, (cx, cy), arm, 3.0)
            elif kind == 1:
                draw_bar(image, (cx - arm, cy - 1), (cx + arm, cy + 1))
            elif kind == 2:
                draw_circle(image, (cx, cy), arm)
            elif kind == 3:
                draw_line(image, (cx - arm, cy), (cx + arm, cy))
                draw_line(image, (cx, cy - arm), (cx, cy + arm))
            elif kind == 4:
                draw_line(image, (cx - arm, cy - arm), (cx + arm, cy + arm))
                draw_line(image, (cx - arm, cy + arm), (cx + arm, cy - arm))
            else:
                draw_line(image, (cx - arm, cy), (cx + arm, cy))
                draw_line(image, (cx, cy), (cx, cy + arm))
    return GrayRaster.from_array(image)


def shape_corpus(count: int = 50, seed: int = 0) -> List[GrayRaster]:
    """Mixed figures with varied sizes, cycling through every figure type."""
    rng = np.random.default_rng(seed)
    makers = (
        lambda: circle(int(rng.integers(8, 30))),
        lambda: plus(int(rng.integers(10, 30))),
        lambda: cross(int(rng.integers(10, 30))),
        lambda: star(int(rng.integers(10, 30))),
        lambda: tee(int(rng.integers(10, 30))),
        lambda: grid(int(rng.integers(2, 5)), int(rng.integers(10, 20))),
    )
    return [makers[k % len(makers)]() for k in range(count)]


def smooth_polyline(rng: np.random.Generator, spacing: float = 0.25, length: float = 40.0) -> Polyline:
    """Random smooth open curve in millimetres, sampled every `spacing` along a sum of sinusoids."""
    n = max(3, int(length / spacing))
    s = np.linspace(0.0, 1.0, n)
    amplitude = rng.uniform(1.0, 8.0, size=2)
    frequency = rng.uniform(0.3, 1.5, size=2)
    phase = rng.uniform(0.0, 2 * np.pi, size=2)
    xs = 10.0 + length * s
    ys = 30.0 + amplitude[0] * np.sin(2 * np.pi * frequency[0] * s + phase[0]) \
        + amplitude[1] * np.sin(2 * np.pi * frequency[1] * s + phase[1])
    return Polyline(np.column_stack([xs, ys]))
