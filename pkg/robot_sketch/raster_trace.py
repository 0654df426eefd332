# Raster Tracing
"""
Grayscale line art to pixel paths: binarization, thinning, skeleton graph
construction and junction-aware path extraction.

Pixels are addressed as (x, y) = (column, row). "Lexicographic" order always
means ordering on (x, y).
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import ConfigError, PathError, RasterError, SkeletonError

logger = logging.getLogger(__name__)

Pixel = Tuple[int, int]

# (dx, dy) around a pixel, clockwise from north. Bit k of a neighbour code is RING_OFFSETS[k].
RING_OFFSETS: Tuple[Pixel, ...] = (
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
)

# Orthogonal steps first; used where the walk order must be deterministic.
EIGHT_NEIGHBOR_OFFSETS: Tuple[Pixel, ...] = (
    (0, -1),
    (1, 0),
    (0, 1),
    (-1, 0),
    (1, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
)

DEFAULT_MAX_TURN_DEG = 45.0
DEFAULT_MIN_PATH_PX = 4
DEFAULT_TANGENT_WINDOW = 5

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class GrayRaster:
    """8-bit grayscale image, 0 = black ink, 255 = white paper."""

    width: int
    height: int
    intensities: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise RasterError(f"raster must be at least 1x1, got {self.width}x{self.height}")
        data = np.asarray(self.intensities)
        if data.size != self.width * self.height:
            raise RasterError(
                f"expected {self.width * self.height} intensities for {self.width}x{self.height}, got {data.size}"
            )
        if data.min() < 0 or data.max() > 255:
            raise RasterError("intensities must lie in 0..255")
        object.__setattr__(self, "intensities", data.astype(np.uint8).reshape(self.height, self.width))

    @classmethod
    def from_array(cls, array) -> "GrayRaster":
        data = np.asarray(array)
        if data.ndim != 2:
            raise RasterError(f"expected a 2-D intensity array, got {data.ndim} dimensions")
        return cls(int(data.shape[1]), int(data.shape[0]), data)

    def inverted(self) -> "GrayRaster":
        return GrayRaster(self.width, self.height, 255 - self.intensities)


@dataclass(frozen=True, eq=False)
class BinaryRaster:
    """Per-pixel ink mask with the dimensions of its source raster."""

    width: int
    height: int
    foreground: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise RasterError(f"raster must be at least 1x1, got {self.width}x{self.height}")
        mask = np.asarray(self.foreground, dtype=bool)
        if mask.size != self.width * self.height:
            raise RasterError(f"expected {self.width * self.height} mask entries, got {mask.size}")
        object.__setattr__(self, "foreground", mask.reshape(self.height, self.width))

    @classmethod
    def from_array(cls, array) -> "BinaryRaster":
        mask = np.asarray(array, dtype=bool)
        if mask.ndim != 2:
            raise RasterError(f"expected a 2-D mask, got {mask.ndim} dimensions")
        return cls(int(mask.shape[1]), int(mask.shape[0]), mask)

    @classmethod
    def from_pixels(cls, width: int, height: int, pixels) -> "BinaryRaster":
        mask = np.zeros((height, width), dtype=bool)
        for x, y in pixels:
            mask[y, x] = True
        return cls(width, height, mask)

    def count(self) -> int:
        return int(self.foreground.sum())

    def pixels(self) -> List[Pixel]:
        ys, xs = np.nonzero(self.foreground)
        return sorted(zip(xs.tolist(), ys.tolist()))

    def same_pixels(self, other: "BinaryRaster") -> bool:
        return self.foreground.shape == other.foreground.shape and bool(
            np.array_equal(self.foreground, other.foreground)
        )


def count_components(raster: BinaryRaster) -> int:
    """Number of 8-connected foreground components."""
    _, count = ndimage.label(raster.foreground, structure=_EIGHT_CONNECTED)
    return int(count)


# ---------------------------------------------------------------------------
# PGM input/output
# ---------------------------------------------------------------------------

def read_pgm(source: Union[bytes, bytearray, str, Path]) -> GrayRaster:
    """Decode a binary (P5) PGM with maxval up to 255."""
    data = bytes(source) if isinstance(source, (bytes, bytearray)) else Path(source).read_bytes()

    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise RasterError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])

    if tokens[0] != b"P5":
        raise RasterError(f"unsupported PGM magic {tokens[0]!r}, expected b'P5'")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError:
        raise RasterError(f"malformed PGM header {b' '.join(tokens)!r}")
    if width < 1 or height < 1:
        raise RasterError(f"PGM dimensions must be positive, got {width}x{height}")
    if not 0 < maxval < 256:
        raise RasterError(f"unsupported PGM maxval {maxval}, expected 1..255")

    pos += 1  # single whitespace byte after maxval
    needed = width * height
    if len(data) - pos < needed:
        raise RasterError(f"truncated PGM raster: expected {needed} bytes, found {max(0, len(data) - pos)}")
    values = np.frombuffer(data, dtype=np.uint8, count=needed, offset=pos)
    if maxval != 255:
        values = (values.astype(np.uint32) * 255 + maxval // 2) // maxval
    return GrayRaster(width, height, values.reshape(height, width))


def write_pgm(raster: GrayRaster) -> bytes:
    header = f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii")
    return header + raster.intensities.astype(np.uint8).tobytes()


# ---------------------------------------------------------------------------
# Binarization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinarizePolicy:
    method: str = "otsu"
    threshold: int = 128

    def __post_init__(self):
        if self.method not in ("fixed", "otsu"):
            raise ConfigError(f"unknown binarize method '{self.method}', expected 'fixed' or 'otsu'")
        if not 0 <= int(self.threshold) <= 255:
            raise ConfigError(f"binarize threshold must be in 0..255, got {self.threshold}")

    @classmethod
    def fixed(cls, threshold: int) -> "BinarizePolicy":
        return cls("fixed", int(threshold))

    @classmethod
    def otsu(cls) -> "BinarizePolicy":
        return cls("otsu")

    @classmethod
    def parse(cls, text: str) -> "BinarizePolicy":
        """Accepts 'otsu', 'fixed:<t>' or a bare threshold."""
        value = str(text).strip().lower()
        if value == "otsu":
            return cls.otsu()
        if value.startswith("fixed:"):
            value = value.split(":", 1)[1]
        try:
            return cls.fixed(int(value))
        except ValueError:
            raise ConfigError(f"cannot parse binarize policy '{text}'")

    def describe(self) -> str:
        return "otsu" if self.method == "otsu" else f"fixed:{self.threshold}"


def otsu_threshold(intensities: np.ndarray) -> int:
    """
    Threshold maximizing inter-class variance, with class 0 = intensities <= t.
    Ties over a plateau resolve to its (floored) midpoint; a uniform image gives 127.
    """
    hist = np.bincount(np.asarray(intensities, dtype=np.uint8).ravel(), minlength=256).astype(np.int64)
    total = int(hist.sum())
    if total == 0:
        return 127
    levels = np.arange(256, dtype=np.int64)
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    w1 = total - w0
    spread = (s0 * total - int(s0[-1]) * w0).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        between = np.where((w0 > 0) & (w1 > 0), spread * spread / (w0.astype(np.float64) * w1), 0.0)
    best = float(between.max())
    if best <= 0.0:
        return 127
    plateau = np.flatnonzero(between == best)
    return int((plateau[0] + plateau[-1]) // 2)


def binarize(image: GrayRaster, policy: BinarizePolicy = BinarizePolicy()) -> BinaryRaster:
    """Foreground iff intensity <= threshold (dark ink)."""
    threshold = otsu_threshold(image.intensities) if policy.method == "otsu" else int(policy.threshold)
    logger.debug("binarize %dx%d with threshold %d (%s)", image.width, image.height, threshold, policy.method)
    return BinaryRaster(image.width, image.height, image.intensities <= threshold)


# ---------------------------------------------------------------------------
# Thinning
# ---------------------------------------------------------------------------

def _ring_component_count(bits: Sequence[int]) -> int:
    # ring cells touch their ring neighbours; orthogonal cells also touch across a corner cell
    adjacency = {k: {(k + 1) % 8, (k - 1) % 8} for k in range(8)}
    for k in (0, 2, 4, 6):
        adjacency[k].add((k + 2) % 8)
        adjacency[(k + 2) % 8].add(k)
    remaining = {k for k in range(8) if bits[k]}
    components = 0
    while remaining:
        components += 1
        stack = [remaining.pop()]
        while stack:
            k = stack.pop()
            for other in adjacency[k]:
                if other in remaining:
                    remaining.remove(other)
                    stack.append(other)
    return components


def _build_tables() -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    step1 = np.zeros(256, dtype=bool)
    step2 = np.zeros(256, dtype=bool)
    tidy = np.zeros(256, dtype=bool)
    popcount = np.zeros(256, dtype=np.int64)
    for code in range(256):
        b = [(code >> k) & 1 for k in range(8)]
        count = sum(b)
        popcount[code] = count
        transitions = sum(1 for k in range(8) if b[k] == 0 and b[(k + 1) % 8] == 1)
        core = 2 <= count <= 6 and transitions == 1
        # b[0]=P2 (N), b[2]=P4 (E), b[4]=P6 (S), b[6]=P8 (W)
        step1[code] = core and b[0] * b[2] * b[4] == 0 and b[2] * b[4] * b[6] == 0
        step2[code] = core and b[0] * b[2] * b[6] == 0 and b[0] * b[4] * b[6] == 0
        staircase = any(
            b[k] and b[(k + 2) % 8]
            and not (b[(k + 1) % 8] or b[(k + 4) % 8] or b[(k + 5) % 8] or b[(k + 6) % 8])
            for k in (0, 2, 4, 6)
        )
        in_block = any(b[k] and b[(k + 1) % 8] and b[(k + 2) % 8] for k in (0, 2, 4, 6))
        tidy[code] = (staircase or in_block) and _ring_component_count(b) == 1
    return step1, step2, tidy, popcount


_ZS_STEP1, _ZS_STEP2, _TIDY, _POPCOUNT = _build_tables()


def _neighbour_codes(padded: np.ndarray) -> np.ndarray:
    height, width = padded.shape[0] - 2, padded.shape[1] - 2
    codes = np.zeros((height, width), dtype=np.intp)
    for bit, (dx, dy) in enumerate(RING_OFFSETS):
        codes |= padded[1 + dy:1 + dy + height, 1 + dx:1 + dx + width].astype(np.intp) << bit
    return codes


def _pixel_code(padded: np.ndarray, row: int, col: int) -> int:
    code = 0
    for bit, (dx, dy) in enumerate(RING_OFFSETS):
        if padded[row + dy, col + dx]:
            code |= 1 << bit
    return code


def _delete_pass(padded: np.ndarray, table: np.ndarray) -> int:
    """
    Delete every pixel whose neighbour code is marked in `table`.

    Candidates with no candidate neighbour go in bulk. Candidates that touch
    another candidate are applied one by one in raster order and re-checked
    against the image as it stands, so neighbouring deletions never disconnect
    a component.
    """
    interior = padded[1:-1, 1:-1]
    candidates = interior & table[_neighbour_codes(padded)]
    if not candidates.any():
        return 0
    crowded = candidates & (_neighbour_codes(np.pad(candidates, 1)) != 0)
    lonely = candidates & ~crowded
    interior[lonely] = False
    removed = int(lonely.sum())
    for row, col in zip(*np.nonzero(crowded)):
        if table[_pixel_code(padded, row + 1, col + 1)]:
            padded[row + 1, col + 1] = False
            removed += 1
    return removed


def thin(raster: BinaryRaster) -> BinaryRaster:
    """
    Zhang-Suen thinning to a fixpoint, followed by removal of redundant
    staircase corners and reducible 2x2 blocks; both repeat until neither
    removes anything. The 8-connected component count is preserved.
    """
    padded = np.pad(raster.foreground, 1)
    passes = 0
    while True:
        while True:
            passes += 1
            removed = _delete_pass(padded, _ZS_STEP1)
            removed += _delete_pass(padded, _ZS_STEP2)
            if not removed:
                break
        if not _delete_pass(padded, _TIDY):
            break
    result = BinaryRaster(raster.width, raster.height, padded[1:-1, 1:-1].copy())
    logger.debug("thin: %d -> %d pixels in %d passes", raster.count(), result.count(), passes)
    return result


# ---------------------------------------------------------------------------
# Skeleton graph
# ---------------------------------------------------------------------------

class NodeKind(str, Enum):
    ENDPOINT = "endpoint"
    JUNCTION = "junction"
    ISOLATED = "isolated"


@dataclass(frozen=True)
class GraphNode:
    position: Pixel
    kind: NodeKind
    pixels: Tuple[Pixel, ...]


@dataclass(frozen=True)
class GraphEdge:
    """
    Pixel chain between two nodes. `chain` holds only the interior pixels
    (possibly none); `attach_a` / `attach_b` are the node pixels it touches.
    """

    node_a: int
    node_b: int
    chain: Tuple[Pixel, ...]
    attach_a: Pixel
    attach_b: Pixel

    def pixels(self) -> Tuple[Pixel, ...]:
        return (self.attach_a,) + self.chain + (self.attach_b,)


@dataclass(frozen=True)
class SkeletonGraph:
    width: int
    height: int
    nodes: Tuple[GraphNode, ...]
    edges: Tuple[GraphEdge, ...]
    cycles: Tuple[Tuple[Pixel, ...], ...]

    def degree(self, node_index: int) -> int:
        ends = 0
        for edge in self.edges:
            ends += (edge.node_a == node_index) + (edge.node_b == node_index)
        return ends

    def kind_counts(self) -> Dict[str, int]:
        counts = {kind.value: 0 for kind in NodeKind}
        for node in self.nodes:
            counts[node.kind.value] += 1
        return counts


def _rounded_centroid(pixels: Sequence[Pixel]) -> Pixel:
    n = len(pixels)
    return (
        int(math.floor(sum(p[0] for p in pixels) / n + 0.5)),
        int(math.floor(sum(p[1] for p in pixels) / n + 0.5)),
    )


def build_skeleton_graph(skeleton: BinaryRaster) -> SkeletonGraph:
    """
    Classify skeleton pixels by 8-neighbour count (0 isolated, 1 endpoint,
    2 chain, 3+ junction), merge touching junction pixels into one node and
    trace the pixel chains between nodes. Node-free loops become cycles.
    """
    fg = skeleton.foreground
    block = fg[:-1, :-1] & fg[1:, :-1] & fg[:-1, 1:] & fg[1:, 1:]
    if block.any():
        rows, cols = np.nonzero(block)
        first = min(zip(cols.tolist(), rows.tolist()))
        raise SkeletonError(f"skeleton is not thinned: solid 2x2 block at pixel {first}", first)

    degree_map = _POPCOUNT[_neighbour_codes(np.pad(fg, 1))]
    ys, xs = np.nonzero(fg)
    degree_of: Dict[Pixel, int] = {
        (x, y): d for x, y, d in zip(xs.tolist(), ys.tolist(), degree_map[ys, xs].tolist())
    }

    def neighbours(p: Pixel) -> List[Pixel]:
        x, y = p
        return [(x + dx, y + dy) for dx, dy in RING_OFFSETS if (x + dx, y + dy) in degree_of]

    labels, cluster_count = ndimage.label(fg & (degree_map >= 3), structure=_EIGHT_CONNECTED)
    clusters: Dict[int, List[Pixel]] = defaultdict(list)
    drafts: List[Tuple[Tuple[Pixel, ...], NodeKind]] = []
    for pixel, degree in degree_of.items():
        if degree == 0:
            drafts.append(((pixel,), NodeKind.ISOLATED))
        elif degree == 1:
            drafts.append(((pixel,), NodeKind.ENDPOINT))
        elif degree >= 3:
            clusters[int(labels[pixel[1], pixel[0]])].append(pixel)
    drafts.extend((tuple(sorted(members)), NodeKind.JUNCTION) for members in clusters.values())
    drafts.sort(key=lambda draft: min(draft[0]))

    nodes = tuple(GraphNode(_rounded_centroid(members), kind, members) for members, kind in drafts)
    node_of: Dict[Pixel, int] = {p: index for index, node in enumerate(nodes) for p in node.pixels}

    edges: List[GraphEdge] = []
    used: set = set()
    linked: set = set()
    for index, node in enumerate(nodes):
        for start in node.pixels:
            for first in neighbours(start):
                if first in node_of:
                    other = node_of[first]
                    key = frozenset((start, first))
                    if other != index and key not in linked:
                        linked.add(key)
                        edges.append(GraphEdge(index, other, (), start, first))
                    continue
                if first in used:
                    continue
                chain = [first]
                used.add(first)
                prev, cur = start, first
                while True:
                    step = next(p for p in neighbours(cur) if p != prev)
                    if step in node_of:
                        edges.append(GraphEdge(index, node_of[step], tuple(chain), start, step))
                        break
                    chain.append(step)
                    used.add(step)
                    prev, cur = cur, step

    cycles: List[Tuple[Pixel, ...]] = []
    for start in sorted(p for p, d in degree_of.items() if d == 2 and p not in used):
        if start in used:
            continue
        used.add(start)
        loop = [start]
        prev, cur = start, min(neighbours(start))
        while cur != start:
            if len(loop) > len(degree_of):
                raise SkeletonError(f"chain starting at pixel {start} does not close", start)
            loop.append(cur)
            used.add(cur)
            prev, cur = cur, next(p for p in neighbours(cur) if p != prev)
        cycles.append(tuple(loop))

    graph = SkeletonGraph(skeleton.width, skeleton.height, nodes, tuple(edges), tuple(cycles))
    logger.debug("skeleton graph: %s, %d edges, %d cycles", graph.kind_counts(), len(edges), len(cycles))
    return graph


# ---------------------------------------------------------------------------
# Path extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PixelPath:
    """8-connected pixel sequence; a single pixel marks an isolated dot."""

    points: Tuple[Pixel, ...]
    closed: bool = False

    def __post_init__(self):
        if not self.points:
            raise PathError("pixel path needs at least one point")
        for a, b in zip(self.points, self.points[1:]):
            if max(abs(a[0] - b[0]), abs(a[1] - b[1])) != 1:
                raise PathError(f"pixels {a} and {b} are not 8-connected neighbours")
        if self.closed:
            a, b = self.points[-1], self.points[0]
            if len(self.points) < 3 or max(abs(a[0] - b[0]), abs(a[1] - b[1])) != 1:
                raise PathError(f"closed path from {b} does not return to a neighbouring pixel")

    @property
    def is_dot(self) -> bool:
        return len(self.points) == 1

    def __len__(self) -> int:
        return len(self.points)


End = Tuple[int, int]  # (edge index, 0 at node_a / 1 at node_b)


def _outward_direction(seq: Sequence[Pixel], window: int) -> Tuple[int, int]:
    k = min(window, len(seq) - 1)
    return (seq[k][0] - seq[0][0], seq[k][1] - seq[0][1])


def turn_angle(out_a: Tuple[float, float], out_b: Tuple[float, float]) -> float:
    """Degrees turned when arriving along edge a and leaving along edge b (0 = straight on)."""
    ax, ay = -out_a[0], -out_a[1]
    bx, by = out_b
    return math.degrees(math.atan2(abs(ax * by - ay * bx), ax * bx + ay * by))


def _cluster_route(members: Sequence[Pixel], source: Pixel, target: Pixel) -> List[Pixel]:
    if source == target:
        return [source]
    inside = set(members)
    parent: Dict[Pixel, Optional[Pixel]] = {source: None}
    queue = deque([source])
    while queue:
        cur = queue.popleft()
        if cur == target:
            break
        for dx, dy in EIGHT_NEIGHBOR_OFFSETS:
            step = (cur[0] + dx, cur[1] + dy)
            if step in inside and step not in parent:
                parent[step] = cur
                queue.append(step)
    if target not in parent:
        raise SkeletonError(f"junction pixels {source} and {target} are not connected", source)
    route = [target]
    while route[-1] != source:
        route.append(parent[route[-1]])
    return route[::-1]


def pair_junction_ends(
    graph: SkeletonGraph,
    max_turn_deg: float = DEFAULT_MAX_TURN_DEG,
    tangent_window: int = DEFAULT_TANGENT_WINDOW,
) -> Dict[End, End]:
    """
    Greedy pairing of edge ends at every junction, smallest turn first. A pair
    is linked only while its turn stays within max_turn_deg; 0 disables linking.
    """
    ends_at: Dict[int, List[End]] = defaultdict(list)
    outward: Dict[End, Tuple[int, int]] = {}
    for index, edge in enumerate(graph.edges):
        seq = edge.pixels()
        ends_at[edge.node_a].append((index, 0))
        ends_at[edge.node_b].append((index, 1))
        outward[(index, 0)] = _outward_direction(seq, tangent_window)
        outward[(index, 1)] = _outward_direction(seq[::-1], tangent_window)

    link: Dict[End, End] = {}
    if max_turn_deg <= 0:
        return link
    for node_index in sorted(ends_at):
        if graph.nodes[node_index].kind is not NodeKind.JUNCTION:
            continue
        options = sorted(
            (turn_angle(outward[a], outward[b]), a, b) for a, b in combinations(sorted(ends_at[node_index]), 2)
        )
        for turn, a, b in options:
            if turn > max_turn_deg:
                break
            if a in link or b in link:
                continue
            link[a] = b
            link[b] = a
    return link


def extract_paths(
    graph: SkeletonGraph,
    max_turn_deg: float = DEFAULT_MAX_TURN_DEG,
    min_path_px: int = DEFAULT_MIN_PATH_PX,
    tangent_window: int = DEFAULT_TANGENT_WINDOW,
) -> List[PixelPath]:
    """
    Join skeleton edges into maximal paths. Linked edges continue through their
    junction cluster; chains of links that close on themselves become closed
    paths; node-free cycles start at their lexicographically smallest pixel.
    Paths with fewer than min_path_px pixels are dropped as noise.
    """
    link = pair_junction_ends(graph, max_turn_deg, tangent_window)
    edges = graph.edges
    visited = [False] * len(edges)

    def oriented(end: End) -> Tuple[Pixel, ...]:
        seq = edges[end[0]].pixels()
        return seq if end[1] == 0 else seq[::-1]

    def attach(end: End) -> Pixel:
        edge = edges[end[0]]
        return edge.attach_a if end[1] == 0 else edge.attach_b

    def node_pixels(end: End) -> Tuple[Pixel, ...]:
        edge = edges[end[0]]
        return graph.nodes[edge.node_a if end[1] == 0 else edge.node_b].pixels

    def walk(start: End) -> Tuple[List[Pixel], bool]:
        points = list(oriented(start))
        visited[start[0]] = True
        end = (start[0], 1 - start[1])
        while end in link:
            following = link[end]
            route = _cluster_route(node_pixels(end), attach(end), attach(following))
            if following == start:
                points.extend(route[1:-1])
                if points[-1] == points[0]:
                    points.pop()
                return points, True
            points.extend(route[1:])
            points.extend(oriented(following)[1:])
            visited[following[0]] = True
            end = (following[0], 1 - following[1])
        return points, False

    raw: List[Tuple[List[Pixel], bool]] = []
    for index in range(len(edges)):
        for side in (0, 1):
            if not visited[index] and (index, side) not in link:
                raw.append(walk((index, side)))
    for index in range(len(edges)):
        if not visited[index]:
            raw.append(walk((index, 0)))
    raw.extend((list(cycle), True) for cycle in graph.cycles)
    raw.extend((list(node.pixels), False) for node in graph.nodes if node.kind is NodeKind.ISOLATED)

    paths: List[PixelPath] = []
    dropped = 0
    for points, closed in raw:
        if len(points) < min_path_px:
            dropped += 1
            continue
        paths.append(PixelPath(tuple(points), closed and len(points) >= 3))
    logger.debug("extract_paths: %d paths kept, %d below %d px dropped", len(paths), dropped, min_path_px)
    return paths
