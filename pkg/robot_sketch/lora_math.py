# LoRA Math
"""
Low-rank adapters and weight merging: W' = W + sum_i w_i * B_i @ A_i.

Matrices are dense float64 numpy arrays. On disk a matrix is the JSON object
{"rows": n, "cols": m, "entries": [row-major values]}; an adapter is
{"B": <matrix>, "A": <matrix>} with optional "name" and "weight".
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import LoraShapeError

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-9


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    matrix = np.array(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise LoraShapeError(f"{name} must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise LoraShapeError(f"{name} has non-finite entries")
    return matrix


@dataclass(frozen=True, eq=False)
class LoraAdapter:
    """Low-rank factor pair; the update it contributes is B @ A."""

    B: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        B = as_matrix(self.B, "B")
        A = as_matrix(self.A, "A")
        if B.shape[1] != A.shape[0]:
            raise LoraShapeError(f"B is {B.shape} but A is {A.shape}: inner dimensions differ")
        rank = B.shape[1]
        if not 1 <= rank < min(B.shape[0], A.shape[1]):
            raise LoraShapeError(
                f"rank {rank} must satisfy 1 <= r < min({B.shape[0]}, {A.shape[1]})"
            )
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "A", A)

    @property
    def rank(self) -> int:
        return int(self.B.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.B.shape[0]), int(self.A.shape[1])

    def delta(self) -> np.ndarray:
        return self.B @ self.A


MergeSpec = Sequence[Tuple[LoraAdapter, float]]


def merge_lora(W, weighted: MergeSpec) -> np.ndarray:
    """Dense merged matrix; W itself is never modified."""
    base = as_matrix(W, "W")
    merged = base.copy()
    for index, (adapter, weight) in enumerate(weighted):
        if adapter.shape != base.shape:
            raise LoraShapeError(
                f"adapter {index} produces {adapter.shape[0]}x{adapter.shape[1]} updates "
                f"but W is {base.shape[0]}x{base.shape[1]}",
                adapter_index=index,
            )
        merged += float(weight) * adapter.delta()
    logger.debug("merged %d adapters into %dx%d matrix", len(weighted), *base.shape)
    return merged


def numerical_rank(matrix: np.ndarray, rel_tol: float = RANK_TOLERANCE) -> int:
    """Singular values above rel_tol times the largest."""
    singular = np.linalg.svd(np.asarray(matrix, dtype=np.float64), compute_uv=False)
    if singular.size == 0 or singular[0] == 0.0:
        return 0
    return int(np.count_nonzero(singular > rel_tol * singular[0]))


def sweep_style_merges(
    W,
    vector: Tuple[LoraAdapter, float],
    styles: Mapping[str, Tuple[LoraAdapter, float]],
) -> Dict[str, np.ndarray]:
    """Merge the vector adapter with each style adapter in turn, one matrix per style."""
    return {name: merge_lora(W, [vector, style]) for name, style in styles.items()}


def random_adapter(rng: np.random.Generator, rows: int, cols: int, rank: int, scale: float = 1.0) -> LoraAdapter:
    return LoraAdapter(scale * rng.standard_normal((rows, rank)), scale * rng.standard_normal((rank, cols)))


# ---------------------------------------------------------------------------
# JSON layout
# ---------------------------------------------------------------------------

def matrix_to_json(matrix: np.ndarray) -> dict:
    matrix = np.asarray(matrix, dtype=np.float64)
    return {
        "rows": int(matrix.shape[0]),
        "cols": int(matrix.shape[1]),
        "entries": [float(v) for v in matrix.ravel()],
    }


def matrix_from_json(obj: Mapping, name: str = "matrix") -> np.ndarray:
    try:
        rows, cols, entries = int(obj["rows"]), int(obj["cols"]), list(obj["entries"])
    except (KeyError, TypeError, ValueError) as e:
        raise LoraShapeError(f"{name}: expected rows, cols and entries ({e})")
    if rows < 1 or cols < 1 or len(entries) != rows * cols:
        raise LoraShapeError(f"{name}: {len(entries)} entries do not fill a {rows}x{cols} matrix")
    return as_matrix(np.array(entries, dtype=np.float64).reshape(rows, cols), name)


def adapter_to_json(adapter: LoraAdapter, name: Optional[str] = None, weight: Optional[float] = None) -> dict:
    payload: dict = {}
    if name is not None:
        payload["name"] = name
    if weight is not None:
        payload["weight"] = float(weight)
    payload["B"] = matrix_to_json(adapter.B)
    payload["A"] = matrix_to_json(adapter.A)
    return payload


def adapter_from_json(obj: Mapping, name: str = "adapter") -> LoraAdapter:
    try:
        return LoraAdapter(matrix_from_json(obj["B"], f"{name}.B"), matrix_from_json(obj["A"], f"{name}.A"))
    except KeyError as e:
        raise LoraShapeError(f"{name}: missing factor {e}")


@dataclass(frozen=True, eq=False)
class MergeRequest:
    """Base matrix plus named, weighted adapters, and optional style adapters to sweep."""

    base: np.ndarray
    adapters: Tuple[Tuple[str, LoraAdapter, float], ...]
    styles: Tuple[Tuple[str, LoraAdapter, float], ...] = ()


def _weighted_list(items: Sequence[Mapping], kind: str) -> Tuple[Tuple[str, LoraAdapter, float], ...]:
    parsed = []
    for index, item in enumerate(items):
        name = str(item.get("name", f"{kind}{index}"))
        parsed.append((name, adapter_from_json(item, f"{kind} {index}"), float(item.get("weight", 1.0))))
    return tuple(parsed)


def load_merge_request(source: Union[str, Path, Mapping]) -> MergeRequest:
    """
    {"base": <matrix>, "adapters": [<adapter>...], "styles": [<adapter>...]}.
    With styles present, the first adapter is the vector adapter merged with each style.
    """
    if isinstance(source, Mapping):
        obj = source
    else:
        try:
            obj = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise LoraShapeError(f"{source}: invalid JSON ({e})")
        except (OSError, UnicodeDecodeError) as e:
            raise LoraShapeError(f"{source}: cannot read merge request ({e})")
    if "base" not in obj:
        raise LoraShapeError("merge request needs a 'base' matrix")
    return MergeRequest(
        matrix_from_json(obj["base"], "base"),
        _weighted_list(obj.get("adapters", []), "adapter"),
        _weighted_list(obj.get("styles", []), "style"),
    )


def run_merge_request(request: MergeRequest) -> dict:
    """JSON payload for a merge request: one matrix, or one per style."""
    weighted = [(adapter, weight) for _, adapter, weight in request.adapters]
    if not request.styles:
        return matrix_to_json(merge_lora(request.base, weighted))
    if len(weighted) != 1:
        raise LoraShapeError(f"a style sweep needs exactly one vector adapter, got {len(weighted)}")
    merged = sweep_style_merges(
        request.base,
        weighted[0],
        {name: (adapter, weight) for name, adapter, weight in request.styles},
    )
    return {"merges": [{"style": name, "matrix": matrix_to_json(matrix)} for name, matrix in merged.items()]}
