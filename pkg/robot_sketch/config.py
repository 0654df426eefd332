# Configuration
"""
PipelineConfig and its layering: dataclass defaults, then SKETCH_* environment
variables (a .env file is loaded by the CLI), then a TOML file, then
command-line flags. Later layers win.
"""

from __future__ import annotations

import logging
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10: API-identical backport
    import tomli as tomllib
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from .errors import ConfigError
from .program_emit import DEFAULT_FLATTEN_TOL, DEFAULT_LIFT_SECONDS, ProgramHeader
from .raster_trace import DEFAULT_MAX_TURN_DEG, DEFAULT_MIN_PATH_PX, DEFAULT_TANGENT_WINDOW, BinarizePolicy
from .stroke_fit import DEFAULT_CORNER_DEG, DEFAULT_MAX_ERR
from .stroke_plan import DEFAULT_TWO_OPT_PASSES

logger = logging.getLogger(__name__)

ENV_PREFIX = "SKETCH_"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str = ""
    output_dir: str = "."
    binarize: str = "otsu"
    invert: bool = False
    thinning: bool = True
    max_turn_deg: float = DEFAULT_MAX_TURN_DEG
    min_path_px: int = DEFAULT_MIN_PATH_PX
    tangent_window: int = DEFAULT_TANGENT_WINDOW
    mm_per_pixel: float = 0.25
    origin_x: float = 0.0
    origin_y: float = 0.0
    flip_y: bool = False
    rdp_epsilon: float = 0.1
    max_err: float = DEFAULT_MAX_ERR
    corner_deg: float = DEFAULT_CORNER_DEG
    start_x: float = 0.0
    start_y: float = 0.0
    max_passes: int = DEFAULT_TWO_OPT_PASSES
    flatten_tol: float = DEFAULT_FLATTEN_TOL
    workspace_width: float = 0.0
    workspace_height: float = 0.0
    pen_up_z: float = 5.0
    pen_down_z: float = 0.0
    draw_feed: float = 50.0
    travel_feed: float = 150.0
    lift_seconds: float = DEFAULT_LIFT_SECONDS
    long_stroke_mm: float = 10.0
    seed: int = 0

    def __post_init__(self):
        positive = ("mm_per_pixel", "max_err", "corner_deg", "flatten_tol", "draw_feed", "travel_feed", "long_stroke_mm")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("rdp_epsilon", "max_turn_deg", "lift_seconds", "workspace_width", "workspace_height"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.min_path_px < 1 or self.tangent_window < 1 or self.max_passes < 0:
            raise ConfigError("min_path_px and tangent_window must be >= 1, max_passes >= 0")
        self.binarize_policy()

    @property
    def origin(self) -> Tuple[float, float]:
        return (self.origin_x, self.origin_y)

    @property
    def start(self) -> Tuple[float, float]:
        return (self.start_x, self.start_y)

    def binarize_policy(self) -> BinarizePolicy:
        return BinarizePolicy.parse(self.binarize)

    def workspace_for(self, width_px: int, height_px: int) -> Tuple[float, float]:
        """Configured workspace, or origin + image extent x scale when unset; must cover the image."""
        extent = (self.origin_x + width_px * self.mm_per_pixel, self.origin_y + height_px * self.mm_per_pixel)
        workspace = (self.workspace_width or extent[0], self.workspace_height or extent[1])
        if workspace[0] < extent[0] or workspace[1] < extent[1]:
            raise ConfigError(
                f"workspace {workspace[0]:g} x {workspace[1]:g} mm does not cover the "
                f"{extent[0]:g} x {extent[1]:g} mm image"
            )
        return workspace

    def header(self, workspace: Tuple[float, float]) -> ProgramHeader:
        return ProgramHeader(
            units="mm",
            workspace=workspace,
            pen_up_z=self.pen_up_z,
            pen_down_z=self.pen_down_z,
            draw_feed=self.draw_feed,
            travel_feed=self.travel_feed,
        )


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _coerce(name: str, value: Any) -> Any:
    default = _FIELDS[name].default
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {name}")


def _check_keys(values: Mapping[str, Any], source: str) -> None:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{source}: unknown setting(s) {', '.join(unknown)}")


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    values = {}
    for name in _FIELDS:
        raw = environ.get(ENV_PREFIX + name.upper())
        if raw is not None and raw != "":
            values[name] = _coerce(name, raw)
    return values


def toml_overrides(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")
    table = data.get("pipeline", data)
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: [pipeline] must be a table")
    _check_keys(table, str(path))
    return {name: _coerce(name, value) for name, value in table.items()}


def load_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> PipelineConfig:
    """
    Build a PipelineConfig from defaults, environment, an optional TOML file
    and explicit overrides (None values in overrides are ignored).
    """
    values: Dict[str, Any] = {}
    values.update(env_overrides(environ))
    if config_path:
        values.update(toml_overrides(config_path))
    if overrides:
        given = {k: v for k, v in overrides.items() if v is not None}
        _check_keys(given, "overrides")
        values.update({name: _coerce(name, value) for name, value in given.items()})
    cfg = replace(PipelineConfig(), **values)
    logger.debug("config: %s", cfg)
    return cfg
