# Fine Tune
"""
Toy pair-wise fine-tuning loop.

Gradient descent on the total loss with one seeded Monte-Carlo draw per pair
per iteration. Loss weights follow a phase schedule; a phase may grow the
dataset with pairs generated by the current denoiser when it begins.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .diffusion_losses import (
    DEFAULT_CONDITION_DIM,
    AffineDenoiser,
    Draws,
    LossWeights,
    NoiseSchedule,
    TrainingPair,
    add_noise,
    loss_gradient,
    loss_terms,
)
from .errors import ConfigError, NoiseError, PromptError, TrainingDivergedError

logger = logging.getLogger(__name__)

DEFAULT_STEP_SIZE = 5e-3
DIVERGENCE_LIMIT = 1e12
SNAPSHOT_EVERY = 100
SMOOTHING_WINDOW = 50


@dataclass(frozen=True)
class SchedulePhase:
    """Iterations first..last (1-based, inclusive) trained with one set of weights."""

    first: int
    last: int
    weights: LossWeights
    augment_pairs: int = 0

    def __post_init__(self):
        if self.first < 1 or self.last < self.first:
            raise ConfigError(f"phase {self.first}..{self.last} is empty or starts before iteration 1")
        if self.augment_pairs < 0:
            raise ConfigError(f"augment_pairs must be >= 0, got {self.augment_pairs}")


def default_schedule(augment_pairs: int = 0) -> List[SchedulePhase]:
    """500 iterations at w_t = w_t' = 0.5, then 500 at 0.8 / 0.2; lambda1 = lambda2 = 0.5 throughout."""
    return [
        SchedulePhase(1, 500, LossWeights(0.5, 0.5, 0.5, 0.5)),
        SchedulePhase(501, 1000, LossWeights(0.5, 0.5, 0.8, 0.2), augment_pairs),
    ]


def _check_schedule(schedule: Sequence[SchedulePhase]) -> int:
    if not schedule:
        raise ConfigError("training schedule has no phases")
    expected = 1
    for phase in schedule:
        if phase.first != expected:
            raise ConfigError(f"schedule phase starts at {phase.first}, expected {expected}")
        expected = phase.last + 1
    return expected - 1


def weights_at(schedule: Sequence[SchedulePhase], iteration: int) -> LossWeights:
    for phase in schedule:
        if phase.first <= iteration <= phase.last:
            return phase.weights
    raise ConfigError(f"no schedule phase covers iteration {iteration}")


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    reconstruction: float
    consistency: float
    total: float
    weights: LossWeights


@dataclass
class FineTuneResult:
    theta: np.ndarray
    curve: List[LossRecord]
    snapshots: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    dataset_size: int = 0

    def totals(self) -> np.ndarray:
        return np.array([record.total for record in self.curve], dtype=np.float64)


def sample_draws(rng: np.random.Generator, pair: TrainingPair, sched: NoiseSchedule) -> Draws:
    """t, eps, t', eps' for the losses, and the shared latent z noised from x_reg with its own (t_z, eps_z)."""
    dim = pair.image_dim
    t = int(rng.integers(1, sched.T + 1))
    eps = rng.standard_normal(dim)
    t_prime = int(rng.integers(1, sched.T + 1))
    eps_prime = rng.standard_normal(dim)
    t_z = int(rng.integers(1, sched.T + 1))
    z = add_noise(pair.x_reg, t_z, rng.standard_normal(dim), sched)
    return Draws(t, eps, t_prime, eps_prime, z)


def augment_pairs(
    den: AffineDenoiser,
    base: Sequence[TrainingPair],
    count: int,
    rng: np.random.Generator,
    sched: NoiseSchedule,
) -> List[TrainingPair]:
    """Pairs generated by the denoiser from a shared noisy latent of a base pair, conditions reused."""
    generated = []
    for _ in range(count):
        pair = base[int(rng.integers(len(base)))]
        t_z = int(rng.integers(1, sched.T + 1))
        z = add_noise(pair.x_reg, t_z, rng.standard_normal(pair.image_dim), sched)
        generated.append(TrainingPair(den(z, pair.c_style), den(z, pair.c_reg), pair.c_style, pair.c_reg))
    return generated


def _check_dataset(den: AffineDenoiser, dataset: Sequence[TrainingPair]) -> None:
    if not dataset:
        raise ConfigError("training dataset is empty")
    for index, pair in enumerate(dataset):
        if (pair.image_dim, pair.condition_dim) != (den.image_dim, den.condition_dim):
            raise NoiseError(
                f"pair {index} is {pair.image_dim}/{pair.condition_dim}-dimensional, "
                f"denoiser is {den.image_dim}/{den.condition_dim}"
            )
        if np.array_equal(pair.c_style, pair.c_reg):
            raise PromptError(f"pair {index}: style and regularization conditions are identical")


def fine_tune(
    den: AffineDenoiser,
    dataset: Sequence[TrainingPair],
    sched: NoiseSchedule,
    schedule: Optional[Sequence[SchedulePhase]] = None,
    step_size: float = DEFAULT_STEP_SIZE,
    seed: int = 0,
    batch_size: int = 1,
    detach_generation: bool = False,
    snapshot_every: int = SNAPSHOT_EVERY,
) -> FineTuneResult:
    """
    Train the affine denoiser.

    Args:
        den: starting denoiser; it is not modified
        dataset: training pairs
        sched: noise schedule
        schedule: weight phases (defaults to default_schedule())
        step_size: gradient-descent step
        seed: seeds pair choice and every noise draw
        batch_size: draws averaged per iteration

    Returns:
        FineTuneResult with the final theta, the per-iteration loss curve
        (recorded before each step) and theta snapshots.
    """
    schedule = list(default_schedule() if schedule is None else schedule)
    iterations = _check_schedule(schedule)
    if step_size < 0 or not np.isfinite(step_size):
        raise ConfigError(f"step_size must be finite and >= 0, got {step_size}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    _check_dataset(den, dataset)

    rng = np.random.default_rng(seed)
    pairs = list(dataset)
    curve: List[LossRecord] = []
    snapshots: List[Tuple[int, np.ndarray]] = [(0, den.theta.copy())]
    phase_starts = {phase.first: phase for phase in schedule}

    for iteration in range(1, iterations + 1):
        phase = phase_starts.get(iteration)
        if phase is not None and phase.augment_pairs:
            pairs.extend(augment_pairs(den, dataset, phase.augment_pairs, rng, sched))
            logger.info("iteration %d: dataset grown to %d pairs", iteration, len(pairs))
        lw = weights_at(schedule, iteration)

        rec = con = 0.0
        grad = np.zeros_like(den.theta)
        for _ in range(batch_size):
            pair = pairs[int(rng.integers(len(pairs)))]
            draws = sample_draws(rng, pair, sched)
            terms = loss_terms(den, pair, draws, sched, lw)
            rec += terms.reconstruction
            con += terms.consistency
            grad += loss_gradient(den, pair, draws, sched, lw, detach_generation)
        rec /= batch_size
        con /= batch_size
        total = lw.w_t * rec + lw.w_t_prime * con
        if not np.isfinite(total) or total > DIVERGENCE_LIMIT:
            raise TrainingDivergedError(iteration, total)
        curve.append(LossRecord(iteration, rec, con, total, lw))

        den = den.with_theta(den.theta - step_size * (grad / batch_size))
        if snapshot_every > 0 and iteration % snapshot_every == 0:
            snapshots.append((iteration, den.theta.copy()))

    if snapshots[-1][0] != iterations:
        snapshots.append((iterations, den.theta.copy()))
    logger.info(
        "trained %d iterations on %d pairs: loss %.4g -> %.4g",
        iterations, len(pairs), curve[0].total, curve[-1].total,
    )
    return FineTuneResult(den.theta.copy(), curve, snapshots, len(pairs))


def smoothed(values: Sequence[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing moving average; entry i averages values[i - window + 1 .. i]."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1 or values.size < window:
        raise ConfigError(f"cannot smooth {values.size} values with window {window}")
    return np.convolve(values, np.ones(window) / window, mode="valid")


# ---------------------------------------------------------------------------
# Toy dataset
# ---------------------------------------------------------------------------

DESCRIPTION_VOCABULARY = (
    "portrait", "woman", "man", "child", "smiling", "glasses", "hat", "profile",
    "curly", "hair", "beard", "earrings", "scarf", "collar", "looking", "left", "right",
)


def _stroke_image(rng: np.random.Generator, side: int) -> np.ndarray:
    image = np.zeros((side, side), dtype=np.float64)
    for _ in range(int(rng.integers(1, 3))):
        (r0, c0), (r1, c1) = rng.integers(0, side, size=(2, 2))
        steps = max(abs(int(r1) - int(r0)), abs(int(c1) - int(c0))) + 1
        rows = np.rint(np.linspace(r0, r1, steps)).astype(int)
        cols = np.rint(np.linspace(c0, c1, steps)).astype(int)
        image[rows, cols] = 1.0
    return image


def synthetic_pairs(
    count: int,
    image_side: int = 8,
    condition_dim: int = DEFAULT_CONDITION_DIM,
    seed: int = 0,
) -> List[TrainingPair]:
    """
    Style images are sparse binary strokes; the matching regularization image
    is a blurred, shaded rendering of the same strokes. Both share a random
    description, and only the style prompt carries the identifier.
    """
    if count < 1 or image_side < 2:
        raise ConfigError(f"need count >= 1 and image_side >= 2, got {count}, {image_side}")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        strokes = _stroke_image(rng, image_side)
        shaded = ndimage.gaussian_filter(strokes, sigma=1.0)
        shaded = shaded / shaded.max() if shaded.max() > 0 else shaded
        tokens = list(rng.choice(DESCRIPTION_VOCABULARY, size=int(rng.integers(2, 5)), replace=False))
        pairs.append(TrainingPair.from_tokens(strokes.ravel(), shaded.ravel(), tokens, condition_dim))
    return pairs


def load_dataset(source: Union[str, Path, Mapping]) -> List[TrainingPair]:
    """
    {"condition_dim": 16, "pairs": [{"x_style": [...], "x_reg": [...], "tokens": [...]}]}.
    A pair may give "c_style" / "c_reg" vectors instead of "tokens".
    """
    if isinstance(source, Mapping):
        obj = source
    else:
        try:
            obj = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{source}: invalid JSON ({e})")
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigError(f"{source}: cannot read dataset ({e})")
    dim = int(obj.get("condition_dim", DEFAULT_CONDITION_DIM))
    pairs = []
    for index, item in enumerate(obj.get("pairs", [])):
        try:
            if "tokens" in item:
                pairs.append(TrainingPair.from_tokens(item["x_style"], item["x_reg"], item["tokens"], dim))
            else:
                pairs.append(TrainingPair(item["x_style"], item["x_reg"], item["c_style"], item["c_reg"]))
        except KeyError as e:
            raise ConfigError(f"pair {index}: missing field {e}")
    if not pairs:
        raise ConfigError("dataset has no pairs")
    return pairs


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------

def render_loss_csv(curve: Sequence[LossRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["iteration", "L_rec", "L_con", "L_tot", "w_t", "w_t_prime", "lambda1", "lambda2"])
    for record in curve:
        lw = record.weights
        writer.writerow([
            record.iteration, repr(record.reconstruction), repr(record.consistency), repr(record.total),
            lw.w_t, lw.w_t_prime, lw.lambda1, lw.lambda2,
        ])
    return buffer.getvalue()


def theta_payload(result: FineTuneResult, image_dim: int, condition_dim: int) -> Dict:
    return {
        "image_dim": image_dim,
        "condition_dim": condition_dim,
        "dataset_size": result.dataset_size,
        "theta": [float(v) for v in result.theta],
        "snapshots": [
            {"iteration": iteration, "theta": [float(v) for v in theta]}
            for iteration, theta in result.snapshots
        ],
    }
