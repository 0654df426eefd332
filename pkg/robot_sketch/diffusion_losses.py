# Diffusion Losses
"""
Pair-wise fine-tuning objective at toy scale.

A training pair shares one description: the style image is prompted with the
identifier token, the regularization image without it. The objective is

    L_rec = l1 * |x(a_t x_style + s_t e, c_style) - x_style|^2
          + l2 * |x(a_t x_reg   + s_t e, c_reg)   - x_reg|^2
    L_con = |x(a_t' x'_style + s_t' e', c_style) - x(a_t' x'_reg + s_t' e', c_reg)|^2
    L     = w_t * L_rec + w_t' * L_con

where x'_style = x(z, c_style) and x'_reg = x(z, c_reg) are generated from one
shared latent z. Images and conditions are flat float64 vectors.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from .errors import ConfigError, DenoiserError, NoiseError, PromptError

logger = logging.getLogger(__name__)

IDENTIFIER_TOKEN = "<style-id>"
DEFAULT_CONDITION_DIM = 16
DEFAULT_TIMESTEPS = 10
# Encoder entries live on this grid so token sums are exact in float64.
ENCODER_GRID = 2.0 ** -20


# ---------------------------------------------------------------------------
# Noise schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """alphas[t - 1], sigmas[t - 1] for timesteps t = 1..T."""

    alphas: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64).ravel()
        sigmas = np.asarray(self.sigmas, dtype=np.float64).ravel()
        if alphas.size < 1 or alphas.size != sigmas.size:
            raise NoiseError(f"schedule needs T >= 1 matching alphas/sigmas, got {alphas.size}/{sigmas.size}")
        if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(sigmas))):
            raise NoiseError("schedule values must be finite")
        if np.any(alphas < 0) or np.any(sigmas < 0):
            raise NoiseError("schedule values must be non-negative")
        if np.any(np.diff(alphas) > 0) or np.any(np.diff(sigmas) < 0):
            raise NoiseError("alphas must not increase and sigmas must not decrease with t")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "sigmas", sigmas)

    @classmethod
    def linear(cls, T: int = DEFAULT_TIMESTEPS) -> "NoiseSchedule":
        """alpha_t = 1 - t/(T+1), sigma_t = t/(T+1)."""
        if T < 1:
            raise NoiseError(f"T must be >= 1, got {T}")
        t = np.arange(1, T + 1, dtype=np.float64)
        return cls(1.0 - t / (T + 1), t / (T + 1))

    @property
    def T(self) -> int:
        return int(self.alphas.size)

    def coefficients(self, t: int) -> Tuple[float, float]:
        if isinstance(t, bool) or int(t) != t or not 1 <= int(t) <= self.T:
            raise NoiseError(f"timestep {t} outside 1..{self.T}")
        return float(self.alphas[int(t) - 1]), float(self.sigmas[int(t) - 1])


def _vector(values, name: str) -> np.ndarray:
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1 or vector.size == 0:
        raise NoiseError(f"{name} must be a non-empty flat vector, got shape {vector.shape}")
    return vector


def add_noise(x, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """Forward process z_t = alpha_t * x + sigma_t * eps."""
    x = _vector(x, "x")
    eps = _vector(eps, "eps")
    if x.shape != eps.shape:
        raise NoiseError(f"image has {x.size} dims but noise has {eps.size}")
    alpha, sigma = sched.coefficients(t)
    return alpha * x + sigma * eps


# ---------------------------------------------------------------------------
# Toy prompt encoder
# ---------------------------------------------------------------------------

def token_vector(token: str, dim: int = DEFAULT_CONDITION_DIM) -> np.ndarray:
    """
    Unit vector for one token. The seed is the first 8 bytes (big-endian) of
    sha256("<dim>:<token>"), fed to numpy's default_rng; entries are rounded
    to the encoder grid.
    """
    if dim < 1:
        raise PromptError(f"condition dimension must be >= 1, got {dim}")
    digest = hashlib.sha256(f"{dim}:{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    raw = rng.standard_normal(dim)
    raw /= np.linalg.norm(raw)
    return np.round(raw / ENCODER_GRID) * ENCODER_GRID


def identifier_vector(dim: int = DEFAULT_CONDITION_DIM) -> np.ndarray:
    return token_vector(IDENTIFIER_TOKEN, dim)


def encode_prompt(
    description_tokens: Iterable[str],
    has_identifier: bool,
    dim: int = DEFAULT_CONDITION_DIM,
) -> np.ndarray:
    """Sum of token vectors, plus the identifier vector for style prompts."""
    tokens = [str(token) for token in description_tokens]
    if not tokens:
        raise PromptError("prompt needs at least one description token")
    if IDENTIFIER_TOKEN in tokens:
        raise PromptError(f"{IDENTIFIER_TOKEN} is reserved; pass has_identifier instead")
    condition = np.zeros(dim, dtype=np.float64)
    for token in sorted(tokens):
        condition += token_vector(token, dim)
    if has_identifier:
        condition += identifier_vector(dim)
    return condition


# ---------------------------------------------------------------------------
# Pairs and weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainingPair:
    x_style: np.ndarray
    x_reg: np.ndarray
    c_style: np.ndarray
    c_reg: np.ndarray

    def __post_init__(self):
        for name in ("x_style", "x_reg", "c_style", "c_reg"):
            object.__setattr__(self, name, _vector(getattr(self, name), name))
        if self.x_style.shape != self.x_reg.shape:
            raise NoiseError(f"style image has {self.x_style.size} dims, regularization image {self.x_reg.size}")
        if self.c_style.shape != self.c_reg.shape:
            raise NoiseError(f"style condition has {self.c_style.size} dims, regularization condition {self.c_reg.size}")

    @classmethod
    def from_tokens(cls, x_style, x_reg, tokens: Sequence[str], dim: int = DEFAULT_CONDITION_DIM) -> "TrainingPair":
        return cls(x_style, x_reg, encode_prompt(tokens, True, dim), encode_prompt(tokens, False, dim))

    @property
    def image_dim(self) -> int:
        return int(self.x_style.size)

    @property
    def condition_dim(self) -> int:
        return int(self.c_style.size)

    def swapped(self) -> "TrainingPair":
        return TrainingPair(self.x_reg, self.x_style, self.c_reg, self.c_style)


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.5
    lambda2: float = 0.5
    w_t: float = 0.5
    w_t_prime: float = 0.5

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "w_t", "w_t_prime"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"loss weight {name} must be finite and >= 0, got {value}")


# ---------------------------------------------------------------------------
# Denoisers
# ---------------------------------------------------------------------------

@runtime_checkable
class Denoiser(Protocol):
    """Predicts the clean image from a noisy latent and a condition."""

    def __call__(self, z: np.ndarray, c: np.ndarray) -> np.ndarray:
        ...


@dataclass(frozen=True, eq=False)
class AffineDenoiser:
    """x_hat = P z + Q c + b, with theta = concat(P.ravel(), Q.ravel(), b)."""

    P: np.ndarray
    Q: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        Q = np.asarray(self.Q, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64).ravel()
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DenoiserError(f"P must be square, got shape {P.shape}")
        if Q.ndim != 2 or Q.shape[0] != P.shape[0] or b.size != P.shape[0]:
            raise DenoiserError(f"Q {Q.shape} and b ({b.size},) must have {P.shape[0]} rows")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)

    @classmethod
    def initial(cls, image_dim: int, condition_dim: int, rng: np.random.Generator, q_scale: float = 0.01) -> "AffineDenoiser":
        return cls(
            0.5 * np.eye(image_dim),
            q_scale * rng.standard_normal((image_dim, condition_dim)),
            np.zeros(image_dim),
        )

    @classmethod
    def from_theta(cls, theta, image_dim: int, condition_dim: int) -> "AffineDenoiser":
        theta = np.asarray(theta, dtype=np.float64).ravel()
        n, m = image_dim, condition_dim
        if theta.size != n * n + n * m + n:
            raise DenoiserError(f"theta has {theta.size} entries, expected {n * n + n * m + n}")
        return cls(theta[:n * n].reshape(n, n), theta[n * n:n * n + n * m].reshape(n, m), theta[n * n + n * m:])

    @property
    def image_dim(self) -> int:
        return int(self.P.shape[0])

    @property
    def condition_dim(self) -> int:
        return int(self.Q.shape[1])

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.P.ravel(), self.Q.ravel(), self.b])

    def with_theta(self, theta) -> "AffineDenoiser":
        return AffineDenoiser.from_theta(theta, self.image_dim, self.condition_dim)

    def __call__(self, z, c) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        if z.shape != (self.image_dim,) or c.shape != (self.condition_dim,):
            raise NoiseError(
                f"denoiser takes ({self.image_dim},) latents and ({self.condition_dim},) conditions, "
                f"got {z.shape} and {c.shape}"
            )
        return self.P @ z + self.Q @ c + self.b


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Draws:
    """One Monte-Carlo sample: (t, eps) for reconstruction, (t', eps') and the shared latent z for consistency."""

    t: int
    eps: np.ndarray
    t_prime: int
    eps_prime: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class LossTerms:
    reconstruction: float
    consistency: float
    total: float


def _check_dims(den: Denoiser, pair: TrainingPair, *vectors: np.ndarray) -> None:
    for vector in vectors:
        if np.shape(vector) != pair.x_style.shape:
            raise NoiseError(f"vector of shape {np.shape(vector)} does not match image dim {pair.image_dim}")
    if isinstance(den, AffineDenoiser) and (den.image_dim, den.condition_dim) != (pair.image_dim, pair.condition_dim):
        raise NoiseError(
            f"denoiser is {den.image_dim}/{den.condition_dim}-dimensional, "
            f"pair is {pair.image_dim}/{pair.condition_dim}"
        )


def reconstruction_loss(den: Denoiser, pair: TrainingPair, eps, t: int, sched: NoiseSchedule, lw: LossWeights) -> float:
    eps = np.asarray(eps, dtype=np.float64)
    _check_dims(den, pair, eps)
    r_style = den(add_noise(pair.x_style, t, eps, sched), pair.c_style) - pair.x_style
    r_reg = den(add_noise(pair.x_reg, t, eps, sched), pair.c_reg) - pair.x_reg
    return float(lw.lambda1 * (r_style @ r_style) + lw.lambda2 * (r_reg @ r_reg))


def context_consistency_loss(den: Denoiser, pair: TrainingPair, z, eps_prime, t_prime: int, sched: NoiseSchedule) -> float:
    z = np.asarray(z, dtype=np.float64)
    eps_prime = np.asarray(eps_prime, dtype=np.float64)
    _check_dims(den, pair, z, eps_prime)
    generated_style = den(z, pair.c_style)
    generated_reg = den(z, pair.c_reg)
    diff = (
        den(add_noise(generated_style, t_prime, eps_prime, sched), pair.c_style)
        - den(add_noise(generated_reg, t_prime, eps_prime, sched), pair.c_reg)
    )
    return float(diff @ diff)


def loss_terms(den: Denoiser, pair: TrainingPair, draws: Draws, sched: NoiseSchedule, lw: LossWeights) -> LossTerms:
    rec = reconstruction_loss(den, pair, draws.eps, draws.t, sched, lw)
    con = context_consistency_loss(den, pair, draws.z, draws.eps_prime, draws.t_prime, sched)
    return LossTerms(rec, con, lw.w_t * rec + lw.w_t_prime * con)


def total_loss(den: Denoiser, pair: TrainingPair, draws: Draws, sched: NoiseSchedule, lw: LossWeights) -> float:
    return loss_terms(den, pair, draws, sched, lw).total


def loss_gradient(
    den: Denoiser,
    pair: TrainingPair,
    draws: Draws,
    sched: NoiseSchedule,
    lw: LossWeights,
    detach_generation: bool = False,
) -> np.ndarray:
    """
    Analytic d(total_loss)/d(theta) for the affine denoiser.

    The generated images x' depend on theta, so the consistency gradient flows
    through generation as well as re-denoising unless detach_generation is set.
    Both generated images share z, so only Q (c_style - c_reg) survives in
    their difference and z drops out of the consistency gradient.
    """
    if not isinstance(den, AffineDenoiser):
        raise DenoiserError(f"analytic gradients need an AffineDenoiser, got {type(den).__name__}")
    eps = np.asarray(draws.eps, dtype=np.float64)
    _check_dims(den, pair, eps, np.asarray(draws.z), np.asarray(draws.eps_prime))

    grad_P = np.zeros_like(den.P)
    grad_Q = np.zeros_like(den.Q)
    grad_b = np.zeros_like(den.b)

    for weight, x, c in ((lw.lambda1, pair.x_style, pair.c_style), (lw.lambda2, pair.x_reg, pair.c_reg)):
        u = add_noise(x, draws.t, eps, sched)
        scaled = 2.0 * lw.w_t * weight * (den(u, c) - x)
        grad_P += np.outer(scaled, u)
        grad_Q += np.outer(scaled, c)
        grad_b += scaled

    alpha_prime, _ = sched.coefficients(draws.t_prime)
    delta_c = pair.c_style - pair.c_reg
    delta_v = den.Q @ delta_c
    D = alpha_prime * (den.P @ delta_v) + delta_v
    scale = 2.0 * lw.w_t_prime
    grad_P += scale * alpha_prime * np.outer(D, delta_v)
    grad_Q += scale * np.outer(D, delta_c)
    if not detach_generation:
        grad_Q += scale * alpha_prime * np.outer(den.P.T @ D, delta_c)

    return np.concatenate([grad_P.ravel(), grad_Q.ravel(), grad_b])
