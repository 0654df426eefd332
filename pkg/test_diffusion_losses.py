import itertools

import numpy as np
import pytest

from robot_sketch.diffusion_losses import (
    IDENTIFIER_TOKEN,
    AffineDenoiser,
    Denoiser,
    Draws,
    LossWeights,
    NoiseSchedule,
    TrainingPair,
    add_noise,
    context_consistency_loss,
    encode_prompt,
    identifier_vector,
    loss_gradient,
    loss_terms,
    reconstruction_loss,
    total_loss,
)
from robot_sketch.errors import ConfigError, DenoiserError, NoiseError, PromptError
from robot_sketch.fine_tune import DESCRIPTION_VOCABULARY

SCHED = NoiseSchedule.linear(10)


def random_instance(rng: np.random.Generator, image_dim: int = 4, condition_dim: int = 3):
    den = AffineDenoiser(
        rng.standard_normal((image_dim, image_dim)) * 0.5,
        rng.standard_normal((image_dim, condition_dim)) * 0.5,
        rng.standard_normal(image_dim) * 0.5,
    )
    pair = TrainingPair(
        rng.standard_normal(image_dim),
        rng.standard_normal(image_dim),
        rng.standard_normal(condition_dim),
        rng.standard_normal(condition_dim),
    )
    draws = Draws(
        int(rng.integers(1, SCHED.T + 1)),
        rng.standard_normal(image_dim),
        int(rng.integers(1, SCHED.T + 1)),
        rng.standard_normal(image_dim),
        rng.standard_normal(image_dim),
    )
    weights = LossWeights(*rng.uniform(0.0, 1.0, size=4))
    return den, pair, draws, weights


def finite_difference(den, pair, draws, lw, h: float = 1e-5) -> np.ndarray:
    theta = den.theta
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        step = np.zeros_like(theta)
        step[k] = h
        up = total_loss(den.with_theta(theta + step), pair, draws, SCHED, lw)
        down = total_loss(den.with_theta(theta - step), pair, draws, SCHED, lw)
        grad[k] = (up - down) / (2.0 * h)
    return grad


class LookupDenoiser:
    """Returns the clean image registered for a condition."""

    def __init__(self, pair: TrainingPair):
        self.pair = pair

    def __call__(self, z, c):
        return self.pair.x_style if np.array_equal(c, self.pair.c_style) else self.pair.x_reg


# ---------------------------------------------------------------------------
# Schedule and forward noise
# ---------------------------------------------------------------------------

def test_linear_schedule():
    assert SCHED.T == 10
    assert SCHED.coefficients(1) == pytest.approx((10 / 11, 1 / 11))
    assert SCHED.coefficients(10) == pytest.approx((1 / 11, 10 / 11))
    for t in (0, 11, 2.5):
        with pytest.raises(NoiseError):
            SCHED.coefficients(t)


def test_schedule_invariants():
    with pytest.raises(NoiseError):
        NoiseSchedule([0.5, 0.9], [0.1, 0.2])
    with pytest.raises(NoiseError):
        NoiseSchedule([0.9, 0.5], [0.3, 0.2])
    with pytest.raises(NoiseError):
        NoiseSchedule([], [])
    with pytest.raises(NoiseError):
        NoiseSchedule.linear(0)


def test_add_noise_values():
    x = np.array([1.0, 0.0])
    eps = np.array([0.0, 1.0])
    assert np.array_equal(add_noise(x, 1, eps, NoiseSchedule([1.0], [0.0])), x)
    assert np.array_equal(add_noise(np.zeros(2), 1, eps, NoiseSchedule([0.0], [1.0])), eps)
    assert add_noise(x, 1, eps, NoiseSchedule([0.8], [0.6])).tolist() == pytest.approx([0.8, 0.6])
    with pytest.raises(NoiseError):
        add_noise(x, 2, eps, NoiseSchedule([0.8], [0.6]))
    with pytest.raises(NoiseError):
        add_noise(x, 1, np.zeros(3), NoiseSchedule([0.8], [0.6]))


# ---------------------------------------------------------------------------
# Prompt encoder
# ---------------------------------------------------------------------------

def test_identifier_difference_is_exact():
    tokens = ["portrait", "woman", "glasses"]
    difference = encode_prompt(tokens, True) - encode_prompt(tokens, False)
    assert np.array_equal(difference, identifier_vector())


def test_token_order_does_not_matter():
    tokens = ["curly", "hair", "smiling", "child"]
    for permutation in itertools.permutations(tokens):
        assert np.array_equal(encode_prompt(permutation, False), encode_prompt(tokens, False))


def test_distinct_token_sets_give_distinct_vectors():
    seen = {}
    for size in (1, 2):
        for tokens in itertools.combinations(DESCRIPTION_VOCABULARY, size):
            key = encode_prompt(tokens, False).tobytes()
            assert key not in seen, f"{tokens} collides with {seen.get(key)}"
            seen[key] = tokens


def test_encoder_dimension_and_errors():
    assert encode_prompt(["hat"], True, dim=7).shape == (7,)
    with pytest.raises(PromptError):
        encode_prompt([], False)
    with pytest.raises(PromptError):
        encode_prompt(["hat", IDENTIFIER_TOKEN], False)


def test_pair_from_tokens_differs_by_identifier():
    pair = TrainingPair.from_tokens(np.ones(4), np.zeros(4), ["man", "beard"], dim=5)
    assert np.array_equal(pair.c_style - pair.c_reg, identifier_vector(5))
    assert (pair.image_dim, pair.condition_dim) == (4, 5)
    with pytest.raises(NoiseError):
        TrainingPair(np.ones(4), np.ones(3), np.ones(2), np.zeros(2))


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def test_lookup_denoiser_has_zero_reconstruction_loss():
    rng = np.random.default_rng(0)
    pair = TrainingPair(rng.standard_normal(6), rng.standard_normal(6), np.ones(3), np.zeros(3))
    den = LookupDenoiser(pair)
    assert isinstance(den, Denoiser)
    assert reconstruction_loss(den, pair, rng.standard_normal(6), 4, SCHED, LossWeights()) == 0.0


def test_style_only_weighting():
    rng = np.random.default_rng(1)
    den, pair, draws, _ = random_instance(rng)
    style_only = reconstruction_loss(den, pair, draws.eps, draws.t, SCHED, LossWeights(1.0, 0.0))
    residual = den(add_noise(pair.x_style, draws.t, draws.eps, SCHED), pair.c_style) - pair.x_style
    assert style_only == pytest.approx(float(residual @ residual))


def test_affine_reconstruction_closed_form():
    P = np.array([[0.5, 0.0], [0.1, 0.2]])
    Q = np.array([[1.0], [-1.0]])
    b = np.array([0.1, 0.0])
    den = AffineDenoiser(P, Q, b)
    pair = TrainingPair([1.0, 2.0], [0.0, 1.0], [1.0], [0.0])
    sched = NoiseSchedule([0.8], [0.6])
    eps = np.array([1.0, -1.0])
    # style: z = (1.4, 1.0), x_hat = (0.7 + 1 + 0.1, 0.14 + 0.2 - 1) = (1.8, -0.66)
    # reg:   z = (0.6, 0.2), x_hat = (0.3 + 0.1, 0.06 + 0.04) = (0.4, 0.1)
    style = (1.8 - 1.0) ** 2 + (-0.66 - 2.0) ** 2
    reg = 0.4 ** 2 + (0.1 - 1.0) ** 2
    loss = reconstruction_loss(den, pair, eps, 1, sched, LossWeights(0.25, 0.75))
    assert loss == pytest.approx(0.25 * style + 0.75 * reg)


def test_consistency_vanishes_for_equal_conditions():
    rng = np.random.default_rng(2)
    for _ in range(50):
        den, pair, draws, _ = random_instance(rng)
        same = TrainingPair(pair.x_style, pair.x_reg, pair.c_reg, pair.c_reg)
        assert context_consistency_loss(den, same, draws.z, draws.eps_prime, draws.t_prime, SCHED) == 0.0


def test_consistency_vanishes_without_condition_input():
    rng = np.random.default_rng(3)
    for _ in range(50):
        den, pair, draws, _ = random_instance(rng)
        blind = AffineDenoiser(den.P, np.zeros_like(den.Q), den.b)
        assert context_consistency_loss(blind, pair, draws.z, draws.eps_prime, draws.t_prime, SCHED) == 0.0


def test_affine_consistency_closed_form():
    rng = np.random.default_rng(4)
    for _ in range(20):
        den, pair, draws, _ = random_instance(rng, 5, 4)
        alpha_prime, _ = SCHED.coefficients(draws.t_prime)
        shift = den.Q @ (pair.c_style - pair.c_reg)
        expected = alpha_prime * den.P @ shift + shift
        value = context_consistency_loss(den, pair, draws.z, draws.eps_prime, draws.t_prime, SCHED)
        assert value == pytest.approx(float(expected @ expected), rel=1e-10)


def test_consistency_depends_only_on_condition_difference():
    rng = np.random.default_rng(5)
    for _ in range(10):
        den, pair, draws, _ = random_instance(rng)
        offset = rng.standard_normal(pair.condition_dim)
        shifted = TrainingPair(pair.x_style, pair.x_reg, pair.c_style + offset, pair.c_reg + offset)
        before = context_consistency_loss(den, pair, draws.z, draws.eps_prime, draws.t_prime, SCHED)
        after = context_consistency_loss(den, shifted, draws.z, draws.eps_prime, draws.t_prime, SCHED)
        assert after == pytest.approx(before, rel=1e-9, abs=1e-12)


def test_total_loss_weighting():
    rng = np.random.default_rng(6)
    den, pair, draws, _ = random_instance(rng)
    rec = reconstruction_loss(den, pair, draws.eps, draws.t, SCHED, LossWeights(0.5, 0.5))
    con = context_consistency_loss(den, pair, draws.z, draws.eps_prime, draws.t_prime, SCHED)
    assert total_loss(den, pair, draws, SCHED, LossWeights(0.5, 0.5, 0.7, 0.0)) == pytest.approx(0.7 * rec)
    terms = loss_terms(den, pair, draws, SCHED, LossWeights(0.5, 0.5, 0.8, 0.2))
    assert (terms.reconstruction, terms.consistency) == pytest.approx((rec, con))
    assert terms.total == pytest.approx(0.8 * rec + 0.2 * con)
    assert terms.reconstruction >= 0.0 and terms.consistency >= 0.0


def test_loss_weights_are_non_negative():
    with pytest.raises(ConfigError):
        LossWeights(-0.1, 0.5)


def test_mismatched_dimensions_are_rejected():
    rng = np.random.default_rng(7)
    den, pair, draws, lw = random_instance(rng)
    with pytest.raises(NoiseError):
        reconstruction_loss(den, pair, np.zeros(7), 1, SCHED, lw)
    other = AffineDenoiser.initial(6, 3, rng)
    with pytest.raises(NoiseError):
        total_loss(other, pair, draws, SCHED, lw)


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    for _ in range(100):
        den, pair, draws, lw = random_instance(rng, int(rng.integers(4, 17)), int(rng.integers(2, 9)))
        analytic = loss_gradient(den, pair, draws, SCHED, lw)
        numeric = finite_difference(den, pair, draws, lw)
        bound = 1e-4 * np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        assert np.all(np.abs(analytic - numeric) <= bound)


def test_zero_residual_gives_zero_gradient():
    x = np.array([0.3, -0.2, 0.9, 0.0])
    pair = TrainingPair(x, x, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    den = AffineDenoiser(np.zeros((4, 4)), np.zeros((4, 3)), x)
    rng = np.random.default_rng(9)
    draws = Draws(3, rng.standard_normal(4), 7, rng.standard_normal(4), rng.standard_normal(4))
    assert total_loss(den, pair, draws, SCHED, LossWeights()) == 0.0
    assert np.array_equal(loss_gradient(den, pair, draws, SCHED, LossWeights()), np.zeros(4 * 4 + 4 * 3 + 4))


def test_reconstruction_gradient_is_symmetric_in_pair_members():
    rng = np.random.default_rng(10)
    for _ in range(10):
        den, pair, draws, _ = random_instance(rng)
        forward = loss_gradient(den, pair, draws, SCHED, LossWeights(0.3, 0.9, 1.0, 0.0))
        swapped = loss_gradient(den, pair.swapped(), draws, SCHED, LossWeights(0.9, 0.3, 1.0, 0.0))
        assert np.allclose(forward, swapped, rtol=1e-12, atol=1e-12)


def test_detached_generation_drops_generation_path():
    rng = np.random.default_rng(11)
    den, pair, draws, _ = random_instance(rng)
    lw = LossWeights(0.5, 0.5, 0.0, 1.0)
    attached = loss_gradient(den, pair, draws, SCHED, lw)
    detached = loss_gradient(den, pair, draws, SCHED, lw, detach_generation=True)
    n, m = den.image_dim, den.condition_dim
    # P and b gradients agree; only Q picks up the generation term
    assert np.allclose(attached[:n * n], detached[:n * n])
    assert np.allclose(attached[n * n + n * m:], detached[n * n + n * m:])
    assert not np.allclose(attached[n * n:n * n + n * m], detached[n * n:n * n + n * m])


def test_gradient_needs_affine_denoiser():
    rng = np.random.default_rng(12)
    _, pair, draws, lw = random_instance(rng)
    with pytest.raises(DenoiserError):
        loss_gradient(LookupDenoiser(pair), pair, draws, SCHED, lw)


def test_theta_round_trip():
    rng = np.random.default_rng(13)
    den = AffineDenoiser.initial(4, 3, rng)
    again = AffineDenoiser.from_theta(den.theta, 4, 3)
    assert np.array_equal(again.theta, den.theta)
    assert np.array_equal(den.P, 0.5 * np.eye(4)) and not den.b.any()
    with pytest.raises(DenoiserError):
        AffineDenoiser.from_theta(np.zeros(5), 4, 3)
