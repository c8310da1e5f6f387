import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lcsfd.errors import ConditioningError, ConfigurationError, ContractError
from lcsfd.gp import (
    GpConfig,
    gram_factorize,
    kernel_matrix,
    posterior_mean,
    posterior_variance,
    se_kernel,
    v_cost,
)
from lcsfd.spacefill import build_anchor_grid

CFG = GpConfig()
SF2 = math.sqrt(10.0)


def dense_gram(x, cfg):
    k = kernel_matrix(x, x, cfg)
    return k + (cfg.sigma_eps2 + cfg.jitter * cfg.sigma_f2) * np.eye(len(x))


def dense_variance(xs, x, cfg):
    """Brute-force posterior variance through an explicit inverse."""
    ks = kernel_matrix(xs, x, cfg)
    inv = np.linalg.inv(dense_gram(x, cfg))
    return cfg.sigma_f2 - np.einsum("ij,jk,ik->i", ks, inv, ks)


def dense_mean(xs, x, y, cfg):
    return kernel_matrix(xs, x, cfg) @ np.linalg.inv(dense_gram(x, cfg)) @ y


def feature_sets(max_n=20):
    return st.integers(1, max_n).flatmap(
        lambda n: arrays(np.float64, (n, 2), elements=st.floats(-0.3, 0.3))
    )


# ---------------------------------------------------------------- kernel


def test_kernel_at_coincident_points_is_signal_variance():
    assert se_kernel([0.02, -0.3], [0.02, -0.3]) == pytest.approx(3.16227766, rel=1e-8)


def test_kernel_unit_quadratic_form():
    v = se_kernel([math.sqrt(0.05), 0.0], [0.0, 0.0])
    assert v == pytest.approx(SF2 * math.exp(-0.5), rel=1e-14)


def test_kernel_decays_along_a_ray():
    vals = [se_kernel([0.0, 0.0], [0.1 * t, 0.3 * t]) for t in np.linspace(0, 20, 41)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-12


def test_kernel_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        se_kernel([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])


def test_lengthscale_mode_squares_the_widths():
    cfg = GpConfig(lambda_diag=(math.sqrt(0.05), math.sqrt(0.40)), lambda_mode="lengthscale")
    assert np.allclose(cfg.lambda_squared, [0.05, 0.40], rtol=1e-14)
    x, x2 = [0.1, 0.2], [-0.05, 0.5]
    assert se_kernel(x, x2, cfg) == pytest.approx(se_kernel(x, x2), rel=1e-13)


@pytest.mark.parametrize(
    "kw",
    [{"sigma_f2": 0.0}, {"lambda_diag": (0.05, 0.0)}, {"sigma_eps2": -1.0},
     {"jitter": 1e-5, "max_jitter": 1e-6}, {"lambda_mode": "bogus"}],
)
def test_invalid_gp_config(kw):
    with pytest.raises(ConfigurationError):
        GpConfig(**kw)


# ------------------------------------------------------------ factorization


def test_single_point_factor_is_scalar_root():
    f = gram_factorize([[0.01, 0.2]])
    expected = math.sqrt(SF2 + 1.0 + 1e-10 * SF2)
    assert f.lower[0, 0] == pytest.approx(expected, rel=1e-15)


def test_duplicated_rows_factorize_with_noise():
    f = gram_factorize(np.zeros((30, 2)))
    assert f.jitter == pytest.approx(1e-10 * SF2)
    assert np.all(np.diag(f.lower) > 0)


def test_random_fifty_point_reconstruction():
    x = np.random.default_rng(5).uniform([-0.1, -0.8], [0.1, 0.8], (50, 2))
    f = gram_factorize(x)
    low = f.lower
    gram = dense_gram(x, CFG)
    assert np.linalg.norm(low @ low.T - gram) <= 1e-8 * np.linalg.norm(gram)


def test_noise_free_cluster_escalates_jitter_then_fails():
    # a clustered noise-free set is singular to rounding at a tiny starting jitter
    x = np.random.default_rng(0).uniform(-1e-3, 1e-3, (50, 2))
    cfg = GpConfig(sigma_eps2=0.0, jitter=1e-20, max_jitter=1e-6)
    f = gram_factorize(x, cfg)
    assert cfg.jitter * cfg.sigma_f2 < f.jitter <= cfg.max_jitter * cfg.sigma_f2
    with pytest.raises(ConditioningError):
        gram_factorize(x, GpConfig(sigma_eps2=0.0, jitter=1e-20, max_jitter=1e-18))


def test_non_finite_features_rejected():
    with pytest.raises(ConfigurationError):
        gram_factorize([[0.0, np.nan]])


# ---------------------------------------------------------------- posterior


def test_empty_data_gives_the_prior():
    f = gram_factorize(np.zeros((0, 2)))
    assert posterior_variance([0.05, 0.1], f.x, f) == pytest.approx(SF2)
    assert posterior_mean([0.05, 0.1], f.x, np.zeros(0), f) == 0.0


def test_interpolation_at_observed_point_without_noise():
    cfg = GpConfig(sigma_eps2=0.0, jitter=1e-14, max_jitter=1e-6)
    x = np.array([[0.0, 0.0], [0.05, 0.4], [-0.05, -0.4]])
    f = gram_factorize(x, cfg)
    assert np.all(posterior_variance(x, x, f, cfg) < 1e-6)


def test_three_points_match_dense_inverse():
    x = np.array([[0.01, -0.2], [-0.04, 0.3], [0.07, 0.05]])
    y = np.array([0.3, -1.1, 0.6])
    f = gram_factorize(x)
    star = np.array([0.0, 0.1])
    assert posterior_variance(star, x, f) == pytest.approx(dense_variance(star[None], x, CFG)[0], rel=1e-10)
    assert posterior_mean(star, x, y, f) == pytest.approx(dense_mean(star[None], x, y, CFG)[0], rel=1e-10)


def test_zero_outputs_give_zero_mean():
    x = np.random.default_rng(1).normal(0, 0.1, (7, 2))
    f = gram_factorize(x)
    assert np.all(posterior_mean(x + 0.01, x, np.zeros(7), f) == 0.0)


def test_stale_factor_is_a_contract_violation():
    x = np.array([[0.0, 0.0], [0.05, 0.1]])
    f = gram_factorize(x)
    with pytest.raises(ContractError):
        posterior_variance([0.0, 0.0], x + 1e-3, f)
    with pytest.raises(ContractError):
        posterior_variance([0.0, 0.0], x, f, GpConfig(sigma_eps2=0.5))


def test_mean_output_length_checked():
    x = np.zeros((2, 2))
    f = gram_factorize(x)
    with pytest.raises(ConfigurationError):
        posterior_mean([0.0, 0.0], x, np.zeros(3), f)


# ------------------------------------------------------------------ V-cost


def test_v_cost_of_empty_dataset_is_signal_variance():
    assert v_cost(np.zeros((0, 2)), build_anchor_grid()) == pytest.approx(SF2)


def test_v_cost_with_anchors_as_data_and_no_noise():
    anchors = build_anchor_grid()
    cfg = GpConfig(sigma_eps2=0.0, jitter=1e-14)
    assert v_cost(anchors.points, anchors, cfg) < 1e-6


def test_v_cost_single_center_point_matches_dense_oracle():
    anchors = build_anchor_grid()
    x = np.array([[0.0, 0.0]])
    expected = float(np.mean(dense_variance(anchors.points, x, CFG)))
    assert v_cost(x, anchors) == pytest.approx(expected, rel=1e-10)


def test_v_cost_rejects_empty_anchor_set():
    with pytest.raises(ConfigurationError):
        v_cost(np.zeros((2, 2)), np.zeros((0, 2)))


# -------------------------------------------------------------- properties


@settings(max_examples=60, deadline=None)
@given(feature_sets(), st.floats(-0.3, 0.3), st.floats(-1.0, 1.0))
def test_extra_point_never_raises_v_cost(x, p0, p1):
    anchors = build_anchor_grid()
    more = np.vstack([x, [p0, p1]])
    assert v_cost(more, anchors) <= v_cost(x, anchors) + 1e-9


@settings(max_examples=60, deadline=None)
@given(feature_sets(), arrays(np.float64, (6, 2), elements=st.floats(-2.0, 2.0)))
def test_posterior_variance_bounds(x, stars):
    f = gram_factorize(x)
    var = posterior_variance(stars, x, f)
    assert np.all(var >= 0.0) and np.all(var <= SF2 + 1e-9)


@settings(max_examples=40, deadline=None)
@given(feature_sets(), st.randoms(use_true_random=False))
def test_row_permutation_invariance(x, rnd):
    anchors = build_anchor_grid()
    idx = list(range(len(x)))
    rnd.shuffle(idx)
    assert abs(v_cost(x[idx], anchors) - v_cost(x, anchors)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (2,), elements=st.floats(-5, 5)), arrays(np.float64, (2,), elements=st.floats(-5, 5)))
def test_kernel_symmetry(a, b):
    assert se_kernel(a, b) == se_kernel(b, a)


@settings(max_examples=40, deadline=None)
@given(feature_sets(), arrays(np.float64, (4, 2), elements=st.floats(-0.3, 0.3)))
def test_posterior_matches_dense_inverse(x, stars):
    f = gram_factorize(x)
    y = np.sin(7 * x[:, 0]) + x[:, 1]
    var = posterior_variance(stars, x, f)
    assert np.allclose(var, dense_variance(stars, x, CFG), rtol=1e-10, atol=1e-12)
    mean = posterior_mean(stars, x, y, f)
    assert np.allclose(mean, dense_mean(stars, x, y, CFG), rtol=1e-10, atol=1e-12)
