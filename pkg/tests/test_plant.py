import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from lcsfd.errors import ConfigurationError, DivergenceError
from lcsfd.plant import (
    Dataset,
    IoModel,
    MsdParams,
    integrate_rk4,
    linearize_msd,
    msd_derivative,
    rk4_affine_map,
    simulate_dataset,
    simulate_output,
)
from lcsfd.signals import MultisineConfig, SignalParams, random_phases

SMALL = MultisineConfig(fs=100.0, n=256, line_indices=(3, 7, 11, 19))


def test_derivative_oracles():
    assert np.array_equal(msd_derivative((0.0, 0.0), 0.0), [0.0, 0.0])
    assert np.allclose(msd_derivative((0.0, 1.0), 0.0), [1.0, -2.0])
    assert np.allclose(msd_derivative((0.0, 0.0), 5.0), [0.0, 1.0])


def test_derivative_matches_spring_force():
    p = MsdParams()
    x1 = 0.07
    r = math.sqrt(x1**2 + p.a**2)
    expected = (3.0 - p.s * x1 / r * (r - p.l) - p.c * 0.2) / p.m
    assert msd_derivative((x1, 0.2), 3.0, p)[1] == pytest.approx(expected, rel=1e-14)


def test_linearization_at_origin():
    a_mat, b_vec = linearize_msd()
    assert -a_mat[1, 0] * 5.0 == pytest.approx(256.0, rel=1e-12)
    assert np.allclose(a_mat, [[0, 1], [-51.2, -2.0]])
    assert np.allclose(b_vec, [0.0, 0.2])
    assert np.all(np.linalg.eigvals(a_mat).real < 0)


def test_linearization_matches_numerical_jacobian_off_origin():
    p = MsdParams()
    x1, h = 0.015, 1e-6
    num = -(p.spring_force(x1 + h) - p.spring_force(x1 - h)) / (2 * h) / p.m
    a_mat, _ = linearize_msd(p, x1)
    assert a_mat[1, 0] == pytest.approx(num, rel=1e-8)


def test_doubling_mass_halves_input_gain_and_stiffness_term():
    a1, b1 = linearize_msd(MsdParams(m=5.0))
    a2, b2 = linearize_msd(MsdParams(m=10.0))
    assert b2[1] == pytest.approx(b1[1] / 2)
    assert a2[1, 0] == pytest.approx(a1[1, 0] / 2)


@pytest.mark.parametrize("kw", [{"m": 0.0}, {"c": -1.0}, {"l": 0.3, "a": 0.25}])
def test_invalid_params(kw):
    with pytest.raises(ConfigurationError):
        MsdParams(**kw)


def test_rest_stays_at_rest():
    for model in (IoModel.nonlinear(), IoModel.linear()):
        traj = integrate_rk4(model, (0.0, 0.0), np.zeros(500))
        assert traj.shape == (501, 2)
        assert np.all(traj == 0.0)


def _zoh(a_mat, b_vec, dt):
    big = np.zeros((3, 3))
    big[:2, :2] = a_mat * dt
    big[:2, 2] = b_vec * dt
    e = expm(big)
    return e[:2, :2], e[:2, 2]


def test_linear_rk4_step_matches_matrix_exponential():
    # RK4 truncation at dt = 0.01: about 2e-8 on Phi, 2e-7 on the input gain
    a_mat, b_vec = linearize_msd()
    ad, bd = _zoh(a_mat, b_vec, 0.01)
    for x0, u in (((0.01, -0.02), 1.0), ((0.05, 0.3), -4.0), ((0.0, 0.0), 2.0)):
        traj = integrate_rk4(IoModel.linear(), x0, [u])
        exact = ad @ np.asarray(x0) + bd * u
        assert np.linalg.norm(traj[-1] - exact) <= 5e-7 * np.linalg.norm(exact)


def test_linear_rk4_long_run_error_shrinks_at_fourth_order():
    a_mat, b_vec = linearize_msd()
    errs = []
    for dt in (0.01, 0.005):
        n = round(3.0 / dt)
        u = np.ones(n)
        ad, bd = _zoh(a_mat, b_vec, dt)
        x = np.array([0.01, -0.02])
        for uk in u:
            x = ad @ x + bd * uk
        traj = integrate_rk4(IoModel.linear(), (0.01, -0.02), u, dt=dt)
        errs.append(np.linalg.norm(traj[-1] - x))
    assert 13.0 < errs[0] / errs[1] < 19.0


def test_affine_map_is_one_rk4_step():
    a_mat, b_vec = linearize_msd()
    dt = 0.01
    phi, gam = rk4_affine_map(a_mat, b_vec, dt)
    x, u = np.array([0.02, 0.1]), 3.0
    f = lambda z: a_mat @ z + b_vec * u  # noqa: E731
    k1 = f(x)
    k2 = f(x + dt / 2 * k1)
    k3 = f(x + dt / 2 * k2)
    k4 = f(x + dt * k3)
    step = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert np.allclose(phi @ x + gam * u, step, rtol=1e-14, atol=1e-16)


def _endpoint(dt, t_end=1.0):
    n = round(t_end / dt)
    t = np.arange(n) * dt
    # hold the 1 Hz forcing sampled on the coarsest grid so every dt sees the same input
    u = 20.0 * np.sin(2 * np.pi * np.floor(t / 0.02 + 1e-9) * 0.02)
    model = IoModel.nonlinear()
    return integrate_rk4(model, (0.05, 0.0), u, dt=dt)[-1]


def test_rk4_halving_dt_cuts_error_sixteenfold():
    ref = _endpoint(0.02 / 64)
    e1 = np.linalg.norm(_endpoint(0.02) - ref)
    e2 = np.linalg.norm(_endpoint(0.01) - ref)
    assert 12.0 < e1 / e2 < 20.0


def test_divergence_names_the_step():
    with pytest.raises(DivergenceError) as info:
        integrate_rk4(IoModel.nonlinear(), (0.0, 0.0), np.full(400, 1e200))
    assert info.value.step >= 0


def test_energy_dissipation():
    traj = integrate_rk4(IoModel.nonlinear(), (0.3, -1.0), np.zeros(1000))
    assert np.linalg.norm(traj[-1]) < np.linalg.norm(traj[0])


def test_dataset_rows_and_dy_identity():
    p = SignalParams.constant(4, 5.0, random_phases(np.random.default_rng(1), 4))
    d = simulate_dataset(IoModel.nonlinear(), p, SMALL)
    assert len(d) == SMALL.n and d.features.shape == (SMALL.n, 2)
    assert d.check(1e-12)
    assert np.allclose(d.features[1:, 0], d.y[:-1], rtol=0, atol=0)
    assert np.allclose(d.features[2:, 1], SMALL.fs * d.dy[1:-1], rtol=1e-14, atol=1e-16)


def test_zero_signal_dataset_is_all_zero():
    d = simulate_dataset(IoModel.linear(), SignalParams.constant(4, 0.0), SMALL)
    assert np.all(d.features == 0.0) and np.all(d.y == 0.0)


def test_linear_model_is_periodic_after_warmup():
    # two default 10.24 s periods let the slowest mode (rate 1/s) decay by e^-20
    cfg = MultisineConfig()
    p = SignalParams.constant(14, 8.0, random_phases(np.random.default_rng(2), 14))
    d2 = simulate_dataset(IoModel.linear(), p, cfg, warmup_periods=2)
    d3 = simulate_dataset(IoModel.linear(), p, cfg, warmup_periods=3)
    assert np.max(np.abs(d2.y - d3.y)) < 1e-6


def test_dataset_csv_round_trip(tmp_path):
    p = SignalParams.constant(4, 3.0, random_phases(np.random.default_rng(4), 4))
    d = simulate_dataset(IoModel.nonlinear(), p, SMALL)
    d.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.u, d.u) and np.array_equal(back.y, d.y)
    assert np.array_equal(back.dy, d.dy)
    assert back.dy_scale == d.dy_scale
    assert np.array_equal(back.features[1:], d.features[1:])
    assert back.provenance["model"] == "nonlinear_msd"


def test_dataset_csv_missing_columns(tmp_path):
    (tmp_path / "x.csv").write_text("k,u\n0,1\n")
    with pytest.raises(ConfigurationError):
        Dataset.from_csv(tmp_path / "x.csv")


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0.0, 0.1), min_size=4, max_size=4), st.integers(0, 2**31))
def test_small_signal_linear_and_nonlinear_agree(amps, seed):
    p = SignalParams(amps, random_phases(np.random.default_rng(seed), 4))
    y_nl = simulate_dataset(IoModel.nonlinear(), p, SMALL).y
    y_lin = simulate_dataset(IoModel.linear(), p, SMALL).y
    scale = np.sqrt(np.mean(y_lin**2))
    if scale == 0.0:
        assert np.all(y_nl == 0.0)
        return
    assert np.sqrt(np.mean((y_nl - y_lin) ** 2)) <= 0.02 * scale


@settings(max_examples=20, deadline=None)
@given(
    st.floats(-0.3, 0.3).filter(lambda v: v == 0 or abs(v) > 1e-9),
    st.floats(-2.0, 2.0).filter(lambda v: v == 0 or abs(v) > 1e-9),
)
def test_unforced_state_norm_decays(x1, x2):
    traj = integrate_rk4(IoModel.nonlinear(), (x1, x2), np.zeros(1000))
    if x1 == 0.0 and x2 == 0.0:
        assert np.all(traj == 0.0)
    else:
        assert np.linalg.norm(traj[-1]) < np.linalg.norm(traj[0])


def test_simulate_output_length():
    y = simulate_output(IoModel.nonlinear(), np.ones(37))
    assert y.shape == (37,) and y[0] == 0.0
