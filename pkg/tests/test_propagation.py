import numpy as np
import pytest
from scipy.linalg import expm

from stereo_msckf.augmentation import augment
from stereo_msckf.geometry import quat_inverse, quat_multiply, quat_to_rotation, quat_to_rotvec, small_angle_quat
from stereo_msckf.harness.selftest import check_F, check_G, random_imu_state
from stereo_msckf.propagation import (
    ImuSample,
    continuous_jacobians,
    discretize,
    enforce_observability,
    interpolate_sample,
    nominal_derivative,
    propagate,
    rk4_step,
    unobservable_basis,
)
from stereo_msckf.state import ImuState, NoiseParams, initial_state

G = np.array([0.0, 0.0, -9.81])
DT = 1.0 / 200.0


def constant_stream(w, a, n=200, dt=DT):
    return [ImuSample(k * dt, w, a) for k in range(n + 1)]


def test_nominal_derivative_zero_inputs(rng):
    imu = random_imu_state(rng)
    d = nominal_derivative(imu, np.zeros(3), np.zeros(3), G)
    np.testing.assert_array_equal(d.q_IG[:3], 0.0)
    np.testing.assert_array_equal(d.v_GI, G)
    np.testing.assert_array_equal(d.p_GI, imu.v_GI)


def test_nominal_derivative_static_parts_are_zero(rng):
    imu = random_imu_state(rng)
    d = nominal_derivative(imu, rng.standard_normal(3), rng.standard_normal(3), G)
    for part in (d.b_g, d.b_a, d.q_IC, d.p_IC):
        np.testing.assert_array_equal(part, 0.0)


def test_nominal_derivative_hover_cancels(rng):
    for _ in range(20):
        imu = random_imu_state(rng)
        a_hat = -quat_to_rotation(imu.q_IG) @ G
        assert np.max(np.abs(nominal_derivative(imu, np.zeros(3), a_hat, G).v_GI)) < 1e-14


def test_rk4_stationary(rng):
    imu = random_imu_state(rng)
    imu.v_GI = np.zeros(3)
    samples = constant_stream(imu.b_g, imu.b_a - quat_to_rotation(imu.q_IG) @ G)
    s = imu
    for s0, s1 in zip(samples[:-1], samples[1:]):
        s = rk4_step(s, s0, s1, G)
    np.testing.assert_allclose(s.p_GI, imu.p_GI, atol=1e-12)
    np.testing.assert_allclose(s.v_GI, 0.0, atol=1e-12)


def test_rk4_constant_rate_rotation():
    imu = ImuState()
    w = np.array([0.0, 0.0, 1.0])
    samples = constant_stream(w, -G)
    s = imu
    for s0, s1 in zip(samples[:-1], samples[1:]):
        s = rk4_step(s, s0, s1, G)
    expected = small_angle_quat(w * 1.0)
    err = quat_to_rotvec(quat_multiply(s.q_IG, quat_inverse(expected)))
    assert np.linalg.norm(err) < 1e-9


def test_rk4_constant_acceleration_is_exact():
    a = np.array([0.3, -0.2, 0.1])
    samples = constant_stream(np.zeros(3), a - G)
    s = ImuState()
    for s0, s1 in zip(samples[:-1], samples[1:]):
        s = rk4_step(s, s0, s1, G)
    np.testing.assert_allclose(s.p_GI, 0.5 * a, atol=1e-13)
    np.testing.assert_allclose(s.v_GI, a, atol=1e-13)


def test_rk4_rejects_non_positive_dt():
    s = ImuSample(1.0, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        rk4_step(ImuState(), s, s, G)


def test_imu_sample_rejects_non_finite():
    with pytest.raises(ValueError):
        ImuSample(0.0, [np.nan, 0, 0], [0, 0, 0])


def test_interpolation_midpoint():
    s0 = ImuSample(0.0, np.zeros(3), np.ones(3))
    s1 = ImuSample(1.0, np.ones(3), np.zeros(3))
    m = interpolate_sample(s0, s1, 0.25)
    np.testing.assert_allclose(m.omega_m, 0.25)
    np.testing.assert_allclose(m.accel_m, 0.75)


def test_jacobian_structure(rng):
    zero_f = np.ones((21, 21), bool)
    for r, c in [(0, 0), (0, 3), (6, 0), (6, 9), (12, 6)]:
        zero_f[r:r + 3, c:c + 3] = False
    zero_g = np.ones((21, 12), bool)
    for r, c in [(0, 0), (3, 3), (6, 6), (9, 9)]:
        zero_g[r:r + 3, c:c + 3] = False
    for _ in range(20):
        imu = random_imu_state(rng)
        F, G_ = continuous_jacobians(imu, rng.standard_normal(3), rng.standard_normal(3))
        assert np.all(F[zero_f] == 0.0)
        assert np.all(G_[zero_g] == 0.0)
        assert np.all(F[15:] == 0.0) and np.all(G_[15:] == 0.0)
        np.testing.assert_array_equal(F[0:3, 3:6], -np.eye(3))
        np.testing.assert_array_equal(F[12:15, 6:9], np.eye(3))


def test_attitude_block_for_unit_yaw_rate():
    F, _ = continuous_jacobians(ImuState(), np.array([0.0, 0.0, 1.0]), np.zeros(3))
    np.testing.assert_array_equal(F[0:3, 0:3], [[0, 1, 0], [-1, 0, 0], [0, 0, 0]])


def test_F_matches_finite_differences():
    assert check_F(trials=20, seed=11).passed


def test_G_matches_finite_differences():
    assert check_G(trials=20, seed=12).passed


def test_discretize_zero_F_is_identity():
    Phi, _ = discretize(np.zeros((21, 21)), np.zeros((21, 12)), NoiseParams(), DT)
    np.testing.assert_array_equal(Phi, np.eye(21))


def test_discretize_matches_matrix_exponential(rng):
    # body rates up to 1 rad/s and specific force around 1 g
    for _ in range(100):
        imu = random_imu_state(rng)
        w = rng.standard_normal(3)
        w *= rng.uniform(0.0, 1.0) / np.linalg.norm(w)
        F, G_ = continuous_jacobians(imu, w, -G + 5 * rng.standard_normal(3))
        Phi, _ = discretize(F, G_, NoiseParams(), 0.005)
        ref = expm(F * 0.005)
        assert np.linalg.norm(Phi - ref) / np.linalg.norm(ref) < 1e-9


def test_process_noise_is_psd(rng):
    for _ in range(20):
        imu = random_imu_state(rng)
        F, G_ = continuous_jacobians(imu, rng.standard_normal(3), rng.standard_normal(3))
        _, Q = discretize(F, G_, NoiseParams(), DT)
        np.testing.assert_array_equal(Q, Q.T)
        assert np.linalg.eigvalsh(Q)[0] >= -1e-12 * np.trace(Q)


def test_discretize_rejects_bad_dt():
    with pytest.raises(ValueError):
        discretize(np.zeros((21, 21)), np.zeros((21, 12)), NoiseParams(), 0.0)


def random_step(rng):
    imu = random_imu_state(rng)
    s0 = ImuSample(0.0, rng.standard_normal(3), rng.standard_normal(3) - G)
    s1 = ImuSample(DT, s0.omega_m + 0.1 * rng.standard_normal(3), s0.accel_m + rng.standard_normal(3))
    new = rk4_step(imu, s0, s1, G)
    w_hat = 0.5 * (s0.omega_m + s1.omega_m) - imu.b_g
    a_hat = 0.5 * (s0.accel_m + s1.accel_m) - imu.b_a
    F, G_ = continuous_jacobians(imu, w_hat, a_hat)
    Phi, _ = discretize(F, G_, NoiseParams(), DT)
    return imu, new, Phi


def test_constrained_transition_maps_basis(rng):
    for _ in range(100):
        imu, new, Phi = random_step(rng)
        Phi_star = enforce_observability(Phi, imu, new, G, DT)
        N0, N1 = unobservable_basis(imu, G), unobservable_basis(new, G)
        np.testing.assert_array_equal(Phi_star @ N0[:, :3], N0[:, :3])
        assert np.linalg.norm(Phi_star @ N0[:, 3] - N1[:, 3]) <= 1e-10 * np.linalg.norm(N0)


def test_constrained_transition_is_a_small_modification(rng):
    for _ in range(20):
        imu, new, Phi = random_step(rng)
        Phi_star = enforce_observability(Phi, imu, new, G, DT)
        assert np.linalg.norm(Phi_star - Phi) < 1e-3 * np.linalg.norm(Phi)


def test_constrained_transition_zero_motion(rng):
    imu = random_imu_state(rng)
    imu.v_GI = np.zeros(3)
    s = ImuSample(0.0, imu.b_g, imu.b_a - quat_to_rotation(imu.q_IG) @ G)
    F, G_ = continuous_jacobians(imu, np.zeros(3), s.accel_m - imu.b_a)
    Phi, _ = discretize(F, G_, NoiseParams(), DT)
    Phi_star = enforce_observability(Phi, imu, imu.copy(), G, DT)
    assert np.max(np.abs(Phi_star - Phi)) < 1e-12


def two_samples(rng):
    s0 = ImuSample(0.0, 0.1 * rng.standard_normal(3), -G + rng.standard_normal(3))
    s1 = ImuSample(DT, s0.omega_m, s0.accel_m)
    return s0, s1


def test_propagate_without_cameras_changes_only_imu_block(rng):
    st_ = initial_state(random_imu_state(rng))
    out = propagate(st_, *two_samples(rng))
    assert out.P.shape == (21, 21)
    assert out.imu.timestamp == DT


def test_propagate_keeps_camera_block_bit_identical(rng):
    st_ = initial_state(random_imu_state(rng))
    st_ = augment(augment(st_, 0.0), 0.001)
    s0, s1 = two_samples(rng)
    s0 = ImuSample(0.001, s0.omega_m, s0.accel_m)
    s1 = ImuSample(0.001 + DT, s1.omega_m, s1.accel_m)
    out = propagate(st_, s0, s1)
    assert np.array_equal(out.P[21:, 21:], st_.P[21:, 21:])
    assert not np.array_equal(out.P[:21, 21:], st_.P[:21, 21:])
    np.testing.assert_array_equal(out.P, out.P.T)


@pytest.mark.parametrize("oc", [True, False])
def test_trace_grows_during_pure_propagation(oc, rng):
    st_ = initial_state(random_imu_state(rng))
    t = 0.0
    traces = [np.trace(st_.P)]
    for _ in range(200):
        s0 = ImuSample(t, 0.2 * rng.standard_normal(3), -G + rng.standard_normal(3))
        s1 = ImuSample(t + DT, s0.omega_m, s0.accel_m)
        st_ = propagate(st_, s0, s1, oc)
        t += DT
        traces.append(np.trace(st_.P))
    assert np.all(np.diff(traces) >= 0.0)
