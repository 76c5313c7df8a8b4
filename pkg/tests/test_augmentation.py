import numpy as np
import pytest

from stereo_msckf.augmentation import WindowOverflowError, augment, augmentation_jacobian, camera_pose_from_imu
from stereo_msckf.geometry import quat_to_rotation
from stereo_msckf.harness.selftest import check_augmentation, random_imu_state
from stereo_msckf.state import IMU_DIM, ImuState, initial_state


def random_psd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + 1e-3 * np.eye(n)


def state_with_window(rng, n_cams):
    st = initial_state(random_imu_state(rng))
    for k in range(n_cams):
        st = augment(st, float(k + 1))
    st.P = random_psd(rng, st.dim)
    return st


def test_identity_extrinsics_camera_equals_imu(rng):
    imu = random_imu_state(rng)
    imu.q_IC = np.array([0.0, 0.0, 0.0, 1.0])
    imu.p_IC = np.zeros(3)
    q_CG, p_GC = camera_pose_from_imu(imu)
    np.testing.assert_allclose(q_CG, imu.q_IG, atol=1e-15)
    np.testing.assert_array_equal(p_GC, imu.p_GI)


def test_lever_arm_at_origin():
    imu = ImuState(p_IC=np.array([0.1, 0.0, 0.0]))
    _, p_GC = camera_pose_from_imu(imu)
    np.testing.assert_allclose(p_GC, [0.1, 0.0, 0.0])


def test_camera_pose_two_path(rng):
    for _ in range(100):
        imu = random_imu_state(rng)
        q_CG, p_GC = camera_pose_from_imu(imu)
        p_G = rng.uniform(-20, 20, 3)
        direct = quat_to_rotation(q_CG) @ (p_G - p_GC)
        p_I = quat_to_rotation(imu.q_IG) @ (p_G - imu.p_GI)
        chained = quat_to_rotation(imu.q_IC).T @ (p_I - imu.p_IC)
        np.testing.assert_allclose(direct, chained, atol=1e-12)


def test_jacobian_block_layout_at_identity():
    J = augmentation_jacobian(ImuState(), 0)
    I3, Z3 = np.eye(3), np.zeros((3, 3))
    expected = np.block([
        [I3, Z3, Z3, Z3, Z3, I3, Z3],
        [Z3, Z3, Z3, Z3, I3, Z3, I3],
    ])
    np.testing.assert_array_equal(J, expected)


def test_jacobian_camera_columns_zero(rng):
    J = augmentation_jacobian(random_imu_state(rng), 5)
    assert J.shape == (6, IMU_DIM + 30)
    np.testing.assert_array_equal(J[:, IMU_DIM:], 0.0)


def test_jacobian_finite_differences():
    result = check_augmentation(trials=100)
    assert result.passed, str(result)


def test_augment_grows_covariance(rng):
    st = initial_state(random_imu_state(rng))
    out = augment(st, 1.0)
    assert out.P.shape == (27, 27)
    assert len(out.cams) == 1 and out.cams[0].id == 0
    assert len(st.cams) == 0


@pytest.mark.parametrize("n_cams", [0, 1, 3, 5])
def test_augment_matches_dense_sandwich(rng, n_cams):
    st = state_with_window(rng, n_cams)
    J = augmentation_jacobian(st.imu, n_cams)
    T = np.vstack([np.eye(st.dim), J])
    out = augment(st, 100.0)
    np.testing.assert_allclose(out.P, T @ st.P @ T.T, rtol=0, atol=1e-12)


@pytest.mark.parametrize("n_cams", [0, 2, 5])
def test_augment_preserves_psd(rng, n_cams):
    st = state_with_window(rng, n_cams)
    P = augment(st, 100.0).P
    np.testing.assert_array_equal(P, P.T)
    assert np.linalg.eigvalsh(P).min() >= -1e-10 * np.trace(P)


def test_camera_theta_block_with_certain_extrinsics(rng):
    st = initial_state(random_imu_state(rng))
    P = random_psd(rng, IMU_DIM)
    P[15:21, :] = 0.0
    P[:, 15:21] = 0.0
    st.P = P
    out = augment(st, 1.0)
    C = quat_to_rotation(st.imu.q_CI)
    np.testing.assert_allclose(out.P[21:24, 21:24], C @ P[0:3, 0:3] @ C.T, atol=1e-14)


def test_camera_theta_block_identity_extrinsics(rng):
    imu = random_imu_state(rng)
    imu.q_IC = np.array([0.0, 0.0, 0.0, 1.0])
    st = initial_state(imu)
    st.P = random_psd(rng, IMU_DIM)
    st.P[15:21, :] = 0.0
    st.P[:, 15:21] = 0.0
    out = augment(st, 1.0)
    np.testing.assert_allclose(out.P[21:24, 21:24], st.P[0:3, 0:3], atol=1e-14)


def test_window_overflow_raises(rng):
    st = state_with_window(rng, 3)
    with pytest.raises(WindowOverflowError):
        augment(st, 10.0, max_cams=3)


def test_ids_and_timestamps_monotone(rng):
    st = state_with_window(rng, 4)
    assert st.cam_ids == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        augment(st, 4.0)
    out = augment(st, 4.5)
    assert out.cam_ids[-1] == 4


def test_null_pose_recorded(rng):
    st = initial_state(random_imu_state(rng))
    st.imu_null = random_imu_state(rng)
    out = augment(st, 1.0)
    q_null, p_null = camera_pose_from_imu(st.imu_null)
    np.testing.assert_allclose(out.cams[0].q_CG_null, q_null)
    np.testing.assert_allclose(out.cams[0].p_GC_null, p_null)
