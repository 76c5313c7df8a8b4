import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stereo_msckf.augmentation import augment
from stereo_msckf.geometry import (
    normalize_quat,
    quat_inverse,
    quat_multiply,
    quat_to_rotation,
    quat_to_rotvec,
    small_angle_quat,
)
from stereo_msckf.propagation import ImuSample
from stereo_msckf.state import (
    SNAPSHOT_HEADER,
    FilterState,
    ImuState,
    NoiseParams,
    PriorCovariance,
    StereoExtrinsics,
    apply_correction,
    enforce_symmetry,
    error_dim,
    initial_state,
    state_difference,
    static_initialization,
)

from .strategies import small_vec3


def state_with_cams(n, rng):
    st_ = initial_state(ImuState(q_IG=normalize_quat(rng.standard_normal(4)), p_GI=rng.standard_normal(3)))
    for k in range(n):
        st_.imu.timestamp = float(k)
        st_ = augment(st_)
    return st_


@pytest.mark.parametrize("component, expected", [
    ("theta", (0, 3)), ("b_g", (3, 6)), ("v", (6, 9)), ("b_a", (9, 12)),
    ("p", (12, 15)), ("theta_IC", (15, 18)), ("p_IC", (18, 21)),
])
def test_imu_layout(component, expected):
    st_ = initial_state(ImuState())
    sl = st_.error_index(component)
    assert (sl.start, sl.stop) == expected


def test_camera_layout(rng):
    st_ = state_with_cams(3, rng)
    first = st_.cams[0].id
    sl = st_.error_index("cam_theta", first)
    assert (sl.start, sl.stop) == (21, 24)
    sl = st_.error_index("cam_p", st_.cams[2].id)
    assert (sl.start, sl.stop) == (21 + 12 + 3, 21 + 18)


def test_dimension_for_thirty_cameras():
    assert error_dim(30) == 201


def test_unknown_camera_is_an_error(rng):
    st_ = state_with_cams(2, rng)
    with pytest.raises(KeyError):
        st_.error_index("cam", 99)
    with pytest.raises(KeyError):
        st_.error_index("nope")


def test_zero_correction_is_a_no_op(rng):
    st_ = state_with_cams(2, rng)
    out = apply_correction(st_, np.zeros(st_.dim))
    np.testing.assert_array_equal(out.imu.q_IG, st_.imu.q_IG)
    np.testing.assert_array_equal(out.imu.p_GI, st_.imu.p_GI)
    for a, b in zip(out.cams, st_.cams):
        np.testing.assert_array_equal(a.q_CG, b.q_CG)


def test_position_correction_is_exact(rng):
    st_ = state_with_cams(1, rng)
    dx = np.zeros(st_.dim)
    dx[12:15] = [0.1, -0.2, 0.3]
    out = apply_correction(st_, dx)
    np.testing.assert_array_equal(out.imu.p_GI, st_.imu.p_GI + dx[12:15])


@given(small_vec3)
def test_orientation_correction_recovered(theta):
    st_ = initial_state(ImuState(q_IG=normalize_quat(np.array([0.1, 0.2, 0.3, 0.9]))))
    dx = np.zeros(st_.dim)
    dx[0:3] = theta
    out = apply_correction(st_, dx)
    dq = quat_multiply(out.imu.q_IG, quat_inverse(st_.imu.q_IG))
    assert np.linalg.norm(2 * dq[:3] - theta) <= np.dot(theta, theta) + 1e-15


def test_correction_dimension_mismatch(rng):
    st_ = state_with_cams(1, rng)
    with pytest.raises(ValueError):
        apply_correction(st_, np.zeros(21))


def test_extrinsic_correction_acts_on_camera_to_imu_inverse():
    imu = ImuState(q_IC=small_angle_quat(np.array([0.2, 0.0, 0.0])))
    st_ = initial_state(imu)
    dx = np.zeros(21)
    dx[15:18] = [0.0, 0.0, 1e-3]
    out = apply_correction(st_, dx)
    d = quat_to_rotvec(quat_multiply(out.imu.q_CI, quat_inverse(imu.q_CI)))
    np.testing.assert_allclose(d, dx[15:18], atol=1e-15)


def test_state_difference_inverts_correction(rng):
    st_ = initial_state(ImuState(q_IG=normalize_quat(rng.standard_normal(4)),
                                 q_IC=normalize_quat(rng.standard_normal(4))))
    dx = 1e-3 * rng.standard_normal(21)
    out = apply_correction(st_, dx)
    np.testing.assert_allclose(state_difference(out.imu, st_.imu), dx, atol=1e-15)


def test_enforce_symmetry_keeps_symmetric_input(rng):
    A = rng.standard_normal((5, 5))
    P = A @ A.T
    np.testing.assert_array_equal(enforce_symmetry(P), P)


def test_enforce_symmetry_removes_small_asymmetry(rng):
    A = rng.standard_normal((6, 6))
    P = A @ A.T
    P[0, 1] += 1e-12
    S = enforce_symmetry(P)
    assert np.max(np.abs(S - S.T)) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_enforce_symmetry_preserves_spectrum(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((6, 6))
    P = A @ A.T
    P_asym = P + 1e-13 * rng.standard_normal((6, 6))
    lo = np.linalg.eigvalsh(enforce_symmetry(P_asym))[0]
    assert abs(lo - np.linalg.eigvalsh(P)[0]) < 1e-12 * max(1.0, np.trace(P))


def test_noise_defaults_and_validation():
    p = NoiseParams()
    np.testing.assert_array_equal(p.gravity, [0.0, 0.0, -9.81])
    assert p.continuous_q().shape == (12, 12)
    assert p.continuous_q()[0, 0] == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        NoiseParams(sigma_g=-1.0)
    with pytest.raises(ValueError):
        NoiseParams(sigma_im=float("nan"))
    assert NoiseParams(0, 0, 0, 0, 0).is_noiseless


def test_prior_defaults():
    P = PriorCovariance().matrix()
    assert P.shape == (21, 21)
    np.testing.assert_array_equal(np.diag(P)[0:3], 1e-4)
    np.testing.assert_array_equal(np.diag(P)[6:9], 0.25)
    np.testing.assert_array_equal(np.diag(P)[12:15], 0.0)
    np.testing.assert_array_equal(np.diag(P)[15:21], 1e-8)


def test_extrinsics_baseline():
    ext = StereoExtrinsics()
    assert ext.baseline == pytest.approx(0.2)
    np.testing.assert_array_equal(ext.R_C2C1, np.eye(3))


def test_covariance_shape_checked():
    with pytest.raises(ValueError):
        FilterState(ImuState(), [], np.eye(20), StereoExtrinsics(), NoiseParams())


def test_snapshot_row_layout():
    imu = ImuState(p_GI=np.array([1.0, 2.0, 3.0]), v_GI=np.array([4.0, 5.0, 6.0]), timestamp=7.0)
    row = initial_state(imu).snapshot_row()
    assert len(row) == len(SNAPSHOT_HEADER) == 17
    assert row[0] == 7.0 and row[1:4] == [1.0, 2.0, 3.0] and row[8:11] == [4.0, 5.0, 6.0]


@pytest.mark.parametrize("roll, pitch", [(0.0, 0.0), (0.2, -0.1), (-0.5, 0.3)])
def test_static_initialization_recovers_tilt_and_gyro_bias(roll, pitch):
    g = np.array([0.0, 0.0, -9.81])
    cr, sr, cp, sp = np.cos(roll), np.sin(roll), np.cos(pitch), np.sin(pitch)
    R = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]]) @ np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    C = R.T
    bias = np.array([0.01, -0.02, 0.005])
    samples = [ImuSample(k * 0.005, bias, -C @ g) for k in range(200)]
    imu = static_initialization(samples, g)
    np.testing.assert_allclose(imu.b_g, bias, atol=1e-15)
    # gravity direction in the body frame must match
    np.testing.assert_allclose(quat_to_rotation(imu.q_IG) @ g, C @ g, atol=1e-12)
    np.testing.assert_array_equal(imu.v_GI, 0.0)


def test_static_initialization_needs_samples():
    with pytest.raises(ValueError):
        static_initialization([], np.array([0.0, 0.0, -9.81]))
