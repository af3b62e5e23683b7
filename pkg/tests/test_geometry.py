import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from pressfit.geometry import (
    DeltaAction,
    NormalizationScales,
    Pose6D,
    action_mse,
    compose,
    delta_between,
    euler_xyz_from_quat,
    matrix_to_quat,
    minmax_denormalize,
    minmax_normalize,
    quat_from_euler_xyz,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    rotation_angle_between,
)


def random_pose(rng):
    q = quat_normalize(rng.standard_normal(4))
    return Pose6D(rng.uniform(-1, 1, 3), q)


# ---- quaternion / Euler conversions against independent oracles ----


def explicit_euler_matrix(a, b, c):
    # oracle: plain matrix product Rx @ Ry @ Rz, no quaternions involved
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rx @ ry @ rz


def test_euler_quat_matches_matrix_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        e = rng.uniform(-np.pi, np.pi, 3)
        got = quat_to_matrix(quat_from_euler_xyz(e))
        want = explicit_euler_matrix(*e)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_euler_quat_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(200):
        e = rng.uniform(-np.pi, np.pi, 3)
        q = quat_from_euler_xyz(e)
        q_ref = Rotation.from_euler("XYZ", e).as_quat()  # scipy is (x, y, z, w)
        q_ref = quat_normalize(np.array([q_ref[3], q_ref[0], q_ref[1], q_ref[2]]))
        assert rotation_angle_between(q, q_ref) < 1e-9


def test_matrix_quat_round_trip_all_shepperd_branches():
    # near-180 degree rotations about each axis exercise every pivot branch
    rng = np.random.default_rng(2)
    axes = np.vstack([np.eye(3), rng.standard_normal((50, 3))])
    for axis in axes:
        axis = axis / np.linalg.norm(axis)
        for ang in (0.01, np.pi / 2, np.pi - 1e-7, rng.uniform(0, np.pi)):
            r = Rotation.from_rotvec(axis * ang).as_matrix()
            np.testing.assert_allclose(quat_to_matrix(matrix_to_quat(r)), r, atol=1e-9)


# ---- compose / delta_between ----


def test_round_trip_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(500):
        a, b = random_pose(rng), random_pose(rng)
        d = delta_between(a, b)
        c = compose(a, d)
        assert np.linalg.norm(c.translation - b.translation) < 1e-9
        assert rotation_angle_between(c.quaternion, b.quaternion) < 1e-7


def test_round_trip_near_gimbal_lock():
    rng = np.random.default_rng(4)
    for sign in (1.0, -1.0):
        for jitter in (0.0, 1e-9, 1e-6):
            e = np.array([0.3, sign * (np.pi / 2 - jitter), -0.7])
            a = random_pose(rng)
            b = compose(a, DeltaAction(np.zeros(3), e))
            c = compose(a, delta_between(a, b))
            assert rotation_angle_between(c.quaternion, b.quaternion) < 1e-7


def test_known_z_rotation_delta():
    a = Pose6D.identity()
    b = Pose6D(np.zeros(3), quat_from_euler_xyz([0, 0, np.pi / 2]))
    d = delta_between(a, b)
    np.testing.assert_allclose(d.rotation, [0.0, 0.0, np.pi / 2], atol=1e-12)
    np.testing.assert_allclose(d.translation, 0.0, atol=1e-12)


def test_identity_delta_is_noop():
    rng = np.random.default_rng(5)
    p = random_pose(rng)
    q = compose(p, DeltaAction.zero())
    assert np.array_equal(p.translation, q.translation)
    assert rotation_angle_between(p.quaternion, q.quaternion) < 1e-12


def test_canonical_sign_after_ops():
    rng = np.random.default_rng(6)
    for _ in range(100):
        p = compose(random_pose(rng), DeltaAction(np.zeros(3), rng.uniform(-3, 3, 3)))
        assert p.quaternion[0] >= 0.0
        assert abs(np.linalg.norm(p.quaternion) - 1.0) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    a, b = random_pose(rng), random_pose(rng)
    c = compose(a, delta_between(a, b))
    assert np.linalg.norm(c.translation - b.translation) < 1e-9
    assert rotation_angle_between(c.quaternion, b.quaternion) < 1e-7


def test_pose_rejects_bad_quaternion():
    with pytest.raises(ValueError):
        Pose6D(np.zeros(3), np.array([1.0, 0.0, 0.1, 0.0]))  # norm off by >1e-6
    with pytest.raises(ValueError):
        Pose6D(np.zeros(3), np.array([np.nan, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        Pose6D(np.array([np.inf, 0, 0]), np.array([1.0, 0, 0, 0]))


def test_quat_multiply_matches_scipy():
    rng = np.random.default_rng(7)
    for _ in range(100):
        qa, qb = quat_normalize(rng.standard_normal(4)), quat_normalize(rng.standard_normal(4))
        got = quat_multiply(qa, qb)
        ra = Rotation.from_quat([qa[1], qa[2], qa[3], qa[0]])
        rb = Rotation.from_quat([qb[1], qb[2], qb[3], qb[0]])
        ref = (ra * rb).as_quat()
        ref = np.array([ref[3], ref[0], ref[1], ref[2]])
        assert rotation_angle_between(quat_normalize(got), quat_normalize(ref)) < 1e-9


def test_euler_extraction_round_trip():
    rng = np.random.default_rng(8)
    for _ in range(300):
        q = quat_normalize(rng.standard_normal(4))
        e = euler_xyz_from_quat(q)
        assert rotation_angle_between(quat_from_euler_xyz(e), q) < 1e-7


# ---- normalization and the error metric ----


def test_minmax_normalize_frozen_example():
    actions = np.array(
        [
            [0.0, -1.0, 2.0, 0.0, 0.5, -0.5],
            [1.0, 1.0, 4.0, 0.0, 1.5, 0.5],
            [0.5, 0.0, 3.0, 0.0, 1.0, 0.0],
        ]
    )
    scales = NormalizationScales.fit(actions)
    normed = minmax_normalize(actions, scales)
    assert normed.min() >= 0.0 and normed.max() <= 1.0
    np.testing.assert_allclose(normed[2], [0.5, 0.5, 0.5, 0.5, 0.5, 0.5], atol=1e-12)
    # component 3 is degenerate (constant zero) and must pin to 0.5
    np.testing.assert_allclose(normed[:, 3], 0.5)


def test_degenerate_component_logs_warning(caplog):
    actions = np.zeros((4, 6))
    actions[:, 0] = [0, 1, 2, 3]
    with caplog.at_level(logging.WARNING, logger="pressfit.geometry"):
        NormalizationScales.fit(actions)
    assert any("degenerate" in r.message for r in caplog.records)


def test_normalize_denormalize_round_trip():
    rng = np.random.default_rng(9)
    actions = rng.uniform(-2, 2, (50, 6))
    scales = NormalizationScales.fit(actions)
    back = minmax_denormalize(minmax_normalize(actions, scales), scales)
    np.testing.assert_allclose(back, actions, atol=1e-12)


def test_mse_counts_every_scalar_entry():
    n = 10
    pred = np.zeros((n, 6))
    target = np.zeros((n, 6))
    pred[0, 2] = 1.0  # single bad component
    assert action_mse(pred, target) == pytest.approx(1.0 / (6 * n), abs=1e-15)
    with pytest.raises(ValueError):
        action_mse(np.zeros((2, 6)), np.zeros((3, 6)))


def test_pose_features_layout():
    p = Pose6D(np.array([0.1, 0.2, 0.3]), quat_from_euler_xyz([0.0, 0.0, 0.4]))
    f = p.features()
    np.testing.assert_allclose(f[:3], [0.1, 0.2, 0.3])
    np.testing.assert_allclose(f[3:], [0.0, 0.0, 0.4], atol=1e-12)
