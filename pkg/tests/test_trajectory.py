"""Reference generation: quintic segments, the task-space Jacobian, and the
damped least-squares rate map."""

import numpy as np
import pytest

from hydroarm import config
from hydroarm import manipulator as mp
from hydroarm import trajectory as tj
from hydroarm.util import rotation_log


@pytest.fixture(scope="module")
def rig6():
    return config.load_rig("rig6")


def random_joints(rng):
    return mp.JointState(
        np.array([rng.uniform(-2, 2), rng.uniform(-0.9, 0.5),
                  rng.uniform(-1.8, -0.6)]),
        np.array([rng.uniform(-1.4, 1.4), rng.uniform(-1.1, 1.1),
                  rng.uniform(-2, 2)]),
        np.zeros(6),
    )


def test_quintic_boundary_conditions():
    seg = tj.QuinticSegment(np.array([1.0, -2.0]), np.array([3.0, 4.0]), 1.0, 4.0)
    for t, p_want in ((1.0, seg.p0), (4.0, seg.p1)):
        p, v, a = tj.quintic_eval(seg, t)
        np.testing.assert_allclose(p, p_want, rtol=0, atol=1e-12)
        np.testing.assert_allclose(v, 0, atol=1e-12)
        np.testing.assert_allclose(a, 0, atol=1e-12)


def test_quintic_peak_rate_at_midpoint():
    # rest-to-rest quintic peaks at 1.875 * span / duration
    seg = tj.QuinticSegment(np.array([0.0]), np.array([2.0]), 0.0, 5.0)
    p, v, a = tj.quintic_eval(seg, 2.5)
    np.testing.assert_allclose(v, 1.875 * 2.0 / 5.0, rtol=1e-12)
    ts = np.linspace(0, 5, 2001)
    rates = np.array([tj.quintic_eval(seg, t)[1][0] for t in ts])
    assert rates.max() <= 1.875 * 2.0 / 5.0 + 1e-12


def test_quintic_clamps_outside_span():
    seg = tj.QuinticSegment(np.array([1.0]), np.array([2.0]), 2.0, 3.0)
    for t, want in ((0.0, 1.0), (10.0, 2.0)):
        p, v, a = tj.quintic_eval(seg, t)
        assert p[0] == want
        assert v[0] == 0.0 and a[0] == 0.0


def test_quintic_rejects_bad_span():
    with pytest.raises(tj.TrajectoryError):
        tj.QuinticSegment(np.zeros(1), np.ones(1), 2.0, 2.0)


def test_joint_reference_holds_between_segments():
    spec = {"type": "joint_waypoints", "segments": [
        {"t0": 1.0, "t1": 2.0, "zeta": [0.5, -0.2, -1.0]},
        {"t0": 3.0, "t1": 4.0, "xi": [0.3, 0.0, 0.0]},
    ]}
    initial = mp.JointState(np.zeros(3), np.zeros(3), np.zeros(6))
    ref = tj.build_joint_reference(spec, initial)
    js = ref.desired_state(0.5)
    np.testing.assert_array_equal(js.zeta, 0)
    np.testing.assert_array_equal(js.rates, 0)
    js = ref.desired_state(2.5)  # hold at first target
    np.testing.assert_allclose(js.zeta, [0.5, -0.2, -1.0], atol=1e-12)
    np.testing.assert_array_equal(js.rates, 0)
    js = ref.desired_state(10.0)  # second segment only moves xi
    np.testing.assert_allclose(js.zeta, [0.5, -0.2, -1.0], atol=1e-12)
    np.testing.assert_allclose(js.xi, [0.3, 0.0, 0.0], atol=1e-12)


def test_joint_reference_rejects_overlap():
    spec = {"type": "joint_waypoints", "segments": [
        {"t0": 0.0, "t1": 2.0, "zeta": [0.1, -0.2, -1.0]},
        {"t0": 1.5, "t1": 3.0, "zeta": [0.2, -0.2, -1.0]},
    ]}
    initial = mp.JointState(np.zeros(3), np.zeros(3), np.zeros(6))
    with pytest.raises(tj.TrajectoryError):
        tj.build_joint_reference(spec, initial)


def test_jacobian_matches_finite_differences(rig6):
    rng = np.random.default_rng(42)
    h = 1e-7
    for _ in range(60):
        q = np.concatenate([random_joints(rng).zeta, random_joints(rng).xi])

        def fk(q6):
            js = mp.JointState(q6[:3], q6[3:], np.zeros(6))
            return tj.ee_pose(mp.build_kinematics(js, rig6.model))

        J = tj.jacobian(mp.JointState(q[:3], q[3:], np.zeros(6)), rig6.model)
        for i in range(6):
            dq = np.zeros(6)
            dq[i] = h
            Rp, pp = fk(q + dq)
            Rm, pm = fk(q - dq)
            np.testing.assert_allclose(
                J[:3, i], (pp - pm) / (2 * h), rtol=0, atol=1e-6)
            w_fd = rotation_log(Rp @ Rm.T) / (2 * h)
            np.testing.assert_allclose(J[3:, i], w_fd, rtol=0, atol=1e-6)


def test_jacobian_velocity_consistency(rig6):
    # J @ qdot must equal the linear/angular velocity from the recursion
    rng = np.random.default_rng(7)
    for _ in range(30):
        js = random_joints(rng)
        js.rates = rng.standard_normal(6)
        vels, kin = mp.forward_velocities(js, rig6.model)
        J = tj.jacobian_from_kinematics(kin, rig6.model)
        v_e4 = vels["E4"]
        R = kin.rot["E4"]
        world = np.concatenate([R @ v_e4[:3], R @ v_e4[3:]])
        np.testing.assert_allclose(J @ js.rates, world, rtol=1e-9, atol=1e-10)


def test_dls_round_trip(rig6):
    rng = np.random.default_rng(3)
    for _ in range(40):
        js = random_joints(rng)
        J = tj.jacobian(js, rig6.model)
        rate = rng.standard_normal(6)
        sol = tj.joint_rates_from_cartesian(J, J @ rate)
        np.testing.assert_allclose(sol, rate, rtol=0, atol=1e-6)
        np.testing.assert_allclose(J @ sol, J @ rate, rtol=0, atol=1e-6)


def test_dls_raises_on_singular():
    J = np.diag([1.0, 1.0, 1.0, 1.0, 1.0, 0.0])
    with pytest.raises(tj.JacobianSingularityError):
        tj.joint_rates_from_cartesian(J, np.ones(6))


def test_straight_wrist_is_singular(rig6):
    # x-y-x wrist loses a DoF when the middle joint is at zero
    js = mp.JointState(np.array([0.0, -0.2, -1.2]), np.zeros(3), np.zeros(6))
    J = tj.jacobian(js, rig6.model)
    s = np.linalg.svd(J, compute_uv=False)
    assert s[-1] < 1e-12


def test_cartesian_tracker_converges(rig6):
    initial = mp.JointState(
        np.array([0.0, -0.2, -1.2]), np.array([0.2, 0.6, -0.3]), np.zeros(6))
    spec = {"type": "cartesian_setpoints", "segments": [
        {"t0": 0.5, "t1": 4.0, "dpos": [-0.25, -0.15, 0.1],
         "drpy": [0.1, 0.15, -0.1]},
    ]}
    trk = tj.CartesianTracker(spec, initial, rig6.model)
    dt = 1e-3
    t = 0.0
    for _ in range(6000):
        trk.step(t, dt)
        t += dt
    kin = mp.build_kinematics(trk.joints_d, rig6.model)
    R, p = tj.ee_pose(kin)
    R_d, p_d, _ = trk.pose_reference(t)
    assert np.linalg.norm(p_d - p) < 1e-6
    assert np.linalg.norm(rotation_log(R.T @ R_d)) < 1e-6


def test_cartesian_tracker_clamps_rates(rig6):
    initial = mp.JointState(
        np.array([0.0, -0.2, -1.2]), np.array([0.2, 0.6, -0.3]), np.zeros(6))
    spec = {"type": "cartesian_setpoints", "segments": [
        {"t0": 0.0, "t1": 0.2, "dpos": [-0.4, 0.3, 0.2], "drpy": [0, 0, 0]},
    ]}
    trk = tj.CartesianTracker(spec, initial, rig6.model, max_rate=0.5)
    t = 0.0
    for _ in range(400):
        js = trk.step(t, 1e-3)
        assert np.max(np.abs(js.rates)) <= 0.5 + 1e-12
        t += 1e-3
