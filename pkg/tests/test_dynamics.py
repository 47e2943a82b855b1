import numpy as np
import pytest

from comanip import so3
from comanip.dynamics import (
    BodyParams,
    FrictionParams,
    Pose,
    contact_twist,
    coriolis_matrix,
    forward_dynamics,
    friction_wrench,
    grasp_apply,
    grasp_matrix,
    inertia_matrix,
    kinetic_energy,
)

TABLE_BODY = BodyParams(
    mass=1.89e4,
    inertia_cm=np.diag([1.54e4, 1.54e4, 2.37e3]),
    r_p=np.array([0.0, 0.0, 1.5]),
    attachments=np.array([
        [0.0, 0.0, 1.5],
        [0.0, 0.0, -1.5],
        [0.5, 0.0, 0.0],
        [-0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [0.0, -0.5, 0.0],
    ]),
)


def random_body(rng, n_agents=3):
    mass = rng.uniform(0.5, 50.0)
    A = rng.normal(size=(3, 3))
    inertia = A @ A.T + np.eye(3) * rng.uniform(0.5, 2.0)
    return BodyParams(
        mass=mass,
        inertia_cm=inertia,
        r_p=rng.normal(scale=0.8, size=3),
        attachments=rng.normal(scale=1.0, size=(n_agents, 3)),
    )


def random_pose(rng):
    return Pose(x=rng.normal(size=3), R=so3.exp_so3(rng.normal(size=3)))


def fd_inertia_derivative(body, q, qd, delta=1e-6):
    """Central-difference d/dt H along the true kinematic flow (only R moves H)."""
    w = qd[3:]
    q_plus = Pose(x=q.x + delta * qd[:3], R=so3.exp_so3(delta * w) @ q.R)
    q_minus = Pose(x=q.x - delta * qd[:3], R=so3.exp_so3(-delta * w) @ q.R)
    return (inertia_matrix(body, q_plus) - inertia_matrix(body, q_minus)) / (2 * delta)


class TestInertiaMatrix:
    def test_table_body_blocks(self):
        H = inertia_matrix(TABLE_BODY, Pose(x=np.zeros(3), R=np.eye(3)))
        np.testing.assert_allclose(H[:3, :3], 1.89e4 * np.eye(3))
        # J_p(2,2) = I_zz + m(|r_p|^2 - r_pz^2) = I_zz for r_p along z
        assert H[5, 5] == pytest.approx(2.37e3)
        np.testing.assert_allclose(H[:3, 3:], 1.89e4 * so3.hat([0, 0, 1.5]))
        np.testing.assert_allclose(H[3:, :3], -1.89e4 * so3.hat([0, 0, 1.5]))

    def test_collocated_measurement_point_is_block_diagonal(self):
        body = BodyParams(mass=7.0, inertia_cm=np.diag([1.0, 2.0, 3.0]),
                          r_p=np.zeros(3), attachments=np.zeros((1, 3)))
        H = inertia_matrix(body, Pose(x=np.zeros(3), R=np.eye(3)))
        np.testing.assert_array_equal(H[:3, :3], 7.0 * np.eye(3))
        np.testing.assert_array_equal(H[3:, 3:], np.diag([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(H[:3, 3:], np.zeros((3, 3)))

    def test_symmetric_positive_definite_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            body = random_body(rng)
            H = inertia_matrix(body, random_pose(rng))
            assert np.linalg.norm(H - H.T) < 1e-12 * max(1.0, np.linalg.norm(H))
            assert np.min(np.linalg.eigvalsh(H)) > 0

    def test_schur_identity(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            body = random_body(rng)
            q = random_pose(rng)
            u_hat = so3.hat(q.R @ body.r_p)
            lhs = q.R @ body.j_p() @ q.R.T + body.mass * (u_hat @ u_hat)
            rhs = q.R @ body.inertia_cm @ q.R.T
            np.testing.assert_allclose(lhs, rhs, atol=1e-9 * max(1.0, np.linalg.norm(rhs)))


class TestCoriolisMatrix:
    def test_rest_state_gives_zero(self):
        rng = np.random.default_rng(13)
        body = random_body(rng)
        C = coriolis_matrix(body, random_pose(rng), np.zeros(6))
        np.testing.assert_array_equal(C, np.zeros((6, 6)))

    def test_inertia_derivative_minus_twice_coriolis_skew(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            body = random_body(rng)
            q = random_pose(rng)
            qd = rng.normal(size=6)
            K = fd_inertia_derivative(body, q, qd) - 2 * coriolis_matrix(body, q, qd)
            scale = max(1.0, body.mass)
            np.testing.assert_allclose(K, -K.T, atol=1e-5 * scale)
            s = rng.normal(size=6)
            assert abs(s @ K @ s) <= 1e-6 * scale * (1 + s @ s) ** 1.5


class TestGraspMatrix:
    def test_zero_offset_is_identity(self):
        q = Pose(x=np.zeros(3), R=np.eye(3))
        np.testing.assert_array_equal(grasp_matrix(q, np.zeros(3)), np.eye(6))

    def test_inverse_is_negated_offset(self):
        rng = np.random.default_rng(15)
        for _ in range(100):
            q = random_pose(rng)
            r = rng.normal(size=3)
            np.testing.assert_allclose(grasp_matrix(q, r) @ grasp_matrix(q, -r),
                                       np.eye(6), atol=1e-12)

    def test_product_is_sum_minus_identity(self):
        rng = np.random.default_rng(16)
        for _ in range(100):
            q = random_pose(rng)
            r_i, r_j = rng.normal(size=3), rng.normal(size=3)
            lhs = grasp_matrix(q, r_i) @ grasp_matrix(q, r_j)
            rhs = grasp_matrix(q, r_i) + grasp_matrix(q, r_j) - np.eye(6)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.linalg.norm(lhs)))

    def test_determinant_one(self):
        rng = np.random.default_rng(17)
        q = random_pose(rng)
        assert np.linalg.det(grasp_matrix(q, rng.normal(size=3))) == pytest.approx(1.0)

    def test_grasp_apply_matches_matrix(self):
        rng = np.random.default_rng(18)
        q = random_pose(rng)
        r, w = rng.normal(size=3), rng.normal(size=6)
        np.testing.assert_allclose(grasp_apply(q, r, w), grasp_matrix(q, r) @ w, atol=1e-12)

    def test_contact_twist_matches_transpose(self):
        rng = np.random.default_rng(19)
        q = random_pose(rng)
        r, qd = rng.normal(size=3), rng.normal(size=6)
        np.testing.assert_allclose(contact_twist(q, qd, r), grasp_matrix(q, r).T @ qd,
                                   atol=1e-12)


class TestFrictionWrench:
    def test_mode_none_is_zero(self):
        rng = np.random.default_rng(20)
        body = random_body(rng)
        assert np.array_equal(friction_wrench(body, random_pose(rng), rng.normal(size=6)),
                              np.zeros(6))

    def test_body_viscous_diagonal_case(self):
        body = BodyParams(mass=1.0, inertia_cm=np.eye(3), r_p=np.zeros(3),
                          attachments=np.zeros((1, 3)),
                          friction=FrictionParams(mode="body_viscous",
                                                  viscous_body=np.ones(6)))
        qd = np.array([1.0, 0, 0, 0, 0, 0])
        np.testing.assert_allclose(
            friction_wrench(body, Pose(x=np.zeros(3), R=np.eye(3)), qd), qd)

    def test_body_viscous_frame_invariance(self):
        # blkdiag(R,R) Lambda blkdiag(R,R)^T with isotropic Lambda is Lambda
        rng = np.random.default_rng(21)
        body = random_body(rng, n_agents=1)
        body.friction = FrictionParams(mode="body_viscous", viscous_body=2.5 * np.ones(6))
        qd = rng.normal(size=6)
        np.testing.assert_allclose(friction_wrench(body, random_pose(rng), qd), 2.5 * qd,
                                   atol=1e-12)

    def test_contact_collocated_identity(self):
        body = BodyParams(mass=1.0, inertia_cm=np.eye(3), r_p=np.zeros(3),
                          attachments=np.zeros((1, 3)),
                          friction=FrictionParams(mode="contact",
                                                  viscous_contact=np.ones(6),
                                                  coulomb_contact=np.zeros(6)))
        qd = np.array([1.0, 0, 0, 0, 0, 0])
        np.testing.assert_allclose(
            friction_wrench(body, Pose(x=np.zeros(3), R=np.eye(3)), qd), qd)

    def test_contact_matches_dense_formula(self):
        rng = np.random.default_rng(22)
        body = random_body(rng, n_agents=4)
        d = rng.uniform(0, 2, size=6)
        c = rng.uniform(0, 1, size=6)
        body.friction = FrictionParams(mode="contact", viscous_contact=d, coulomb_contact=c)
        q, qd = random_pose(rng), rng.normal(size=6)
        expected = np.zeros(6)
        for r in body.attachments:
            M = grasp_matrix(q, r)
            v = M.T @ qd
            expected += M @ (np.diag(d) @ v + np.diag(c) @ np.sign(v))
        np.testing.assert_allclose(friction_wrench(body, q, qd), expected, atol=1e-10)


class TestForwardDynamics:
    def test_equilibrium(self):
        rng = np.random.default_rng(23)
        body = random_body(rng)
        qdd = forward_dynamics(body, random_pose(rng), np.zeros(6), np.zeros((3, 6)))
        np.testing.assert_allclose(qdd, np.zeros(6), atol=1e-12)

    def test_newtons_law_collocated(self):
        body = BodyParams(mass=4.0, inertia_cm=np.eye(3), r_p=np.zeros(3),
                          attachments=np.zeros((1, 3)))
        tau = np.array([[4.0 * 2.5, 0, 0, 0, 0, 0]])
        qdd = forward_dynamics(body, Pose(x=np.zeros(3), R=np.eye(3)), np.zeros(6), tau)
        np.testing.assert_allclose(qdd, [2.5, 0, 0, 0, 0, 0], atol=1e-12)

    def test_inactive_agents_contribute_nothing(self):
        rng = np.random.default_rng(24)
        body = random_body(rng, n_agents=3)
        q, qd = random_pose(rng), rng.normal(size=6)
        wrenches = rng.normal(size=(3, 6))
        masked = forward_dynamics(body, q, qd, wrenches, active=np.array([True, False, True]))
        reference = forward_dynamics(body, q, qd,
                                     np.array([wrenches[0], np.zeros(6), wrenches[2]]))
        np.testing.assert_allclose(masked, reference, atol=1e-12)

    def test_agent_relabeling_equivariance(self):
        rng = np.random.default_rng(25)
        body = random_body(rng, n_agents=4)
        q, qd = random_pose(rng), rng.normal(size=6)
        wrenches = rng.normal(size=(4, 6))
        perm = rng.permutation(4)
        permuted = BodyParams(mass=body.mass, inertia_cm=body.inertia_cm, r_p=body.r_p,
                              attachments=body.attachments[perm])
        np.testing.assert_allclose(
            forward_dynamics(body, q, qd, wrenches),
            forward_dynamics(permuted, q, qd, wrenches[perm]), atol=1e-12)

    def test_singular_inertia_rejected(self):
        body = BodyParams(mass=1e-20, inertia_cm=np.eye(3) * 1e20, r_p=np.zeros(3),
                          attachments=np.zeros((1, 3)))
        with pytest.raises(np.linalg.LinAlgError):
            forward_dynamics(body, Pose(x=np.zeros(3), R=np.eye(3)), np.zeros(6),
                             np.zeros((1, 6)))

    def test_principal_axis_spin_is_fixed_point(self):
        body = BodyParams(mass=2.0, inertia_cm=np.diag([1.0, 2.0, 3.0]), r_p=np.zeros(3),
                          attachments=np.zeros((1, 3)))
        qd = np.array([0, 0, 0, 0, 0, 0.7])
        qdd = forward_dynamics(body, Pose(x=np.zeros(3), R=np.eye(3)), qd, np.zeros((1, 6)))
        np.testing.assert_allclose(qdd, np.zeros(6), atol=1e-10)

    def test_energy_conserved_torque_free(self):
        # Heun-integrated tumble: kinetic energy must hold to 1e-4 relative over 10 s
        rng = np.random.default_rng(26)
        body = random_body(rng, n_agents=1)
        q = Pose(x=np.zeros(3), R=np.eye(3))
        qd = np.array([0.3, -0.2, 0.1, 0.4, -0.3, 0.5])
        h = 1e-2
        e0 = kinetic_energy(body, q, qd)
        zero_wrench = np.zeros((1, 6))
        for _ in range(1000):
            qdd1 = forward_dynamics(body, q, qd, zero_wrench)
            q_mid = Pose(x=q.x + h * qd[:3], R=so3.exp_so3(h * qd[3:]) @ q.R)
            qd_mid = qd + h * qdd1
            qdd2 = forward_dynamics(body, q_mid, qd_mid, zero_wrench)
            q = Pose(x=q.x + 0.5 * h * (qd[:3] + qd_mid[:3]),
                     R=so3.exp_so3(0.5 * h * (qd[3:] + qd_mid[3:])) @ q.R)
            qd = qd + 0.5 * h * (qdd1 + qdd2)
        assert abs(kinetic_energy(body, q, qd) - e0) <= 1e-4 * e0


class TestBodyParamsValidation:
    def test_accepts_table_body(self):
        TABLE_BODY.validate()

    def test_rejects_nonpositive_mass(self):
        body = BodyParams(mass=0.0, inertia_cm=np.eye(3), r_p=np.zeros(3),
                          attachments=np.zeros((1, 3)))
        with pytest.raises(ValueError):
            body.validate()

    def test_rejects_indefinite_inertia(self):
        body = BodyParams(mass=1.0, inertia_cm=np.diag([1.0, 1.0, -1.0]), r_p=np.zeros(3),
                          attachments=np.zeros((1, 3)))
        with pytest.raises(ValueError):
            body.validate()
