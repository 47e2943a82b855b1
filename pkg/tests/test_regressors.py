import numpy as np
import pytest

from comanip import so3
from comanip.dynamics import (
    BodyParams,
    Pose,
    coriolis_matrix,
    grasp_matrix,
    inertia_matrix,
)
from comanip.regressors import (
    CONTACT_COULOMB_DIM,
    CONTACT_VISCOUS_DIM,
    OBJECT_DIM,
    excitation_gram,
    lump_contact_coulomb,
    lump_contact_viscous,
    object_params,
    regressor_body_friction,
    regressor_contact_coulomb,
    regressor_contact_viscous,
    regressor_geometric,
    regressor_object,
    unvech_sym,
    vech_sym,
)
from comanip.tracking import TrajectorySpec
from tests.test_dynamics import random_body, random_pose
from tests.test_tracking import make_spec


def random_kinematics(rng):
    q = random_pose(rng)
    return q, rng.normal(size=6), rng.normal(size=6), rng.normal(size=6)


def test_vech_roundtrip():
    rng = np.random.default_rng(40)
    A = rng.normal(size=(3, 3))
    S = A + A.T
    np.testing.assert_array_equal(unvech_sym(vech_sym(S)), S)


def test_object_params_layout():
    body = BodyParams(mass=2.0, inertia_cm=np.diag([1.0, 2.0, 3.0]),
                      r_p=np.array([0.1, -0.2, 0.3]), attachments=np.zeros((1, 3)))
    o = object_params(body)
    assert o.shape == (OBJECT_DIM,)
    assert o[0] == 2.0
    np.testing.assert_allclose(o[1:4], [0.2, -0.4, 0.6])
    np.testing.assert_allclose(unvech_sym(o[4:10]), body.j_p())


class TestObjectRegressor:
    def test_zero_reference_gives_zero_matrix(self):
        rng = np.random.default_rng(41)
        q, qd, _, _ = random_kinematics(rng)
        Y = regressor_object(q, qd, np.zeros(6), np.zeros(6))
        np.testing.assert_array_equal(Y, np.zeros((6, OBJECT_DIM)))

    def test_collocated_mass_column(self):
        rng = np.random.default_rng(42)
        q = Pose(x=rng.normal(size=3), R=so3.exp_so3(rng.normal(size=3)))
        qd, qd_r, qdd_r = rng.normal(size=6), rng.normal(size=6), rng.normal(size=6)
        Y = regressor_object(q, qd, qd_r, qdd_r)
        np.testing.assert_allclose(Y[:3, 0], qdd_r[:3])
        np.testing.assert_array_equal(Y[3:, 0], np.zeros(3))
        np.testing.assert_array_equal(Y[:3, 4:10], np.zeros((3, 6)))

    def test_dense_oracle_1000_instances(self):
        rng = np.random.default_rng(43)
        for _ in range(1000):
            body = random_body(rng)
            q, qd, qd_r, qdd_r = random_kinematics(rng)
            target = inertia_matrix(body, q) @ qdd_r + coriolis_matrix(body, q, qd) @ qd_r
            alpha = rng.uniform(0.1, 1.0)
            got = regressor_object(q, qd, qd_r, qdd_r) @ object_params(body, alpha)
            np.testing.assert_allclose(got, alpha * target,
                                       atol=1e-9 * (1 + np.linalg.norm(target)))

    def test_jointly_linear_in_reference(self):
        rng = np.random.default_rng(44)
        body = random_body(rng)
        q, qd, qd_r, qdd_r = random_kinematics(rng)
        o = object_params(body)
        a = 3.7
        scaled = regressor_object(q, qd, a * qd_r, a * qdd_r) @ o
        np.testing.assert_allclose(scaled, a * (regressor_object(q, qd, qd_r, qdd_r) @ o),
                                   atol=1e-10)

    def test_effort_shares_sum_to_total(self):
        rng = np.random.default_rng(45)
        body = random_body(rng)
        q, qd, qd_r, qdd_r = random_kinematics(rng)
        target = inertia_matrix(body, q) @ qdd_r + coriolis_matrix(body, q, qd) @ qd_r
        Y = regressor_object(q, qd, qd_r, qdd_r)
        shares = rng.dirichlet(np.ones(5))
        total = sum(Y @ object_params(body, a) for a in shares)
        np.testing.assert_allclose(total, target, atol=1e-9 * (1 + np.linalg.norm(target)))

    def test_gravity_column(self):
        rng = np.random.default_rng(46)
        gravity = np.array([0, 0, -9.81, 0, 0, 0.0])
        direction = gravity / np.linalg.norm(gravity)
        body = random_body(rng)
        body.gravity = gravity
        q, qd, qd_r, qdd_r = random_kinematics(rng)
        H, C = inertia_matrix(body, q), coriolis_matrix(body, q, qd)
        alpha = 0.25
        o = object_params(body, alpha, gravity_dir=direction)
        assert o.shape == (OBJECT_DIM + 1,)
        got = regressor_object(q, qd, qd_r, qdd_r, gravity_dir=direction) @ o
        target = alpha * (H @ qdd_r + C @ qd_r + gravity)
        np.testing.assert_allclose(got, target, atol=1e-9 * (1 + np.linalg.norm(target)))


class TestGeometricRegressor:
    def test_zero_force_gives_zero_matrix(self):
        # torque block of the wrench never enters: the grasp mismatch is
        # [[0,0],[hat(R r_err),0]] so only the force block is transported
        rng = np.random.default_rng(47)
        q = random_pose(rng)
        F = np.concatenate([np.zeros(3), rng.normal(size=3)])
        np.testing.assert_array_equal(regressor_geometric(F, q), np.zeros((6, 3)))

    def test_unit_force_block(self):
        q = Pose(x=np.zeros(3), R=np.eye(3))
        F = np.array([0, 0, 1.0, 0, 0, 0])
        np.testing.assert_array_equal(regressor_geometric(F, q)[3:], so3.hat([0, 0, 1.0]))
        np.testing.assert_array_equal(regressor_geometric(F, q)[:3], np.zeros((3, 3)))

    def test_grasp_mismatch_identity_1000_instances(self):
        rng = np.random.default_rng(48)
        for _ in range(1000):
            q = random_pose(rng)
            F = rng.normal(size=6)
            r, r_est = rng.normal(size=3), rng.normal(size=3)
            lhs = -(grasp_matrix(q, r_est) - grasp_matrix(q, r)) @ F
            rhs = regressor_geometric(F, q) @ (r_est - r)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.linalg.norm(lhs)))


class TestBodyFrictionRegressor:
    def test_zero_reference(self):
        rng = np.random.default_rng(49)
        np.testing.assert_array_equal(regressor_body_friction(random_pose(rng), np.zeros(6)),
                                      np.zeros((6, 6)))

    def test_identity_rotation_diag_expansion(self):
        q = Pose(x=np.zeros(3), R=np.eye(3))
        qd_r = np.arange(1.0, 7.0)
        np.testing.assert_allclose(regressor_body_friction(q, qd_r), np.diag(qd_r))

    def test_dense_oracle_1000_instances(self):
        rng = np.random.default_rng(50)
        for _ in range(1000):
            q = random_pose(rng)
            qd_r = rng.normal(size=6)
            lam = rng.uniform(0, 3, size=6)
            alpha = rng.uniform(0.1, 1.0)
            RR = np.zeros((6, 6))
            RR[:3, :3] = q.R
            RR[3:, 3:] = q.R
            target = alpha * (RR @ np.diag(lam) @ RR.T @ qd_r)
            got = regressor_body_friction(q, qd_r) @ (alpha * lam)
            np.testing.assert_allclose(got, target, atol=1e-12 * (1 + np.linalg.norm(target)))


class TestContactRegressors:
    def test_viscous_zero_reference(self):
        rng = np.random.default_rng(51)
        Y = regressor_contact_viscous(random_pose(rng), np.zeros(6))
        np.testing.assert_array_equal(Y, np.zeros((6, CONTACT_VISCOUS_DIM)))

    def test_viscous_collocated_reduces_to_diag(self):
        q = Pose(x=np.zeros(3), R=np.eye(3))
        qd_r = np.arange(1.0, 7.0)
        d = np.array([2.0, 1.0, 0.5, 3.0, 0.25, 4.0])
        got = regressor_contact_viscous(q, qd_r) @ lump_contact_viscous(d, np.zeros(3))
        np.testing.assert_allclose(got, d * qd_r, atol=1e-12)

    def test_viscous_dense_oracle_1000_instances(self):
        rng = np.random.default_rng(52)
        for _ in range(1000):
            q = random_pose(rng)
            qd_r = rng.normal(size=6)
            d = rng.uniform(0, 2, size=6)
            r = rng.normal(size=3)
            M = grasp_matrix(q, r)
            target = M @ (np.diag(d) @ (M.T @ qd_r))
            got = regressor_contact_viscous(q, qd_r) @ lump_contact_viscous(d, r)
            np.testing.assert_allclose(got, target, atol=1e-10 * (1 + np.linalg.norm(target)))

    def test_coulomb_dense_oracle_1000_instances(self):
        rng = np.random.default_rng(53)
        for _ in range(1000):
            q = random_pose(rng)
            v = rng.normal(size=6)
            c = rng.uniform(0, 1, size=6)
            r = rng.normal(size=3)
            M = grasp_matrix(q, r)
            target = M @ (np.diag(c) @ np.sign(v))
            got = regressor_contact_coulomb(q, v) @ lump_contact_coulomb(c, r)
            np.testing.assert_allclose(got, target, atol=1e-10 * (1 + np.linalg.norm(target)))

    def test_coulomb_dimensions(self):
        rng = np.random.default_rng(54)
        Y = regressor_contact_coulomb(random_pose(rng), rng.normal(size=6))
        assert Y.shape == (6, CONTACT_COULOMB_DIM)


class TestExcitationGram:
    def test_identical_blocks_cap_rank(self):
        spec = make_spec()
        for n in (2, 6):
            _, rank = excitation_gram(spec, n, (0.0, 10.0), samples=100)
            assert rank <= 13

    def test_single_agent_default_bank_is_full_rank(self):
        spec = make_spec()
        gram, rank = excitation_gram(spec, 1, (0.0, 10.0), samples=200)
        assert gram.shape == (13, 13)
        assert rank == 13

    def test_stationary_trajectory_is_rank_deficient(self):
        base = make_spec()
        spec = TrajectorySpec(lin_amp=np.zeros_like(base.lin_amp), lin_freq=base.lin_freq,
                              ang_amp=np.zeros_like(base.ang_amp), ang_freq=base.ang_freq)
        for n in (1, 3):
            _, rank = excitation_gram(spec, n, (0.0, 5.0), samples=50)
            assert rank < 13

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            excitation_gram(make_spec(), 1, (1.0, 1.0))
        with pytest.raises(ValueError):
            excitation_gram(make_spec(), 1, (0.0, 1.0), samples=5)
