"""Linear parameterizations of the payload dynamics.

Every matrix here satisfies an exact product identity: regressor(kinematics)
@ parameter_vector reproduces an unknown-parameter-dependent dynamics term.
The object parameter layout is the 10 standard rigid-body constants about the
measurement point,

    [mass, mass * r_p (3), vech(J_p) (6)],  vech order (11, 22, 33, 12, 13, 23),

optionally followed by one gravity-scale entry when a constant gravity
direction is configured. The contact-friction parameterizations lump unknown
coefficient/moment-arm products; see CONTACT_VISCOUS_DIM / CONTACT_COULOMB_DIM
for the layouts.
"""

import numpy as np

from .dynamics import grasp_matrix
from .so3 import hat
from .tracking import DesiredTrajectory

OBJECT_DIM = 10

# viscous contact lumping: 6 plain coefficients, then 9 products d_a * r_e for
# the three linear coefficients, then 18 products d_a * vech(r r^T); the
# angular-coefficient cross terms are identically zero and already pruned
CONTACT_VISCOUS_DIM = 6 + 9 + 18

# coulomb contact lumping: 6 plain coefficients plus 9 products c_a * r_e
CONTACT_COULOMB_DIM = 6 + 9

_VECH_PAIRS = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]

# default numeric-rank cutoff for the excitation Gram, relative to sigma_max
RANK_RTOL = 1e-8


def vech_sym(A):
    """Stack the 6 independent entries of a symmetric matrix, diagonal first."""
    return np.array([A[i, j] for i, j in _VECH_PAIRS])


def unvech_sym(v):
    A = np.empty((3, 3))
    for k, (i, j) in enumerate(_VECH_PAIRS):
        A[i, j] = v[k]
        A[j, i] = v[k]
    return A


def object_params(body, alpha=1.0, gravity_dir=None):
    """Ground-truth object parameter vector scaled by an effort share alpha."""
    o = np.empty(OBJECT_DIM)
    o[0] = body.mass
    o[1:4] = body.mass * body.r_p
    o[4:10] = vech_sym(body.j_p())
    if gravity_dir is not None:
        scale = float(np.asarray(gravity_dir, dtype=float) @ body.gravity)
        o = np.append(o, scale)
    return alpha * o


def _inertia_columns(y):
    """3x6 map L with J @ y = L(y) @ vech(J)."""
    return np.array([
        [y[0], 0.0, 0.0, y[1], y[2], 0.0],
        [0.0, y[1], 0.0, y[0], 0.0, y[2]],
        [0.0, 0.0, y[2], 0.0, y[0], y[1]],
    ])


def regressor_object(q, qd, qd_r, qdd_r, gravity_dir=None):
    """6x10 regressor with Y @ (alpha * object_params) = alpha * (H qdd_r + C qd_r).

    Columns depend only on kinematic quantities and are jointly linear in
    (qd_r, qdd_r). With gravity_dir set, one extra column reproduces the
    constant gravity term scaled by its parameter entry.
    """
    R = q.R
    w = qd[3:]
    v_r, w_r = qd_r[:3], qd_r[3:]
    a_r, al_r = qdd_r[:3], qdd_r[3:]
    w_hat, wr_hat = hat(w), hat(w_r)
    ncols = OBJECT_DIM + (0 if gravity_dir is None else 1)
    Y = np.zeros((6, ncols))
    Y[:3, 0] = a_r
    Y[:3, 1:4] = (-hat(al_r) - w_hat @ wr_hat) @ R
    Y[3:, 1:4] = (hat(a_r) + w_hat @ hat(v_r) - wr_hat @ hat(qd[:3])) @ R
    Y[3:, 4:10] = R @ _inertia_columns(R.T @ al_r) + w_hat @ R @ _inertia_columns(R.T @ w_r)
    if gravity_dir is not None:
        Y[:, 10] = np.asarray(gravity_dir, dtype=float)
    return Y


def regressor_geometric(F, q):
    """6x3 regressor with -(M(r_est) - M(r)) @ F = Y @ (r_est - r) for all r_est, r.

    Only the force block of F enters: the grasp-matrix mismatch moves torque
    only, by (R r_err) x f.
    """
    Y = np.zeros((6, 3))
    Y[3:, :] = hat(F[:3]) @ q.R
    return Y


def regressor_body_friction(q, qd_r):
    """6x6 regressor with Y @ (alpha * diag(Lambda)) = alpha * D(q) @ qd_r,

    where D(q) = blkdiag(R, R) diag(Lambda) blkdiag(R, R)^T.
    """
    R = q.R
    Y = np.zeros((6, 6))
    Y[:3, :3] = R @ np.diag(R.T @ qd_r[:3])
    Y[3:, 3:] = R @ np.diag(R.T @ qd_r[3:])
    return Y


def _contact_viscous_product(q, qd_r, d, r):
    """Dense M(r) diag(d) M(r)^T qd_r used to extract lumped columns."""
    M = grasp_matrix(q, r)
    return M @ (d * (M.T @ qd_r))


def regressor_contact_viscous(q, qd_r):
    """6x33 regressor for viscous drag applied at an unknown attachment.

    M(r) diag(d) M(r)^T qd_r is linear in d, bilinear in (d_lin, r) and
    bilinear in (d_lin, r r^T); columns are extracted exactly by polarization
    of that polynomial, so the identity with lump_contact_viscous is exact.
    """
    Y = np.empty((6, CONTACT_VISCOUS_DIM))
    e3 = np.eye(3)
    e6 = np.eye(6)
    zero_r = np.zeros(3)
    base = [_contact_viscous_product(q, qd_r, e6[a], zero_r) for a in range(6)]
    for a in range(6):
        Y[:, a] = base[a]
    col = 6
    for a in range(3):
        for e in range(3):
            plus = _contact_viscous_product(q, qd_r, e6[a], e3[e])
            minus = _contact_viscous_product(q, qd_r, e6[a], -e3[e])
            Y[:, col] = 0.5 * (plus - minus)
            col += 1

    def quad_part(a, r):
        plus = _contact_viscous_product(q, qd_r, e6[a], r)
        minus = _contact_viscous_product(q, qd_r, e6[a], -r)
        return 0.5 * (plus + minus) - base[a]

    for a in range(3):
        diag_cols = [quad_part(a, e3[e]) for e in range(3)]
        for e, (i, j) in enumerate(_VECH_PAIRS):
            if i == j:
                Y[:, col] = diag_cols[i]
            else:
                Y[:, col] = quad_part(a, e3[i] + e3[j]) - diag_cols[i] - diag_cols[j]
            col += 1
    return Y


def lump_contact_viscous(d, r):
    """Map true (diag coefficients, moment arm) to the 33 lumped parameters."""
    d = np.asarray(d, dtype=float)
    r = np.asarray(r, dtype=float)
    bilinear = np.outer(d[:3], r).ravel()
    quad = np.outer(d[:3], vech_sym(np.outer(r, r))).ravel()
    return np.concatenate([d, bilinear, quad])


def regressor_contact_coulomb(q, v_meas):
    """6x15 regressor for Coulomb drag at an unknown attachment.

    The sign pattern comes from the agent's own measured rates, so the
    unknown moment arm enters only through the grasp transport (affine in r).
    """
    s = np.sign(np.asarray(v_meas, dtype=float))
    Y = np.zeros((6, CONTACT_COULOMB_DIM))
    Y[:6, :6] = np.diag(s)
    col = 6
    for a in range(3):
        force = s[a] * np.eye(3)[a]
        for e in range(3):
            Y[3:, col] = np.cross(q.R @ np.eye(3)[e], force)
            col += 1
    return Y


def lump_contact_coulomb(c, r):
    """Map true (diag Coulomb coefficients, moment arm) to the 15 lumped parameters."""
    c = np.asarray(c, dtype=float)
    r = np.asarray(r, dtype=float)
    return np.concatenate([c, np.outer(c[:3], r).ravel()])


def stacked_regressor(q, qd, qd_r, qdd_r, force, n_agents, gravity_dir=None):
    """[Y_obj, Y_geom] repeated once per agent, as one 6 x (13 N) matrix."""
    Y1 = np.hstack([
        regressor_object(q, qd, qd_r, qdd_r, gravity_dir=gravity_dir),
        regressor_geometric(force, q),
    ])
    return np.tile(Y1, (1, n_agents))


def excitation_gram(spec, n_agents, window, samples=200, rank_rtol=RANK_RTOL):
    """Time-averaged Gram of the stacked regressor along the desired trajectory.

    Regressors are evaluated at (q_d, qd_d, qd_d, qdd_d); the geometric block
    uses the force a unit point mass would need on that trajectory, which
    keeps the Gram a pure function of the trajectory. Returns the Gram and
    its numeric rank at rank_rtol * sigma_max. Identical per-agent blocks make
    the rank at most 13 for any n_agents >= 2, whatever the trajectory.
    """
    t0, t1 = window
    if not t1 > t0:
        raise ValueError("window must satisfy t1 > t0")
    if samples < 10:
        raise ValueError("need at least 10 samples")
    h = (t1 - t0) / samples
    traj = DesiredTrajectory(spec, h)
    while traj.t < t0 - 1e-12:
        traj.advance()
    dim = 13 * n_agents
    gram = np.zeros((dim, dim))
    for _ in range(samples):
        des = traj.state()
        q_d = des.pose
        unit_force = np.concatenate([des.accel[:3], np.zeros(3)])
        Y = stacked_regressor(q_d, des.twist, des.twist, des.accel, unit_force, n_agents)
        gram += h * (Y.T @ Y)
        traj.advance()
    gram /= (t1 - t0)
    sv = np.linalg.svd(gram, compute_uv=False)
    rank = int(np.sum(sv > rank_rtol * sv[0])) if sv[0] > 0 else 0
    return gram, rank
