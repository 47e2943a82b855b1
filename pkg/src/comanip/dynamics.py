"""Ground-truth rigid-body model about a body-fixed measurement point.

State convention: pose q = (x, R) of the measurement point P, rates
qd = [v; w] stacked world-frame linear/angular velocity, wrenches
[f; m] stacked force/torque. The 6x6 inertia and Coriolis matrices are
expressed about P, so translational and rotational dynamics couple through
the offset r_p between P and the center of mass.
"""

from dataclasses import dataclass, field

import numpy as np

from .so3 import assert_rotation, cross3, cross_rows, hat

# forward_dynamics refuses to invert an inertia matrix worse-conditioned than this
COND_LIMIT = 1e12


@dataclass
class Pose:
    """Position and body-to-world rotation of the measurement point."""

    x: np.ndarray
    R: np.ndarray

    def validate(self, tol=1e-9):
        if not np.all(np.isfinite(self.x)) or self.x.shape != (3,):
            raise ValueError("Pose.x must be a finite 3-vector")
        assert_rotation(self.R, tol, name="Pose.R")


@dataclass
class FrictionParams:
    """Friction model selector and diagonal coefficient banks.

    mode 'body_viscous' applies a body-frame linear drag on the rates of P;
    mode 'contact' applies per-attachment viscous + Coulomb drag at each
    agent's attachment point, transported through the grasp matrix.
    All coefficient vectors are diagonals (the minimal PSD family).
    """

    mode: str = "none"
    viscous_body: np.ndarray = field(default_factory=lambda: np.zeros(6))
    viscous_contact: np.ndarray = field(default_factory=lambda: np.zeros(6))
    coulomb_contact: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def validate(self):
        if self.mode not in ("none", "body_viscous", "contact"):
            raise ValueError(f"friction.mode must be none|body_viscous|contact, got {self.mode!r}")
        for name in ("viscous_body", "viscous_contact", "coulomb_contact"):
            coeffs = np.asarray(getattr(self, name), dtype=float)
            if np.any(coeffs < 0) or not np.all(np.isfinite(coeffs)):
                raise ValueError(f"friction.{name} must be nonnegative and finite")


@dataclass
class BodyParams:
    """Ground-truth payload parameters.

    ``inertia_cm`` is the inertia about the center of mass; the inertia about
    the measurement point is always derived (see :meth:`j_p`), never stored.
    ``r_p`` locates P from the center of mass and ``attachments[i]`` locates
    agent i from P, both in the body frame. ``gravity`` is a constant
    generalized-force 6-vector on the dynamics' left-hand side (zero in the
    free-space scenarios).
    """

    mass: float
    inertia_cm: np.ndarray
    r_p: np.ndarray
    attachments: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(6))
    friction: FrictionParams = field(default_factory=FrictionParams)

    def __post_init__(self):
        self.inertia_cm = np.asarray(self.inertia_cm, dtype=float)
        self.r_p = np.asarray(self.r_p, dtype=float)
        self.attachments = np.atleast_2d(np.asarray(self.attachments, dtype=float))
        self.gravity = np.asarray(self.gravity, dtype=float)
        r = self.r_p
        self._j_p = self.inertia_cm + self.mass * ((r @ r) * np.eye(3) - np.outer(r, r))

    @property
    def n_agents(self):
        return self.attachments.shape[0]

    def j_p(self):
        """Inertia about the measurement point (parallel-axis shift of inertia_cm).

        Cached at construction; treat mass/inertia/r_p as immutable afterwards.
        """
        return self._j_p

    def validate(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if np.linalg.norm(self.inertia_cm - self.inertia_cm.T) > 1e-9:
            raise ValueError("inertia_cm must be symmetric")
        if np.min(np.linalg.eigvalsh(self.inertia_cm)) <= 0:
            raise ValueError("inertia_cm must be positive definite")
        if np.min(np.linalg.eigvalsh(self.j_p())) <= 0:
            raise ValueError("derived inertia about the measurement point is not positive definite")
        if self.gravity.shape != (6,):
            raise ValueError("gravity must be a 6-vector")
        self.friction.validate()


def inertia_matrix(body, q):
    """6x6 generalized inertia about the measurement point.

    [[ m I        m hat(R r_p) ]
     [ -m hat(R r_p)  R J_p R^T ]]
    """
    m = body.mass
    R = q.R
    u_hat = hat(R @ body.r_p)
    J_world = R @ body.j_p() @ R.T
    H = np.zeros((6, 6))
    H[:3, :3] = m * np.eye(3)
    H[:3, 3:] = m * u_hat
    H[3:, :3] = -m * u_hat
    H[3:, 3:] = J_world
    return H


def coriolis_matrix(body, q, qd):
    """Centrifugal/Coriolis matrix paired with inertia_matrix.

    Chosen so that (d/dt H) - 2C is skew-symmetric along the flow; the extra
    cross terms cancel in C @ qd but are load-bearing for that property.
    """
    m = body.mass
    R = q.R
    v, w = qd[:3], qd[3:]
    u_hat = hat(R @ body.r_p)
    w_hat = hat(w)
    J_world = R @ body.j_p() @ R.T
    C = np.zeros((6, 6))
    coupling = m * (w_hat @ u_hat)
    C[:3, 3:] = coupling
    C[3:, :3] = -coupling
    C[3:, 3:] = w_hat @ J_world - m * hat(u_hat @ v)
    return C


def grasp_matrix(q, r):
    """6x6 map transporting a wrench applied at body-frame offset r to P.

    [[ I  0 ]
     [ hat(R r)  I ]]
    """
    M = np.eye(6)
    M[3:, :3] = hat(q.R @ np.asarray(r, dtype=float))
    return M


def grasp_apply(q, r, wrench):
    """grasp_matrix(q, r) @ wrench without building the 6x6."""
    f = wrench[:3]
    out = np.empty(6)
    out[:3] = f
    out[3:] = wrench[3:] + cross3(q.R @ r, f)
    return out


def contact_twist(q, qd, r):
    """Rates of the attachment point at body-frame offset r: M(r)^T qd."""
    v, w = qd[:3], qd[3:]
    out = np.empty(6)
    out[:3] = v + cross3(w, q.R @ r)
    out[3:] = w
    return out


def friction_wrench(body, q, qd):
    """Generalized friction force on the left-hand side of the dynamics.

    body_viscous: blkdiag(R,R) diag(viscous_body) blkdiag(R,R)^T @ qd.
    contact: sum_i M_i (D v_i + D_C sgn(v_i)) with v_i = M_i^T qd.
    sgn(0) = 0 elementwise, so a resting body feels no Coulomb force.
    """
    mode = body.friction.mode
    if mode == "none":
        return np.zeros(6)
    R = q.R
    if mode == "body_viscous":
        lam = body.friction.viscous_body
        z = np.concatenate([R.T @ qd[:3], R.T @ qd[3:]])
        out = np.empty(6)
        out[:3] = R @ (lam[:3] * z[:3])
        out[3:] = R @ (lam[3:] * z[3:])
        return out
    if mode == "contact":
        visc = np.broadcast_to(np.asarray(body.friction.viscous_contact, dtype=float),
                               (body.n_agents, 6))
        coul = np.broadcast_to(np.asarray(body.friction.coulomb_contact, dtype=float),
                               (body.n_agents, 6))
        total = np.zeros(6)
        for i in range(body.n_agents):
            r = body.attachments[i]
            v_i = contact_twist(q, qd, r)
            drag = visc[i] * v_i + coul[i] * np.sign(v_i)
            total += grasp_apply(q, r, drag)
        return total
    raise ValueError(f"unknown friction mode {mode!r}")


def forward_dynamics(body, q, qd, wrenches, active=None):
    """Accelerations qdd from per-agent wrenches applied at the attachments.

    Inactive agents contribute nothing. Raises if the inertia matrix is
    numerically singular (condition number > COND_LIMIT), which signals
    invalid BodyParams rather than a reachable dynamic state.
    """
    wrenches = np.atleast_2d(np.asarray(wrenches, dtype=float))
    if wrenches.shape != (body.n_agents, 6):
        raise ValueError(
            f"expected {body.n_agents} wrenches of dimension 6, got shape {wrenches.shape}"
        )
    if active is None:
        active = np.ones(body.n_agents, dtype=bool)
    total = np.zeros(6)
    live = wrenches[active]
    if live.size:
        arms_world = body.attachments[active] @ q.R.T
        forces = live[:, :3]
        total[:3] = forces.sum(axis=0)
        total[3:] = live[:, 3:].sum(axis=0) + cross_rows(arms_world, forces).sum(axis=0)
    H = inertia_matrix(body, q)
    eigs = np.linalg.eigvalsh(H)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > COND_LIMIT:
        raise np.linalg.LinAlgError(
            f"inertia matrix numerically singular (cond {eigs[-1] / max(eigs[0], 1e-300):.2e}); "
            "check BodyParams"
        )
    rhs = total - coriolis_matrix(body, q, qd) @ qd - body.gravity - friction_wrench(body, q, qd)
    return np.linalg.solve(H, rhs)


def kinetic_energy(body, q, qd):
    """0.5 qd^T H qd; conserved for torque-free frictionless motion."""
    return 0.5 * float(qd @ inertia_matrix(body, q) @ qd)
