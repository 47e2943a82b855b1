"""Per-agent decentralized adaptive controller.

Each agent sees only the shared measurement, the desired state, and its own
estimates. Its wrench is a feedforward term built from the object-parameter
estimate plus a PD term on the composite error, transported through the
inverse grasp matrix at the *estimated* moment arm (closed form M(-r_est),
never a numeric inverse). Estimates integrate gradient-style adaptation laws
driven by the regressor transposes, frozen inside a deadband on |s|.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import inertia_matrix
from .so3 import cross3
from .regressors import (
    CONTACT_COULOMB_DIM,
    CONTACT_VISCOUS_DIM,
    OBJECT_DIM,
    lump_contact_coulomb,
    lump_contact_viscous,
    object_params,
    regressor_body_friction,
    regressor_contact_coulomb,
    regressor_contact_viscous,
    regressor_object,
)
from .tracking import composite_error, reference_accel, reference_velocity

REGULARIZERS = ("quadratic", "bregman_l1")


def _as_gain_matrix(value, dim, name):
    """Accept a scalar, diagonal vector, or full matrix; None/zeros disable."""
    if value is None:
        return None
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.eye(dim) * float(arr)
    elif arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"{name} diagonal must have length {dim}")
        arr = np.diag(arr)
    elif arr.shape != (dim, dim):
        raise ValueError(f"{name} must be {dim}x{dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.allclose(arr, 0.0):
        return None
    if np.linalg.norm(arr - arr.T) > 1e-12 * (1 + np.linalg.norm(arr)):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(arr)) <= 0:
        raise ValueError(f"{name} must be positive definite (or zero to disable)")
    return arr


@dataclass
class GainConfig:
    """Controller and adaptation gains shared by every agent.

    A zero/None adaptation gain disables that estimate entirely (used by the
    baselines). The deadband freezes adaptation, not the wrench, whenever
    |s| falls at or below it.
    """

    lam: float = 1.5
    k_d: np.ndarray = field(default_factory=lambda: np.eye(6))
    gain_obj: np.ndarray | None = None
    gain_arm: np.ndarray | None = None
    gain_body_friction: np.ndarray | None = None
    gain_contact_viscous: np.ndarray | None = None
    gain_contact_coulomb: np.ndarray | None = None
    deadband: float = 0.01
    regularizer: str = "quadratic"
    bregman_eps: float = 1e-3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.deadband < 0:
            raise ValueError("deadband must be nonnegative")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")
        if self.bregman_eps <= 0:
            raise ValueError("bregman_eps must be positive (the l1 potential is smoothed)")
        self.k_d = _as_gain_matrix(self.k_d, 6, "k_d")
        if self.k_d is None:
            raise ValueError("k_d must be positive definite")
        self.gain_obj = _as_gain_matrix(self.gain_obj, self.object_dim, "gain_obj")
        self.gain_arm = _as_gain_matrix(self.gain_arm, 3, "gain_arm")
        self.gain_body_friction = _as_gain_matrix(self.gain_body_friction, 6,
                                                  "gain_body_friction")
        self.gain_contact_viscous = _as_gain_matrix(
            self.gain_contact_viscous, CONTACT_VISCOUS_DIM, "gain_contact_viscous")
        self.gain_contact_coulomb = _as_gain_matrix(
            self.gain_contact_coulomb, CONTACT_COULOMB_DIM, "gain_contact_coulomb")
        self._inv_cache = {}

    def inverse_gains(self):
        """Inverses of the enabled adaptation gains, cached per gain array."""
        out = {}
        for name, gain in (("obj", self.gain_obj), ("arm", self.gain_arm),
                           ("bf", self.gain_body_friction),
                           ("cv", self.gain_contact_viscous),
                           ("cc", self.gain_contact_coulomb)):
            if gain is None:
                out[name] = None
                continue
            key = (name, id(gain))
            if key not in self._inv_cache:
                self._inv_cache[key] = np.linalg.inv(gain)
            out[name] = self._inv_cache[key]
        return out

    # object estimates may carry one appended gravity-scale entry
    object_dim: int = OBJECT_DIM


@dataclass
class AgentState:
    """One agent's estimates and liveness flag. Inactive agents are inert."""

    agent_id: int
    obj_est: np.ndarray
    arm_est: np.ndarray
    body_friction_est: np.ndarray | None = None
    contact_viscous_est: np.ndarray | None = None
    contact_coulomb_est: np.ndarray | None = None
    active: bool = True

    def copy(self):
        return replace(
            self,
            obj_est=self.obj_est.copy(),
            arm_est=self.arm_est.copy(),
            body_friction_est=None if self.body_friction_est is None
            else self.body_friction_est.copy(),
            contact_viscous_est=None if self.contact_viscous_est is None
            else self.contact_viscous_est.copy(),
            contact_coulomb_est=None if self.contact_coulomb_est is None
            else self.contact_coulomb_est.copy(),
        )


@dataclass
class EstimateRates:
    obj: np.ndarray
    arm: np.ndarray
    body_friction: np.ndarray | None = None
    contact_viscous: np.ndarray | None = None
    contact_coulomb: np.ndarray | None = None


@dataclass
class ControlOutput:
    wrench: np.ndarray
    rates: EstimateRates


@dataclass
class ControlContext:
    """Shared per-step quantities: identical for every agent given one measurement."""

    s: np.ndarray
    Y_obj: np.ndarray
    Y_body_friction: np.ndarray | None
    pose: object
    qd_r: np.ndarray


def control_context(meas_pose, meas_twist, des, gains, friction_mode="none",
                    gravity_dir=None):
    """Precompute the measurement-derived terms every agent shares."""
    err = composite_error(meas_pose, meas_twist, des, gains.lam)
    qd_r = reference_velocity(meas_pose, des, gains.lam)
    qdd_r = reference_accel(meas_pose, meas_twist, des, gains.lam)
    Y_obj = regressor_object(meas_pose, meas_twist, qd_r, qdd_r, gravity_dir=gravity_dir)
    Y_f = None
    if friction_mode == "body_viscous":
        Y_f = regressor_body_friction(meas_pose, qd_r)
    return ControlContext(s=err.s, Y_obj=Y_obj, Y_body_friction=Y_f, pose=meas_pose,
                          qd_r=qd_r)


def wrench_precursor(agent, gains, ctx):
    """Feedforward plus PD force before grasp transport: Y_obj @ obj_est - K_D s."""
    F = ctx.Y_obj @ agent.obj_est - gains.k_d @ ctx.s
    if ctx.Y_body_friction is not None and agent.body_friction_est is not None:
        F = F + ctx.Y_body_friction @ agent.body_friction_est
    return F


def agent_control(agent, gains, meas, des, v_self=None, friction_mode="none",
                  gravity_dir=None, ctx=None):
    """Wrench and estimate rates for one agent.

    meas is the shared (pose, twist) measurement; v_self is the agent's own
    attachment-point rates, required only in contact-friction mode. Inactive
    agents emit a zero wrench and zero rates.
    """
    if ctx is None:
        pose, twist = meas
        ctx = control_context(pose, twist, des, gains, friction_mode, gravity_dir)
    if not agent.active:
        return ControlOutput(wrench=np.zeros(6), rates=_zero_rates(agent))
    F = wrench_precursor(agent, gains, ctx)
    # closed-form grasp inverse at the estimated arm: M(r_est)^{-1} = M(-r_est)
    tau = np.empty(6)
    tau[:3] = F[:3]
    tau[3:] = F[3:] - cross3(ctx.pose.R @ agent.arm_est, F[:3])
    if friction_mode == "contact":
        if v_self is None:
            raise ValueError("contact-friction mode requires the agent's own rates v_self")
        if agent.contact_viscous_est is not None:
            tau = tau + regressor_contact_viscous(ctx.pose, ctx.qd_r) @ agent.contact_viscous_est
        if agent.contact_coulomb_est is not None:
            tau = tau + regressor_contact_coulomb(ctx.pose, v_self) @ agent.contact_coulomb_est
    rates = adaptation_rates(agent, gains, ctx, F, v_self=v_self,
                             friction_mode=friction_mode)
    return ControlOutput(wrench=tau, rates=rates)


def _zero_rates(agent):
    return EstimateRates(
        obj=np.zeros_like(agent.obj_est),
        arm=np.zeros_like(agent.arm_est),
        body_friction=None if agent.body_friction_est is None
        else np.zeros_like(agent.body_friction_est),
        contact_viscous=None if agent.contact_viscous_est is None
        else np.zeros_like(agent.contact_viscous_est),
        contact_coulomb=None if agent.contact_coulomb_est is None
        else np.zeros_like(agent.contact_coulomb_est),
    )


def adaptation_rates(agent, gains, ctx, F, v_self=None, friction_mode="none"):
    """Estimate time-derivatives for one agent at the given shared context.

    F must be the same wrench precursor used for the control this step. All
    rates are zero inside the deadband, for inactive agents, and for
    estimates whose gain is disabled.
    """
    rates = _zero_rates(agent)
    if not agent.active or float(ctx.s @ ctx.s) <= gains.deadband ** 2:
        return rates
    s = ctx.s
    if gains.gain_obj is not None:
        rates.obj = _descent_direction(gains.gain_obj, agent.obj_est,
                                       ctx.Y_obj.T @ s, gains)
    if gains.gain_arm is not None:
        # (hat(f) R)^T s_ang = R^T (s_ang x f), the only nonzero block of Y_g^T s
        grad_arm = ctx.pose.R.T @ cross3(s[3:], F[:3])
        rates.arm = _descent_direction(gains.gain_arm, agent.arm_est, grad_arm, gains)
    if friction_mode == "body_viscous" and gains.gain_body_friction is not None \
            and agent.body_friction_est is not None:
        rates.body_friction = _descent_direction(
            gains.gain_body_friction, agent.body_friction_est,
            ctx.Y_body_friction.T @ s, gains)
    if friction_mode == "contact":
        if gains.gain_contact_viscous is not None and agent.contact_viscous_est is not None:
            Y_D = regressor_contact_viscous(ctx.pose, ctx.qd_r)
            rates.contact_viscous = _descent_direction(
                gains.gain_contact_viscous, agent.contact_viscous_est, Y_D.T @ s, gains)
        if gains.gain_contact_coulomb is not None and agent.contact_coulomb_est is not None:
            Y_C = regressor_contact_coulomb(ctx.pose, v_self)
            rates.contact_coulomb = _descent_direction(
                gains.gain_contact_coulomb, agent.contact_coulomb_est, Y_C.T @ s, gains)
    return rates


def _descent_direction(gain, estimate, grad, gains):
    if gains.regularizer == "quadratic":
        return -(gain @ grad)
    return -bregman_direction(gain, estimate, grad, gains.regularizer, gains.bregman_eps)


def potential_hessian_diag(kind, x, gain_diag, eps):
    """Diagonal Hessian of the regularizing potential, evaluated at x = Gamma @ est.

    quadratic: psi(x) = 0.5 x^T Gamma^{-1} x, constant Hessian Gamma^{-1}.
    bregman_l1: psi(x) = sum sqrt(x_k^2 + eps^2), the smoothed l1 norm (the
    plain l1 norm is neither strictly convex nor twice differentiable, so the
    inverse-Hessian law is undefined at its kinks).
    """
    if kind == "quadratic":
        return 1.0 / gain_diag
    if kind == "bregman_l1":
        return eps ** 2 / np.power(x * x + eps ** 2, 1.5)
    raise ValueError(f"unknown regularizer {kind!r}")


def bregman_direction(gain, estimate, grad, kind, eps):
    """Inverse-Hessian-of-potential step: (hess psi(Gamma a))^{-1} @ grad.

    Gain placement is fixed by requiring the quadratic potential to reproduce
    the plain law Gamma @ grad exactly; the reduction test pins it. Requires
    a diagonal gain. For the smoothed l1 the inverse Hessian shrinks to eps
    near zero, so parameters park at zero unless error pressure persists;
    that is the sparsity mechanism.
    """
    diag = np.diag(gain)
    if not np.allclose(gain, np.diag(diag)):
        raise ValueError("bregman regularizer requires a diagonal gain matrix")
    hess = potential_hessian_diag(kind, diag * estimate, diag, eps)
    if not np.all(np.isfinite(hess)) or np.any(hess <= 0):
        raise ValueError("potential Hessian is not positive definite; check bregman_eps")
    return (1.0 / hess) * grad


def bregman_rates(agent, gains, Y, s, kind=None):
    """Object-estimate rates via the inverse-Hessian law for a given stack.

    With the quadratic potential this reduces exactly to -gain_obj @ Y^T s.
    Deadband and active-flag semantics match adaptation_rates.
    """
    if not agent.active or float(s @ s) <= gains.deadband ** 2:
        return np.zeros_like(agent.obj_est)
    kind = gains.regularizer if kind is None else kind
    return -bregman_direction(gains.gain_obj, agent.obj_est, Y.T @ s, kind,
                              gains.bregman_eps)


def lyapunov_value(agents, gains, body, q, s, gravity_dir=None):
    """Diagnostic energy: 0.5 [s^T H s + sum of gain-weighted estimate errors].

    Uses the ground truth (true inertia, true arms, equal effort shares over
    the currently active agents); controllers never see these. Estimate terms
    appear only for enabled adaptation gains, mirroring what the adaptation
    actually descends.
    """
    active = [a for a in agents if a.active]
    value = 0.5 * float(s @ inertia_matrix(body, q) @ s)
    if not active:
        return value
    alpha = 1.0 / len(active)
    o_true = object_params(body, alpha, gravity_dir=gravity_dir)
    inv = gains.inverse_gains()
    visc = np.broadcast_to(np.asarray(body.friction.viscous_contact, dtype=float),
                           (body.n_agents, 6))
    coul = np.broadcast_to(np.asarray(body.friction.coulomb_contact, dtype=float),
                           (body.n_agents, 6))
    for agent in active:
        i = agent.agent_id
        if inv["obj"] is not None:
            e = agent.obj_est - o_true
            value += 0.5 * float(e @ inv["obj"] @ e)
        if inv["arm"] is not None:
            e = agent.arm_est - body.attachments[i]
            value += 0.5 * float(e @ inv["arm"] @ e)
        if inv["bf"] is not None and agent.body_friction_est is not None:
            e = agent.body_friction_est - alpha * body.friction.viscous_body
            value += 0.5 * float(e @ inv["bf"] @ e)
        if inv["cv"] is not None and agent.contact_viscous_est is not None:
            e = agent.contact_viscous_est - lump_contact_viscous(visc[i], body.attachments[i])
            value += 0.5 * float(e @ inv["cv"] @ e)
        if inv["cc"] is not None and agent.contact_coulomb_est is not None:
            e = agent.contact_coulomb_est - lump_contact_coulomb(coul[i], body.attachments[i])
            value += 0.5 * float(e @ inv["cc"] @ e)
    return value
