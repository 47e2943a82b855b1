"""Scenario orchestration: augmented-state Heun integration and telemetry.

One step advances plant pose/twist, every agent's estimates, and the desired
-trajectory integrator together, with wrenches recomputed at each stage from
stage-consistent states and rotations updated through the exponential map.
Runs are deterministic given the scenario seed: one seed sequence is split
per agent id, so adding agents never reshuffles earlier agents' draws.

The hot loop works on stacked team arrays (one row per agent); the per-agent
controller in comanip.controller is the semantic reference and the two are
held together by an equivalence test.
"""

from dataclasses import dataclass, field

import numpy as np

from .controller import AgentState, GainConfig, potential_hessian_diag
from .dynamics import BodyParams, Pose, contact_twist, forward_dynamics, inertia_matrix
from .integrators import rotation_euler, rotation_heun
from .regressors import (
    CONTACT_COULOMB_DIM,
    CONTACT_VISCOUS_DIM,
    lump_contact_coulomb,
    lump_contact_viscous,
    object_params,
    regressor_body_friction,
    regressor_contact_coulomb,
    regressor_contact_viscous,
    regressor_object,
)
from .so3 import cross_rows, exp_so3
from .tracking import DesiredTrajectory, TrajectorySpec, composite_error, \
    reference_accel, reference_velocity


class SimulationDiverged(RuntimeError):
    """Raised when any state component stops being finite, with the time stamp."""


@dataclass
class MeasurementModel:
    kind: str = "broadcast"          # broadcast | centroid_average
    broadcast_agent: int = 0

    def validate(self, n_agents):
        if self.kind not in ("broadcast", "centroid_average"):
            raise ValueError(f"measurement.kind must be broadcast|centroid_average, "
                             f"got {self.kind!r}")
        if self.kind == "broadcast" and not 0 <= self.broadcast_agent < n_agents:
            raise ValueError("measurement.broadcast_agent out of range")


@dataclass
class FaultEvent:
    time: float
    agents: tuple

    def __post_init__(self):
        self.agents = tuple(int(a) for a in self.agents)


@dataclass
class InitialOffset:
    """Initial plant state relative to the desired pose; rates are absolute."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))  # rotation vector
    twist: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.twist = np.asarray(self.twist, dtype=float)


@dataclass
class AgentSetup:
    """How many agents and the covariance scales of their initial estimates."""

    count: int = 6
    sigma_obj: float = 1.0
    sigma_arm: float = 2.0


@dataclass
class ScenarioConfig:
    name: str
    body: BodyParams
    agents: AgentSetup
    gains: GainConfig
    trajectory: TrajectorySpec
    seed: int = 0
    step: float = 1e-2
    duration: float = 60.0
    measurement: MeasurementModel = field(default_factory=MeasurementModel)
    faults: list = field(default_factory=list)
    initial_offset: InitialOffset = field(default_factory=InitialOffset)
    record_stride: int = 10
    zoh_control: bool = False

    def validate(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.agents.count < 1:
            raise ValueError("agents.count must be at least 1")
        if self.agents.count != self.body.n_agents:
            raise ValueError(
                f"agents.count ({self.agents.count}) must match the number of "
                f"attachments ({self.body.n_agents})")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        for fault in self.faults:
            if not 0.0 <= fault.time <= self.duration:
                raise ValueError(f"fault time {fault.time} outside [0, duration]")
            for a in fault.agents:
                if not 0 <= a < self.agents.count:
                    raise ValueError(f"fault agent id {a} out of range")
        self.body.validate()
        self.measurement.validate(self.agents.count)

    @property
    def friction_mode(self):
        return self.body.friction.mode

    @property
    def gravity_dir(self):
        g = self.body.gravity
        norm = np.linalg.norm(g)
        return None if norm == 0 else g / norm


@dataclass
class TeamState:
    """Stacked per-agent estimates, one row per agent."""

    obj_est: np.ndarray
    arm_est: np.ndarray
    active: np.ndarray
    body_friction_est: np.ndarray | None = None
    contact_viscous_est: np.ndarray | None = None
    contact_coulomb_est: np.ndarray | None = None

    def as_agents(self):
        agents = []
        for i in range(self.obj_est.shape[0]):
            agents.append(AgentState(
                agent_id=i, obj_est=self.obj_est[i].copy(),
                arm_est=self.arm_est[i].copy(), active=bool(self.active[i]),
                body_friction_est=None if self.body_friction_est is None
                else self.body_friction_est[i].copy(),
                contact_viscous_est=None if self.contact_viscous_est is None
                else self.contact_viscous_est[i].copy(),
                contact_coulomb_est=None if self.contact_coulomb_est is None
                else self.contact_coulomb_est[i].copy(),
            ))
        return agents

    def blend(self, r0, r1, h):
        """Heun corrector on every estimate block: est + h/2 (r0 + r1)."""
        def mix(est, a, b):
            return None if est is None else est + 0.5 * h * (a + b)
        return TeamState(
            obj_est=self.obj_est + 0.5 * h * (r0.obj + r1.obj),
            arm_est=self.arm_est + 0.5 * h * (r0.arm + r1.arm),
            active=self.active.copy(),
            body_friction_est=mix(self.body_friction_est, r0.body_friction,
                                  r1.body_friction),
            contact_viscous_est=mix(self.contact_viscous_est, r0.contact_viscous,
                                    r1.contact_viscous),
            contact_coulomb_est=mix(self.contact_coulomb_est, r0.contact_coulomb,
                                    r1.contact_coulomb),
        )

    def euler(self, r0, h):
        def adv(est, a):
            return None if est is None else est + h * a
        return TeamState(
            obj_est=self.obj_est + h * r0.obj,
            arm_est=self.arm_est + h * r0.arm,
            active=self.active.copy(),
            body_friction_est=adv(self.body_friction_est, r0.body_friction),
            contact_viscous_est=adv(self.contact_viscous_est, r0.contact_viscous),
            contact_coulomb_est=adv(self.contact_coulomb_est, r0.contact_coulomb),
        )


@dataclass
class TeamRates:
    obj: np.ndarray
    arm: np.ndarray
    body_friction: np.ndarray | None = None
    contact_viscous: np.ndarray | None = None
    contact_coulomb: np.ndarray | None = None


@dataclass
class SimState:
    t: float
    pose: Pose
    twist: np.ndarray
    team: TeamState
    desired: DesiredTrajectory


@dataclass
class StageResult:
    qdd: np.ndarray
    rates: TeamRates
    wrenches: np.ndarray
    err: object           # CompositeError at the shared measurement
    meas: tuple


@dataclass
class SimRecord:
    """Strided telemetry rows plus a per-step audit of |s| and V."""

    t: np.ndarray
    s_norm: np.ndarray
    rot_err: np.ndarray
    x_err: np.ndarray
    V: np.ndarray
    obj_err_norm: np.ndarray
    arm_err_norm: np.ndarray
    position: np.ndarray
    twist: np.ndarray
    wrenches: np.ndarray
    audit_t: np.ndarray
    audit_s_norm: np.ndarray
    audit_V: np.ndarray
    audit_in_deadband: np.ndarray
    audit_n_active: np.ndarray
    seed: int
    name: str

    def final_estimates(self):
        return self._final_team

    _final_team: TeamState = None


def initial_team(config):
    """Seeded per-agent estimate draws; agent i's draw is independent of count."""
    children = np.random.SeedSequence(config.seed).spawn(config.agents.count)
    obj_dim = config.gains.object_dim
    n = config.agents.count
    obj = np.zeros((n, obj_dim))
    arm = np.zeros((n, 3))
    for i in range(n):
        rng = np.random.default_rng(children[i])
        if config.agents.sigma_obj > 0:
            obj[i] = rng.normal(scale=np.sqrt(config.agents.sigma_obj), size=obj_dim)
        if config.agents.sigma_arm > 0:
            arm[i] = rng.normal(scale=np.sqrt(config.agents.sigma_arm), size=3)
    team = TeamState(obj_est=obj, arm_est=arm, active=np.ones(n, dtype=bool))
    mode = config.friction_mode
    if mode == "body_viscous":
        team.body_friction_est = np.zeros((n, 6))
    elif mode == "contact":
        team.contact_viscous_est = np.zeros((n, CONTACT_VISCOUS_DIM))
        team.contact_coulomb_est = np.zeros((n, CONTACT_COULOMB_DIM))
    return team


def initial_state(config):
    desired = DesiredTrajectory(config.trajectory, config.step)
    des = desired.state()
    off = config.initial_offset
    pose = Pose(x=des.pose.x + off.position,
                R=exp_so3(off.rotation) @ des.pose.R)
    return SimState(t=0.0, pose=pose, twist=off.twist.copy(),
                    team=initial_team(config), desired=desired)


def measurement(state, model, body):
    """Shared (pose, twist) measurement.

    broadcast: the exact state of the measurement point (whichever agent
    relays it). centroid_average: position of the active-attachment centroid
    and the mean of the active agents' own rates, which equals the centroid's
    rates by linearity of the grasp transpose in the moment arm.
    """
    if model.kind == "broadcast":
        return state.pose, state.twist
    active = state.team.active
    arms = body.attachments[active] if active.any() else body.attachments
    mean_r = arms.mean(axis=0)
    pose = Pose(x=state.pose.x + state.pose.R @ mean_r, R=state.pose.R)
    return pose, contact_twist(state.pose, state.twist, mean_r)


def _descent(gain, est_rows, grad_rows, gains):
    """Row-wise adaptation direction for a stacked gradient (one row per agent)."""
    if gains.regularizer == "quadratic":
        return -(grad_rows @ gain.T)
    diag = np.diag(gain)
    hess = potential_hessian_diag(gains.regularizer, est_rows * diag, diag,
                                  gains.bregman_eps)
    return -grad_rows / hess


def team_stage(config, pose, twist, team, des):
    """Controls, adaptation rates, and plant acceleration at one stage state."""
    body = config.body
    gains = config.gains
    n = team.obj_est.shape[0]
    state = SimState(t=0.0, pose=pose, twist=twist, team=team, desired=None)
    meas_pose, meas_twist = measurement(state, config.measurement, body)
    err = composite_error(meas_pose, meas_twist, des, gains.lam)
    s = err.s
    qd_r = reference_velocity(meas_pose, des, gains.lam)
    qdd_r = reference_accel(meas_pose, meas_twist, des, gains.lam)
    Y = regressor_object(meas_pose, meas_twist, qd_r, qdd_r,
                         gravity_dir=config.gravity_dir)
    Y_f = None
    if config.friction_mode == "body_viscous":
        Y_f = regressor_body_friction(meas_pose, qd_r)

    # wrench precursor rows: Y obj_est - K_D s (+ body-friction compensation)
    F = team.obj_est @ Y.T - (gains.k_d @ s)
    if Y_f is not None:
        F = F + team.body_friction_est @ Y_f.T
    # grasp transport at the estimated arms: tau = M(-arm) F
    arms_world = team.arm_est @ meas_pose.R.T
    tau = np.empty((n, 6))
    tau[:, :3] = F[:, :3]
    tau[:, 3:] = F[:, 3:] - cross_rows(arms_world, F[:, :3])

    v_self = None
    if config.friction_mode == "contact":
        Y_D = regressor_contact_viscous(meas_pose, qd_r)
        v_self = np.empty((n, 6))
        for i in range(n):
            v_self[i] = contact_twist(pose, twist, body.attachments[i])
            tau[i] += Y_D @ team.contact_viscous_est[i]
            tau[i] += regressor_contact_coulomb(meas_pose, v_self[i]) \
                @ team.contact_coulomb_est[i]

    inactive = ~team.active
    tau[inactive] = 0.0

    adapt = team.active.copy()
    if float(s @ s) <= gains.deadband ** 2:
        adapt[:] = False
    rates = TeamRates(obj=np.zeros_like(team.obj_est),
                      arm=np.zeros_like(team.arm_est))
    if team.body_friction_est is not None:
        rates.body_friction = np.zeros_like(team.body_friction_est)
    if team.contact_viscous_est is not None:
        rates.contact_viscous = np.zeros_like(team.contact_viscous_est)
        rates.contact_coulomb = np.zeros_like(team.contact_coulomb_est)
    if adapt.any():
        if gains.gain_obj is not None:
            grad = Y.T @ s
            rates.obj[adapt] = _descent(gains.gain_obj, team.obj_est[adapt],
                                        np.broadcast_to(grad, (int(adapt.sum()),
                                                               grad.shape[0])),
                                        gains)
        if gains.gain_arm is not None:
            # (hat(f) R)^T s_ang = R^T (s_ang x f) rowwise
            grad_arm = cross_rows(s[3:], F[:, :3]) @ meas_pose.R
            rates.arm[adapt] = _descent(gains.gain_arm, team.arm_est[adapt],
                                        grad_arm[adapt], gains)
        if Y_f is not None and gains.gain_body_friction is not None:
            grad_f = Y_f.T @ s
            rates.body_friction[adapt] = _descent(
                gains.gain_body_friction, team.body_friction_est[adapt],
                np.broadcast_to(grad_f, (int(adapt.sum()), 6)), gains)
        if config.friction_mode == "contact":
            Y_D = regressor_contact_viscous(meas_pose, qd_r)
            grad_d = Y_D.T @ s
            if gains.gain_contact_viscous is not None:
                rates.contact_viscous[adapt] = _descent(
                    gains.gain_contact_viscous, team.contact_viscous_est[adapt],
                    np.broadcast_to(grad_d, (int(adapt.sum()), grad_d.shape[0])),
                    gains)
            if gains.gain_contact_coulomb is not None:
                for i in range(n):
                    if adapt[i]:
                        Y_C = regressor_contact_coulomb(meas_pose, v_self[i])
                        rates.contact_coulomb[i] = _descent(
                            gains.gain_contact_coulomb,
                            team.contact_coulomb_est[i:i + 1],
                            (Y_C.T @ s)[None, :], gains)[0]

    qdd = forward_dynamics(body, pose, twist, tau, active=team.active)
    return StageResult(qdd=qdd, rates=rates, wrenches=tau, err=err,
                       meas=(meas_pose, meas_twist))


def step(state, config, stage0=None):
    """One Heun step of the augmented state (plant, estimates, desired pose)."""
    h = config.step
    if stage0 is None:
        stage0 = team_stage(config, state.pose, state.twist, state.team,
                            state.desired.state())

    pose1 = Pose(x=state.pose.x + h * state.twist[:3],
                 R=rotation_euler(state.pose.R, state.twist[3:], h))
    twist1 = state.twist + h * stage0.qdd
    team1 = state.team.euler(stage0.rates, h)
    des1 = state.desired.predicted_state()
    if config.zoh_control:
        qdd1 = forward_dynamics(config.body, pose1, twist1, stage0.wrenches,
                                active=state.team.active)
        stage1 = StageResult(qdd=qdd1, rates=stage0.rates,
                             wrenches=stage0.wrenches, err=stage0.err,
                             meas=stage0.meas)
    else:
        stage1 = team_stage(config, pose1, twist1, team1, des1)

    new_pose = Pose(x=state.pose.x + 0.5 * h * (state.twist[:3] + twist1[:3]),
                    R=rotation_heun(state.pose.R, state.twist[3:], twist1[3:], h))
    new_twist = state.twist + 0.5 * h * (stage0.qdd + stage1.qdd)
    new_team = state.team.blend(stage0.rates, stage1.rates, h)
    state.desired.advance()
    new_state = SimState(t=state.t + h, pose=new_pose, twist=new_twist,
                         team=new_team, desired=state.desired)
    if not (np.all(np.isfinite(new_pose.x)) and np.all(np.isfinite(new_pose.R))
            and np.all(np.isfinite(new_twist))
            and np.all(np.isfinite(new_team.obj_est))
            and np.all(np.isfinite(new_team.arm_est))):
        raise SimulationDiverged(f"non-finite state after step at t = {state.t:.4f} s")
    return new_state


def team_lyapunov(config, pose, team, s):
    """Vectorized twin of controller.lyapunov_value for the run loop."""
    body = config.body
    gains = config.gains
    value = 0.5 * float(s @ inertia_matrix(body, pose) @ s)
    active = team.active
    n_active = int(active.sum())
    if n_active == 0:
        return value
    inv = gains.inverse_gains()
    alpha = 1.0 / n_active
    if inv["obj"] is not None:
        E = team.obj_est[active] - object_params(body, alpha,
                                                 gravity_dir=config.gravity_dir)
        value += 0.5 * float(np.einsum("ij,jk,ik->", E, inv["obj"], E))
    if inv["arm"] is not None:
        E = team.arm_est[active] - body.attachments[active]
        value += 0.5 * float(np.einsum("ij,jk,ik->", E, inv["arm"], E))
    if inv["bf"] is not None and team.body_friction_est is not None:
        E = team.body_friction_est[active] - alpha * body.friction.viscous_body
        value += 0.5 * float(np.einsum("ij,jk,ik->", E, inv["bf"], E))
    if inv["cv"] is not None and team.contact_viscous_est is not None:
        visc = np.broadcast_to(np.asarray(body.friction.viscous_contact, dtype=float),
                               (body.n_agents, 6))
        truth = np.array([lump_contact_viscous(visc[i], body.attachments[i])
                          for i in range(body.n_agents)])
        E = team.contact_viscous_est[active] - truth[active]
        value += 0.5 * float(np.einsum("ij,jk,ik->", E, inv["cv"], E))
    if inv["cc"] is not None and team.contact_coulomb_est is not None:
        coul = np.broadcast_to(np.asarray(body.friction.coulomb_contact, dtype=float),
                               (body.n_agents, 6))
        truth = np.array([lump_contact_coulomb(coul[i], body.attachments[i])
                          for i in range(body.n_agents)])
        E = team.contact_coulomb_est[active] - truth[active]
        value += 0.5 * float(np.einsum("ij,jk,ik->", E, inv["cc"], E))
    return value


def run(config):
    """Simulate the scenario; deterministic for a given config + seed."""
    config.validate()
    state = initial_state(config)
    h = config.step
    n_steps = int(round(config.duration / h))
    pending = sorted(config.faults, key=lambda f: f.time)

    rows = {k: [] for k in ("t", "s_norm", "rot_err", "x_err", "V", "obj_err",
                            "arm_err", "position", "twist", "wrenches")}
    audit = {k: np.empty(n_steps + 1) for k in ("t", "s_norm", "V")}
    audit["in_deadband"] = np.empty(n_steps + 1, dtype=bool)
    audit["n_active"] = np.empty(n_steps + 1, dtype=int)

    for k in range(n_steps + 1):
        t = k * h
        while pending and pending[0].time <= t + 1e-12:
            fault = pending.pop(0)
            state.team.active[list(fault.agents)] = False

        stage0 = team_stage(config, state.pose, state.twist, state.team,
                            state.desired.state())
        err = stage0.err
        s_norm = float(np.sqrt(err.s @ err.s))
        V = team_lyapunov(config, state.pose, state.team, err.s)
        n_active = int(state.team.active.sum())
        audit["t"][k] = t
        audit["s_norm"][k] = s_norm
        audit["V"][k] = V
        audit["in_deadband"][k] = s_norm <= config.gains.deadband
        audit["n_active"][k] = n_active

        if k % config.record_stride == 0 or k == n_steps:
            alpha = 1.0 / max(n_active, 1)
            o_true = object_params(config.body, alpha, gravity_dir=config.gravity_dir)
            rows["t"].append(t)
            rows["s_norm"].append(s_norm)
            rows["rot_err"].append(float(np.trace(np.eye(3) - err.R_e)))
            rows["x_err"].append(err.x_err.copy())
            rows["V"].append(V)
            rows["obj_err"].append(
                np.linalg.norm(state.team.obj_est - o_true, axis=1))
            rows["arm_err"].append(
                np.linalg.norm(state.team.arm_est - config.body.attachments, axis=1))
            rows["position"].append(state.pose.x.copy())
            rows["twist"].append(state.twist.copy())
            rows["wrenches"].append(stage0.wrenches.copy())

        if k < n_steps:
            state = step(state, config, stage0=stage0)

    record = SimRecord(
        t=np.array(rows["t"]), s_norm=np.array(rows["s_norm"]),
        rot_err=np.array(rows["rot_err"]), x_err=np.array(rows["x_err"]),
        V=np.array(rows["V"]), obj_err_norm=np.array(rows["obj_err"]),
        arm_err_norm=np.array(rows["arm_err"]), position=np.array(rows["position"]),
        twist=np.array(rows["twist"]), wrenches=np.array(rows["wrenches"]),
        audit_t=audit["t"], audit_s_norm=audit["s_norm"], audit_V=audit["V"],
        audit_in_deadband=audit["in_deadband"], audit_n_active=audit["n_active"],
        seed=config.seed, name=config.name,
    )
    record._final_team = state.team
    return record


@dataclass
class BaselineVariant:
    name: str
    record: SimRecord
    entered_deadband: bool
    final_s_norm: float
    mean_s_norm: float


def compare_baselines(config):
    """Run nominal, geometry-adaptation-off, and PD-only under the same seed."""
    import copy

    variants = []
    for name in ("nominal", "no_geom", "pd"):
        cfg = copy.deepcopy(config)
        cfg.name = f"{config.name}_{name}" if name != "nominal" else config.name
        if name == "no_geom":
            cfg.gains.gain_arm = None
        elif name == "pd":
            cfg.gains.gain_obj = None
            cfg.gains.gain_arm = None
            cfg.agents.sigma_obj = 0.0
            cfg.agents.sigma_arm = 0.0
        record = run(cfg)
        variants.append(BaselineVariant(
            name=name, record=record,
            entered_deadband=bool(np.any(record.audit_in_deadband)),
            final_s_norm=float(record.audit_s_norm[-1]),
            mean_s_norm=float(np.mean(record.audit_s_norm)),
        ))
    return variants
