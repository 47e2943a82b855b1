"""Desired-trajectory generation and the composite pose/velocity error.

The composite error s stacks a linear part (velocity error plus scaled
position error) and an angular part (rate error plus the scaled vee of the
antisymmetric part of the relative rotation). s = 0 defines a surface on
which pose errors decay exponentially; reduced_flow_check integrates that
reduced dynamics and audits the decay bound numerically.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Pose
from .integrators import rotation_euler, rotation_heun
from .so3 import assert_rotation, exp_so3, hat, proj_antisym, vee, vee_antisym_part

# initial relative rotations with tr closer than this to -1 sit on the excluded
# antipodal singularity and are rejected rather than perturbed
ANTIPODAL_GUARD = 1e-6


@dataclass
class TrajectorySpec:
    """Sinusoid banks for desired linear/angular rates plus the initial pose.

    Rates per axis are sum_k amp[axis, k] * cos(freq[axis, k] * t + phase);
    the accelerations below are their exact analytic derivatives. Phases
    default to zero; nonzero phases desynchronize the component extrema,
    which keeps the six error channels from crossing zero simultaneously.
    """

    lin_amp: np.ndarray
    lin_freq: np.ndarray
    ang_amp: np.ndarray
    ang_freq: np.ndarray
    lin_phase: np.ndarray | None = None
    ang_phase: np.ndarray | None = None
    x0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name in ("lin_amp", "lin_freq", "ang_amp", "ang_freq"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if self.lin_phase is None:
            self.lin_phase = np.zeros_like(self.lin_amp)
        if self.ang_phase is None:
            self.ang_phase = np.zeros_like(self.ang_amp)
        self.lin_phase = np.atleast_2d(np.asarray(self.lin_phase, dtype=float))
        self.ang_phase = np.atleast_2d(np.asarray(self.ang_phase, dtype=float))
        self.x0 = np.asarray(self.x0, dtype=float)
        self.R0 = np.asarray(self.R0, dtype=float)
        if self.lin_amp.shape != self.lin_freq.shape or self.ang_amp.shape != self.ang_freq.shape:
            raise ValueError("amplitude and frequency banks must have matching shapes")
        if self.lin_phase.shape != self.lin_amp.shape or self.ang_phase.shape != self.ang_amp.shape:
            raise ValueError("phase banks must match the amplitude banks")
        if self.lin_amp.shape[0] != 3 or self.ang_amp.shape[0] != 3:
            raise ValueError("banks must have one row per axis")
        if self.lin_amp.shape[1] < 1 or self.ang_amp.shape[1] < 1:
            raise ValueError("need at least one frequency per bank")
        assert_rotation(self.R0, name="TrajectorySpec.R0")
        # linear and angular banks evaluate together; pad to a common width
        nf = max(self.lin_amp.shape[1], self.ang_amp.shape[1])
        amp = np.zeros((6, nf))
        freq = np.ones((6, nf))
        phase = np.zeros((6, nf))
        amp[:3, :self.lin_amp.shape[1]] = self.lin_amp
        freq[:3, :self.lin_freq.shape[1]] = self.lin_freq
        phase[:3, :self.lin_phase.shape[1]] = self.lin_phase
        amp[3:, :self.ang_amp.shape[1]] = self.ang_amp
        freq[3:, :self.ang_freq.shape[1]] = self.ang_freq
        phase[3:, :self.ang_phase.shape[1]] = self.ang_phase
        self._amp = amp
        self._freq = freq
        self._phase = phase
        self._amp_freq = amp * freq

    def rates(self, t):
        """Analytic desired twist [v_d; w_d] at time t."""
        return (self._amp * np.cos(self._freq * t + self._phase)).sum(axis=1)

    def accels(self, t):
        """Analytic desired acceleration (exact derivative of rates)."""
        return -(self._amp_freq * np.sin(self._freq * t + self._phase)).sum(axis=1)


@dataclass
class DesiredState:
    pose: Pose
    twist: np.ndarray
    accel: np.ndarray


class DesiredTrajectory:
    """Forward-integrates the desired pose from the rate banks.

    Uses the same Heun + exponential-map stepping and step size as the plant,
    so desired pose and desired rates are exactly consistent at sample times.
    """

    def __init__(self, spec, h):
        if h <= 0:
            raise ValueError("step size must be positive")
        self.spec = spec
        self.h = h
        self.t = 0.0
        self.pose = Pose(x=spec.x0.copy(), R=spec.R0.copy())

    def state(self):
        return DesiredState(pose=Pose(x=self.pose.x.copy(), R=self.pose.R.copy()),
                            twist=self.spec.rates(self.t),
                            accel=self.spec.accels(self.t))

    def predicted_state(self):
        """Euler-predicted desired state at t + h (the second Heun stage)."""
        t1 = self.t + self.h
        qd0 = self.spec.rates(self.t)
        pose = Pose(x=self.pose.x + self.h * qd0[:3],
                    R=rotation_euler(self.pose.R, qd0[3:], self.h))
        return DesiredState(pose=pose, twist=self.spec.rates(t1), accel=self.spec.accels(t1))

    def advance(self):
        qd0 = self.spec.rates(self.t)
        qd1 = self.spec.rates(self.t + self.h)
        self.pose = Pose(x=self.pose.x + 0.5 * self.h * (qd0[:3] + qd1[:3]),
                         R=rotation_heun(self.pose.R, qd0[3:], qd1[3:], self.h))
        self.t += self.h


def desired_state(spec, t, h=1e-2):
    """Desired state at time t (integrated at step h from 0; t must sit on the grid)."""
    steps = int(round(t / h))
    if abs(steps * h - t) > 1e-9:
        raise ValueError(f"t={t} is not a multiple of the integration step {h}")
    traj = DesiredTrajectory(spec, h)
    for _ in range(steps):
        traj.advance()
    return traj.state()


@dataclass
class CompositeError:
    s: np.ndarray
    x_err: np.ndarray
    R_e: np.ndarray
    w_e: np.ndarray


def composite_error(q, qd, des, lam):
    """Composite error s = [vel err + lam * pos err; rate err + lam * R_d vee(P_a(R_e))]."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    x_err = q.x - des.pose.x
    R_e = des.pose.R.T @ q.R
    w_e = qd[3:] - des.twist[3:]
    s = np.empty(6)
    s[:3] = (qd[:3] - des.twist[:3]) + lam * x_err
    s[3:] = w_e + lam * (des.pose.R @ vee_antisym_part(R_e))
    return CompositeError(s=s, x_err=x_err, R_e=R_e, w_e=w_e)


def reference_velocity(q, des, lam):
    """Desired twist augmented with pose-error feedback; s = qd - reference_velocity."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    R_e = des.pose.R.T @ q.R
    out = np.empty(6)
    out[:3] = des.twist[:3] - lam * (q.x - des.pose.x)
    out[3:] = des.twist[3:] - lam * (des.pose.R @ vee_antisym_part(R_e))
    return out


def reference_accel(q, qd, des, lam):
    """Exact time derivative of reference_velocity along the true state flow.

    Uses the closed-form relative-rotation rate d/dt R_e = hat(R_d^T w_e) R_e
    instead of finite differences, so the controller path is noise-free and
    step-size independent.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    R_d = des.pose.R
    R_e = R_d.T @ q.R
    w_d = des.twist[3:]
    w_e = qd[3:] - w_d
    R_e_dot = hat(R_d.T @ w_e) @ R_e
    out = np.empty(6)
    out[:3] = des.accel[:3] - lam * (qd[:3] - des.twist[:3])
    out[3:] = des.accel[3:] - lam * (
        hat(w_d) @ R_d @ vee_antisym_part(R_e) + R_d @ vee_antisym_part(R_e_dot)
    )
    return out


@dataclass
class ReducedFlowReport:
    t: np.ndarray
    decay_fn: np.ndarray          # tr(I - R_e) samples
    decay_rate: np.ndarray        # measured d/dt of decay_fn per sample
    scalar_part_sq: np.ndarray    # 1 - decay_fn / 4, the squared quaternion scalar
    exp_bound: np.ndarray         # decay_fn(0) * exp(-2 lam scalar_part_sq(0) t)


def reduced_flow_check(R_e0, lam, duration, sample_dt=None, substeps=10):
    """Integrate the rotation-error flow on s = 0 and report its decay.

    The reduced dynamics d/dt R_e = -lam P_a(R_e) R_e stay on SO(3); sampling
    defaults to 0.01/lam. Initial conditions within ANTIPODAL_GUARD of
    tr(R_e0) = -1 are rejected (nothing is proven there).
    """
    assert_rotation(R_e0, name="R_e0")
    if np.trace(R_e0) <= -1.0 + ANTIPODAL_GUARD:
        raise ValueError("initial rotation error is on (or too near) the antipodal singularity")
    if sample_dt is None:
        sample_dt = 0.01 / lam
    h = sample_dt / substeps
    n_samples = int(round(duration / sample_dt))

    def generator(R):
        return -lam * proj_antisym(R)

    R = R_e0.copy()
    ts = np.empty(n_samples + 1)
    values = np.empty(n_samples + 1)
    rates = np.empty(n_samples + 1)
    for k in range(n_samples + 1):
        ts[k] = k * sample_dt
        values[k] = np.trace(np.eye(3) - R)
        pa = proj_antisym(R)
        # d/dt tr(I - R_e) = -lam <P_a, P_a> = -(lam/2) |vee(R_e - R_e^T)|^2
        rates[k] = -0.5 * lam * float(np.linalg.norm(vee(R - R.T)) ** 2)
        if k == n_samples:
            break
        for _ in range(substeps):
            A0 = generator(R)
            R_pred = exp_so3(h * vee(A0)) @ R
            A1 = generator(R_pred)
            R = exp_so3(0.5 * h * vee(A0 + A1)) @ R
    scalar_sq = 1.0 - values / 4.0
    bound = values[0] * np.exp(-2.0 * lam * scalar_sq[0] * ts)
    return ReducedFlowReport(t=ts, decay_fn=values, decay_rate=rates,
                             scalar_part_sq=scalar_sq, exp_bound=bound)
