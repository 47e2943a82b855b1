"""Fixed-step Heun (two-stage Runge-Kutta) helpers.

Vector states advance through the usual predictor/corrector average.
Rotation states advance through the exponential map so they stay on SO(3):
a full Euler stage uses exp(h w), the corrector uses the stage-averaged rate.
"""

import numpy as np

from .so3 import exp_so3


def heun_step(f, t, y, h):
    """One Heun step for a flat state: y + h/2 (f(t,y) + f(t+h, y + h f(t,y)))."""
    k1 = f(t, y)
    k2 = f(t + h, y + h * k1)
    return y + 0.5 * h * (k1 + k2)


def rotation_euler(R, w, h):
    """Predictor stage for a rotation advanced at constant world rate w."""
    return exp_so3(h * np.asarray(w, dtype=float)) @ R


def rotation_heun(R, w0, w1, h):
    """Corrector stage: exponential map of the averaged stage rates."""
    return exp_so3(0.5 * h * (np.asarray(w0, dtype=float) + np.asarray(w1, dtype=float))) @ R
