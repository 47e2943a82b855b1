"""Rotation-group primitives: hat/vee maps, projections, exponential map."""

import numpy as np

ROTATION_TOL = 1e-9


def hat(v):
    """Map a 3-vector to the skew-symmetric matrix such that hat(v) @ w = v x w."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def cross3(a, b):
    """Cross product of plain 3-vectors; avoids np.cross's axis machinery."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def cross_rows(a, b):
    """Row-wise cross product for (..., 3) arrays with broadcasting."""
    out = np.empty(np.broadcast_shapes(np.shape(a), np.shape(b)))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def vee_antisym_part(A):
    """vee(proj_antisym(A)) without forming the projection."""
    return 0.5 * np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])


def vee(A, tol=1e-6):
    """Inverse of hat. Rejects input whose symmetric part has Frobenius norm > tol."""
    A = np.asarray(A, dtype=float)
    sym = 0.5 * (A + A.T)
    if np.linalg.norm(sym) > tol:
        raise ValueError(
            f"vee: input is not antisymmetric (symmetric part norm {np.linalg.norm(sym):.3e})"
        )
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def proj_antisym(A):
    """Antisymmetric part (A - A^T)/2."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A - A.T)


def proj_sym(A):
    """Symmetric part (A + A^T)/2."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def inner(A, B):
    """Matrix inner product tr(A^T B)."""
    return float(np.tensordot(A, B))


def exp_so3(w):
    """Exponential map from a rotation vector to a rotation matrix (Rodrigues).

    Falls back to the second-order series below ``|w| = 1e-8`` so the map is
    continuous through the identity (no 0/0).
    """
    w = np.asarray(w, dtype=float)
    theta2 = float(w @ w)
    W = hat(w)
    if theta2 < 1e-16:
        # sin(t)/t = 1 - t^2/6, (1-cos t)/t^2 = 1/2 - t^2/24; truncation < eps here
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * W + b * (W @ W)


def rotation_error(R, R_d):
    """Relative rotation R_d^T R; identity iff R == R_d."""
    return R_d.T @ R


def is_rotation(R, tol=ROTATION_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.linalg.norm(R.T @ R - np.eye(3)) <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def assert_rotation(R, tol=ROTATION_TOL, name="R"):
    if not is_rotation(R, tol):
        raise ValueError(f"{name} is not a rotation matrix to tolerance {tol:.1e}")


def orthonormalize(R):
    """Nearest rotation matrix in Frobenius norm (polar factor via SVD).

    Never applied implicitly: integration keeps drift below ROTATION_TOL, and a
    silent repair here would mask integrator bugs.
    """
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def rot_z(theta):
    """Rotation by theta about the z axis."""
    return exp_so3(np.array([0.0, 0.0, float(theta)]))
