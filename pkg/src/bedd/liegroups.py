"""Matrix Lie groups SO(2), SO(3), SE(3) used by the localization engine.

Conventions fixed here and relied on everywhere else:

* Tangent vectors of SE(3) are ordered (rotation xyz, translation xyz).
* ``log`` returns the rotation angle with magnitude <= pi.  At exactly pi the
  axis is ambiguous; we pick the axis from the largest diagonal entry of
  (R + I)/2 with its first nonzero component positive.
* Below an angle of ``SMALL_ANGLE`` the closed-form coefficients are replaced
  by their Taylor expansions to avoid division by near-zero.
"""

from __future__ import annotations

import math

import numpy as np

SMALL_ANGLE = 1e-6

_ORTHO_TOL = 1e-9

_I3 = np.eye(3)
_I3.flags.writeable = False


def _norm3(v) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def _hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that _hat(a) @ b == cross(a, b)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _check_rotation(m: np.ndarray, n: int, tol: float) -> None:
    if m.shape != (n, n):
        raise ValueError(f"expected {n}x{n} matrix, got {m.shape}")
    if not np.allclose(m.T @ m, np.eye(n), atol=tol):
        raise ValueError("matrix is not orthonormal")
    if abs(np.linalg.det(m) - 1.0) > max(tol, 1e-9):
        raise ValueError("matrix determinant is not +1")


class Rot2:
    """Planar rotation; the group used for azimuth/elevation errors."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray, check: bool = True):
        matrix = np.asarray(matrix, dtype=float)
        if check:
            _check_rotation(matrix, 2, 1e-12)
        self.matrix = matrix
        self.matrix.flags.writeable = False

    @staticmethod
    def identity() -> "Rot2":
        return Rot2(np.eye(2), check=False)

    @staticmethod
    def exp(theta: float) -> "Rot2":
        c, s = math.cos(theta), math.sin(theta)
        return Rot2(np.array([[c, -s], [s, c]]), check=False)

    def log(self) -> float:
        """Angle in (-pi, pi]."""
        return math.atan2(self.matrix[1, 0], self.matrix[0, 0])

    def compose(self, other: "Rot2") -> "Rot2":
        return Rot2(self.matrix @ other.matrix, check=False)

    def inverse(self) -> "Rot2":
        return Rot2(self.matrix.T.copy(), check=False)

    def __repr__(self) -> str:
        return f"Rot2(angle={self.log():.6f})"


class Rot3:
    """3D rotation as an orthonormal matrix with determinant +1."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray, check: bool = True):
        matrix = np.asarray(matrix, dtype=float)
        if check:
            _check_rotation(matrix, 3, _ORTHO_TOL)
        self.matrix = matrix
        self.matrix.flags.writeable = False

    @staticmethod
    def identity() -> "Rot3":
        return Rot3(np.eye(3), check=False)

    @staticmethod
    def exp(phi: np.ndarray) -> "Rot3":
        """Rodrigues formula with a second-order fallback for tiny angles."""
        phi = np.asarray(phi, dtype=float)
        theta = _norm3(phi)
        k = _hat(phi)
        if theta < SMALL_ANGLE:
            m = _I3 + k + 0.5 * (k @ k)
        else:
            a = math.sin(theta) / theta
            b = (1.0 - math.cos(theta)) / (theta * theta)
            m = _I3 + a * k + b * (k @ k)
        return Rot3(m, check=False)

    @staticmethod
    def rz(yaw: float) -> "Rot3":
        return Rot3.exp(np.array([0.0, 0.0, yaw]))

    @staticmethod
    def from_rpy(roll: float, pitch: float, yaw: float) -> "Rot3":
        """Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
        return (
            Rot3.exp(np.array([0.0, 0.0, yaw]))
            .compose(Rot3.exp(np.array([0.0, pitch, 0.0])))
            .compose(Rot3.exp(np.array([roll, 0.0, 0.0])))
        )

    def to_rpy(self) -> tuple[float, float, float]:
        """Inverse of from_rpy; pitch in [-pi/2, pi/2]."""
        m = self.matrix
        pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
        if abs(m[2, 0]) < 1.0 - 1e-12:
            roll = math.atan2(m[2, 1], m[2, 2])
            yaw = math.atan2(m[1, 0], m[0, 0])
        else:
            # gimbal lock: fold all z-rotation into yaw
            roll = 0.0
            yaw = math.atan2(-m[0, 1], m[1, 1])
        return roll, pitch, yaw

    def log(self) -> np.ndarray:
        m = self.matrix
        w = _vee((m - m.T) / 2.0)
        s = _norm3(w)
        c = (m[0, 0] + m[1, 1] + m[2, 2] - 1.0) / 2.0
        theta = math.atan2(s, c)
        if theta < SMALL_ANGLE:
            return w * (1.0 + theta * theta / 6.0)
        if theta > math.pi - 1e-6:
            # axis from (R + I)/2, which tends to axis*axis^T at theta == pi
            b = (m + np.eye(3)) / 2.0
            k = int(np.argmax(np.diag(b)))
            axis = b[:, k] / math.sqrt(max(b[k, k], 1e-15))
            axis = axis / np.linalg.norm(axis)
            if s > 1e-12:
                if float(axis @ w) < 0.0:
                    axis = -axis
            else:
                for comp in axis:
                    if abs(comp) > 1e-12:
                        if comp < 0.0:
                            axis = -axis
                        break
            return theta * axis
        return (theta / s) * w

    def compose(self, other: "Rot3") -> "Rot3":
        return Rot3(self.matrix @ other.matrix, check=False)

    def inverse(self) -> "Rot3":
        return Rot3(self.matrix.T.copy(), check=False)

    def rotate(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)

    def angle_to(self, other: "Rot3") -> float:
        return float(np.linalg.norm(group_error(self, other)))

    def __repr__(self) -> str:
        return f"Rot3(rpy={self.to_rpy()})"


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = _norm3(phi)
    k = _hat(phi)
    if theta < SMALL_ANGLE:
        return _I3 + 0.5 * k + (k @ k) / 6.0
    a = (1.0 - math.cos(theta)) / (theta * theta)
    b = (theta - math.sin(theta)) / (theta ** 3)
    return _I3 + a * k + b * (k @ k)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = _norm3(phi)
    k = _hat(phi)
    if theta < SMALL_ANGLE:
        return _I3 - 0.5 * k + (k @ k) / 12.0
    c = (1.0 / (theta * theta)) - (1.0 + math.cos(theta)) / (
        2.0 * theta * math.sin(theta)
    )
    return _I3 - 0.5 * k + c * (k @ k)


class Pose3:
    """Rigid body transform in SE(3): rotation plus translation in meters."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Rot3, translation: np.ndarray):
        translation = np.asarray(translation, dtype=float)
        if translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        # single scalar check catches both nan and inf components
        if not math.isfinite(translation[0] + translation[1] + translation[2]):
            raise ValueError("translation must be finite")
        self.rotation = rotation
        self.translation = translation
        self.translation.flags.writeable = False

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(Rot3.identity(), np.zeros(3))

    @staticmethod
    def from_rt(rotation: Rot3, translation) -> "Pose3":
        return Pose3(rotation, np.asarray(translation, dtype=float))

    @staticmethod
    def from_translation(t) -> "Pose3":
        return Pose3(Rot3.identity(), np.asarray(t, dtype=float))

    @staticmethod
    def exp(xi: np.ndarray) -> "Pose3":
        """xi = (rotation xyz, translation xyz)."""
        xi = np.asarray(xi, dtype=float)
        phi, rho = xi[:3], xi[3:]
        return Pose3(Rot3.exp(phi), so3_left_jacobian(phi) @ rho)

    def log(self) -> np.ndarray:
        phi = self.rotation.log()
        rho = so3_left_jacobian_inv(phi) @ self.translation
        return np.concatenate([phi, rho])

    def compose(self, other: "Pose3") -> "Pose3":
        return Pose3(
            self.rotation.compose(other.rotation),
            self.rotation.rotate(other.translation) + self.translation,
        )

    def inverse(self) -> "Pose3":
        rinv = self.rotation.inverse()
        return Pose3(rinv, -rinv.rotate(self.translation))

    def transform(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.rotate(p) + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def adjoint(self) -> np.ndarray:
        """6x6 Ad such that Ad @ log(X) == log(self X self^-1) for small X."""
        r = self.rotation.matrix
        ad = np.zeros((6, 6))
        ad[:3, :3] = r
        ad[3:, 3:] = r
        ad[3:, :3] = _hat(self.translation) @ r
        return ad

    def __repr__(self) -> str:
        return f"Pose3(t={self.translation}, rpy={self.rotation.to_rpy()})"


def _se3_q_matrix(phi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Off-diagonal block of the SE(3) left Jacobian (Barfoot-style Q)."""
    theta = _norm3(phi)
    pp = _hat(phi)
    pr = _hat(rho)
    if theta < SMALL_ANGLE:
        c1 = 1.0 / 6.0 - theta * theta / 120.0
        c2 = 1.0 / 24.0 - theta * theta / 720.0
        c3 = 1.0 / 120.0 - theta * theta / 2520.0
    else:
        t3, t4, t5 = theta ** 3, theta ** 4, theta ** 5
        sin_t, cos_t = math.sin(theta), math.cos(theta)
        c1 = (theta - sin_t) / t3
        c2 = (theta * theta + 2.0 * cos_t - 2.0) / (2.0 * t4)
        c3 = (2.0 * theta - 3.0 * sin_t + theta * cos_t) / (2.0 * t5)
    ppr = pp @ pr
    prp = pr @ pp
    q = (
        0.5 * pr
        + c1 * (ppr + prp + pp @ prp)
        + c2 * (pp @ ppr + prp @ pp - 3.0 * pp @ prp)
        + c3 * (pp @ prp @ pp + pp @ ppr @ pp)
    )
    return q


def se3_left_jacobian(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    jl = so3_left_jacobian(phi)
    j = np.zeros((6, 6))
    j[:3, :3] = jl
    j[3:, 3:] = jl
    j[3:, :3] = _se3_q_matrix(phi, rho)
    return j


def se3_left_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    jli = so3_left_jacobian_inv(phi)
    q = _se3_q_matrix(phi, rho)
    j = np.zeros((6, 6))
    j[:3, :3] = jli
    j[3:, 3:] = jli
    j[3:, :3] = -jli @ q @ jli
    return j


def exp_map(xi):
    """Exponential map; dispatches on tangent dimension (1 -> SO(2), 3 -> SO(3), 6 -> SE(3))."""
    if np.isscalar(xi):
        return Rot2.exp(float(xi))
    xi = np.asarray(xi, dtype=float)
    if xi.shape == (1,):
        return Rot2.exp(float(xi[0]))
    if xi.shape == (3,):
        return Rot3.exp(xi)
    if xi.shape == (6,):
        return Pose3.exp(xi)
    raise ValueError(f"tangent must have dimension 1, 3 or 6, got {xi.shape}")


def log_map(m):
    """Logarithm map for Rot2, Rot3 or Pose3."""
    if isinstance(m, (Rot2, Rot3, Pose3)):
        return m.log()
    raise TypeError(f"not a group element: {type(m).__name__}")


def compose(a, b):
    return a.compose(b)


def inverse(a):
    return a.inverse()


def group_error(predicted, measured):
    """Right group-space error log(predicted^-1 measured); zero iff equal."""
    return log_map(predicted.inverse().compose(measured))


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(theta, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w
