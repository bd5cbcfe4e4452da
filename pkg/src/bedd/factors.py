"""Residuals and analytic Jacobians for every cost term in the graphs.

Factor kinds, their variable arity and residual dimension:

    PosePrior    (x,)                     -> 6
    AnchorPrior  (anchor,)                -> 6
    Odometry     (x_prev, x_next)         -> 6
    Orientation  (x,) | (x, anchor)       -> 3
    Depth        (x,) | (x, anchor)       -> 1
    Bearing      (x_rx, x_tx, a_rx, a_tx) -> 2

All group-valued residuals use the right error convention
log(predicted^-1 measured); Jacobians are taken with respect to the
retraction x -> x . exp(delta) used by the solver.  Azimuth is the angle of
the horizontal offset measured with a four-quadrant arctangent; elevation is
the angle from the +z axis (z up, depth negative), both between the
transmitter and receiver positions in the anchored global frame.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor

from .liegroups import (
    Pose3,
    Rot3,
    _hat,
    group_error,
    se3_left_jacobian_inv,
    so3_left_jacobian_inv,
    wrap_angle,
)


class DegenerateGeometryError(ValueError):
    """Transmitter and receiver coincide; bearing is undefined."""


class UnboundVariableError(KeyError):
    """A factor references a variable key missing from the assignment."""


class FactorKind(enum.Enum):
    POSE_PRIOR = "PosePrior"
    ANCHOR_PRIOR = "AnchorPrior"
    ODOMETRY = "Odometry"
    ORIENTATION = "Orientation"
    DEPTH = "Depth"
    BEARING = "Bearing"


_RESIDUAL_DIM = {
    FactorKind.POSE_PRIOR: 6,
    FactorKind.ANCHOR_PRIOR: 6,
    FactorKind.ODOMETRY: 6,
    FactorKind.ORIENTATION: 3,
    FactorKind.DEPTH: 1,
    FactorKind.BEARING: 2,
}

_ARITY = {
    FactorKind.POSE_PRIOR: (1,),
    FactorKind.ANCHOR_PRIOR: (1,),
    FactorKind.ODOMETRY: (2,),
    FactorKind.ORIENTATION: (1, 2),
    FactorKind.DEPTH: (1, 2),
    FactorKind.BEARING: (4,),
}


class NoiseModel:
    """Gaussian noise with a symmetric positive-definite covariance."""

    __slots__ = ("covariance", "_sqrt_info")

    def __init__(self, covariance: np.ndarray):
        covariance = np.asarray(covariance, dtype=float)
        if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
            raise ValueError("covariance must be square")
        if not np.allclose(covariance, covariance.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        # raises LinAlgError if not positive definite
        cho_factor(covariance, lower=True)
        self.covariance = covariance
        lower = np.linalg.cholesky(covariance)
        # whitening: e_w = L^-1 e, so ||e_w||^2 is the Mahalanobis norm
        self._sqrt_info = np.linalg.inv(lower)

    @staticmethod
    def from_sigmas(sigmas: Sequence[float]) -> "NoiseModel":
        s = np.asarray(sigmas, dtype=float)
        return NoiseModel(np.diag(s * s))

    @staticmethod
    def isotropic(dim: int, sigma: float) -> "NoiseModel":
        return NoiseModel(np.eye(dim) * sigma * sigma)

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    def whiten(self, e: np.ndarray) -> np.ndarray:
        return self._sqrt_info @ e

    def mahalanobis_sq(self, e: np.ndarray) -> float:
        w = self.whiten(np.asarray(e, dtype=float))
        return float(w @ w)


@dataclass(frozen=True)
class BearingMeasurement:
    """Azimuth/elevation of an incoming acoustic signal, global frame."""

    azimuth: float
    elevation: float
    transmitter: int
    receiver: int

    def __post_init__(self):
        if not -math.pi < self.azimuth <= math.pi + 1e-12:
            raise ValueError("azimuth must be in (-pi, pi]")
        if not -1e-12 <= self.elevation <= math.pi + 1e-12:
            raise ValueError("elevation must be in [0, pi]")


@dataclass(frozen=True)
class FactorRecord:
    """One cost term: kind, attached variable keys, measurement, noise."""

    kind: FactorKind
    keys: tuple
    measurement: object
    noise: NoiseModel
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        if len(self.keys) not in _ARITY[self.kind]:
            raise ValueError(
                f"{self.kind.value} factor takes {_ARITY[self.kind]} keys, "
                f"got {len(self.keys)}"
            )
        if self.noise.dim != _RESIDUAL_DIM[self.kind]:
            raise ValueError(
                f"{self.kind.value} residual has dimension "
                f"{_RESIDUAL_DIM[self.kind]}, noise has {self.noise.dim}"
            )

    @property
    def dim(self) -> int:
        return _RESIDUAL_DIM[self.kind]


# ---------------------------------------------------------------------------
# residuals


def prior_error(x0: Pose3, p: Pose3) -> np.ndarray:
    return group_error(x0, p)


def anchor_prior_error(delta: Pose3, a: Pose3) -> np.ndarray:
    return group_error(delta, a)


def odometry_error(x_prev: Pose3, x_next: Pose3, u: Pose3) -> np.ndarray:
    u_hat = x_prev.inverse().compose(x_next)
    return group_error(u_hat, u)


def orientation_error(x: Pose3, anchor: Pose3 | None, xi: Rot3) -> np.ndarray:
    r_hat = x.rotation if anchor is None else anchor.rotation.compose(x.rotation)
    return group_error(r_hat, xi)


def depth_error(x: Pose3, anchor: Pose3 | None, d: float) -> float:
    z = x.translation[2] if anchor is None else anchor.transform(x.translation)[2]
    return float(z - d)


def predict_bearing(x_rx_global: Pose3, x_tx_global: Pose3) -> tuple[float, float]:
    """Azimuth in (-pi, pi] and elevation from +z in [0, pi].

    Straight-up/straight-down geometry has no defined azimuth; 0 is returned
    by convention (the corresponding Jacobian row is zeroed).
    """
    delta = x_tx_global.translation - x_rx_global.translation
    r = float(np.linalg.norm(delta))
    if r < 1e-12:
        raise DegenerateGeometryError("coincident transmitter and receiver")
    s = math.hypot(delta[0], delta[1])
    azimuth = 0.0 if s < 1e-12 else math.atan2(delta[1], delta[0])
    elevation = math.atan2(s, delta[2])
    return azimuth, elevation


def so2_angle_error(predicted: float, measured: float) -> float:
    """log(R_predicted^T R_measured), always wrapped into (-pi, pi]."""
    return wrap_angle(measured - predicted)


def bearing_error(
    x_rx: Pose3,
    x_tx: Pose3,
    delta_rx: Pose3,
    delta_tx: Pose3,
    c: BearingMeasurement,
) -> np.ndarray:
    az_hat, el_hat = predict_bearing(
        delta_rx.compose(x_rx), delta_tx.compose(x_tx)
    )
    return np.array(
        [
            so2_angle_error(az_hat, c.azimuth),
            so2_angle_error(el_hat, c.elevation),
        ]
    )


# ---------------------------------------------------------------------------
# linearization


def _resolve(keys, values):
    try:
        return [values[k] for k in keys]
    except KeyError as exc:
        raise UnboundVariableError(f"unbound variable {exc.args[0]!r}") from exc


def _position_jacobians(x: Pose3, anchor: Pose3 | None):
    """d(global position)/d(tangent) for the pose and its anchor."""
    ra = np.eye(3) if anchor is None else anchor.rotation.matrix
    jx = np.zeros((3, 6))
    jx[:, 3:] = ra @ x.rotation.matrix
    if anchor is None:
        return jx, None
    ja = np.zeros((3, 6))
    ja[:, :3] = -ra @ _hat(x.translation)
    ja[:, 3:] = ra
    return jx, ja


def factor_jacobian(f: FactorRecord, values) -> tuple[np.ndarray, list[np.ndarray]]:
    """Residual and one Jacobian block per attached variable, in key order."""
    vals = _resolve(f.keys, values)

    if f.kind in (FactorKind.POSE_PRIOR, FactorKind.ANCHOR_PRIOR):
        (x,) = vals
        e = group_error(x, f.measurement)
        return e, [-se3_left_jacobian_inv(e)]

    if f.kind == FactorKind.ODOMETRY:
        a, b = vals
        u = f.measurement
        e = odometry_error(a, b, u)
        jb = -se3_left_jacobian_inv(e)
        ja = se3_left_jacobian_inv(-e) @ u.inverse().adjoint()
        return e, [ja, jb]

    if f.kind == FactorKind.ORIENTATION:
        x = vals[0]
        anchor = vals[1] if len(vals) == 2 else None
        e = orientation_error(x, anchor, f.measurement)
        jli = so3_left_jacobian_inv(e)
        jx = np.zeros((3, 6))
        jx[:, :3] = -jli
        if anchor is None:
            return e, [jx]
        ja = np.zeros((3, 6))
        ja[:, :3] = -jli @ x.rotation.matrix.T
        return e, [jx, ja]

    if f.kind == FactorKind.DEPTH:
        x = vals[0]
        anchor = vals[1] if len(vals) == 2 else None
        e = np.array([depth_error(x, anchor, f.measurement)])
        jx, ja = _position_jacobians(x, anchor)
        if anchor is None:
            return e, [jx[2:3, :]]
        return e, [jx[2:3, :], ja[2:3, :]]

    if f.kind == FactorKind.BEARING:
        x_rx, x_tx, d_rx, d_tx = vals
        c = f.measurement
        e = bearing_error(x_rx, x_tx, d_rx, d_tx, c)

        delta = d_tx.compose(x_tx).translation - d_rx.compose(x_rx).translation
        s2 = delta[0] ** 2 + delta[1] ** 2
        s = math.sqrt(s2)
        r2 = s2 + delta[2] ** 2
        # d(angle)/d(delta); azimuth (and elevation) rows zeroed when the
        # geometry is straight up/down and carries no azimuth information
        d_angles = np.zeros((2, 3))
        if s > 1e-12:
            d_angles[0] = [-delta[1] / s2, delta[0] / s2, 0.0]
            d_angles[1] = [
                delta[0] * delta[2] / (r2 * s),
                delta[1] * delta[2] / (r2 * s),
                -s / r2,
            ]
        # residual is measured - predicted, so the chain picks up a sign flip
        d_res = -d_angles

        j_rx, j_arx = _position_jacobians(x_rx, d_rx)
        j_tx, j_atx = _position_jacobians(x_tx, d_tx)
        return e, [
            d_res @ (-j_rx),
            d_res @ j_tx,
            d_res @ (-j_arx),
            d_res @ j_atx,
        ]

    raise ValueError(f"unknown factor kind {f.kind}")


def factor_error(f: FactorRecord, values) -> np.ndarray:
    """Residual only (cheaper than factor_jacobian when solving is not needed)."""
    vals = _resolve(f.keys, values)
    if f.kind in (FactorKind.POSE_PRIOR, FactorKind.ANCHOR_PRIOR):
        return group_error(vals[0], f.measurement)
    if f.kind == FactorKind.ODOMETRY:
        return odometry_error(vals[0], vals[1], f.measurement)
    if f.kind == FactorKind.ORIENTATION:
        anchor = vals[1] if len(vals) == 2 else None
        return orientation_error(vals[0], anchor, f.measurement)
    if f.kind == FactorKind.DEPTH:
        anchor = vals[1] if len(vals) == 2 else None
        return np.array([depth_error(vals[0], anchor, f.measurement)])
    if f.kind == FactorKind.BEARING:
        return bearing_error(vals[0], vals[1], vals[2], vals[3], f.measurement)
    raise ValueError(f"unknown factor kind {f.kind}")
