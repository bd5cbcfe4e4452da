"""Origin state method: summarize a local odometry chain into one composed
transform + covariance, and decompose consecutive summaries back into an
approximated odometry factor on the receiver side.

Covariance convention: summary covariances are expressed for *left*
perturbations, x = exp(d) . x_nominal, which is the convention under which
first-order compounding reads Sigma = Ad(T_a) Sigma_b Ad(T_a)^T + Sigma_a.
The solver's marginal covariance lives in the right (retraction) tangent and
is converted with the adjoint when a summary is built.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import FactorGraph, pose_key
from .liegroups import Pose3, Rot3
from .solver import marginal_covariance


class StaleSummaryError(ValueError):
    """Out-of-order or duplicate summary from a sender; drop it."""


class CovarianceMode(enum.Enum):
    TUNED = "tuned"
    FIRST_ORDER = "first_order"


@dataclass(frozen=True)
class ChainSummary:
    """Origin-to-ToL transform with covariance and the ToL unary payload."""

    x: Pose3
    cov: np.ndarray  # 6x6, left-perturbation tangent of x
    index: int  # ToL pose index in the sender's chain
    orientation: Rot3 | None = None
    depth: float | None = None


def left_from_right_cov(x: Pose3, cov_right: np.ndarray) -> np.ndarray:
    ad = x.adjoint()
    return ad @ cov_right @ ad.T


def right_from_left_cov(x: Pose3, cov_left: np.ndarray) -> np.ndarray:
    ad = x.inverse().adjoint()
    return ad @ cov_left @ ad.T


def project_psd(m: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Clamp eigenvalues below ``floor``; total (never raises)."""
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    w = np.maximum(w, floor)
    return v @ np.diag(w) @ v.T


def summarize(
    single_graph: FactorGraph,
    robot: int,
    orientation: Rot3 | None = None,
    depth: float | None = None,
) -> ChainSummary:
    """Summary of an optimized single-agent chain at its most recent pose.

    ``orientation`` and ``depth`` are the latest raw unary measurements; they
    ride along in the broadcast and must not also be added to the sender's
    transmitted chain (double counting).
    """
    indices = [k.index for k in single_graph.variables if k.robot == robot and not k.is_anchor]
    if not indices:
        raise ValueError(f"no poses for robot {robot}")
    k = max(indices)
    key = pose_key(robot, k)
    x = single_graph.variables[key]
    cov_right = marginal_covariance(single_graph, key)
    return ChainSummary(
        x=x,
        cov=left_from_right_cov(x, cov_right),
        index=k,
        orientation=orientation,
        depth=depth,
    )


def decompose(prev: ChainSummary, curr: ChainSummary) -> tuple[Pose3, np.ndarray]:
    """Relative transform between two ToLs and its recovered covariance.

    Covariance here is the plain first-order recovery; use
    :func:`recover_covariance` to select the mode explicitly.
    """
    if curr.index <= prev.index:
        raise StaleSummaryError(
            f"stale summary: index {curr.index} not after {prev.index}"
        )
    z = prev.x.inverse().compose(curr.x)
    return z, recover_covariance(prev, curr, CovarianceMode.FIRST_ORDER)


def recover_covariance(
    prev: ChainSummary,
    curr: ChainSummary,
    mode: CovarianceMode,
    step_sigma_trans: float = 0.02,
    step_sigma_rot: float = 0.005,
) -> np.ndarray:
    """Covariance for the decomposed factor z = prev.x^-1 curr.x.

    TUNED scales a configured per-step noise by the number of elapsed steps
    (hand-tuned compounding).  FIRST_ORDER differences the transmitted
    marginals; the untransmitted cross-covariance makes the result indefinite
    in general, so it is projected back onto the PSD cone.
    """
    if mode == CovarianceMode.TUNED:
        n = curr.index - prev.index
        diag = np.array([step_sigma_rot] * 3 + [step_sigma_trans] * 3)
        return np.diag(diag * diag) * float(n)
    ad = prev.x.inverse().adjoint()
    return project_psd(ad @ (curr.cov - prev.cov) @ ad.T)


def compound_covariance(
    sigma_a: np.ndarray, sigma_b: np.ndarray, t_a: Pose3
) -> np.ndarray:
    """First-order covariance of the composition T_a . T_b.

    Inputs are left-perturbation covariances of T_a and T_b respectively.
    """
    ad = t_a.adjoint()
    return ad @ sigma_b @ ad.T + sigma_a
