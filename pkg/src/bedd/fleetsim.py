"""Deterministic multi-AUV world: ground truth, simulated sensors, and the
per-agent update loop that maintains one single-agent odometry graph and one
multi-agent graph per vehicle.

Frame conventions.  Each robot's local frame is the global frame translated
so that the robot's deployment point has local x = y = 0; z and the axes stay
global, so pressure-sensor depth and compass orientation read the same in
both frames.  The anchor variable mapping a robot's local frame to the
global frame is therefore (in truth) the pure horizontal translation of its
deployment point, which all agents know as a prior (tight for themselves,
loose for the others).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acoustic import AcousticMessage, Channel, Delivery, decode, encode, next_transmitter
from .factors import (
    BearingMeasurement,
    FactorKind,
    FactorRecord,
    NoiseModel,
)
from .graph import FactorGraph, VariableKey, anchor_key, pose_key
from .liegroups import Pose3, Rot3
from .osm import ChainSummary, CovarianceMode, project_psd, recover_covariance
from .scenario import ScenarioConfig
from .solver import SolverParams, marginal_covariance, optimize

_SIGMA_FLOOR = 1e-6
# codec-representable sigma range, with margin for the log quantization
_CODEC_SIGMA_LO = 1.05e-3
_CODEC_SIGMA_HI = 2.3e3


class GroundTruth:
    """Per robot, per step: true pose in the global frame."""

    def __init__(self, poses: list[list[Pose3]]):
        self.poses = poses
        self.fleet_size = len(poses)
        self.steps = len(poses[0]) if poses else 0

    def pose(self, robot: int, step: int) -> Pose3:
        return self.poses[robot][step]

    def position(self, robot: int, step: int) -> np.ndarray:
        return self.poses[robot][step].translation

    def local_pose(self, robot: int, step: int) -> Pose3:
        """Truth expressed in the robot's local (deployment-centered) frame."""
        return self.anchor(robot).inverse().compose(self.poses[robot][step])

    def anchor(self, robot: int) -> Pose3:
        t0 = self.poses[robot][0].translation
        return Pose3.from_translation([t0[0], t0[1], 0.0])


def generate_truth(cfg: ScenarioConfig) -> GroundTruth:
    poses = [
        [traj.pose_at(t, cfg.step_duration) for t in range(cfg.steps)]
        for traj in cfg.trajectories
    ]
    return GroundTruth(poses)


@dataclass(frozen=True)
class SensorReading:
    odometry: Pose3 | None  # relative transform since the previous step
    orientation: Rot3
    depth: float


def sense(
    truth: GroundTruth,
    robot: int,
    step: int,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> SensorReading:
    """Noisy dead reckoning, compass orientation, and pressure depth."""
    pose = truth.pose(robot, step)
    odom = None
    if step >= 1:
        rel = truth.pose(robot, step - 1).inverse().compose(pose)
        eta = np.concatenate(
            [
                rng.normal(0.0, 1.0, 3) * cfg.odom_sigma_rot,
                rng.normal(0.0, 1.0, 3) * cfg.odom_sigma_trans,
            ]
        )
        odom = Pose3.exp(rel.log() + eta)
    xi = pose.rotation.compose(
        Rot3.exp(rng.normal(0.0, 1.0, 3) * cfg.orientation_sigma)
    )
    d = pose.translation[2] + rng.normal(0.0, cfg.depth_sigma)
    return SensorReading(odom, xi, d)


def _noise(sigmas) -> NoiseModel:
    s = np.maximum(np.asarray(sigmas, dtype=float), _SIGMA_FLOOR)
    return NoiseModel.from_sigmas(s)


class Agent:
    """One vehicle: its two factor graphs and per-sender summary history."""

    def __init__(
        self,
        robot: int,
        cfg: ScenarioConfig,
        deployment_anchors: dict[int, Pose3],
        first_reading: SensorReading,
    ):
        self.robot = robot
        self.cfg = cfg
        self.deployment_anchors = deployment_anchors
        self.single = FactorGraph()
        self.multi = FactorGraph()
        self.last_summary: dict[int, ChainSummary] = {}
        self.last_remote_index: dict[int, int] = {}
        self.stale_count = 0
        self.bearing_count = 0
        self.divergences: list[int] = []
        self.solver_iterations = 0

        x0 = Pose3(first_reading.orientation, np.array([0.0, 0.0, first_reading.depth]))
        prior_noise = _noise(
            [cfg.orientation_sigma] * 3
            + [_SIGMA_FLOOR, _SIGMA_FLOOR, cfg.depth_sigma]
        )
        k0 = pose_key(robot, 0)
        self.single.add_variable(k0, x0)
        self.single.add_factor(
            FactorRecord(FactorKind.POSE_PRIOR, (k0,), x0, prior_noise)
        )
        self.multi.add_variable(k0, x0)
        self.multi.add_factor(
            FactorRecord(FactorKind.POSE_PRIOR, (k0,), x0, prior_noise)
        )

        a_self = anchor_key(robot)
        self.multi.add_variable(a_self, deployment_anchors[robot])
        self.multi.add_factor(
            FactorRecord(
                FactorKind.ANCHOR_PRIOR,
                (a_self,),
                deployment_anchors[robot],
                _noise([_SIGMA_FLOOR] * 6),
            )
        )

        # running left-perturbation covariance of the local chain head
        self.chain_cov = np.diag(
            np.maximum(
                np.array(
                    [cfg.orientation_sigma] * 3
                    + [_SIGMA_FLOOR, _SIGMA_FLOOR, cfg.depth_sigma]
                ),
                _SIGMA_FLOOR,
            )
            ** 2
        )
        self._odom_noise = _noise(
            [cfg.odom_sigma_rot] * 3 + [cfg.odom_sigma_trans] * 3
        )
        self._orient_noise = _noise([cfg.orientation_sigma] * 3)
        self._depth_noise = _noise([cfg.depth_sigma])
        self._bearing_noise = _noise([cfg.channel.bearing_sigma] * 2)

    # ---- own chain -------------------------------------------------------

    def add_own_motion(self, step: int, reading: SensorReading) -> None:
        u = reading.odometry
        prev_key = pose_key(self.robot, step - 1)
        key = pose_key(self.robot, step)
        for g in (self.single, self.multi):
            init = g.variables[prev_key].compose(u)
            g.add_variable(key, init)
            g.add_factor(
                FactorRecord(FactorKind.ODOMETRY, (prev_key, key), u, self._odom_noise)
            )
        est = self.single.variables[key]
        ad = est.adjoint()
        self.chain_cov = self.chain_cov + ad @ self._odom_noise.covariance @ ad.T

    def add_own_unaries(self, step: int, reading: SensorReading) -> None:
        key = pose_key(self.robot, step)
        self.single.add_factor(
            FactorRecord(
                FactorKind.ORIENTATION, (key,), reading.orientation, self._orient_noise
            )
        )
        self.single.add_factor(
            FactorRecord(FactorKind.DEPTH, (key,), reading.depth, self._depth_noise)
        )
        a = anchor_key(self.robot)
        self.multi.add_factor(
            FactorRecord(
                FactorKind.ORIENTATION, (key, a), reading.orientation, self._orient_noise
            )
        )
        self.multi.add_factor(
            FactorRecord(FactorKind.DEPTH, (key, a), reading.depth, self._depth_noise)
        )

    # ---- transmission ----------------------------------------------------

    def make_message(self, step: int, reading: SensorReading) -> AcousticMessage:
        """Summarize the local chain at this time of launch.

        The unary measurements taken this step ride along in the message and
        are not yet part of the chain (they are appended after transmission,
        so the receiver never counts them twice against the same summary).
        """
        key = pose_key(self.robot, step)
        if self.cfg.summary_covariance == "marginal":
            self.optimize_single(step)
            x = self.single.variables[key]
            cov_right = marginal_covariance(self.single, key)
            ad = x.adjoint()
            cov_left = ad @ cov_right @ ad.T
        else:
            x = self.single.variables[key]
            cov_left = self.chain_cov
        sigmas = np.sqrt(np.maximum(np.diag(cov_left), 0.0))
        sigmas = np.clip(sigmas, _CODEC_SIGMA_LO, _CODEC_SIGMA_HI)
        return AcousticMessage(
            sender=self.robot,
            sequence=step % 256,
            depth=reading.depth,
            pose=x,
            sigmas=tuple(sigmas),
        )

    # ---- reception -------------------------------------------------------

    def receive(self, delivery: Delivery, step: int) -> None:
        msg = delivery.message
        s = msg.sender
        if s == self.robot:
            return
        k = step  # time of launch aligns with the sender's pose this step
        cov_left = np.diag(np.asarray(msg.sigmas) ** 2)
        summary = ChainSummary(
            x=msg.pose, cov=cov_left, index=k, orientation=msg.pose.rotation,
            depth=msg.depth,
        )
        key = pose_key(s, k)

        if s not in self.last_summary:
            self._bootstrap_sender(s, summary, key)
        else:
            prev = self.last_summary[s]
            if k <= prev.index:
                self.stale_count += 1
                return
            z = prev.x.inverse().compose(summary.x)
            cov = recover_covariance(
                prev,
                summary,
                self.cfg.covariance_mode,
                step_sigma_trans=self.cfg.tuned_sigma_trans,
                step_sigma_rot=self.cfg.tuned_sigma_rot,
            )
            if self.cfg.covariance_mode == CovarianceMode.FIRST_ORDER:
                ad = z.inverse().adjoint()
                cov = project_psd(ad @ cov @ ad.T, 1e-10)
            prev_key = pose_key(s, prev.index)
            init = self.multi.variables[prev_key].compose(z)
            self.multi.add_variable(key, init)
            self.multi.add_factor(
                FactorRecord(
                    FactorKind.ODOMETRY, (prev_key, key), z, NoiseModel(cov)
                )
            )

        a_s = anchor_key(s)
        self.multi.add_factor(
            FactorRecord(
                FactorKind.ORIENTATION, (key, a_s), summary.orientation,
                self._orient_noise,
            )
        )
        self.multi.add_factor(
            FactorRecord(FactorKind.DEPTH, (key, a_s), summary.depth, self._depth_noise)
        )

        if self.cfg.bearing_factors:
            own_key = pose_key(self.robot, step)
            self.multi.add_factor(
                FactorRecord(
                    FactorKind.BEARING,
                    (own_key, key, anchor_key(self.robot), a_s),
                    BearingMeasurement(
                        delivery.azimuth, delivery.elevation, s, self.robot
                    ),
                    self._bearing_noise,
                )
            )
            self.bearing_count += 1

        self.last_summary[s] = summary
        self.last_remote_index[s] = k

    def _bootstrap_sender(self, s: int, summary: ChainSummary, key: VariableKey) -> None:
        a_s = anchor_key(s)
        self.multi.add_variable(a_s, self.deployment_anchors[s])
        self.multi.add_factor(
            FactorRecord(
                FactorKind.ANCHOR_PRIOR,
                (a_s,),
                self.deployment_anchors[s],
                _noise(
                    [self.cfg.remote_anchor_sigma_rot] * 3
                    + [self.cfg.remote_anchor_sigma_pos] * 3
                ),
            )
        )
        self.multi.add_variable(key, summary.x)
        ad = summary.x.inverse().adjoint()
        cov_right = ad @ summary.cov @ ad.T
        self.multi.add_factor(
            FactorRecord(
                FactorKind.POSE_PRIOR,
                (key,),
                summary.x,
                _noise(np.sqrt(np.maximum(np.diag(cov_right), 0.0))),
            )
        )

    # ---- optimization ----------------------------------------------------

    def optimize_single(self, step: int) -> None:
        values, report = optimize(self.single)
        self.single.variables.update(values)
        self.solver_iterations += report.iterations
        if not report.converged:
            self.divergences.append(step)

    def optimize_multi(self, step: int) -> None:
        values, report = optimize(self.multi)
        self.multi.variables.update(values)
        self.solver_iterations += report.iterations
        if not report.converged:
            self.divergences.append(step)

    # ---- queries ---------------------------------------------------------

    def estimate_of(self, robot: int, step: int) -> tuple[int, np.ndarray]:
        """(pose step tag, estimated global position) of a robot, as known now."""
        if robot == self.robot:
            anchor = self.multi.variables[anchor_key(self.robot)]
            return step, anchor.compose(self.multi.variables[pose_key(robot, step)]).translation
        if robot in self.last_remote_index:
            k = self.last_remote_index[robot]
            anchor = self.multi.variables[anchor_key(robot)]
            return k, anchor.compose(self.multi.variables[pose_key(robot, k)]).translation
        # nothing heard yet: fall back to the deployment prior
        return 0, self.deployment_anchors[robot].translation.copy()

    def final_trajectory_estimates(self) -> list[tuple[int, int, np.ndarray]]:
        """(robot, step, estimated global position) for every pose variable."""
        out = []
        for key in self.multi.ordering():
            if key.is_anchor:
                continue
            anchor = self.multi.variables[anchor_key(key.robot)]
            out.append(
                (key.robot, key.index,
                 anchor.compose(self.multi.variables[key]).translation)
            )
        return out


@dataclass
class RunResult:
    cfg: ScenarioConfig
    truth: GroundTruth
    # records[agent, step, robot] = (pose step tag, est xyz, true xyz)
    records: np.ndarray
    deliveries: list
    agents: list
    divergences: list = field(default_factory=list)
    outliers_injected: int = 0
    stale_dropped: int = 0
    solver_iterations: int = 0


def run(cfg: ScenarioConfig) -> RunResult:
    """Execute the schedule: sense, summarize, broadcast, integrate, solve."""
    truth = generate_truth(cfg)
    fleet = range(cfg.fleet_size)
    channel = Channel(cfg.channel)
    sensor_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 17]))
    deployment = {r: truth.anchor(r) for r in fleet}

    agents: list[Agent] = []
    records = np.zeros((cfg.fleet_size, cfg.steps, cfg.fleet_size, 7))
    delivery_log = []
    outliers = 0

    for t in range(cfg.steps):
        readings = [sense(truth, r, t, cfg, sensor_rng) for r in fleet]
        if t == 0:
            agents = [Agent(r, cfg, deployment, readings[r]) for r in fleet]
        else:
            for r in fleet:
                agents[r].add_own_motion(t, readings[r])

        sender = next_transmitter(t, cfg.fleet_size, cfg.slot_length)
        message = agents[sender].make_message(t, readings[sender])
        message = decode(encode(message))  # quantize through the wire format
        true_poses = {r: truth.pose(r, t) for r in fleet}
        deliveries = channel.transmit(true_poses, sender, message)

        for r in fleet:
            agents[r].add_own_unaries(t, readings[r])
        for d in deliveries:
            agents[d.receiver].receive(d, t)
            delivery_log.append((t, sender, d.receiver, d.outlier))
            outliers += int(d.outlier)

        if t % cfg.optimize_every == 0 or t == cfg.steps - 1:
            for r in fleet:
                if cfg.summary_covariance != "marginal" or r != sender:
                    agents[r].optimize_single(t)
                agents[r].optimize_multi(t)

        for a in fleet:
            for r in fleet:
                tag, est = agents[a].estimate_of(r, t)
                records[a, t, r, 0] = tag
                records[a, t, r, 1:4] = est
                records[a, t, r, 4:7] = truth.position(r, tag)

    divergences = [(r, s) for r in fleet for s in agents[r].divergences]
    return RunResult(
        cfg=cfg,
        truth=truth,
        records=records,
        deliveries=delivery_log,
        agents=list(agents),
        divergences=divergences,
        outliers_injected=outliers,
        stale_dropped=sum(a.stale_count for a in agents),
        solver_iterations=sum(a.solver_iterations for a in agents),
    )
