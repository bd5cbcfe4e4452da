"""Scenario configuration: fleet trajectories, sensor noise, channel setup.

Scenario files are flat ``key = value`` text (``#`` starts a comment).  Keys
mirror the ScenarioConfig field names; angles are given in degrees with a
``_deg`` suffix.  Per-robot trajectories use ``trajectory.<robot>`` keys whose
value is a kind followed by ``name=value`` tokens, e.g.::

    fleet_size = 5
    steps = 240
    seed = 3
    dropout = 0.5
    bearing_sigma_deg = 10
    trajectory.0 = circle cx=0 cy=0 radius=6 rate_deg=2.5 phase_deg=0 depth=-4

Robots without an explicit trajectory get a default interleaved circle at a
distinct depth (the fleet must be non-planar for the elevation angle to carry
range information).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .acoustic import ChannelConfig
from .liegroups import Pose3, Rot3
from .osm import CovarianceMode


class ConfigError(ValueError):
    """Bad scenario file or override; message names the offending keys."""


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str  # lawnmower | circle | helix
    params: dict = field(default_factory=dict)

    def pose_at(self, step: int, step_duration: float = 1.0) -> Pose3:
        t = step * step_duration
        p = self.params
        if self.kind in ("circle", "helix"):
            phase = p.get("phase", 0.0)
            rate = p.get("rate", math.radians(1.5))
            radius = p.get("radius", 10.0)
            cx, cy = p.get("cx", 0.0), p.get("cy", 0.0)
            theta = phase + rate * t
            z = p.get("depth", 0.0)
            if self.kind == "helix":
                z -= p.get("pitch", 0.01) * t
            pos = np.array(
                [cx + radius * math.cos(theta), cy + radius * math.sin(theta), z]
            )
            yaw = theta + math.pi / 2.0
            return Pose3(Rot3.rz(yaw), pos)
        if self.kind == "lawnmower":
            leg = p.get("leg", 40.0)
            spacing = p.get("spacing", 10.0)
            speed = p.get("speed", 0.5)
            x0, y0 = p.get("x0", 0.0), p.get("y0", 0.0)
            z = p.get("depth", 0.0)
            s = speed * t
            period = 2.0 * (leg + spacing)
            n_rows, s = divmod(s, period)
            y_base = y0 + 2.0 * spacing * n_rows
            # leg out, cross, leg back, cross
            if s < leg:
                pos = (x0 + s, y_base)
                yaw = 0.0
            elif s < leg + spacing:
                pos = (x0 + leg, y_base + (s - leg))
                yaw = math.pi / 2.0
            elif s < 2.0 * leg + spacing:
                pos = (x0 + leg - (s - leg - spacing), y_base + spacing)
                yaw = math.pi
            else:
                pos = (x0, y_base + spacing + (s - 2.0 * leg - spacing))
                yaw = math.pi / 2.0
            return Pose3(Rot3.rz(yaw), np.array([pos[0], pos[1], z]))
        raise ConfigError(f"unknown trajectory kind {self.kind!r}")


def default_trajectories(fleet_size: int) -> list[TrajectorySpec]:
    """Interleaved circles with per-robot depth offsets (non-planar fleet)."""
    out = []
    for r in range(fleet_size):
        out.append(
            TrajectorySpec(
                "circle",
                {
                    "cx": 3.0 * math.cos(2.0 * math.pi * r / max(fleet_size, 1)),
                    "cy": 3.0 * math.sin(2.0 * math.pi * r / max(fleet_size, 1)),
                    "radius": 6.0,
                    "rate": math.radians(2.5),
                    "phase": 2.0 * math.pi * r / max(fleet_size, 1),
                    "depth": -4.0 - 3.0 * r,
                },
            )
        )
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    fleet_size: int = 5
    steps: int = 240
    step_duration: float = 1.0
    trajectories: tuple = ()
    odom_sigma_trans: float = 0.15  # m per step
    odom_sigma_rot: float = 0.002  # rad per step
    orientation_sigma: float = 0.01  # rad
    depth_sigma: float = 0.05  # m
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    covariance_mode: CovarianceMode = CovarianceMode.TUNED
    tuned_sigma_trans: float = 0.15
    tuned_sigma_rot: float = 0.005
    summary_covariance: str = "compound"  # compound | marginal
    bearing_factors: bool = True
    optimize_every: int = 25
    slot_length: int = 1
    remote_anchor_sigma_pos: float = 10.0
    remote_anchor_sigma_rot: float = math.radians(30.0)
    seed: int = 0

    def __post_init__(self):
        if self.fleet_size >= 2 and not self.trajectories:
            object.__setattr__(
                self, "trajectories", tuple(default_trajectories(self.fleet_size))
            )
        if len(self.trajectories) != self.fleet_size:
            raise ConfigError(
                f"need {self.fleet_size} trajectories, got {len(self.trajectories)}"
            )
        if self.fleet_size < 2:
            raise ConfigError("multi-agent scenario needs fleet_size >= 2")
        depths = [t.params.get("depth", 0.0) for t in self.trajectories]
        if len(set(depths)) < 2:
            raise ConfigError("fleet must be non-planar: assign distinct depths")
        if self.summary_covariance not in ("compound", "marginal"):
            raise ConfigError("summary_covariance must be 'compound' or 'marginal'")


_SCALAR_KEYS = {
    "fleet_size": int,
    "steps": int,
    "step_duration": float,
    "odom_sigma_trans": float,
    "odom_sigma_rot": float,
    "orientation_sigma": float,
    "depth_sigma": float,
    "tuned_sigma_trans": float,
    "tuned_sigma_rot": float,
    "summary_covariance": str,
    "optimize_every": int,
    "slot_length": int,
    "remote_anchor_sigma_pos": float,
    "remote_anchor_sigma_rot_deg": float,
    "seed": int,
    "bearing_factors": None,  # bool, handled below
    "covariance_mode": str,
    # channel
    "dropout": float,
    "bearing_sigma_deg": float,
    "outlier_prob": float,
    "outlier_min_deg": float,
    "outlier_max_deg": float,
}


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_trajectory(value: str) -> TrajectorySpec:
    tokens = value.split()
    if not tokens:
        raise ConfigError("empty trajectory spec")
    kind = tokens[0]
    params = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ConfigError(f"bad trajectory token {tok!r}")
        name, raw = tok.split("=", 1)
        v = float(raw)
        if name.endswith("_deg"):
            name, v = name[:-4], math.radians(v)
        params[name] = v
    if kind not in ("circle", "helix", "lawnmower"):
        raise ConfigError(f"unknown trajectory kind {kind!r}")
    return TrajectorySpec(kind, params)


def scenario_from_items(items: dict[str, str], base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Build a config from flat key/value strings; unknown keys are an error."""
    base = base or ScenarioConfig()
    unknown = [
        k
        for k in items
        if k not in _SCALAR_KEYS and not k.startswith("trajectory.")
    ]
    if unknown:
        raise ConfigError(f"invalid config keys: {', '.join(sorted(unknown))}")

    kwargs: dict = {}
    chan: dict = {}
    for key, raw in items.items():
        if key.startswith("trajectory."):
            continue
        if key == "bearing_factors":
            kwargs[key] = _parse_bool(raw)
        elif key == "covariance_mode":
            try:
                kwargs[key] = CovarianceMode(raw.strip().lower())
            except ValueError:
                raise ConfigError(
                    f"covariance_mode must be one of "
                    f"{[m.value for m in CovarianceMode]}, got {raw!r}"
                ) from None
        elif key == "dropout":
            chan["dropout"] = float(raw)
        elif key == "bearing_sigma_deg":
            chan["bearing_sigma"] = math.radians(float(raw))
        elif key == "outlier_prob":
            chan["outlier_prob"] = float(raw)
        elif key == "outlier_min_deg":
            chan["outlier_min"] = math.radians(float(raw))
        elif key == "outlier_max_deg":
            chan["outlier_max"] = math.radians(float(raw))
        elif key == "remote_anchor_sigma_rot_deg":
            kwargs["remote_anchor_sigma_rot"] = math.radians(float(raw))
        else:
            kwargs[key] = _SCALAR_KEYS[key](raw)

    fleet_size = kwargs.get("fleet_size", base.fleet_size)
    trajectories = list(
        base.trajectories
        if len(base.trajectories) == fleet_size
        else default_trajectories(fleet_size)
    )
    for key, raw in items.items():
        if not key.startswith("trajectory."):
            continue
        idx = int(key.split(".", 1)[1])
        if not 0 <= idx < fleet_size:
            raise ConfigError(f"trajectory index {idx} out of range")
        trajectories[idx] = _parse_trajectory(raw)
    kwargs["trajectories"] = tuple(trajectories)

    chan_seed = kwargs.get("seed", base.seed)
    channel = replace(base.channel, seed=chan_seed, **chan)
    kwargs["channel"] = channel
    return replace(base, **kwargs)


def parse_scenario(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        items[key] = value
    return scenario_from_items(items, base)


def load_scenario(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read(), base)
