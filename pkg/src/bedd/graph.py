"""Factor graph container: variables keyed by (robot, pose index | anchor).

The variable ordering used for linearization is deterministic: pose
variables sorted by (robot, index), then anchor variables sorted by robot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factors import FactorRecord, UnboundVariableError, factor_error
from .liegroups import Pose3


class VariableExistsError(ValueError):
    """Attempted to insert a variable key that is already present."""


@dataclass(frozen=True, order=True)
class VariableKey:
    robot: int
    index: int  # pose time step, or -1 for the anchor

    @property
    def is_anchor(self) -> bool:
        return self.index < 0

    def __str__(self) -> str:
        return f"r{self.robot}:anchor" if self.is_anchor else f"r{self.robot}:x{self.index}"


def pose_key(robot: int, index: int) -> VariableKey:
    if index < 0:
        raise ValueError("pose index must be >= 0")
    return VariableKey(robot, index)


def anchor_key(robot: int) -> VariableKey:
    return VariableKey(robot, -1)


class FactorGraph:
    """Variables plus an ordered factor list; the MAP problem to solve."""

    def __init__(self):
        self.variables: dict[VariableKey, Pose3] = {}
        self.factors: list[FactorRecord] = []

    def add_variable(self, key: VariableKey, initial: Pose3) -> None:
        if key in self.variables:
            raise VariableExistsError(f"variable exists: {key}")
        self.variables[key] = initial

    def add_factor(self, f: FactorRecord) -> None:
        for k in f.keys:
            if k not in self.variables:
                raise UnboundVariableError(f"unbound variable {k}")
        self.factors.append(f)

    def ordering(self) -> list[VariableKey]:
        poses = sorted(k for k in self.variables if not k.is_anchor)
        anchors = sorted(k for k in self.variables if k.is_anchor)
        return poses + anchors

    def total_cost(self, values=None) -> float:
        """Sum of squared Mahalanobis residual norms."""
        if values is None:
            values = self.variables
        cost = 0.0
        for f in self.factors:
            cost += f.noise.mahalanobis_sq(factor_error(f, values))
        return cost

    def dump(self) -> str:
        """Line-oriented text form for debugging and golden-file tests.

        Format (one record per line):
            # bedd-graph v1
            var <key> tx ty tz roll pitch yaw
            factor <kind> <key>... | <measurement fields> | <noise diag>
        """
        lines = ["# bedd-graph v1"]
        for key in self.ordering():
            p = self.variables[key]
            r, pt, y = p.rotation.to_rpy()
            t = p.translation
            fields = " ".join(_g(v) for v in (t[0], t[1], t[2], r, pt, y))
            lines.append(f"var {key} {fields}")
        for f in self.factors:
            keys = " ".join(str(k) for k in f.keys)
            meas = _format_measurement(f)
            diag = " ".join(_g(v) for v in np.diag(f.noise.covariance))
            lines.append(f"factor {f.kind.value} {keys} | {meas} | {diag}")
        return "\n".join(lines) + "\n"


def _g(v: float) -> str:
    """%.9g with negative zero normalized away."""
    return f"{float(v) + 0.0:.9g}"


def _format_measurement(f: FactorRecord) -> str:
    m = f.measurement
    if isinstance(m, Pose3):
        r, p, y = m.rotation.to_rpy()
        t = m.translation
        return " ".join(_g(v) for v in (t[0], t[1], t[2], r, p, y))
    if hasattr(m, "to_rpy"):  # Rot3
        return " ".join(_g(v) for v in m.to_rpy())
    if hasattr(m, "azimuth"):  # BearingMeasurement
        return f"{_g(m.azimuth)} {_g(m.elevation)} tx={m.transmitter} rx={m.receiver}"
    return _g(float(m))
