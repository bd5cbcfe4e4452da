"""Trajectory error metrics and CSV emission for experiment runs.

CSV schema (one file per computing agent)::

    step,robot,est_x,est_y,est_z,true_x,true_y,true_z,computing_agent

Remote robots are observed only at their transmission times; between those,
a row repeats the last received state, with the truth column evaluated at
that state's own step so estimate and truth stay time-aligned.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .fleetsim import RunResult

CSV_HEADER = [
    "step",
    "robot",
    "est_x",
    "est_y",
    "est_z",
    "true_x",
    "true_y",
    "true_z",
    "computing_agent",
]


def ate(est: np.ndarray, truth: np.ndarray) -> float:
    """RMSE of translational error; no alignment (the global frame is observable)."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean(np.sum((est - truth) ** 2, axis=1))))


def relative_error(
    est_a: np.ndarray, est_b: np.ndarray, truth_a: np.ndarray, truth_b: np.ndarray
) -> float:
    """RMSE over steps of the inter-agent relative position error."""
    est_a, est_b = np.asarray(est_a, float), np.asarray(est_b, float)
    truth_a, truth_b = np.asarray(truth_a, float), np.asarray(truth_b, float)
    if not est_a.shape == est_b.shape == truth_a.shape == truth_b.shape:
        raise ValueError("length mismatch between trajectories")
    diff = (est_a - est_b) - (truth_a - truth_b)
    return float(np.sqrt(np.mean(np.sum(diff ** 2, axis=1))))


def smoothed_relative_error(result: RunResult, agent: int) -> float:
    """Inter-agent relative position error of one agent's final smoothed
    trajectory estimates (every pose variable, evaluated after the run),
    averaged over the other robots.  Unlike the causal per-step records,
    this reflects all retroactive corrections from inter-agent factors."""
    a = result.agents[agent]
    est: dict[int, dict[int, np.ndarray]] = {}
    for (r, k, p) in a.final_trajectory_estimates():
        est.setdefault(r, {})[k] = p
    own = est[agent]
    errs = []
    for r, series in est.items():
        if r == agent:
            continue
        sq = [
            np.sum(
                (
                    (own[k] - p)
                    - (result.truth.position(agent, k) - result.truth.position(r, k))
                )
                ** 2
            )
            for k, p in series.items()
            if k in own
        ]
        if sq:
            errs.append(np.sqrt(np.mean(sq)))
    return float(np.mean(errs)) if errs else float("nan")


def relative_error_per_step(result: RunResult, agent: int) -> np.ndarray:
    """Mean inter-agent relative position error at each step, per one agent."""
    rec = result.records[agent]  # (steps, robots, 7)
    own = rec[:, agent, :]
    errs = []
    for r in range(result.cfg.fleet_size):
        if r == agent:
            continue
        diff = (own[:, 1:4] - rec[:, r, 1:4]) - (own[:, 4:7] - rec[:, r, 4:7])
        errs.append(np.linalg.norm(diff, axis=1))
    return np.mean(np.stack(errs, axis=0), axis=0)


@dataclass
class MetricsReport:
    """Per-robot run quality summary (robot == computing agent)."""

    ate_rmse: dict[int, float] = field(default_factory=dict)
    final_error: dict[int, float] = field(default_factory=dict)
    relative_error: dict[int, float] = field(default_factory=dict)
    smoothed_relative_error: dict[int, float] = field(default_factory=dict)
    outliers_injected: int = 0
    deliveries: int = 0
    solver_iterations: int = 0
    divergences: int = 0

    def mean_relative_error(self) -> float:
        return float(np.mean(list(self.relative_error.values())))

    def mean_smoothed_relative_error(self) -> float:
        if not self.smoothed_relative_error:
            return float("nan")
        return float(np.mean(list(self.smoothed_relative_error.values())))

    def mean_ate(self) -> float:
        return float(np.mean(list(self.ate_rmse.values())))


def compute_metrics(result: RunResult) -> MetricsReport:
    report = MetricsReport(
        outliers_injected=result.outliers_injected,
        deliveries=len(result.deliveries),
        solver_iterations=result.solver_iterations,
        divergences=len(result.divergences),
    )
    for a in range(result.cfg.fleet_size):
        rec = result.records[a]
        own = rec[:, a, :]
        report.ate_rmse[a] = ate(own[:, 1:4], own[:, 4:7])
        report.final_error[a] = float(
            np.linalg.norm(own[-1, 1:4] - own[-1, 4:7])
        )
        rel = []
        for r in range(result.cfg.fleet_size):
            if r == a:
                continue
            rel.append(
                relative_error(
                    own[:, 1:4], rec[:, r, 1:4], own[:, 4:7], rec[:, r, 4:7]
                )
            )
        report.relative_error[a] = float(np.mean(rel))
        report.smoothed_relative_error[a] = smoothed_relative_error(result, a)
    return report


def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_csv(result: RunResult, agent: int) -> str:
    """CSV text for one computing agent; row count is fleet_size * steps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    rec = result.records[agent]
    for t in range(result.cfg.steps):
        for r in range(result.cfg.fleet_size):
            row = rec[t, r]
            w.writerow(
                [t, r]
                + [_fmt(v) for v in row[1:4]]
                + [_fmt(v) for v in row[4:7]]
                + [agent]
            )
    return buf.getvalue()


def metrics_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["robot", "ate_rmse", "final_error", "relative_error", "smoothed_relative_error"]
    )
    for r in sorted(report.ate_rmse):
        w.writerow(
            [
                r,
                _fmt(report.ate_rmse[r]),
                _fmt(report.final_error[r]),
                _fmt(report.relative_error[r]),
                _fmt(report.smoothed_relative_error.get(r, float("nan"))),
            ]
        )
    w.writerow([])
    w.writerow(["outliers_injected", report.outliers_injected])
    w.writerow(["deliveries", report.deliveries])
    w.writerow(["solver_iterations", report.solver_iterations])
    w.writerow(["divergences", report.divergences])
    return buf.getvalue()


def write_run_outputs(result: RunResult, out_dir: str) -> MetricsReport:
    os.makedirs(out_dir, exist_ok=True)
    for a in range(result.cfg.fleet_size):
        path = os.path.join(out_dir, f"trajectory_agent{a}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(trajectory_csv(result, a))
    report = compute_metrics(result)
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv(report))
    return report


def metrics_from_csv_dir(in_dir: str) -> MetricsReport:
    """Recompute trajectory metrics from emitted CSVs (serialization check)."""
    report = MetricsReport()
    files = sorted(
        f for f in os.listdir(in_dir)
        if f.startswith("trajectory_agent") and f.endswith(".csv")
    )
    if not files:
        raise FileNotFoundError(f"no trajectory CSVs in {in_dir}")
    data = {}
    for name in files:
        agent = int(name[len("trajectory_agent"):-len(".csv")])
        with open(os.path.join(in_dir, name), "r", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        robots = sorted({int(r["robot"]) for r in rows})
        steps = max(int(r["step"]) for r in rows) + 1
        arr = np.zeros((steps, len(robots), 6))
        for row in rows:
            t, r = int(row["step"]), int(row["robot"])
            arr[t, r] = [
                float(row[k])
                for k in ("est_x", "est_y", "est_z", "true_x", "true_y", "true_z")
            ]
        data[agent] = arr
    for agent, arr in data.items():
        own = arr[:, agent, :]
        report.ate_rmse[agent] = ate(own[:, 0:3], own[:, 3:6])
        report.final_error[agent] = float(np.linalg.norm(own[-1, 0:3] - own[-1, 3:6]))
        rel = []
        for r in range(arr.shape[1]):
            if r == agent:
                continue
            rel.append(
                relative_error(own[:, 0:3], arr[:, r, 0:3], own[:, 3:6], arr[:, r, 3:6])
            )
        report.relative_error[agent] = float(np.mean(rel))
    return report
