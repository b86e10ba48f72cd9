"""
Artifact writers. Every file written here is a pure function of its input:
floats go through settings.CSV_FLOAT_FORMAT, JSON keys are sorted and the
SVG carries neither a timestamp nor random element ids.
"""

import csv
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.config import settings  # noqa: E402
from src.custom_logging import logger  # noqa: E402
from src.diffusion.types import Trajectory  # noqa: E402
from src.errors import InvalidArgumentError  # noqa: E402
from src.experiments.report import InvariantCheck, RunReport  # noqa: E402

FIGURE_SIZE = (6.0, 4.0)
CHECK_COLUMNS = ("name", "passed", "advisory", "comparison", "measured", "threshold", "expected", "detail")


def format_float(value: Optional[float]) -> str:
    if value is None:
        return ""
    return settings.CSV_FLOAT_FORMAT % float(value)


def _prepare(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def trajectory_rows(trajectory: Trajectory, seed: Optional[int] = None) -> list[list[str]]:
    """One row per state; the control fields of the final state are empty."""
    seed = trajectory.seed if seed is None else seed
    control_width = trajectory.controls[0].shape[0] if trajectory.controls else 0
    rows = []
    for i, (state, step) in enumerate(zip(trajectory.states, trajectory.times)):
        control = trajectory.controls[i] if i < len(trajectory.controls) else None
        cost = trajectory.costs[i] if i < len(trajectory.costs) else None
        row = ["" if seed is None else str(seed), str(step)]
        row.extend(format_float(v) for v in np.asarray(state).reshape(-1))
        if control is None:
            row.extend([""] * control_width)
        else:
            row.extend(format_float(v) for v in control)
        row.append(format_float(cost))
        rows.append(row)
    return rows


def trajectory_header(trajectory: Trajectory) -> list[str]:
    state_width = np.asarray(trajectory.states[0]).reshape(-1).shape[0]
    control_width = trajectory.controls[0].shape[0] if trajectory.controls else 0
    return (["seed", "step"] + [f"x{i}" for i in range(state_width)]
            + [f"u{i}" for i in range(control_width)] + ["terminal_cost"])


def write_trajectories_csv(trajectories: Sequence[Trajectory], path: Union[str, Path]) -> Path:
    """Trajectories in seed order, columns seed, step, x*, u*, terminal_cost."""
    if not trajectories or not trajectories[0].states:
        raise InvalidArgumentError("no trajectory to write")
    path = _prepare(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(trajectory_header(trajectories[0]))
        for trajectory in trajectories:
            writer.writerows(trajectory_rows(trajectory))
    logger.info(f"Wrote {len(trajectories)} trajectories to {path}")
    return path


def write_checks_csv(checks: Sequence[InvariantCheck], path: Union[str, Path]) -> Path:
    path = _prepare(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CHECK_COLUMNS)
        for check in checks:
            writer.writerow([
                check.name, str(check.passed).lower(), str(check.advisory).lower(), check.comparison,
                format_float(check.measured), format_float(check.threshold), format_float(check.expected),
                check.detail,
            ])
    return path


def write_summary_json(report: RunReport, path: Union[str, Path]) -> Path:
    path = _prepare(path)
    path.write_text(report.to_json())
    logger.info(f"Wrote summary to {path}")
    return path


def _series(data: Union[Trajectory, RunReport]) -> tuple[np.ndarray, np.ndarray, str]:
    if isinstance(data, Trajectory):
        count = min(len(data.times), len(data.costs))
        return np.asarray(data.times[:count], dtype=np.float64), np.asarray(data.costs[:count]), "cost"
    if isinstance(data, RunReport):
        curve = np.asarray(data.cost_curve, dtype=np.float64)
        # the curve runs from step T down to 0
        return np.arange(len(curve) - 1, -1, -1, dtype=np.float64), curve, "mean cost over seeds"
    raise InvalidArgumentError(f"cannot plot a {type(data).__name__}")


def _render_svg(steps: np.ndarray, series: dict[str, np.ndarray], ylabel: str, path: Path) -> None:
    with plt.rc_context({"svg.hashsalt": settings.SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE)
        try:
            for label, values in series.items():
                ax.plot(steps, values, marker=".", linewidth=1.0, label=label)
            ax.set_xlabel("step")
            ax.set_ylabel(ylabel)
            ax.invert_xaxis()
            if np.all(np.concatenate(list(series.values())) > 0):
                ax.set_yscale("log")
            if len(series) > 1:
                ax.legend()
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)


def emit_plot_data(data: Union[Trajectory, RunReport], path: Union[str, Path]) -> Path:
    """
    Cost-vs-step line plot at <path> (SVG) plus the plotted numbers in a
    companion CSV next to it. Returns the SVG path.
    """
    steps, values, ylabel = _series(data)
    if values.size == 0:
        raise InvalidArgumentError("nothing to plot: the input has no cost entries")
    svg_path = _prepare(Path(path).with_suffix(".svg"))
    with open(svg_path.with_suffix(".csv"), "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["step", "value"])
        for step, value in zip(steps, values):
            writer.writerow([str(int(step)), format_float(value)])
    _render_svg(steps, {ylabel: values}, ylabel, svg_path)
    logger.info(f"Wrote plot {svg_path}")
    return svg_path


def plot_csv(csv_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    """
    Re-plot an emitted CSV: a trajectory file (one line per seed) or a
    step/value companion file.
    """
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        raise InvalidArgumentError(f"{csv_path} holds no rows")

    column = "terminal_cost" if "terminal_cost" in rows[0] else "value"
    if column not in rows[0] or "step" not in rows[0]:
        raise InvalidArgumentError(f"{csv_path} has neither step/terminal_cost nor step/value columns")

    grouped: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        if row[column] == "":
            continue
        grouped.setdefault(row.get("seed") or column, []).append((float(row["step"]), float(row[column])))
    if not grouped:
        raise InvalidArgumentError(f"{csv_path} has no {column} values")

    svg_path = _prepare(Path(out_path).with_suffix(".svg"))
    with plt.rc_context({"svg.hashsalt": settings.SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE)
        try:
            for label, points in grouped.items():
                steps, values = zip(*points)
                ax.plot(steps, values, linewidth=1.0, label=f"seed {label}" if label.isdigit() else label)
            ax.set_xlabel("step")
            ax.set_ylabel(column)
            ax.invert_xaxis()
            fig.tight_layout()
            fig.savefig(svg_path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    logger.info(f"Plotted {csv_path} to {svg_path}")
    return svg_path
