import csv
import json
from pathlib import Path

import numpy as np
import pytest

from src.diffusion.types import Trajectory
from src.errors import ConfigError, InvalidArgumentError, UnknownSuiteError
from src.experiments.artifacts import emit_plot_data, plot_csv, write_trajectories_csv
from src.experiments.report import RunReport
from src.experiments.runner import run_experiment, verify_suite

SAMPLING = """\
experiment.kind = "{kind}"
experiment.seeds = [0, 1, 2]
problem.dimension = 2
extractor.kind = "project"
extractor.coordinates = [0]
cost.reference = [2.0]
sampler.num_steps = 20
sampler.stepsize = 0.1
sampler.opt_steps = {opt_steps}
sampler.proximal_strength = 1.0
"""


def write_config(directory: Path, kind: str = "sample-alg1", opt_steps: int = 3) -> Path:
    path = directory / f"{kind}-{opt_steps}.toml"
    path.write_text(SAMPLING.format(kind=kind, opt_steps=opt_steps))
    return path


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


class TestSamplingRuns:
    def test_passes_and_lists_artifacts(self, tmp_path):
        report = run_experiment(write_config(tmp_path), out_dir=tmp_path / "out")
        assert report.passed and report.exit_code == 0
        assert report.artifacts == ["trajectories.csv", "cost_curve.svg", "checks.csv", "summary.json"]
        for name in report.artifacts:
            assert (tmp_path / "out" / name).is_file()
        assert len(report.cost_curve) == 21

    def test_artifacts_identical_across_directories_and_threads(self, tmp_path):
        config = write_config(tmp_path)
        first = run_experiment(config, out_dir=tmp_path / "a", threads=1)
        run_experiment(config, out_dir=tmp_path / "b", threads=4)
        for name in first.artifacts + ["cost_curve.csv"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_trajectory_csv_layout(self, tmp_path):
        run_experiment(write_config(tmp_path), out_dir=tmp_path / "out")
        rows = read_rows(tmp_path / "out" / "trajectories.csv")
        assert list(rows[0]) == ["seed", "step", "x0", "x1", "u0", "u1", "terminal_cost"]
        assert len(rows) == 3 * 21
        assert [row["seed"] for row in rows[::21]] == ["0", "1", "2"]
        last = rows[20]
        assert last["step"] == "0" and last["u0"] == "" and last["terminal_cost"] != ""

    def test_zero_inner_steps_matches_ddim_states(self, tmp_path):
        run_experiment(write_config(tmp_path, "sample-alg1", 0), out_dir=tmp_path / "alg1")
        run_experiment(write_config(tmp_path, "sample-ddim", 0), out_dir=tmp_path / "ddim")
        controlled = read_rows(tmp_path / "alg1" / "trajectories.csv")
        plain = read_rows(tmp_path / "ddim" / "trajectories.csv")
        assert [(row["x0"], row["x1"]) for row in controlled] == [(row["x0"], row["x1"]) for row in plain]

    def test_summary_json(self, tmp_path):
        report = run_experiment(write_config(tmp_path, "sample-alg2"), seed=5, out_dir=tmp_path / "out")
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["passed"] is report.passed
        assert [check["name"] for check in summary["checks"]][0] == "sample-alg2.cost_ratio_vs_uncontrolled"
        assert summary["seeds"] == [5]
        assert "wall_clock_seconds" not in summary
        assert 'experiment.seeds = [5]' in summary["config_echo"]

    def test_missing_config_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            run_experiment(tmp_path / "absent.toml", out_dir=tmp_path / "out")


class TestSweeps:
    def test_gamma_sweep_slope(self, tmp_path):
        path = tmp_path / "sweep.toml"
        path.write_text('experiment.kind = "sweep-gamma"\nproblem.x0 = [0.3, -0.4]\n'
                        'extractor.kind = "linear"\nextractor.matrix = [[1.0, 0.0], [0.0, 2.0]]\n'
                        'cost.reference = [1.0, 2.0]\n')
        report = run_experiment(path, out_dir=tmp_path / "out")
        assert report.passed
        assert len(read_rows(tmp_path / "out" / "sweep_gamma.csv")) == 6

    def test_hparam_sweep_grid(self, tmp_path):
        path = write_config(tmp_path, kind="sweep-hparams")
        path.write_text(path.read_text() + "sweep.stepsizes = [0.1]\nsweep.opt_steps = [1, 3]\n")
        report = run_experiment(path, out_dir=tmp_path / "out")
        assert report.passed
        rows = read_rows(tmp_path / "out" / "sweep_hparams.csv")
        assert [(float(row["stepsize"]), int(row["opt_steps"])) for row in rows] == [(0.1, 1), (0.1, 3)]
        assert all(float(row["mean_terminal_cost"]) < float(row["uncontrolled_mean_cost"]) for row in rows)

    def test_gamma_sweep_needs_linear_extractor(self, tmp_path):
        path = tmp_path / "sweep.toml"
        path.write_text('experiment.kind = "sweep-gamma"\nextractor.kind = "quadratic"\n'
                        'cost.reference = [1.0, 2.0]\n')
        with pytest.raises(ConfigError):
            run_experiment(path, out_dir=tmp_path / "out")


class TestPlots:
    def test_empty_inputs_are_rejected(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            emit_plot_data(RunReport(name="empty"), tmp_path / "plot.svg")
        with pytest.raises(InvalidArgumentError):
            write_trajectories_csv([], tmp_path / "t.csv")

    def test_trajectory_plot_with_companion_data(self, tmp_path):
        trajectory = Trajectory(states=[[1.0], [0.5], [0.25]], times=[2, 1, 0], controls=[np.zeros(1), np.zeros(1)],
                                costs=[1.0, 0.5, 0.25], seed=0)
        svg = emit_plot_data(trajectory, tmp_path / "plot.svg")
        assert svg.read_text().lstrip().startswith("<?xml")
        assert [row["step"] for row in read_rows(svg.with_suffix(".csv"))] == ["2", "1", "0"]

    def test_replot_trajectory_csv(self, tmp_path):
        run_experiment(write_config(tmp_path), out_dir=tmp_path / "out")
        svg = plot_csv(tmp_path / "out" / "trajectories.csv", tmp_path / "replot.svg")
        assert svg.is_file()


class TestVerify:
    def test_unknown_suite(self):
        with pytest.raises(UnknownSuiteError):
            verify_suite("no-such-suite")

    def test_attention_suite_writes_checks(self, tmp_path):
        report = verify_suite("afa", out_dir=tmp_path)
        assert report.passed
        assert report.artifacts == ["checks.csv", "summary.json"]
