import subprocess
import sys
from pathlib import Path

RUN_SCRIPT = Path(__file__).resolve().parent.parent / "run.py"


def invoke(*args: str, cwd: Path) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, str(RUN_SCRIPT), *args], cwd=cwd, capture_output=True, text=True,
                          timeout=600)


def test_passing_suite_exits_zero(tmp_path):
    result = invoke("verify", "afa", "--out-dir", str(tmp_path / "out"), cwd=tmp_path)
    assert result.returncode == 0, result.stdout + result.stderr
    assert "afa: PASS" in result.stdout
    assert (tmp_path / "out" / "summary.json").is_file()


def test_unknown_suite_exits_two(tmp_path):
    result = invoke("verify", "no-such-suite", cwd=tmp_path)
    assert result.returncode == 2
    assert "no-such-suite" in result.stdout


def test_bad_config_exits_two(tmp_path):
    config = tmp_path / "broken.toml"
    config.write_text('experiment.kind = "sample-alg1"\ncost.reference = [2.0]\nsampler.num_steps = 5\n')
    result = invoke("run", str(config), cwd=tmp_path)
    assert result.returncode == 2
    assert "sampler.stepsize" in result.stdout


def test_missing_command_exits_two(tmp_path):
    assert invoke(cwd=tmp_path).returncode == 2


def test_unreadable_plot_input_exits_one(tmp_path):
    result = invoke("plot", str(tmp_path / "absent.csv"), str(tmp_path / "out.svg"), cwd=tmp_path)
    assert result.returncode == 1


def test_run_then_plot(tmp_path):
    config = tmp_path / "ddim.toml"
    config.write_text('experiment.kind = "sample-ddim"\nexperiment.seeds = [0, 1]\n'
                      'extractor.kind = "project"\nextractor.coordinates = [0]\ncost.reference = [2.0]\n'
                      'sampler.num_steps = 10\nsampler.stepsize = 0.1\nsampler.opt_steps = 0\n')
    result = invoke("run", str(config), "--out-dir", "out", "--threads", "2", cwd=tmp_path)
    assert result.returncode == 0, result.stdout + result.stderr
    plotted = invoke("plot", "out/trajectories.csv", "out/replot.svg", cwd=tmp_path)
    assert plotted.returncode == 0
    assert (tmp_path / "out" / "replot.svg").is_file()
