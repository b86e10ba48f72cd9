from pathlib import Path

import pytest

from src.errors import ConfigError
from src.experiments.config import ExperimentKind, load_config, load_config_text
from src.features.terminal_cost import INFINITE_GAMMA
from src.sampler.types import GradientMode

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SAMPLE = """\
experiment.kind = "sample-alg1"
experiment.seeds = [0, 1]
problem.dimension = 2
extractor.kind = "project"
extractor.coordinates = [0]
cost.reference = [2.0]
sampler.num_steps = 20
sampler.stepsize = 0.1
sampler.opt_steps = 3
"""


class TestLoading:
    def test_reads_flat_dotted_keys(self):
        config = load_config_text(SAMPLE)
        assert config.kind is ExperimentKind.SAMPLE_ALG1
        assert config.experiment.seeds == [0, 1]
        assert config.sampler.gradient_mode is GradientMode.ANALYTIC
        assert config.build_schedule().num_steps == 20
        assert config.build_cost().gamma is INFINITE_GAMMA

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda p: p.stem)
    def test_shipped_configs_load(self, path):
        assert load_config(path).kind in ExperimentKind

    def test_echo_reloads_to_same_config(self):
        config = load_config_text(SAMPLE)
        assert load_config_text(config.to_toml()) == config

    def test_echo_of_shipped_config(self):
        config = load_config(CONFIG_DIR / "mixture_alg1.toml")
        assert load_config_text(config.to_toml()) == config


class TestErrors:
    def test_missing_stepsize_names_field(self):
        text = SAMPLE.replace("sampler.stepsize = 0.1\n", "")
        with pytest.raises(ConfigError) as info:
            load_config_text(text)
        assert info.value.field == "sampler.stepsize"
        assert "sampler.stepsize" in str(info.value)

    def test_alg2_needs_proximal_strength(self):
        with pytest.raises(ConfigError) as info:
            load_config_text(SAMPLE.replace("sample-alg1", "sample-alg2"))
        assert info.value.field == "sampler.proximal_strength"

    def test_invalid_value_reports_line(self):
        with pytest.raises(ConfigError) as info:
            load_config_text(SAMPLE.replace("sampler.stepsize = 0.1", "sampler.stepsize = -0.1"))
        assert info.value.field == "sampler.stepsize"
        assert info.value.line == 8

    def test_syntax_error_reports_line(self):
        with pytest.raises(ConfigError) as info:
            load_config_text('experiment.kind = "sample-alg1"\nsampler.num_steps = = 3\n')
        assert info.value.line == 2

    def test_unknown_kind(self):
        with pytest.raises(ConfigError) as info:
            load_config_text(SAMPLE.replace("sample-alg1", "sample-alg9"))
        assert info.value.field == "experiment.kind"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            load_config_text(SAMPLE + "sampler.momentum = 0.9\n")
        assert info.value.field == "sampler.momentum"

    def test_nested_tables_rejected(self):
        with pytest.raises(ConfigError):
            load_config_text(SAMPLE + "problem.inner.value = 1\n")

    def test_unresolvable_extractor(self):
        with pytest.raises(ConfigError):
            load_config_text(SAMPLE.replace('"project"', '"gram"'))

    def test_reference_width_mismatch(self):
        with pytest.raises(ConfigError):
            load_config_text(SAMPLE.replace("[2.0]", "[2.0, 1.0]"))

    def test_tabulated_schedule_length(self):
        text = SAMPLE + 'schedule.kind = "tabulated"\nschedule.alpha_bar = [1.0, 0.5]\n'
        with pytest.raises(ConfigError):
            load_config_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")
