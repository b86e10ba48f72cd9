from .report import InvariantCheck, RunReport, SeedResult
from .config import ExperimentConfig, ExperimentKind, load_config, load_config_text
from .base_suite import SuiteContext, VerificationSuite
from .suite_registry import SuiteGroup, SuiteRegistry
from .artifacts import emit_plot_data, plot_csv, write_checks_csv, write_summary_json, write_trajectories_csv
from .runner import run_experiment, verify_suite
