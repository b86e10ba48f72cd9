import os
from dotenv import load_dotenv
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DOTENV_PATH = PROJECT_ROOT / ".env"

if DOTENV_PATH.exists():
    load_dotenv(DOTENV_PATH)


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    return int(raw)


class AppConfig:
    """
    Application configuration settings.

    Only SEED and the log settings may come from the environment. Everything
    that changes the numbers an experiment produces lives in the experiment file.
    """

    # Reproducibility
    DEFAULT_SEED: int = _env_int("SEED", 0)

    # Logging
    LOG_DIR: str = os.getenv("SOCDIFFUSE_LOG_DIR", str(PROJECT_ROOT / "logs"))
    LOG_LEVEL: str = os.getenv("SOCDIFFUSE_LOG_LEVEL", "INFO").upper()

    # Linear algebra
    PINV_RANK_TOL: float = 1e-10

    # Finite differences for non-analytic feature extractors
    FD_RELATIVE_STEP: float = 1e-4
    FD_ABSOLUTE_FLOOR: float = 1e-8

    # Finite differences for the sampler's controller gradient: 1e-4 * ||u|| + 1e-6
    SAMPLER_FD_RELATIVE_STEP: float = 1e-4
    SAMPLER_FD_ABSOLUTE_STEP: float = 1e-6

    # Shooting boundary-value solver
    SHOOTING_MAX_ITERATIONS: int = 100
    SHOOTING_RESIDUAL_TOL: float = 1e-10
    SHOOTING_ODE_RTOL: float = 1e-12
    SHOOTING_ODE_ATOL: float = 1e-13

    # Sampler defaults (operating point eta=0.1, M=3)
    DEFAULT_STEPSIZE: float = 0.1
    DEFAULT_OPT_STEPS: int = 3
    DEFAULT_NUM_STEPS: int = 50

    # Artifacts
    CSV_FLOAT_FORMAT: str = "%.17g"
    SVG_HASH_SALT: str = "socdiffuse"
    DEFAULT_THREADS: int = 4
    SHOW_PROGRESS: bool = os.getenv("SOCDIFFUSE_PROGRESS", "0") == "1"


# Create a single instance of the config to be imported by other modules
settings = AppConfig()
