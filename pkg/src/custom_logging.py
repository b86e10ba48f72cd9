import logging
import sys
from datetime import datetime
from pathlib import Path

from src.config import settings

LOGGER_NAME = "socdiffuse"

# seeds run on a thread pool, so file records carry the worker's name
FILE_FORMAT = "%(asctime)s - %(threadName)s - %(levelname)s - %(message)s"
CONSOLE_FORMAT = "%(levelname)s - %(message)s"

_logger = None


def get_logger() -> logging.Logger:
    """Get the application-wide logger instance."""
    global _logger
    if _logger is None:
        _logger = setup_logger(settings.LOG_DIR, settings.LOG_LEVEL)
    return _logger


def setup_logger(log_dir: str, level: str = "INFO") -> logging.Logger:
    """One timestamped file per process under log_dir."""
    directory = Path(log_dir)
    directory.mkdir(parents=True, exist_ok=True)
    log_file = directory / f"socdiffuse_{datetime.now():%Y%m%d_%H%M%S}.log"

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)
    logger.propagate = False
    logger.handlers.clear()

    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
    logger.addHandler(file_handler)

    logger.info(f"socdiffuse session started (level {level}, file {log_file.name})")
    return logger


class _ConsoleHandler(logging.StreamHandler):
    pass


def enable_console_logging(level: int = logging.INFO) -> None:
    """Mirror log records to stderr; calling it twice adds nothing."""
    logger = get_logger()
    if any(isinstance(handler, _ConsoleHandler) for handler in logger.handlers):
        return
    handler = _ConsoleHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    logger.addHandler(handler)


logger = get_logger()
