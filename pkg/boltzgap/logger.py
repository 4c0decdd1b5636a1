import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Optional

BASE_RUNS_DIR = os.environ.get("BOLTZGAP_RUNS_DIR") or os.path.join(os.getcwd(), "runs")
PACKAGE_LOGGER = "boltzgap"
_FMT = "%(asctime)s %(levelname)s: %(message)s"


def run_dir_for(run_id: str, runs_dir: Optional[str] = None) -> str:
    return os.path.join(runs_dir or BASE_RUNS_DIR, run_id)


def get_run_logger(run_id: str, runs_dir: Optional[str] = None, echo: bool = True) -> logging.Logger:
    run_dir = run_dir_for(run_id, runs_dir)
    logs_dir = os.path.join(run_dir, "logs")
    os.makedirs(logs_dir, exist_ok=True)
    log_path = os.path.join(logs_dir, "run.log")
    logger = logging.getLogger(f"{PACKAGE_LOGGER}.run.{run_id}")
    if logger.handlers:
        return logger
    logger.setLevel(logging.DEBUG)
    # library records reach run.log through attach_library_logs, not through the parent
    logger.propagate = False
    fh = RotatingFileHandler(log_path, maxBytes=5_000_000, backupCount=3)
    fmt = logging.Formatter(_FMT)
    fh.setFormatter(fmt)
    logger.addHandler(fh)
    if echo:
        ch = logging.StreamHandler()
        ch.setFormatter(fmt)
        ch.setLevel(logging.INFO)
        logger.addHandler(ch)
    return logger


def attach_library_logs(run_logger: logging.Logger) -> Optional[logging.Handler]:
    """Route the package's module loggers into the run's log file."""
    handler = next((h for h in run_logger.handlers if isinstance(h, RotatingFileHandler)), None)
    if handler is None:
        return None
    pkg = logging.getLogger(PACKAGE_LOGGER)
    if pkg.level == logging.NOTSET or pkg.level > logging.DEBUG:
        pkg.setLevel(logging.DEBUG)
    pkg.addHandler(handler)
    return handler


def detach_library_logs(handler: Optional[logging.Handler]):
    if handler is not None:
        logging.getLogger(PACKAGE_LOGGER).removeHandler(handler)


def close_run_logger(logger: logging.Logger):
    for h in list(logger.handlers):
        try:
            h.close()
        finally:
            logger.removeHandler(h)
