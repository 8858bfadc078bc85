# settings.py
# Runtime settings read from the environment (.env supported) + logging setup.

import logging
import os

from dotenv import load_dotenv

load_dotenv()

DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_OUTPUT_DIR = "runs"


def thread_count() -> int:
    """Worker threads for batch search/bound. BABND_THREADS=1 forces serial mode."""
    raw = os.getenv("BABND_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logging.getLogger(__name__).warning(f"Ignoring BABND_THREADS={raw!r}: not an integer")
    return os.cpu_count() or 1


def output_dir() -> str:
    return os.getenv("BABND_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)


def log_level() -> str:
    return os.getenv("BABND_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()


def configure_logging(level: str = None) -> None:
    """Entry points call this once; library modules only create loggers."""
    logging.basicConfig(
        level=getattr(logging, (level or log_level()), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
