import logging
import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

DEFAULT_PRECISION = "float32"


def configure_logging(level: str | None = None) -> None:
    """Configure the root logger from the LOGGING_LEVEL environment variable.

    :param level: Optional explicit level name; overrides the environment.
    """
    logging_level = (level or os.getenv("LOGGING_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=logging_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def env_precision() -> str:
    """Precision mode requested through ADAPROMPT_PRECISION."""
    return os.getenv("ADAPROMPT_PRECISION", DEFAULT_PRECISION).lower()


def show_progress() -> bool:
    """Whether loops should draw tqdm progress bars (ADAPROMPT_PROGRESS)."""
    return os.getenv("ADAPROMPT_PROGRESS", "1") not in ("0", "false", "no")


def env_n_jobs() -> int:
    """Number of joblib workers for seed-parallel protocol runs."""
    value = os.getenv("ADAPROMPT_N_JOBS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        logging.getLogger(__name__).warning(
            "Ignoring non-integer ADAPROMPT_N_JOBS=%r", value
        )
        return 1
