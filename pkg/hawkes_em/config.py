import os
import logging
from dotenv import load_dotenv
from dataclasses import dataclass

from hawkes_em.utils import ConfigError

logger = logging.getLogger(__name__)

LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


@dataclass
class Settings:
    """Process-level settings with their defaults."""
    THREADS: int = 1
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"
    LOG_TO_FILE: bool = False
    RESULTS_DIR: str = "results"


class Config:
    """Configuration loader with validation."""
    prefix = "HAWKES_EM_"

    def __init__(self):
        """Load `.env`, then read and validate HAWKES_EM_* variables."""
        load_dotenv()
        defaults = Settings()

        self.THREADS = self._get_int("THREADS", defaults.THREADS)
        self.LOG_LEVEL = os.getenv(self.prefix + "LOG_LEVEL", defaults.LOG_LEVEL).upper()
        self.LOG_DIR = os.getenv(self.prefix + "LOG_DIR", defaults.LOG_DIR)
        self.LOG_TO_FILE = os.getenv(self.prefix + "LOG_FILE", str(defaults.LOG_TO_FILE)).lower() == "true"
        self.RESULTS_DIR = os.getenv(self.prefix + "RESULTS_DIR", defaults.RESULTS_DIR)

        self._validate()

    def _get_int(self, name: str, default: int) -> int:
        raw = os.getenv(self.prefix + name)
        if raw is None or raw == "":
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{self.prefix}{name} must be an integer, got '{raw}'")

    def _validate(self):
        if self.THREADS < 1:
            raise ConfigError(f"{self.prefix}THREADS must be >= 1, got {self.THREADS}")
        if self.LOG_LEVEL not in LOG_LEVELS:
            raise ConfigError(f"{self.prefix}LOG_LEVEL must be one of {sorted(LOG_LEVELS)}")
