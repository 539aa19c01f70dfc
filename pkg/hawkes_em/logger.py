import os
import logging
from logging.handlers import RotatingFileHandler
import sys
from typing import Optional


class IterationFilter(logging.Filter):
    """Filter to exclude per-iteration optimizer messages from the console."""

    noisy_patterns = [
        "e-step",
        "adam step",
        "rejected step",
        "objective=",
    ]

    def filter(self, record):
        message = record.getMessage().lower()
        for pattern in self.noisy_patterns:
            if pattern in message:
                return False
        return True


def configure_logger(level: str = "INFO", log_dir: Optional[str] = "logs",
                     to_file: bool = False) -> logging.Logger:
    """Configure root logging with a console handler and an optional rotating file."""
    log_level = getattr(logging, level.upper(), logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Clear any existing handlers
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    if to_file and log_dir:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(
            os.path.join(log_dir, "hawkes_em.log"), maxBytes=10485760, backupCount=10
        )
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        ))
        file_handler.setLevel(log_level)
        root_logger.addHandler(file_handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
    console_handler.setLevel(log_level)
    if log_level > logging.DEBUG:
        console_handler.addFilter(IterationFilter())
    root_logger.addHandler(console_handler)

    root_logger.info(f"Logging configured at level {logging.getLevelName(log_level)}")
    return root_logger
