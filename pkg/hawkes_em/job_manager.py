"""Run status tracking for experiment sweeps."""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

logger = logging.getLogger(__name__)

STATUS_FILE = "status.json"
STATUSES = ("started", "running", "completed", "error")


def update_run_status(out_dir: Union[str, Path], status: str, summary: Optional[Dict[str, Any]] = None,
                      error: Optional[str] = None) -> None:
    """
    Record the status of a sweep in `<out_dir>/status.json`.

    Args:
        out_dir: The sweep output directory
        status: One of "started", "running", "completed", "error"
        summary: Optional counts (tasks done, failed rows, ...)
        error: Optional error message
    """
    if status not in STATUSES:
        raise ValueError(f"Unknown run status '{status}'")
    try:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        status_data: Dict[str, Any] = {
            "status": status,
            "timestamp": datetime.now().isoformat(),
        }
        if summary is not None:
            status_data["summary"] = summary
        if error is not None:
            status_data["error"] = str(error)
        with open(out_dir / STATUS_FILE, "w", encoding="utf-8") as f:
            json.dump(status_data, f, ensure_ascii=False, indent=2)
        logger.debug(f"Updated run status: {out_dir} -> {status}")
    except OSError as e:
        logger.error(f"Error updating run status: {str(e)}")


def get_run_status(out_dir: Union[str, Path]) -> Dict[str, Any]:
    """Read the status of a sweep; a missing file reads as "unknown"."""
    status_file = Path(out_dir) / STATUS_FILE
    if not status_file.exists():
        return {"status": "unknown", "message": "No status recorded for this run"}
    try:
        with open(status_file, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error reading run status: {str(e)}")
        return {"status": "error", "message": str(e)}
