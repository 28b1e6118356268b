# edge_core/run_store.py

import os
import json
import tempfile
import logging
from typing import Any, Dict

from edge_core.errors import SchemaError

logger = logging.getLogger(__name__)

# Import output directory from config
try:
    from config_settings import OUTPUT_PATH as RUNS_DIR
except ImportError:
    # Fallback: use absolute path from current file location
    # This file is at: edge_core/run_store.py -> src -> project_root
    _this_file = os.path.abspath(__file__)
    _src_dir = os.path.dirname(os.path.dirname(_this_file))
    _project_root = os.path.dirname(_src_dir)
    RUNS_DIR = os.path.join(_project_root, "data/runs")


def get_run_dir(name: str) -> str:
    """Directory for a named run under the configured output root (created)."""
    path = name if os.path.isabs(name) else os.path.join(RUNS_DIR, name)
    os.makedirs(path, exist_ok=True)
    return path


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_json(path: str, data: Dict[str, Any]) -> None:
    atomic_write_text(path, json.dumps(data, indent=2) + "\n")
    logger.debug(f"💾 Wrote {path}")


def read_json(path: str) -> Any:
    """Parse a JSON file; unreadable or truncated documents raise SchemaError."""
    if not os.path.exists(path):
        raise SchemaError("$", f"file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError("$", f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
