"""
Configuration settings for GWCL
"""
import logging
import os
from pathlib import Path
from typing import Dict

from dotenv import dotenv_values, load_dotenv

from gwcl.errors import ConfigError

# Load environment variables
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent.parent
PRESETS_DIR = BASE_DIR / "presets"

# Dataset / output locations
DATA_DIR = Path(os.getenv("GWCL_DATA_DIR", str(BASE_DIR / "data")))
OUTPUT_DIR = Path(os.getenv("GWCL_OUTPUT_DIR", str(BASE_DIR / "output")))
CACHE_DIR = Path(os.getenv("GWCL_CACHE_DIR", str(OUTPUT_DIR / "cache")))

# Logging
LOG_LEVEL = os.getenv("GWCL_LOG_LEVEL", "INFO").upper()

# Graph construction
THREADS = int(os.getenv("GWCL_THREADS", "1"))
KNN_BACKEND = os.getenv("GWCL_KNN_BACKEND", "brute")
BLOCK_SIZE = int(os.getenv("GWCL_BLOCK_SIZE", "256"))

LOG_FORMAT = "[%(short_name)s] %(message)s"


class _ShortNameFilter(logging.Filter):
    """Expose the last component of the logger name as the bracketed tag"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.short_name = record.name.rsplit(".", 1)[-1]
        return True


def configure_logging(level: str = LOG_LEVEL) -> None:
    """Install one stream handler on the ``gwcl`` logger tree"""
    root = logging.getLogger("gwcl")
    if not any(getattr(h, "_gwcl", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler.addFilter(_ShortNameFilter())
        handler._gwcl = True
        root.addHandler(handler)
    root.setLevel(level)


def progress_disabled() -> bool:
    """tqdm bars are shown only when INFO messages are"""
    return not logging.getLogger("gwcl").isEnabledFor(logging.INFO)


def read_key_values(path: Path) -> Dict[str, str]:
    """
    Read a flat key=value file (same syntax as .env)

    Args:
        path: File to read

    Returns:
        Mapping of lower-cased keys to raw string values
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path)
    return {k.strip().lower(): (v or "").strip() for k, v in values.items()}


def resolve_data_path(path: str | Path, data_dir: Path | None = None) -> Path:
    """Resolve a dataset path against GWCL_DATA_DIR when it is relative and not found as given"""
    p = Path(path)
    if p.is_absolute() or p.exists() or p.with_suffix(".raw").exists():
        return p
    return Path(data_dir or DATA_DIR) / p
