"""Environment-level defaults for the quermass toolkit."""
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

# Output
OUTPUT_DIR = os.getenv("QUERMASS_OUT_DIR", "./out")

# Reproducibility and parallelism
DEFAULT_SEED = int(os.getenv("QUERMASS_SEED", "20240617"))
DEFAULT_THREADS = int(os.getenv("QUERMASS_THREADS", "1"))

# Logging
LOG_LEVEL = os.getenv("QUERMASS_LOG_LEVEL", "INFO")

# Numerics
GEOMETRY_EPS = float(os.getenv("QUERMASS_GEOMETRY_EPS", "1e-12"))
ENERGY_CHECK_EVERY = int(os.getenv("QUERMASS_ENERGY_CHECK_EVERY", "50"))


def ensure_directories(out_dir: Optional[str] = None) -> Path:
    """Create the output directory if it doesn't exist."""
    path = Path(out_dir or OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path
