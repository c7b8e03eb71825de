"""Write and read CLI outputs (CSV, JSON, Parquet, configuration dumps).

Every file carries the resolved run configuration and seed, and nothing
time-dependent, so rerunning a command from that header reproduces the file
byte for byte.
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from .geometry import DiskUnion, format_config_dump, parse_config_dump
from .model import Configuration
from .run_config import RunConfig

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# config: "


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def config_payload(run: RunConfig) -> dict:
    return _clean({"config": run.to_dict(), "seed": run.seed})


def config_header(run: RunConfig) -> str:
    return HEADER_PREFIX + json.dumps(config_payload(run), sort_keys=True)


def save_csv(df: pd.DataFrame, output_dir: Path, filename: str, run: RunConfig) -> Path:
    """Save a table as CSV below a ``# config:`` header line.

    Args:
        df: Table to save
        output_dir: Output directory
        filename: File name
        run: Resolved configuration embedded in the header

    Returns:
        Path of the written file
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    output_path = output_dir / filename
    with open(output_path, "w", newline="") as handle:
        handle.write(config_header(run) + "\n")
        df.to_csv(handle, index=False, lineterminator="\n")
    logger.info(f"Saved {filename} ({len(df)} rows) to {output_path}")
    return output_path


def read_csv(path: Path) -> Tuple[dict, pd.DataFrame]:
    """Read a CSV written by save_csv; returns (header payload, table)."""
    path = Path(path)
    with open(path) as handle:
        first = handle.readline()
    header = {}
    skip = 0
    if first.startswith(HEADER_PREFIX):
        header = json.loads(first[len(HEADER_PREFIX):])
        skip = 1
    return header, pd.read_csv(path, skiprows=skip)


def save_json(report: dict, output_dir: Path, filename: str, run: RunConfig) -> Path:
    """Save a report as JSON with sorted keys, the resolved config and the seed."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    payload = config_payload(run)
    payload.update(_clean(report))
    output_path = output_dir / filename
    output_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    logger.info(f"Saved {filename} to {output_path}")
    return output_path


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def save_snapshots(snapshots: pd.DataFrame, output_dir: Path, filename: str = "snapshots.parquet") -> Path:
    """Save snapshots in long format (sweep, x, y, r) as Parquet."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    output_path = output_dir / filename
    snapshots.to_parquet(output_path, index=False)
    logger.info(f"Saved {snapshots['sweep'].nunique() if len(snapshots) else 0} snapshots to {output_path}")
    return output_path


def load_snapshots(path: Path) -> Dict[int, Configuration]:
    """Snapshots keyed by sweep."""
    df = pd.read_parquet(path)
    snapshots = {}
    for sweep, group in df.groupby("sweep", sort=True):
        snapshots[int(sweep)] = Configuration(group[["x", "y"]].to_numpy(dtype=float),
                                              group["r"].to_numpy(dtype=float))
    return snapshots


def save_config_dump(cfg: Configuration, output_dir: Path, filename: str = "final.config") -> Path:
    """Save a configuration in the "x y r" dump format."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    output_path = output_dir / filename
    output_path.write_text(format_config_dump(DiskUnion(cfg.points, cfg.radii)))
    logger.info(f"Saved configuration dump ({len(cfg)} disks) to {output_path}")
    return output_path


def load_config_dump(path: Path) -> Configuration:
    union = parse_config_dump(Path(path).read_text())
    return Configuration(union.centers, union.radii)
