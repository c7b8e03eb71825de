"""Generate companion plots from CLI outputs."""
import logging
from pathlib import Path
from typing import List, Optional

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from .outputs import read_csv, read_json

logger = logging.getLogger(__name__)

# Set style
sns.set_style("whitegrid")
plt.rcParams['figure.figsize'] = (10, 6)


def plot_scan(scan_df: pd.DataFrame, output_dir: Path, s_beta: Optional[float] = None) -> Path:
    """Plot the wired-0 and wired-1 densities against the reduced activity."""
    output_dir = Path(output_dir)
    plots_dir = output_dir / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots()
    for bc, group in scan_df.groupby("bc", sort=True):
        ax.errorbar(group["s"], group["rho"], yerr=2 * group["rho_se"], marker="o", capsize=3, label=bc)
    if s_beta is not None:
        ax.axvline(s_beta, color="grey", linestyle="--", alpha=0.8, label="order-0 crossing")

    ax.set_xlabel('Reduced activity s = z / beta')
    ax.set_ylabel('Density')
    ax.set_title('Density gap between the wired phases')
    ax.legend()

    plt.tight_layout()
    file_path = plots_dir / "scan_density.png"
    plt.savefig(file_path, dpi=150, bbox_inches='tight')
    plt.close()
    logger.info(f"Saved scan plot to {file_path}")
    return file_path


def plot_pressure(scan_df: pd.DataFrame, output_dir: Path) -> Path:
    """Plot the two pressure curves of a scan run with pressure = true."""
    output_dir = Path(output_dir)
    plots_dir = output_dir / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots()
    for bc, group in scan_df.dropna(subset=["psi"]).groupby("bc", sort=True):
        ax.plot(group["s"], group["psi"], marker="o", label=bc)
        ax.fill_between(group["s"], group["psi"] - 2 * group["psi_se"], group["psi"] + 2 * group["psi_se"],
                        alpha=0.2)

    ax.set_xlabel('Reduced activity s = z / beta')
    ax.set_ylabel('ln Z / (beta |window|)')
    ax.set_title('Finite-volume pressures')
    ax.legend()

    plt.tight_layout()
    file_path = plots_dir / "scan_pressure.png"
    plt.savefig(file_path, dpi=150, bbox_inches='tight')
    plt.close()
    logger.info(f"Saved pressure plot to {file_path}")
    return file_path


def plot_trace(trace_df: pd.DataFrame, output_dir: Path) -> Path:
    """Plot the point count and the acceptance rates of one chain."""
    output_dir = Path(output_dir)
    plots_dir = output_dir / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)

    fig, axes = plt.subplots(2, 1, figsize=(10, 8), sharex=True)
    axes[0].plot(trace_df["sweep"], trace_df["N"], linewidth=1)
    axes[0].set_ylabel('Number of points')
    axes[0].set_title('Chain trace')
    for kind in ("birth", "death", "move"):
        axes[1].plot(trace_df["sweep"], trace_df[f"acc_{kind}"], linewidth=1, alpha=0.8, label=kind)
    axes[1].set_xlabel('Sweep')
    axes[1].set_ylabel('Acceptance rate')
    axes[1].legend()

    plt.tight_layout()
    file_path = plots_dir / "trace.png"
    plt.savefig(file_path, dpi=150, bbox_inches='tight')
    plt.close()
    logger.info(f"Saved trace plot to {file_path}")
    return file_path


def render_plots(output_dir: Path) -> List[Path]:
    """Render every plot whose source CSV exists in ``output_dir``."""
    output_dir = Path(output_dir)
    written = []

    trace_path = output_dir / "trace.csv"
    if trace_path.exists():
        _, trace_df = read_csv(trace_path)
        written.append(plot_trace(trace_df, output_dir))

    scan_path = output_dir / "scan.csv"
    if scan_path.exists():
        _, scan_df = read_csv(scan_path)
        summary_path = output_dir / "scan_summary.json"
        s_beta = read_json(summary_path).get("s_beta_order0") if summary_path.exists() else None
        written.append(plot_scan(scan_df, output_dir, s_beta))
        if scan_df["psi"].notna().any():
            written.append(plot_pressure(scan_df, output_dir))

    if not written:
        logger.warning(f"No trace.csv or scan.csv found in {output_dir}")
    return written
