"""Command orchestration: sampling, scans, contour statistics, expansion and constants reports."""
import logging
import math
from collections import Counter
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .conditions import minimal_beta, psz_conditions_check
from .contours import (check_label_coherence, domino_set, extract_contours, ratio_bound_holds,
                       spin_field)
from .errors import ConfigError, DegenerateContourError, LabelInconsistencyError, RootNotBracketedError
from .expansion import (TranslatedShapeFamily, cluster_pressure, convergence_check, dimer_self_test,
                        find_tau0)
from .model import QuermassParams
from .outputs import load_snapshots, save_config_dump, save_csv, save_json, save_snapshots
from .peierls import (DEFAULT_I_GAMMA_CAP, chi_bound_holds, estimate_I_gamma, peierls_constants,
                      verify_peierls_bound)
from .pressure import density_gap_scan
from .run_config import RunConfig
from .sampler import estimate_density, run_chain
from .truncated import estimate_f_corrections, find_critical_s, s_beta, truncated_pressure_order0

logger = logging.getLogger(__name__)


def _constants(run: RunConfig, p: Optional[QuermassParams] = None):
    tiling = run.tiling()
    return peierls_constants(p or run.params(), tiling.delta, run.theta1_delta, tiling.L, run.l0,
                             tiling.norm, strict=False)


def _corrected_critical_s(run: RunConfig, s_order0: Optional[float]) -> Dict:
    """Critical s with the single-defect corrections estimated at the order-0 root.

    The corrections are Monte-Carlo estimates, not rigorous bounds, so the
    result is flagged experimental.  ``i_gamma_samples = 0`` skips it.
    """
    result = {"s_critical_corrected": None, "s_critical_corrected_experimental": True,
              "f_corrections": None}
    if s_order0 is None or run.i_gamma_samples == 0:
        return result
    tiling = run.tiling()
    p = run.params().with_s(s_order0)
    corrections = estimate_f_corrections(p, _constants(run, p), tiling, samples=run.i_gamma_samples,
                                         seed=run.seed, threads=run.threads)
    result["f_corrections"] = corrections.to_dict()
    if not (math.isfinite(corrections.f0) and math.isfinite(corrections.f1)):
        logger.warning("Corrections are not finite at this beta; no corrected critical s")
        return result
    try:
        s_c = find_critical_s(p, f1=corrections.f1, f0=corrections.f0, delta=tiling.delta)
    except RootNotBracketedError as e:
        logger.warning(f"Corrected root not found: {e}")
        return result
    logger.info(f"Corrected critical s = {s_c:.8g} (order 0: {s_order0:.8g}, experimental)")
    result["s_critical_corrected"] = s_c
    return result


def cmd_sample(run: RunConfig) -> Dict:
    """Run one chain and write trace.csv, summary.json and optional snapshots.

    Args:
        run: Validated run configuration

    Returns:
        Dictionary with the trace and the summary
    """
    output_path = Path(run.out)
    output_path.mkdir(parents=True, exist_ok=True)

    logger.info(f"Starting sampling run ({run.boundary}, seed {run.seed})")

    # Step 1: Resolve the model
    logger.info("Step 1: Resolving parameters and window...")
    p = run.params()
    tiling = run.tiling()
    window = run.window_geometry()
    bc = run.boundary_condition()

    # Step 2: Run the chain
    logger.info("Step 2: Running the chain...")
    trace = run_chain(p, window, bc, run.sweeps, run.seed, tiling=tiling, burn_in=run.burn_in, thin=run.thin,
                      steps_per_sweep=run.steps_per_sweep, snapshot_every=run.snapshot_every,
                      convention=run.surface_convention)

    # Step 3: Estimate the density
    logger.info("Step 3: Estimating the density...")
    density = estimate_density(trace)
    records = trace.records
    summary = {
        "rho": density.rho, "rho_se": density.se, "n_batches": density.n_batches,
        "batch_size": density.batch_size, "window_area": window.area, "boundary": bc.label,
        "z": p.z, "mean_N": float(records["N"].mean()),
        "mean_H": float(records["H"].mean()) if records["H"].notna().any() else None,
        "acceptance": {kind: float(records[f"acc_{kind}"].mean()) for kind in ("birth", "death", "move")},
        "peierls": _constants(run).to_dict(),
    }
    logger.info(f"Density {density.rho:.5g} +/- {density.se:.2g}")

    # Step 4: Save outputs
    logger.info("Step 4: Saving outputs...")
    save_csv(records, output_path, "trace.csv", run)
    save_json(summary, output_path, "summary.json", run)
    if trace.snapshots:
        save_snapshots(trace.snapshot_frame(), output_path)
        last = max(trace.snapshots)
        save_config_dump(trace.snapshots[last], output_path)

    logger.info("Sampling completed")
    return {"trace": trace, "summary": summary}


def cmd_scan(run: RunConfig) -> Dict:
    """Density-gap scan of the two wired phases over the configured grid."""
    output_path = Path(run.out)
    output_path.mkdir(parents=True, exist_ok=True)

    if run.grid is None:
        raise ConfigError("a scan needs a grid", run.source, None, "grid")
    if run.beta <= 0:
        raise ConfigError("a scan needs beta > 0", run.source, run.lines.get("beta"), "beta")

    # Step 1: Resolve the grid
    logger.info("Step 1: Resolving the scan grid...")
    p = run.params()
    tiling = run.tiling()
    window = run.window_geometry()
    s_values = run.grid.s_values(p.beta)
    constants = _constants(run)
    lo, hi = constants.U_beta
    outside = [s for s in s_values if not lo < s < hi]
    if outside:
        logger.warning(f"{len(outside)} of {len(s_values)} grid points lie outside U_beta = ({lo:.6g}, {hi:.6g})")

    # Step 2: Run the chains
    logger.info(f"Step 2: Scanning {len(s_values)} grid points...")
    result = density_gap_scan(p, window, s_values, run.sweeps, run.seed, tiling=tiling, burn_in=run.burn_in,
                              thin=run.thin, steps_per_sweep=run.steps_per_sweep, with_pressure=run.pressure,
                              threads=run.threads, offset_samples=run.offset_samples)

    # Step 3: Order-0 reference
    logger.info("Step 3: Order-0 reference values...")
    summary = result.summary()
    summary["s_beta_order0"] = s_beta(p.beta, tiling.delta)
    try:
        summary["s_critical_order0"] = find_critical_s(p, delta=tiling.delta)
    except RootNotBracketedError as e:
        logger.warning(f"Order-0 root not found: {e}")
        summary["s_critical_order0"] = None
    summary.update(_corrected_critical_s(run, summary["s_critical_order0"]))
    summary["U_beta"] = list(constants.U_beta)
    summary["grid_outside_U_beta"] = len(outside)

    # Step 4: Save outputs
    logger.info("Step 4: Saving outputs...")
    save_csv(result.table, output_path, "scan.csv", run)
    for label, curve in result.pressure.items():
        save_csv(curve.table, output_path, f"pressure_{label}.csv", run)
        summary[f"pressure_bias_{label}"] = curve.bias_bound
    save_json(summary, output_path, "scan_summary.json", run)

    logger.info(f"Scan completed: gap peaks at s = {result.s_peak:.5g}")
    return {"scan": result, "summary": summary}


def exterior_spin(boundary: str) -> int:
    """Spin of the sites outside the box: the wired spin, or 0 for free runs.

    A free run has no germs outside the window, so its exterior tiles are
    empty and padded sites never carry a spin 1 without a germ.
    """
    if boundary.startswith("wired"):
        return int(boundary[-1])
    return 0


def cmd_analyze_contours(run: RunConfig, snapshots_path: Optional[Path] = None) -> Dict:
    """Contour statistics and bound pass rates over saved snapshots.

    Args:
        run: Validated run configuration
        snapshots_path: Parquet snapshots (default <out>/snapshots.parquet)

    Returns:
        Dictionary with the per-snapshot table and the report
    """
    output_path = Path(run.out)
    output_path.mkdir(parents=True, exist_ok=True)
    snapshots_path = Path(snapshots_path) if snapshots_path else output_path / "snapshots.parquet"
    if not snapshots_path.exists():
        raise ConfigError("snapshots not found", str(snapshots_path), None, "snapshots")

    # Step 1: Load snapshots
    logger.info("Step 1: Loading snapshots...")
    snapshots = load_snapshots(snapshots_path)
    p = run.params()
    tiling = run.tiling()
    box = run.tile_box()
    constants = _constants(run)

    # Step 2: Extract contours and check the bounds
    logger.info(f"Step 2: Extracting contours from {len(snapshots)} snapshots...")
    rows = []
    sizes = Counter()
    dump = []
    for sweep, cfg in sorted(snapshots.items()):
        field = spin_field(cfg, tiling, box, exterior=exterior_spin(run.boundary))
        try:
            contours = extract_contours(field, tiling, field.exterior)
        except LabelInconsistencyError as e:
            logger.warning(f"Sweep {sweep}: {e}")
            contours = []
        counts = Counter()
        for contour in contours:
            sizes[contour.size] += 1
            counts["peierls"] += verify_peierls_bound(cfg, contour, p, constants, tiling)
            counts["ratio"] += ratio_bound_holds(contour, constants.r1)
            counts["chi"] += chi_bound_holds(cfg, contour, p, tiling)
            counts["coherent"] += check_label_coherence(contour, field, tiling, field.exterior)
            try:
                counts["domino"] += len(domino_set(contour, field, tiling)) >= constants.r0 * contour.size
            except DegenerateContourError:
                counts["degenerate"] += 1
            if run.i_gamma_samples and contour.size <= DEFAULT_I_GAMMA_CAP:
                weight = estimate_I_gamma(contour, p, tiling, samples=run.i_gamma_samples, seed=run.seed + sweep,
                                          constants=constants, threads=run.threads,
                                          convention=run.surface_convention)
                counts["i_gamma_checked"] += 1
                counts["i_gamma"] += bool(weight.bound_ok)
        dump.append({"sweep": sweep, "contours": [c.to_dict() for c in contours]})
        rows.append({
            "sweep": sweep, "n_points": len(cfg), "n_contours": len(contours),
            "max_size": max((c.size for c in contours), default=0),
            "mean_size": float(np.mean([c.size for c in contours])) if contours else 0.0,
            "peierls_pass": counts["peierls"], "domino_pass": counts["domino"], "ratio_pass": counts["ratio"],
            "chi_pass": counts["chi"], "coherence_pass": counts["coherent"], "degenerate": counts["degenerate"],
            "i_gamma_checked": counts["i_gamma_checked"], "i_gamma_pass": counts["i_gamma"],
        })
    table = pd.DataFrame(rows, columns=["sweep", "n_points", "n_contours", "max_size", "mean_size",
                                        "peierls_pass", "domino_pass", "ratio_pass", "chi_pass",
                                        "coherence_pass", "degenerate", "i_gamma_checked", "i_gamma_pass"])

    # Step 3: Aggregate
    logger.info("Step 3: Aggregating pass rates...")
    total = int(table["n_contours"].sum()) if len(table) else 0
    weighed = int(table["i_gamma_checked"].sum()) if len(table) else 0

    def rate(column: str) -> Optional[float]:
        return float(table[column].sum() / total) if total else None

    report = {
        "snapshots": len(snapshots), "contours": total, "admissible": constants.admissible,
        "size_histogram": {str(size): count for size, count in sorted(sizes.items())},
        "peierls_pass_rate": rate("peierls_pass"), "domino_pass_rate": rate("domino_pass"),
        "ratio_pass_rate": rate("ratio_pass"), "chi_pass_rate": rate("chi_pass"),
        "coherence_pass_rate": rate("coherence_pass"),
        "i_gamma_samples": run.i_gamma_samples, "i_gamma_checked": weighed,
        "i_gamma_pass_rate": float(table["i_gamma_pass"].sum() / weighed) if weighed else None,
    }

    # Step 4: Save outputs
    logger.info("Step 4: Saving outputs...")
    save_csv(table, output_path, "contour_stats.csv", run)
    save_json(report, output_path, "contour_report.json", run)
    save_json({"snapshots": dump}, output_path, "contours.json", run)

    logger.info(f"Contour analysis completed: {total} contours")
    return {"table": table, "report": report}


def cmd_expansion_report(run: RunConfig) -> Dict:
    """Convergence verdicts, the cluster sum of the smallest contours, the dimer self-test
    and the beta-conditions at the configured parameters."""
    output_path = Path(run.out)
    output_path.mkdir(parents=True, exist_ok=True)

    # Step 1: Constants
    logger.info("Step 1: Computing constants...")
    tiling = run.tiling()
    constants = _constants(run)
    l0 = run.l0 or constants.l0
    tau = run.tau if run.tau is not None else constants.tau
    tau0 = find_tau0(l0, size_cap=run.size_cap)

    # Step 2: Convergence and cluster sum
    logger.info("Step 2: Convergence check and cluster sum...")
    basic = convergence_check(tau, l0, run.size_cap)
    derivative = convergence_check(tau, l0, run.size_cap, criterion="derivative")
    if not derivative.satisfied:
        logger.warning(f"tau = {tau:.4g} is below tau0 = {tau0:.4g}; the expansion is not certified")
    shape = tiling.ball_offsets(tiling.L)
    if tau <= 0:
        logger.warning(f"tau = {tau:.4g} <= 0: contour weights are not small at this beta")
    weight = math.exp(max(min(-tau * len(shape), 700.0), -745.0))
    lmax = max(run.lmax, len(shape))
    expansion = cluster_pressure(TranslatedShapeFamily(shape, weight), tau, l0, lmax, check=False)

    # Step 3: Self-test and conditions
    logger.info("Step 3: Dimer self-test and beta-conditions...")
    dimer = dimer_self_test(run.dimer_weight)
    conditions = None
    smallest = {"minimal_beta": None, "desk_simulable": False, "not_desk_simulable": True}
    if constants.rho0 > 0:
        if run.beta > 0:
            conditions = psz_conditions_check(run.beta, constants.delta, constants.rho0, l0, r1=constants.r1,
                                              tau0=tau0).to_dict()
        try:
            found = minimal_beta(constants.delta, constants.rho0, l0, r1=constants.r1, tau0=tau0)
            smallest = {k: v for k, v in found.to_dict().items() if k != "report"}
        except ValueError as e:
            logger.warning(f"Minimal beta not found: {e}")

    report = {
        "tau": tau, "tau0": tau0, "l0": l0, "eta": expansion.eta, "Lmax": lmax,
        "partial_sum": expansion.partial_sum, "tail_bound": expansion.tail_bound,
        "terms": expansion.terms.to_dict(orient="records"),
        "convergence": {"basic": basic.to_dict(), "derivative": derivative.to_dict()},
        "converges": bool(tau > tau0 and derivative.satisfied),
        "dimer_self_test": dimer, "conditions": conditions,
    }
    report.update(smallest)

    # Step 4: Save
    logger.info("Step 4: Saving outputs...")
    save_json(report, output_path, "expansion_report.json", run)
    logger.info(f"Expansion report completed (converges: {report['converges']})")
    return report


def cmd_check_constants(run: RunConfig) -> Dict:
    """Peierls constants, order-0 criticality and the minimal rigorous beta."""
    output_path = Path(run.out)
    output_path.mkdir(parents=True, exist_ok=True)

    # Step 1: Peierls constants
    logger.info("Step 1: Computing Peierls constants...")
    p = run.params()
    constants = _constants(run)
    report = {"constants": constants.to_dict()}

    # Step 2: Order-0 criticality
    if p.beta > 0:
        logger.info("Step 2: Order-0 criticality...")
        report["order0"] = truncated_pressure_order0(p, constants).to_dict()
        report["s_beta"] = constants.s_beta
    else:
        logger.info("Step 2: Skipping order-0 criticality at beta = 0")

    # Step 3: Minimal beta
    if constants.rho0 > 0:
        logger.info("Step 3: Bisecting the minimal rigorous beta...")
        try:
            found = minimal_beta(constants.delta, constants.rho0, constants.l0, r1=constants.r1)
            report.update(found.to_dict())
        except ValueError as e:
            logger.warning(f"Minimal beta not found: {e}")
            report.update({"minimal_beta": None, "desk_simulable": False, "not_desk_simulable": True})
    else:
        logger.warning("rho0 <= 0: no beta satisfies the conditions")
        report.update({"minimal_beta": None, "desk_simulable": False, "not_desk_simulable": True})

    # Step 4: Save
    logger.info("Step 4: Saving outputs...")
    save_json(report, output_path, "constants.json", run)
    logger.info("Constants check completed")
    return report


COMMANDS = {
    "sample": cmd_sample,
    "scan": cmd_scan,
    "contours": cmd_analyze_contours,
    "expand": cmd_expansion_report,
    "check-constants": cmd_check_constants,
}
