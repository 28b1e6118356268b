#!/usr/bin/env python3
"""
Re-run the sweep rows whose status is not 'ok' and rewrite the sweep CSV.
Use this after a sweep where some points failed (infeasible, nonconverged or
an unexpected solver error) once the cause has been fixed.
"""

import sys
import os
import dataclasses
import logging

# Add the src directory to Python path so we can import modules
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from config_settings import DEFAULT_JOBS
from constants import EXIT_CONFIG_ERROR, EXIT_INFEASIBLE, EXIT_OK
from edge_core import csv_helper
from edge_core.errors import EdgeCoreError
from edge_core.sweep_queue import STATUS_OK, run_jobs
from scr_commands import build_jobs, exit_code_for, load_experiment, outcome_row

# Set up logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logging.getLogger('matplotlib').setLevel(logging.WARNING)
logger = logging.getLogger(__name__)


def _key(row):
    return (row["algorithm"], csv_helper.format_value(row["value"]), row["seed"])


def retry(spec_path: str, csv_path: str, jobs: int = DEFAULT_JOBS) -> int:
    meta, rows = csv_helper.load_sweep_rows(csv_path)
    failed = [r for r in rows if r["status"] != STATUS_OK]
    if not failed:
        logger.info("ℹ️ No failed rows in the sweep. Nothing to retry.")
        return EXIT_OK

    logger.info(f"📊 Found {len(failed)} failed rows out of {len(rows)}")
    for i, r in enumerate(failed[:3]):
        logger.info(f"  {i+1}. {r['algorithm']} at {r['axis']}={r['value']} seed {r['seed']}: {r['status']}")
    if len(failed) > 3:
        logger.info(f"  ... and {len(failed) - 3} more")

    spec = load_experiment(spec_path)
    seeds = []
    for r in rows:
        if r["seed"] is not None and r["seed"] not in seeds:
            seeds.append(r["seed"])
    if seeds:
        spec = dataclasses.replace(spec, seeds=tuple(seeds))

    all_jobs, digest = build_jobs(spec)
    if meta.get("scenario_hash") != digest:
        logger.warning(f"⚠️ Spec scenarios hash to {digest} but the CSV was written for {meta.get('scenario_hash')}")

    wanted = {_key(r) for r in failed}
    todo = [j for j in all_jobs if (j.algorithm, j.value, j.seed) in wanted]
    if len(todo) < len(wanted):
        logger.warning(f"⚠️ {len(wanted) - len(todo)} failed rows have no matching point in {spec_path}")

    logger.info(f"🔄 Re-running {len(todo)} points...")
    fresh = {_key(row): row for row in (outcome_row(o) for o in run_jobs(todo, jobs))}
    merged = [fresh.get(_key(r), r) for r in rows]
    csv_helper.write_sweep_csv(csv_path, merged, meta.get("scenario_hash", digest))

    still_failed = sum(1 for r in merged if r["status"] != STATUS_OK)
    if still_failed:
        logger.warning(f"⚠️ {still_failed} rows still failing after retry")
    else:
        logger.info("✅ Retry process completed successfully!")
    return EXIT_OK if still_failed < len(merged) else EXIT_INFEASIBLE


def main():
    if len(sys.argv) not in (3, 4):
        print("Usage: python retry_failed_points.py <experiment.json> <sweep.csv> [jobs]")
        print("Example: python retry_failed_points.py src/config/bmax_sweep.json data/runs/sweep-bmax_sweep/sweep.csv 4")
        sys.exit(EXIT_CONFIG_ERROR)

    try:
        jobs = int(sys.argv[3]) if len(sys.argv) == 4 else DEFAULT_JOBS
    except ValueError:
        print("Error: jobs must be an integer")
        sys.exit(EXIT_CONFIG_ERROR)

    try:
        sys.exit(retry(sys.argv[1], sys.argv[2], jobs))
    except EdgeCoreError as e:
        logger.error(f"❌ Error during retry process: {e}")
        sys.exit(exit_code_for(e))


if __name__ == "__main__":
    main()
