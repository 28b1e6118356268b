# config_settings.py - Solver and experiment configuration
# All tunables are consolidated here; every value can be overridden from the
# environment without touching the file.

import os
import json
import logging

# ─────────────────────────────────────────────────────────────────────────────
# DINKELBACH / ALTERNATING OPTIMIZATION
# ─────────────────────────────────────────────────────────────────────────────

# Relative y change that ends the outer loop
DEFAULT_EPSILON = float(os.environ.get('SCR_EPSILON', '1e-3'))

# Outer iteration cap (best-seen allocation is returned when it is hit)
DASHF_MAX_OUTER = int(os.environ.get('SCR_MAX_OUTER', '30'))

# Relative tolerance for the nondecreasing-y check on every run
MONOTONE_TOL = 1e-8

# ─────────────────────────────────────────────────────────────────────────────
# SDP SOLVER (operator splitting, cvxpy interior point as fallback)
# ─────────────────────────────────────────────────────────────────────────────

SDP_TOL = float(os.environ.get('SCR_SDP_TOL', '1e-6'))
SDP_MAX_ITER = int(os.environ.get('SCR_SDP_MAX_ITER', '50000'))

# "auto": ADMM first, cvxpy interior point when ADMM has not certified the
# residuals within SDP_AUTO_ADMM_ITER; "admm" or "interior" force one backend
SDP_BACKEND = os.environ.get('SCR_SDP_BACKEND', 'auto')
SDP_AUTO_ADMM_ITER = int(os.environ.get('SCR_SDP_AUTO_ADMM_ITER', '5000'))

# Ruiz passes of the congruence scaling applied before either backend
SDP_EQUILIBRATE_PASSES = 20

ADMM_RHO = 0.1
ADMM_SIGMA = 1e-6
ADMM_ALPHA = 1.6
ADMM_EQ_RHO_FACTOR = 1e3
ADMM_CHECK_EVERY = 10
ADMM_ADAPT_EVERY = 100
ADMM_INFEASIBLE_TOL = 1e-5

# ─────────────────────────────────────────────────────────────────────────────
# RESOURCE ALLOCATION (fractional programming + log barrier)
# ─────────────────────────────────────────────────────────────────────────────

FP_TOL = float(os.environ.get('SCR_FP_TOL', '1e-6'))
FP_MAX_OUTER = int(os.environ.get('SCR_FP_MAX_OUTER', '20'))
KKT_TOL = float(os.environ.get('SCR_KKT_TOL', '1e-6'))

BARRIER_MU0 = 1.0
BARRIER_MU_FACTOR = 10.0
NEWTON_MAX_ITER = 100
LINE_SEARCH_ALPHA = 0.25
LINE_SEARCH_BETA = 0.5
LINE_SEARCH_MAX_HALVINGS = 60

# ─────────────────────────────────────────────────────────────────────────────
# FEASIBILITY AND ORACLES
# ─────────────────────────────────────────────────────────────────────────────

# Absolute tolerance on cap-normalized constraints
FEASIBILITY_TOL = 1e-9

ORACLE_MAX_ASSOCIATIONS = 100_000
ORACLE_MAX_GRID_POINTS = 1_000_000
ORACLE_MAX_JOINT_ASSOCIATIONS = int(os.environ.get('SCR_ORACLE_MAX_JOINT', '256'))

# RUCAA draws from the scenario seed shifted by this offset
RUCAA_SEED_OFFSET = 7919

# ─────────────────────────────────────────────────────────────────────────────
# EXPERIMENT HARNESS
# ─────────────────────────────────────────────────────────────────────────────

DEFAULT_JOBS = int(os.environ.get('SCR_JOBS', '1'))

# Output root for runs (relative to the project root)
OUTPUT_DIR = os.environ.get('SCR_OUTPUT_DIR', 'data/runs')

LOG_LEVEL = os.environ.get('SCR_LOG_LEVEL', 'INFO')

# ─────────────────────────────────────────────────────────────────────────────
# DIRECTORY CREATION AND VERSION
# ─────────────────────────────────────────────────────────────────────────────

# Create absolute paths relative to project root
_project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PROJECT_ROOT = _project_root
OUTPUT_PATH = OUTPUT_DIR if os.path.isabs(OUTPUT_DIR) else os.path.join(_project_root, OUTPUT_DIR)
CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config")
os.makedirs(OUTPUT_PATH, exist_ok=True)


def _read_tool_version() -> str:
    try:
        with open(os.path.join(_project_root, "package.json"), "r", encoding="utf-8") as f:
            return json.load(f).get("version", "0.0.0")
    except (OSError, ValueError):
        return "0.0.0"


TOOL_VERSION = _read_tool_version()

# ─────────────────────────────────────────────────────────────────────────────
# LOGGING CONFIGURATION
# ─────────────────────────────────────────────────────────────────────────────

logger = logging.getLogger(__name__)
logger.debug(f"🔧 Loaded solver config: {SDP_TOL=}, {SDP_MAX_ITER=}, {FP_TOL=}, {KKT_TOL=}")
logger.debug(f"🔧 Loaded harness config: {OUTPUT_PATH=}, {DEFAULT_JOBS=}, {TOOL_VERSION=}")

# ─────────────────────────────────────────────────────────────────────────────
# EXPORTS
# ─────────────────────────────────────────────────────────────────────────────

__all__ = [
    "DEFAULT_EPSILON",
    "DASHF_MAX_OUTER",
    "MONOTONE_TOL",
    "SDP_TOL",
    "SDP_MAX_ITER",
    "SDP_BACKEND",
    "SDP_AUTO_ADMM_ITER",
    "SDP_EQUILIBRATE_PASSES",
    "ADMM_RHO",
    "ADMM_SIGMA",
    "ADMM_ALPHA",
    "ADMM_EQ_RHO_FACTOR",
    "ADMM_CHECK_EVERY",
    "ADMM_ADAPT_EVERY",
    "ADMM_INFEASIBLE_TOL",
    "FP_TOL",
    "FP_MAX_OUTER",
    "KKT_TOL",
    "BARRIER_MU0",
    "BARRIER_MU_FACTOR",
    "NEWTON_MAX_ITER",
    "LINE_SEARCH_ALPHA",
    "LINE_SEARCH_BETA",
    "LINE_SEARCH_MAX_HALVINGS",
    "FEASIBILITY_TOL",
    "ORACLE_MAX_ASSOCIATIONS",
    "ORACLE_MAX_GRID_POINTS",
    "ORACLE_MAX_JOINT_ASSOCIATIONS",
    "RUCAA_SEED_OFFSET",
    "DEFAULT_JOBS",
    "OUTPUT_DIR",
    "OUTPUT_PATH",
    "CONFIG_PATH",
    "PROJECT_ROOT",
    "LOG_LEVEL",
    "TOOL_VERSION",
]
