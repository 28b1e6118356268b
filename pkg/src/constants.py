import math
from enum import Enum

# ─────────────────────────────────────────────────────────────────────────────
# - ENUMS FOR ALGORITHMS, SWEEPS AND CONSTRAINT VIOLATIONS
#    Each member's `value` is the exact label used on the command line and in
#    CSV files; extra attributes are attached in `__new__`.
# ─────────────────────────────────────────────────────────────────────────────

class Algorithm(str, Enum):
    """
    Each member's `value` is the CLI/CSV label and `description` is the
    human-readable summary shown in `--help` and in chart legends.
    """

    description: str

    def __new__(cls, label: str, description: str):
        obj = str.__new__(cls, label)
        obj._value_ = label
        obj.description = description
        return obj

    DASHF  = ("dashf",  "Dinkelbach + AO (SDR/Hungarian association, FP resources)")
    RUCAA  = ("rucaa",  "Random association, equal resource split")
    GUCAA  = ("gucaa",  "Greedy least-loaded association, equal resource split")
    AAUCO  = ("aauco",  "Equal resource split, optimized association")
    GUCRO  = ("gucro",  "Greedy association, optimized resources")
    ORACLE = ("oracle", "Every association with optimized resources (desk scale)")


# Algorithms run by `compare` and by default in sweeps
COMPARED_ALGORITHMS = (
    Algorithm.DASHF,
    Algorithm.AAUCO,
    Algorithm.GUCRO,
    Algorithm.RUCAA,
    Algorithm.GUCAA,
)


class SweepAxis(str, Enum):
    """Sweep axis of an experiment spec; `column` is the CSV value format."""

    column: str

    def __new__(cls, label: str, column: str):
        obj = str.__new__(cls, label)
        obj._value_ = label
        obj.column = column
        return obj

    NONE    = ("none",    "-")
    B_MAX   = ("b_max",   "b_max_hz")
    WEIGHTS = ("weights", "omega_t/omega_e")


class ViolationCode(str, Enum):
    """
    Constraint families of the joint problem; `description` says what the
    constraint requires.
    """

    description: str

    def __new__(cls, label: str, description: str):
        obj = str.__new__(cls, label)
        obj._value_ = label
        obj.description = description
        return obj

    BINARY_ASSOCIATION = ("binary_association", "x entries are 0 or 1")
    SINGLE_SERVER      = ("single_server",      "each user connects to exactly one server")
    SPLIT_RANGE        = ("split_range",        "split ratio lies in [0, 1]")
    BANDWIDTH_CAP      = ("bandwidth_cap",      "server bandwidth within b_max")
    USER_POWER_CAP     = ("user_power_cap",     "user power within p_max_n")
    SERVER_POWER_CAP   = ("server_power_cap",   "server power within p_max_m")
    USER_GPU_CAP       = ("user_gpu_cap",       "user GPU speed within F_max_n")
    SERVER_GPU_CAP     = ("server_gpu_cap",     "server GPU speed within F_max_m")
    NONNEGATIVE        = ("nonnegative",        "resources are nonnegative")
    DELAY_BOUND        = ("delay_bound",        "every pair finishes within T")

# ─────────────────────────────────────────────────────────────────────────────
# - SCENARIO DEFAULTS (edge deployment table)
#    GPU counts and utilization are folded into the aggregate speeds.
# ─────────────────────────────────────────────────────────────────────────────

DEFAULT_N_USERS = 10
DEFAULT_N_SERVERS = 2
DEFAULT_AREA_M = 1000.0
DEFAULT_SEED = 2024

DEFAULT_B_MAX_HZ = 10e6
DEFAULT_P_MAX_USER_W = 0.2
DEFAULT_P_MAX_SERVER_W = 10.0
DEFAULT_F_MAX_USER = 19.58e12      # 4 GPUs x 8.9 TFLOP/s x 0.55
DEFAULT_F_MAX_SERVER = 1372.8e12   # 8 GPUs x 312 TFLOP/s x 0.55
DEFAULT_KAPPA = 1e-38

DEFAULT_ADAPTER_PARAMS = (1.2e6, 1.4e7)
DEFAULT_TOKEN_BITS = (1e7, 5e7)

DEFAULT_OMEGA_T = 0.5
DEFAULT_OMEGA_E = 0.005
DEFAULT_VARPI1 = 10000.0 / math.log(2.0)
DEFAULT_VARPI2 = 1.0 / 3.0
DEFAULT_OMEGA_B = 32.0
DEFAULT_EPOCHS = 1.0
DEFAULT_NOISE_DBM_PER_HZ = -134.0

# Token-to-FLOP convention: 16-bit token ids, 6 FLOPs per parameter per token
DEFAULT_BITS_PER_TOKEN = 16.0
DEFAULT_FLOPS_PER_PARAM_TOKEN = 6.0

# Path-loss distance floor (meters)
MIN_LINK_DISTANCE_M = 1.0

# ─────────────────────────────────────────────────────────────────────────────
# - FILE FORMATS
# ─────────────────────────────────────────────────────────────────────────────

SCHEMA_VERSION = 1
PRNG_ALGORITHM = "PCG64"

TRACE_COLUMNS = ["iter", "y", "scr", "obj_part1", "obj_part2", "T_total", "E_total", "V", "wall_ms"]
COMPARISON_COLUMNS = ["algorithm", "scr", "T_total", "E_total", "V"]
SWEEP_COLUMNS = [
    "algorithm", "axis", "value", "seed", "status",
    "scr", "T_total", "E_total", "V", "iterations",
    "scr_mean", "T_total_mean", "E_total_mean", "V_mean",
]

# ─────────────────────────────────────────────────────────────────────────────
# - EXIT CODES
# ─────────────────────────────────────────────────────────────────────────────

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INFEASIBLE = 3
EXIT_NONCONVERGED = 4
