# scr_commands.py - handlers for the generate / solve / compare / sweep subcommands

import dataclasses
import functools
import hashlib
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

from config_settings import (
    CONFIG_PATH,
    DASHF_MAX_OUTER,
    DEFAULT_EPSILON,
    DEFAULT_JOBS,
    TOOL_VERSION,
)
from constants import (
    COMPARED_ALGORITHMS,
    EXIT_CONFIG_ERROR,
    EXIT_INFEASIBLE,
    EXIT_NONCONVERGED,
    EXIT_OK,
    SCHEMA_VERSION,
    Algorithm,
    SweepAxis,
)
from edge_core import charts, csv_helper, scenario
from edge_core.dashf import Solution, problem_size, run_algorithm
from edge_core.errors import (
    ConfigError,
    EdgeCoreError,
    InfeasiblePairError,
    InvalidScenarioError,
    NonConvergenceError,
    OracleRefusedError,
    SchemaError,
)
from edge_core.model import Scenario
from edge_core.run_store import get_run_dir, read_json
from edge_core.sweep_queue import (
    STATUS_INFEASIBLE,
    STATUS_NONCONVERGED,
    STATUS_OK,
    STATUS_REFUSED,
    SweepJob,
    SweepOutcome,
    run_jobs,
)

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = os.path.join(CONFIG_PATH, "default_scenario.json")

# ─────────────────────────────────────────────────────────────────────────────
# Exit codes
# ─────────────────────────────────────────────────────────────────────────────

_CONFIG_ERRORS = (SchemaError, ConfigError, InvalidScenarioError, OracleRefusedError)

_STATUS_CODES = {
    STATUS_OK: EXIT_OK,
    STATUS_NONCONVERGED: EXIT_NONCONVERGED,
    STATUS_REFUSED: EXIT_CONFIG_ERROR,
    STATUS_INFEASIBLE: EXIT_INFEASIBLE,
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, _CONFIG_ERRORS):
        return EXIT_CONFIG_ERROR
    if isinstance(error, NonConvergenceError):
        return EXIT_NONCONVERGED
    return EXIT_INFEASIBLE


def _reports_errors(handler):
    """Turn expected library errors into an exit code instead of a traceback."""
    @functools.wraps(handler)
    def wrapper(*args, **kwargs) -> int:
        try:
            return handler(*args, **kwargs)
        except EdgeCoreError as e:
            code = exit_code_for(e)
            logger.error(f"❌ {handler.__name__}: {e}")
            diagnostics = getattr(e, "diagnostics", None)
            if diagnostics:
                for key, value in diagnostics.items():
                    logger.error(f"🔍   {key}: {value}")
            if isinstance(e, InfeasiblePairError):
                logger.error(f"🔍   offending pair: user {e.n}, server {e.m}")
            return code
    return wrapper


def _outcome_code(outcome: SweepOutcome) -> int:
    return _STATUS_CODES.get(outcome.status, EXIT_INFEASIBLE)

# ─────────────────────────────────────────────────────────────────────────────
# Experiment specs
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ExperimentSpec:
    config: scenario.ScenarioConfig
    algorithms: Tuple[str, ...]
    axis: SweepAxis = SweepAxis.NONE
    values: Tuple[Any, ...] = ()
    seeds: Tuple[int, ...] = ()
    epsilon: float = DEFAULT_EPSILON
    out: Optional[str] = None

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("experiment needs at least one algorithm")
        if self.axis is not SweepAxis.NONE and not self.values:
            raise ConfigError(f"sweep over {self.axis.value} needs at least one value")
        if not self.seeds:
            object.__setattr__(self, "seeds", (self.config.seed,))

    @property
    def points(self) -> List[Any]:
        return list(self.values) if self.axis is not SweepAxis.NONE else [None]

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: str = ".") -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise SchemaError("$", "expected an object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise SchemaError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")

        ref = data.get("scenario_config", DEFAULT_CONFIG_FILE)
        if isinstance(ref, str):
            config = scenario.load_config(ref if os.path.isabs(ref) else os.path.join(base_dir, ref))
        else:
            config = scenario.ScenarioConfig.from_dict(ref, "scenario_config")

        raw_algorithms = data.get("algorithms", [a.value for a in COMPARED_ALGORITHMS])
        if not isinstance(raw_algorithms, list):
            raise SchemaError("algorithms", "expected a list of algorithm names")
        algorithms = []
        for i, name in enumerate(raw_algorithms):
            try:
                algorithms.append(Algorithm(name).value)
            except ValueError:
                raise SchemaError(f"algorithms[{i}]", f"unknown algorithm {name!r}")

        sweep = data.get("sweep", {"axis": "none"})
        if not isinstance(sweep, dict):
            raise SchemaError("sweep", "expected an object")
        try:
            axis = SweepAxis(sweep.get("axis", "none"))
        except ValueError:
            raise SchemaError("sweep.axis", f"unknown sweep axis {sweep.get('axis')!r}")
        values = _parse_values(axis, sweep.get("values", []))

        seeds = data.get("seeds", [])
        if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            raise SchemaError("seeds", "expected a list of integers")

        epsilon = data.get("epsilon", DEFAULT_EPSILON)
        if not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool) or not epsilon > 0:
            raise SchemaError("epsilon", "expected a positive number")

        out = data.get("out")
        if out is not None and not isinstance(out, str):
            raise SchemaError("out", "expected a directory path")

        return cls(config=config, algorithms=tuple(algorithms), axis=axis, values=tuple(values),
                   seeds=tuple(seeds), epsilon=float(epsilon), out=out)


def _parse_values(axis: SweepAxis, raw) -> List[Any]:
    if axis is SweepAxis.NONE:
        return []
    if not isinstance(raw, list):
        raise SchemaError("sweep.values", "expected a list")
    values: List[Any] = []
    for i, v in enumerate(raw):
        path = f"sweep.values[{i}]"
        if axis is SweepAxis.B_MAX:
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise SchemaError(path, "expected a positive bandwidth in Hz")
            values.append(float(v))
        else:
            if not (isinstance(v, list) and len(v) == 2
                    and all(isinstance(w, (int, float)) and not isinstance(w, bool) and w > 0 for w in v)):
                raise SchemaError(path, "expected [omega_t, omega_e] with positive entries")
            values.append((float(v[0]), float(v[1])))
    return values


def load_experiment(path: str) -> ExperimentSpec:
    return ExperimentSpec.from_dict(read_json(path), os.path.dirname(os.path.abspath(path)))


def point_label(axis: SweepAxis, value: Any) -> str:
    if axis is SweepAxis.WEIGHTS:
        return f"{value[0]!r}/{value[1]!r}"
    if axis is SweepAxis.B_MAX:
        return repr(float(value))
    return ""


def point_scenario(base: Scenario, axis: SweepAxis, value: Any) -> Scenario:
    if axis is SweepAxis.B_MAX:
        return base.with_bandwidth(value)
    if axis is SweepAxis.WEIGHTS:
        return base.with_weights(*value)
    return base


def combined_hash(hashes: Sequence[str]) -> str:
    """Single hash for outputs that span several scenarios (one per seed)."""
    if len(hashes) == 1:
        return hashes[0]
    return hashlib.sha256(",".join(hashes).encode("utf-8")).hexdigest()[:16]


def build_jobs(spec: ExperimentSpec) -> Tuple[List[SweepJob], str]:
    """Jobs ordered by algorithm, then sweep point, then seed."""
    bases: Dict[int, Scenario] = {}
    for seed in spec.seeds:
        bases[seed] = scenario.generate(dataclasses.replace(spec.config, seed=seed))
    digest = combined_hash([scenario.scenario_hash(bases[s]) for s in spec.seeds])
    jobs: List[SweepJob] = []
    for algorithm in spec.algorithms:
        for value in spec.points:
            for seed in spec.seeds:
                jobs.append(SweepJob(
                    index=len(jobs), algorithm=algorithm,
                    scenario=point_scenario(bases[seed], spec.axis, value),
                    axis=spec.axis.value, value=point_label(spec.axis, value),
                    seed=seed, epsilon=spec.epsilon, max_outer=DASHF_MAX_OUTER,
                ))
    return jobs, digest


def outcome_row(outcome: SweepOutcome) -> Dict[str, Any]:
    job = outcome.job
    row: Dict[str, Any] = {
        "algorithm": job.algorithm, "axis": job.axis, "value": job.value,
        "seed": job.seed, "status": outcome.status,
        "scr": None, "T_total": None, "E_total": None, "V": None, "iterations": None,
    }
    if outcome.solution is not None:
        row.update(csv_helper.comparison_row(outcome.solution))
        row["iterations"] = outcome.solution.iterations
    return row

# ─────────────────────────────────────────────────────────────────────────────
# Output helpers
# ─────────────────────────────────────────────────────────────────────────────

def _out_dir(out: Optional[str], default_name: str) -> str:
    return get_run_dir(out if out else default_name)


def _breakdown_dict(solution: Solution) -> Dict[str, float]:
    bd = solution.breakdown
    return {"V": bd.V, "T_total": bd.T_total, "E_total": bd.E_total}


def write_solution(path: str, scn: Scenario, solution: Solution, epsilon: float) -> str:
    extra = {
        "algorithm": solution.algorithm,
        "scr": solution.scr,
        "breakdown": _breakdown_dict(solution),
        "converged": solution.converged,
        "iterations": solution.iterations,
        "epsilon": epsilon,
        "message": solution.message,
        "violations": [str(v) for v in solution.violations],
        "problem_size": problem_size(scn.N, scn.M),
        "tool_version": TOOL_VERSION,
    }
    return scenario.save(scn, path, allocation=solution.allocation, extra=extra)


def _solution_code(solution: Solution) -> int:
    if not solution.feasible:
        return EXIT_INFEASIBLE
    if not solution.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK

# ─────────────────────────────────────────────────────────────────────────────
# Commands
# ─────────────────────────────────────────────────────────────────────────────

@_reports_errors
def cmd_generate(config_path: Optional[str] = None, seed: Optional[int] = None, out: Optional[str] = None) -> int:
    cfg = scenario.load_config(config_path or DEFAULT_CONFIG_FILE)
    if seed is not None:
        try:
            cfg = dataclasses.replace(cfg, seed=seed)
        except InvalidScenarioError as e:
            raise ConfigError(str(e)) from e
    scn = scenario.generate(cfg)
    path = out or os.path.join(get_run_dir("scenarios"), f"scenario-{cfg.n_users}x{cfg.n_servers}-{cfg.seed}.json")
    scenario.save(scn, path)
    logger.info(f"✅ Generated scenario with {scn.N} users and {scn.M} servers (hash {scenario.scenario_hash(scn)})")
    return EXIT_OK


@_reports_errors
def cmd_solve(scenario_path: str, algorithm: str = Algorithm.DASHF.value, epsilon: float = DEFAULT_EPSILON,
              out: Optional[str] = None) -> int:
    try:
        algorithm = Algorithm(algorithm).value
    except ValueError:
        raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {[a.value for a in Algorithm]}")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    scn = scenario.load(scenario_path)
    digest = scenario.scenario_hash(scn)
    out_dir = _out_dir(out, f"solve-{algorithm}-{digest}")

    logger.info(f"🚀 Solving {scenario_path} with {algorithm} (epsilon={epsilon})")
    solution, trace = run_algorithm(algorithm, scn, epsilon)

    write_solution(os.path.join(out_dir, f"solution-{algorithm}.json"), scn, solution, epsilon)
    csv_helper.write_trace_csv(os.path.join(out_dir, f"trace-{algorithm}.csv"), trace, digest)
    charts.convergence_chart(trace, os.path.join(out_dir, f"convergence-{algorithm}.svg"))

    code = _solution_code(solution)
    if code == EXIT_INFEASIBLE:
        for v in solution.violations:
            logger.error(f"🔍   {v}")
    elif code == EXIT_NONCONVERGED:
        raise NonConvergenceError(f"{algorithm} did not converge ({solution.message}); best allocation written")
    else:
        logger.info(f"✅ {algorithm}: SCR {solution.scr:.6e} in {solution.iterations} iterations")
    return code


@_reports_errors
def cmd_compare(scenario_path: str, epsilon: float = DEFAULT_EPSILON, out: Optional[str] = None,
                jobs: int = DEFAULT_JOBS) -> int:
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    scn = scenario.load(scenario_path)
    digest = scenario.scenario_hash(scn)
    out_dir = _out_dir(out, f"compare-{digest}")

    batch = [SweepJob(index=i, algorithm=a.value, scenario=scn, seed=scn.seed, epsilon=epsilon)
             for i, a in enumerate(COMPARED_ALGORITHMS)]
    outcomes = run_jobs(batch, jobs)

    code = EXIT_OK
    rows = []
    for outcome in outcomes:
        if outcome.solution is None:
            logger.error(f"❌ {outcome.job.algorithm} failed ({outcome.status}): {outcome.error}")
        else:
            rows.append(csv_helper.comparison_row(outcome.solution))
        if code == EXIT_OK:
            code = _outcome_code(outcome)

    csv_helper.write_comparison_csv(os.path.join(out_dir, "comparison.csv"), [o.solution for o in outcomes if o.solution], digest)
    if rows:
        charts.comparison_chart(rows, os.path.join(out_dir, "comparison.svg"))
        best = max(rows, key=lambda r: r["scr"])
        logger.info(f"📊 Highest SCR: {best['algorithm']} ({best['scr']:.6e})")
    return code


def run_sweep(spec: ExperimentSpec, jobs: int = DEFAULT_JOBS) -> Tuple[List[Dict[str, Any]], str]:
    batch, digest = build_jobs(spec)
    logger.info(f"🚀 Sweep: {len(spec.algorithms)} algorithms x {len(spec.points)} points x "
                f"{len(spec.seeds)} seeds = {len(batch)} runs on {jobs} workers")
    outcomes = run_jobs(batch, jobs)
    return [outcome_row(o) for o in outcomes], digest


def write_sweep_outputs(rows: List[Dict[str, Any]], spec: ExperimentSpec, digest: str, out_dir: str) -> None:
    csv_helper.write_sweep_csv(os.path.join(out_dir, "sweep.csv"), rows, digest)
    if any(r["status"] == STATUS_OK for r in rows):
        charts.sweep_chart(rows, spec.axis.value, os.path.join(out_dir, "sweep.svg"))


@_reports_errors
def cmd_sweep(spec_path: str, out: Optional[str] = None, jobs: int = DEFAULT_JOBS, seed: Optional[int] = None,
              epsilon: Optional[float] = None) -> int:
    spec = load_experiment(spec_path)
    if seed is not None:
        spec = dataclasses.replace(spec, seeds=(seed,))
    if epsilon is not None:
        if not epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {epsilon}")
        spec = dataclasses.replace(spec, epsilon=epsilon)
    name = os.path.splitext(os.path.basename(spec_path))[0]
    out_dir = _out_dir(out or spec.out, f"sweep-{name}")

    rows, digest = run_sweep(spec, jobs)
    write_sweep_outputs(rows, spec, digest, out_dir)

    ok = sum(1 for r in rows if r["status"] == STATUS_OK)
    if ok == 0:
        logger.error(f"❌ Sweep produced no successful rows out of {len(rows)}")
        return EXIT_INFEASIBLE
    if ok < len(rows):
        logger.warning(f"⚠️ {len(rows) - ok} of {len(rows)} sweep rows failed; see the status column")
    logger.info(f"✅ Sweep finished: {ok}/{len(rows)} rows ok")
    return EXIT_OK
