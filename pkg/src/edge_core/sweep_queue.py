"""
Worker pool for experiment batches.
Runs (algorithm, scenario) jobs on background threads and hands results back
in submission order.
"""

import logging
import threading
from dataclasses import dataclass
from queue import Empty, Queue
from typing import Any, Dict, List, Optional

from config_settings import DASHF_MAX_OUTER, DEFAULT_EPSILON, DEFAULT_JOBS
from edge_core.dashf import RunTrace, Solution, run_algorithm
from edge_core.errors import (
    EdgeCoreError,
    InfeasiblePairError,
    InfeasibleProblemError,
    OracleRefusedError,
    UndefinedRatioError,
)
from edge_core.model import Scenario

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_NONCONVERGED = "nonconverged"
STATUS_INFEASIBLE = "infeasible"
STATUS_REFUSED = "refused"
STATUS_ERROR = "error"


@dataclass
class SweepJob:
    """One algorithm on one scenario; axis/value/seed only label the output row"""
    index: int
    algorithm: str
    scenario: Scenario
    axis: str = "none"
    value: Any = None
    seed: Optional[int] = None
    epsilon: float = DEFAULT_EPSILON
    max_outer: int = DASHF_MAX_OUTER


@dataclass
class SweepOutcome:
    job: SweepJob
    status: str
    solution: Optional[Solution] = None
    trace: Optional[RunTrace] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def execute(job: SweepJob) -> SweepOutcome:
    """Run a job and classify the outcome; no failure escapes, so one bad point never stops a batch."""
    try:
        solution, trace = run_algorithm(job.algorithm, job.scenario, job.epsilon, job.max_outer)
    except OracleRefusedError as e:
        return SweepOutcome(job, STATUS_REFUSED, error=str(e))
    except (InfeasiblePairError, InfeasibleProblemError, UndefinedRatioError) as e:
        return SweepOutcome(job, STATUS_INFEASIBLE, error=str(e))
    except EdgeCoreError as e:
        return SweepOutcome(job, STATUS_ERROR, error=str(e))
    except Exception as e:
        logger.error(f"❌ Unexpected failure in job {job.index} ({job.algorithm}): {e}", exc_info=True)
        return SweepOutcome(job, STATUS_ERROR, error=f"{type(e).__name__}: {e}")
    if not solution.feasible:
        return SweepOutcome(job, STATUS_INFEASIBLE, solution, trace, error=str(solution.violations[0]))
    if not solution.converged:
        return SweepOutcome(job, STATUS_NONCONVERGED, solution, trace, error=solution.message)
    return SweepOutcome(job, STATUS_OK, solution, trace)


class SweepQueue:
    """
    Thread pool fed from a queue of SweepJob items.

    Numerical kernels release the GIL inside numpy/scipy, so a few threads
    keep several solves in flight without process start-up cost.
    """

    def __init__(self, workers: int = DEFAULT_JOBS):
        self.workers = max(1, int(workers))
        self.job_queue: Queue = Queue()
        self.results: Dict[int, SweepOutcome] = {}
        self.is_running = False
        self.threads: List[threading.Thread] = []
        self._lock = threading.Lock()

    def start(self):
        """Start the worker threads"""
        if self.is_running:
            logger.warning("⚠️ Sweep queue already running")
            return
        self.is_running = True
        self.threads = [
            threading.Thread(target=self._worker, name=f"sweep-worker-{i}", daemon=True)
            for i in range(self.workers)
        ]
        for t in self.threads:
            t.start()
        logger.info(f"🚀 Sweep queue started with {self.workers} workers")

    def stop(self):
        """Stop the worker threads"""
        self.is_running = False
        for t in self.threads:
            t.join(timeout=5)
        self.threads = []
        logger.info("🛑 Sweep queue stopped")

    def submit(self, job: SweepJob):
        self.job_queue.put(job)
        logger.debug(f"📝 Queued {job.algorithm} job {job.index} (queue size: {self.job_queue.qsize()})")

    @staticmethod
    def _report(outcome: SweepOutcome):
        job = outcome.job
        if outcome.ok:
            logger.debug(f"✅ Job {job.index} ({job.algorithm}) done: SCR {outcome.solution.scr:.6e}")
        else:
            logger.warning(f"⚠️ Job {job.index} ({job.algorithm}) {outcome.status}: {outcome.error}")

    def _worker(self):
        """Background worker that processes the job queue"""
        logger.debug("👷 Sweep worker started")
        while self.is_running:
            try:
                job = self.job_queue.get(timeout=1.0)
            except Empty:
                continue
            outcome = execute(job)
            with self._lock:
                self.results[job.index] = outcome
            self._report(outcome)
            self.job_queue.task_done()
        logger.debug("👷 Sweep worker stopped")

    def run_all(self, jobs: List[SweepJob]) -> List[SweepOutcome]:
        """Run every job and return outcomes in the order given."""
        if self.workers == 1:
            outcomes = [execute(job) for job in jobs]
            for outcome in outcomes:
                self._report(outcome)
            return outcomes
        self.results = {}
        self.start()
        try:
            for job in jobs:
                self.submit(job)
            self.job_queue.join()
        finally:
            self.stop()
        return [self.results[job.index] for job in jobs]


def run_jobs(jobs: List[SweepJob], workers: int = DEFAULT_JOBS) -> List[SweepOutcome]:
    return SweepQueue(workers).run_all(jobs)
