"""Asynchronous manager/worker search loop.

The manager owns the optimizer and the history.  It starts ``W`` prior
samples, then repeatedly gathers every finished evaluation, tells the
optimizer, asks for exactly as many new configurations and submits them,
until the budget is spent.  Jobs still running at that point are abandoned
and logged as cancelled.

Two clocks are supported.  ``"virtual"`` simulates the whole system in one
thread with an event queue ordered by ``(t_end, job_id)``, which makes runs
fully reproducible.  ``"real"`` runs workers in threads that actually sleep.
"""

from __future__ import annotations

import concurrent.futures as cf
import heapq
import json
import logging
import math
import threading
import time
from dataclasses import asdict, dataclass

import numpy as np

from .acquisition import Optimizer
from .history import FAILED, OK, TIMEOUT, EvaluationRecord, SearchHistory, find_best
from .priors import PriorSampler, UniformPrior
from .space import ParameterSpace
from .workloads import StepTimeout

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600.0
CLOCKS = ("virtual", "real")


@dataclass(frozen=True)
class SearchBudget:
    wall_clock_limit: float | None = None
    max_evaluations: int | None = None
    per_evaluation_timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.wall_clock_limit is None and self.max_evaluations is None:
            raise ValueError("set a wall-clock limit or a maximum number of evaluations")
        if self.wall_clock_limit is not None and not self.wall_clock_limit > 0:
            raise ValueError("wall_clock_limit must be positive")
        if self.max_evaluations is not None and self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")
        if not self.per_evaluation_timeout > 0:
            raise ValueError("per_evaluation_timeout must be positive")


class VirtualClock:
    """Simulated time that only moves when someone sleeps on it."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        self._now += seconds


class RealClock:
    """Monotonic wall-clock seconds since construction."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


def evaluate_with_timeout(workload, config, timeout: float, clock, rng=None) -> tuple[str, float]:
    """Run one evaluation under a time limit split evenly over the workload's steps.

    Returns:
        ``("ok", runtime)``, or ``("timeout", nan)`` / ``("failed", nan)``.
    """
    if not timeout > 0:
        raise ValueError("timeout must be positive")
    step_timeout = timeout / getattr(workload, "n_steps", 1)
    try:
        runtime = workload.evaluate(config, clock, rng, step_timeout=step_timeout)
    except StepTimeout:
        return TIMEOUT, math.nan
    except Exception as exc:  # any workload error is a failed evaluation
        log.info("evaluation failed: %s", exc)
        return FAILED, math.nan
    return OK, float(runtime)


def _job_rng(seed, job_id):
    return np.random.default_rng([seed, job_id])


class _Manager:
    """State shared by both clock modes."""

    def __init__(self, space, prior, optimizer_config, workload, workers, budget, seed):
        if workers < 1:
            raise ValueError("need at least one worker")
        self.space = space
        self.prior = prior or UniformPrior(space)
        self.workload = workload
        self.workers = workers
        self.budget = budget
        self.seed = 0 if seed is None else int(seed)
        seq = np.random.SeedSequence(self.seed)
        opt_seq, init_seq = seq.spawn(2)
        config = dict(optimizer_config or {})
        self.optimizer = Optimizer(space, self.prior, seed=opt_seq, **config)
        self.init_rng = np.random.default_rng(init_seq)
        self.history = SearchHistory(space)
        self.next_job = 0
        self.free = list(range(workers))
        heapq.heapify(self.free)
        self.in_flight = 0

    def initial_configs(self):
        return [self.prior.sample(self.init_rng) for _ in range(self.workers)]

    def take_job(self):
        job_id, worker = self.next_job, heapq.heappop(self.free)
        self.next_job += 1
        self.in_flight += 1
        return job_id, worker

    def release(self, worker):
        heapq.heappush(self.free, worker)
        self.in_flight -= 1

    def remaining(self):
        if self.budget.max_evaluations is None:
            return math.inf
        return self.budget.max_evaluations - len(self.history.records)

    def event(self, t, kind, count):
        self.history.events.append((t, kind, count))

    def tell_and_ask(self, t, records):
        self.optimizer.tell([r.config for r in records], [r.objective for r in records])
        self.event(t, "tell", len(records))
        configs = self.optimizer.ask(len(records))
        self.event(t, "ask", len(configs))
        return configs


def run_search(
    space: ParameterSpace,
    prior: PriorSampler | None,
    optimizer_config: dict | None,
    workload,
    workers: int,
    budget: SearchBudget,
    clock: str = "virtual",
    seed=None,
    charge_overhead: bool = False,
    provenance: dict | None = None,
) -> SearchHistory:
    """Run an asynchronous search and return its history.

    Args:
        space: Search space.
        prior: Sampler for the initial batch and candidate sets.
        optimizer_config: Keyword arguments for :class:`Optimizer`.
        workload: Evaluation target (see :mod:`abotune.workloads`).
        workers: Number of concurrent evaluations ``W``.
        budget: Stopping criteria and per-evaluation timeout.
        clock: ``"virtual"`` or ``"real"``.
        seed: Root seed of the optimizer, the initial batch and the
            per-job random sources.
        charge_overhead: Virtual clock only; advance simulated time by the
            measured wall time of each tell/ask so optimizer cost shows up
            as idle workers.
        provenance: Description of the prior stored in the metadata.

    The best configuration and objective are in
    ``history.metadata["best_config"]`` and ``["best_objective"]`` when at
    least one evaluation succeeded.
    """
    if clock not in CLOCKS:
        raise ValueError(f"unknown clock {clock!r}")
    mgr = _Manager(space, prior, optimizer_config, workload, workers, budget, seed)
    if clock == "virtual":
        t_stop = _run_virtual(mgr, charge_overhead)
    else:
        t_stop = _run_real(mgr)
    history = mgr.history
    history.metadata.update(
        {
            "seed": mgr.seed,
            "surrogate": mgr.optimizer.surrogate,
            "kappa": mgr.optimizer.kappa,
            "liar": mgr.optimizer.liar,
            "n_candidates": mgr.optimizer.n_candidates,
            "workers": workers,
            "clock": clock,
            "budget": asdict(budget),
            "t_stop": t_stop,
            "prior": provenance or {"prior": mgr.prior.kind},
            "n_submitted": mgr.next_job,
            "n_cancelled": len(history.cancelled),
        }
    )
    if history.ok_records:
        best_config, best_objective = find_best(history)
        history.metadata["best_config"] = space.normalize(best_config)
        history.metadata["best_objective"] = best_objective
    return history


def _run_virtual(mgr: _Manager, charge_overhead: bool) -> float:
    budget = mgr.budget
    queue = []  # (t_end, job_id, worker, config, t_submit, status, runtime)
    now = 0.0

    def submit(configs, t):
        for config in configs:
            job_id, worker = mgr.take_job()
            job_clock = VirtualClock(t)
            status, runtime = evaluate_with_timeout(
                mgr.workload, config, budget.per_evaluation_timeout, job_clock, _job_rng(mgr.seed, job_id)
            )
            heapq.heappush(queue, (job_clock.now(), job_id, worker, config, t, status, runtime))
        mgr.event(t, "submit", len(configs))

    submit(mgr.initial_configs(), now)
    while queue:
        t_next = max(queue[0][0], now)
        if budget.wall_clock_limit is not None and t_next > budget.wall_clock_limit:
            now = budget.wall_clock_limit
            break
        now = t_next
        done = []
        while queue and queue[0][0] <= now and len(done) < mgr.remaining():
            t_end, job_id, worker, config, t_submit, status, runtime = heapq.heappop(queue)
            mgr.release(worker)
            done.append(EvaluationRecord.make(job_id, worker, config, t_submit, t_submit, t_end, status, runtime))
        mgr.history.records.extend(done)
        mgr.event(now, "complete", len(done))
        started = time.perf_counter()
        configs = mgr.tell_and_ask(now, done)
        if charge_overhead:
            now += time.perf_counter() - started
        submit(configs, now)
        if mgr.remaining() <= 0:
            break
    for t_end, job_id, worker, config, t_submit, _, _ in sorted(queue):
        mgr.history.cancelled.append((job_id, worker, config, t_submit, t_submit))
    if queue:
        mgr.event(now, "cancel", len(queue))
        log.info("abandoned %d in-flight jobs at t=%.3f", len(queue), now)
    return now


def _run_real(mgr: _Manager) -> float:
    budget = mgr.budget
    clock = RealClock()
    pool = cf.ThreadPoolExecutor(max_workers=mgr.workers)
    pending = {}
    lock = threading.Lock()

    def work(job_id, config):
        t_start = clock.now()
        status, runtime = evaluate_with_timeout(
            mgr.workload, config, budget.per_evaluation_timeout, clock, _job_rng(mgr.seed, job_id)
        )
        return t_start, clock.now(), status, runtime

    def submit(configs):
        t = clock.now()
        with lock:
            for config in configs:
                job_id, worker = mgr.take_job()
                future = pool.submit(work, job_id, config)
                pending[future] = (job_id, worker, config, t)
        mgr.event(t, "submit", len(configs))

    submit(mgr.initial_configs())
    try:
        while pending:
            wait = None
            if budget.wall_clock_limit is not None:
                wait = budget.wall_clock_limit - clock.now()
                if wait <= 0:
                    break
            finished, _ = cf.wait(list(pending), timeout=wait, return_when=cf.FIRST_COMPLETED)
            if not finished:
                break
            results = []
            for future in finished:
                job_id, worker, config, t_submit = pending[future]
                t_start, t_end, status, runtime = future.result()
                results.append((t_end, job_id, worker, config, t_submit, t_start, status, runtime))
            results.sort(key=lambda r: (r[0], r[1]))
            results = results[: int(min(len(results), mgr.remaining()))]
            done = []
            for t_end, job_id, worker, config, t_submit, t_start, status, runtime in results:
                del pending[next(f for f, v in pending.items() if v[0] == job_id)]
                mgr.release(worker)
                done.append(EvaluationRecord.make(job_id, worker, config, t_submit, t_start, t_end, status, runtime))
            now = clock.now()
            mgr.history.records.extend(done)
            mgr.event(now, "complete", len(done))
            submit(mgr.tell_and_ask(now, done))
            if mgr.remaining() <= 0:
                break
    finally:
        now = clock.now()
        for job_id, worker, config, t_submit in sorted(pending.values(), key=lambda v: v[0]):
            mgr.history.cancelled.append((job_id, worker, config, t_submit, t_submit))
        if pending:
            mgr.event(now, "cancel", len(pending))
        pool.shutdown(wait=False, cancel_futures=True)
    return now


def write_report(history: SearchHistory, path, extra: dict | None = None) -> None:
    """Write the history's metadata (plus ``extra``) as JSON."""
    report = dict(history.metadata)
    report.update(extra or {})
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
