"""Effectiveness metrics computed from search histories.

Everything is derived from the best-so-far runtime ``R(t)``: a
piecewise-constant, non-increasing function of search time.  All integrals
are evaluated exactly over its breakpoints.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import UndefinedSegmentError
from .history import SearchHistory

DEFAULT_TIMEOUT = 600.0
NOT_REACHED_EPS = 1.0  # seconds added to t_max for a speedup that was never achieved


@dataclass(frozen=True)
class BestTrace:
    """Right-continuous step function on ``[0, t_max]``.

    ``values[k]`` holds on ``[times[k], times[k+1])`` and the last value up
    to ``t_max``.  ``times[0]`` is always 0.  A NaN value marks a segment
    where no evaluation has succeeded and no fill value was given.
    ``first_ok`` is the runtime of the earliest successful evaluation.
    """

    times: np.ndarray
    values: np.ndarray
    t_max: float
    first_ok: float = math.nan
    filled: bool = False  # first segment is the fill value, not an evaluation

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if len(self.times) != len(self.values) or len(self.times) == 0 or self.times[0] != 0:
            raise ValueError("a trace needs matching times/values starting at t=0")

    def __call__(self, t):
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.values[idx]

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def segments(self):
        """Yield ``(start, end, value)`` for every non-empty segment."""
        ends = np.append(self.times[1:], self.t_max)
        for a, b, v in zip(self.times, ends, self.values):
            if b > a:
                yield float(a), float(b), float(v)

    def ok_steps(self) -> list[tuple[float, float]]:
        """``(time, runtime)`` at each improvement made by a real evaluation."""
        start = 1 if self.filled else 0
        return [(float(t), float(v)) for t, v in zip(self.times[start:], self.values[start:]) if t < self.t_max]


def _ok_points(history) -> list[tuple[float, float]]:
    if isinstance(history, SearchHistory):
        return [(r.t_end, r.runtime) for r in history.records if r.ok]
    return [(float(t), float(r)) for t, r in history]


def best_trace(history, t_max: float, initial: float | None = DEFAULT_TIMEOUT) -> BestTrace:
    """Running minimum of successful runtimes by completion time.

    Args:
        history: A :class:`SearchHistory` or ``(t_end, runtime)`` pairs of
            successful evaluations.
        t_max: Horizon; completions after it are ignored.
        initial: Value before the first success (``None`` leaves it undefined).
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    points = sorted(p for p in _ok_points(history) if p[0] <= t_max)
    fill = math.nan if initial is None else float(initial)
    times, values = [0.0], [fill]
    first_ok = points[0][1] if points else math.nan
    for t, runtime in points:
        current = values[-1]
        if math.isnan(current) or runtime < current:
            if t == times[-1]:
                values[-1] = runtime
            else:
                times.append(t)
                values.append(runtime)
    filled = not points or points[0][0] > 0
    return BestTrace(np.array(times), np.array(values), float(t_max), first_ok, filled)


def _check_defined(trace: BestTrace):
    if np.isnan(trace.values).any():
        raise UndefinedSegmentError("trace is undefined before its first successful evaluation")


def mean_best(trace: BestTrace) -> float:
    """Time average of ``R(t)`` over ``[0, t_max]``."""
    _check_defined(trace)
    return sum((b - a) * v for a, b, v in trace.segments()) / trace.t_max


def r_best(trace: BestTrace) -> float:
    return trace.final


class Speedup(NamedTuple):
    value: float
    reached: bool


def first_time_below(trace: BestTrace, threshold: float) -> float | None:
    """Earliest ``t`` with ``R(t) < threshold``, or ``None``."""
    for a, _, v in trace.segments():
        if v < threshold:
            return a
    return None


def search_speedup(trace: BestTrace, baseline: BestTrace, t_max: float | None = None) -> Speedup:
    """``t_max`` over the first time ``trace`` beats the baseline's final best.

    When it never does, the value is ``t_max / (t_max + 1)`` and ``reached``
    is false.  A trace already below the threshold at ``t = 0`` gives an
    infinite speedup.
    """
    t_max = trace.t_max if t_max is None else float(t_max)
    threshold = float(baseline(min(t_max, baseline.t_max)))
    t = first_time_below(trace, threshold)
    if t is None or t > t_max:
        return Speedup(t_max / (t_max + NOT_REACHED_EPS), False)
    return Speedup(math.inf if t == 0 else t_max / t, True)


def worker_utilization(history: SearchHistory, workers: int, t_max: float) -> float:
    """Fraction of the ``workers * t_max`` worker-seconds spent evaluating.

    Jobs abandoned at shutdown count as busy from their start to ``t_max``.
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    busy = 0.0
    for r in history.records:
        busy += max(0.0, min(r.t_end, t_max) - r.t_start)
    for _, _, _, _, t_start in history.cancelled:
        busy += max(0.0, t_max - t_start)
    return busy / (workers * t_max)


@dataclass(frozen=True)
class Improvement:
    times: np.ndarray  # segment starts of F on [0, D]
    factors: np.ndarray
    expected_factor: float
    expected_speedup: float


def improvement_trace(trace_tl: BestTrace, trace_notl: BestTrace, horizon: float):
    """``F(tau) = R_notl(tau) / R_tl(tau)`` on the union of breakpoints in ``[0, horizon]``."""
    cuts = np.union1d(trace_tl.times, trace_notl.times)
    cuts = cuts[cuts < horizon]
    r_tl, r_notl = trace_tl(cuts), trace_notl(cuts)
    if np.isnan(r_tl).any() or np.isnan(r_notl).any():
        raise UndefinedSegmentError("improvement factor needs both traces defined on [0, D]")
    return cuts, r_notl / r_tl


def expected_improvement(trace_tl: BestTrace, trace_notl: BestTrace, horizon: float) -> float:
    cuts, factors = improvement_trace(trace_tl, trace_notl, horizon)
    widths = np.diff(np.append(cuts, horizon))
    return float(np.dot(widths, factors) / horizon)


def time_to_reach(trace: BestTrace, runtime: float) -> float:
    """``T(runtime)``: first search time with a best strictly below ``runtime``."""
    return _first_below(trace.ok_steps(), runtime)


def expected_search_speedup(trace_tl: BestTrace, trace_notl: BestTrace) -> float:
    """Average of ``T_notl(t) / T_tl(t)`` over target runtimes ``t``.

    The range runs from the larger of the two final bests up to the larger
    of the two first successful runtimes.  Both ``T`` are step functions of
    ``t`` whose jumps sit at the traces' values, so the integral is a finite
    sum.
    """
    steps_tl, steps_notl = trace_tl.ok_steps(), trace_notl.ok_steps()
    if not steps_tl or not steps_notl:
        raise UndefinedSegmentError("both traces need a successful evaluation")
    t_min = max(steps_tl[-1][1], steps_notl[-1][1])
    t_first = max(trace_tl.first_ok, trace_notl.first_ok)
    if not t_first > t_min:
        raise UndefinedSegmentError("first runtime does not exceed the best runtime")
    cuts = sorted({t_min, t_first} | {v for _, v in steps_tl + steps_notl if t_min < v < t_first})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        # T is constant on (a, b]; probe at b
        t_tl = _first_below(steps_tl, b)
        t_notl = _first_below(steps_notl, b)
        if t_tl == 0:
            raise UndefinedSegmentError("TL trace reaches the target at t=0")
        total += (b - a) * t_notl / t_tl
    return total / (t_first - t_min)


def _first_below(steps, runtime):
    for t, v in steps:
        if v < runtime:
            return t
    raise UndefinedSegmentError(f"trace never goes below {runtime}")


def improvement_metrics(trace_tl: BestTrace, trace_notl: BestTrace, horizon: float) -> Improvement:
    """Improvement factor trace, its time average and the expected search speedup."""
    cuts, factors = improvement_trace(trace_tl, trace_notl, horizon)
    return Improvement(
        cuts,
        factors,
        expected_improvement(trace_tl, trace_notl, horizon),
        expected_search_speedup(trace_tl, trace_notl),
    )


def average_traces(traces) -> BestTrace:
    """Pointwise mean of traces on the union of their breakpoints."""
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    t_max = min(tr.t_max for tr in traces)
    cuts = np.unique(np.concatenate([tr.times for tr in traces]))
    cuts = cuts[cuts < t_max]
    values = np.mean([tr(cuts) for tr in traces], axis=0)
    first_ok = float(np.mean([tr.first_ok for tr in traces]))
    return BestTrace(cuts, values, t_max, first_ok)


def history_horizon(history: SearchHistory) -> float:
    """Stop time recorded by the search, else the last completion time."""
    t = history.metadata.get("t_stop")
    if t is None or not t > 0:
        t = max((r.t_end for r in history.records), default=0.0)
    if not t > 0:
        raise ValueError("history has no positive horizon")
    return float(t)


@dataclass
class MetricsReport:
    r_best: float
    mean_best: float
    n_evaluations: int
    n_timeouts: int
    n_failures: int
    worker_utilization: float
    t_max: float
    search_speedup: float | None = None
    speedup_reached: bool | None = None
    expected_improvement: float | None = None
    expected_search_speedup: float | None = None
    improvement_trace: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def metrics_report(
    history: SearchHistory,
    workers: int,
    t_max: float | None = None,
    baseline: SearchHistory | BestTrace | None = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> MetricsReport:
    """All single-history metrics, plus comparisons when ``baseline`` is given.

    The baseline plays the role of the reference search: random sampling
    for the speedup, and the search without transfer for the improvement
    metrics.  Comparison metrics that are undefined for the given traces
    are left as ``None``.
    """
    t_max = history_horizon(history) if t_max is None else float(t_max)
    trace = best_trace(history, t_max, timeout)
    statuses = [r.status for r in history.records]
    report = MetricsReport(
        r_best=trace.final,
        mean_best=mean_best(trace),
        n_evaluations=len(statuses),
        n_timeouts=statuses.count("timeout"),
        n_failures=statuses.count("failed"),
        worker_utilization=worker_utilization(history, workers, t_max),
        t_max=t_max,
    )
    if baseline is not None:
        base = baseline if isinstance(baseline, BestTrace) else best_trace(baseline, t_max, timeout)
        s = search_speedup(trace, base, t_max)
        report.search_speedup, report.speedup_reached = s.value, s.reached
        cuts, factors = improvement_trace(trace, base, t_max)
        report.improvement_trace = [[float(a), float(f)] for a, f in zip(cuts, factors)]
        report.expected_improvement = expected_improvement(trace, base, t_max)
        try:
            report.expected_search_speedup = expected_search_speedup(trace, base)
        except UndefinedSegmentError:
            report.expected_search_speedup = None
    return report


def trace_to_csv(trace: BestTrace) -> str:
    """Plot-ready ``t,R`` rows: every breakpoint plus the horizon."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "R"])
    for t, v in zip(trace.times, trace.values):
        writer.writerow([repr(float(t)), repr(float(v))])
    writer.writerow([repr(float(trace.t_max)), repr(trace.final)])
    return buf.getvalue()
