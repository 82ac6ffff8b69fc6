"""Evaluation records, search histories and their CSV format.

The CSV layout is fixed::

    job_id,worker_id,t_submit,t_start,t_end,status,runtime,objective,p:<name>...

with one ``p:`` column per parameter in canonical order, reals written as
the shortest round-trip decimal (``repr``), failures as the literal ``NaN``
and rows ordered by completion.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any

from .exceptions import EmptyHistoryError, HistoryFormatError
from .space import CATEGORICAL, INTEGER, ParameterSpace

OK = "ok"
TIMEOUT = "timeout"
FAILED = "failed"
STATUSES = (OK, TIMEOUT, FAILED)

BASE_COLUMNS = ("job_id", "worker_id", "t_submit", "t_start", "t_end", "status", "runtime", "objective")
PARAM_PREFIX = "p:"


def objective_from_runtime(runtime: float) -> float:
    """Objective maximized by the search: ``-log(runtime)``."""
    return -math.log(runtime)


@dataclass(frozen=True)
class EvaluationRecord:
    job_id: int
    worker_id: int
    config: dict
    t_submit: float
    t_start: float
    t_end: float
    status: str
    runtime: float
    objective: float

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if not self.t_submit <= self.t_start <= self.t_end:
            raise ValueError("need t_submit <= t_start <= t_end")
        ok_runtime = math.isfinite(self.runtime) and self.runtime > 0
        if (self.status == OK) != ok_runtime:
            raise ValueError("status ok requires a finite positive runtime and vice versa")
        if self.status == OK:
            if abs(self.objective + math.log(self.runtime)) >= 1e-12:
                raise ValueError("objective must equal -log(runtime)")
        elif not math.isnan(self.objective):
            raise ValueError("failed evaluations carry a NaN objective")

    @property
    def ok(self) -> bool:
        return self.status == OK

    @classmethod
    def make(cls, job_id, worker_id, config, t_submit, t_start, t_end, status, runtime):
        objective = objective_from_runtime(runtime) if status == OK else math.nan
        if status != OK:
            runtime = math.nan
        return cls(job_id, worker_id, dict(config), t_submit, t_start, t_end, status, runtime, objective)


@dataclass
class SearchHistory:
    space: ParameterSpace
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # jobs still running when the search stopped: (job_id, worker_id, config, t_submit, t_start)
    cancelled: list = field(default_factory=list)
    # manager event log: (time, kind, count)
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def ok_records(self) -> list:
        return [r for r in self.records if r.ok]

    def best(self):
        return find_best(self)

    def to_csv(self) -> str:
        return history_to_csv(self)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write(history_to_csv(self))


def find_best(history: SearchHistory) -> tuple[dict, float]:
    """Configuration and objective of the best ok record (earliest on ties)."""
    ok = history.ok_records
    if not ok:
        raise EmptyHistoryError("history has no successful evaluation")
    best = min(ok, key=lambda r: (-r.objective, r.t_end))
    return dict(best.config), best.objective


def format_real(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    return repr(float(x))


def _format_value(param, value) -> str:
    if param.kind == CATEGORICAL:
        return value
    if param.kind == INTEGER:
        return str(int(value))
    return format_real(value)


def history_to_csv(history: SearchHistory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(BASE_COLUMNS) + [PARAM_PREFIX + name for name in history.space.names])
    for r in history.records:
        row = [
            str(r.job_id),
            str(r.worker_id),
            format_real(r.t_submit),
            format_real(r.t_start),
            format_real(r.t_end),
            r.status,
            format_real(r.runtime),
            format_real(r.objective),
        ]
        row += [_format_value(p, r.config[p.name]) for p in history.space]
        writer.writerow(row)
    return buf.getvalue()


def _parse_value(param, text: str) -> Any:
    if param.kind == CATEGORICAL:
        return text
    if param.kind == INTEGER:
        return int(text)
    return float(text)


def parse_history_csv(text: str, space: ParameterSpace) -> SearchHistory:
    """Parse CSV text written by :func:`history_to_csv`.

    Raises:
        HistoryFormatError: header mismatch, or a row that does not parse or
            violates a record invariant (the message carries the line number).
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise HistoryFormatError("empty history file", row=1) from None
    expected = list(BASE_COLUMNS) + [PARAM_PREFIX + name for name in space.names]
    if header != expected:
        raise HistoryFormatError(f"header {header} does not match the space (expected {expected})", row=1)
    records = []
    for line, row in enumerate(reader, start=2):
        if len(row) != len(expected):
            raise HistoryFormatError(f"expected {len(expected)} fields, got {len(row)}", row=line)
        try:
            config = {p.name: _parse_value(p, v) for p, v in zip(space, row[len(BASE_COLUMNS) :])}
            space.validate(config)
            record = EvaluationRecord(
                job_id=int(row[0]),
                worker_id=int(row[1]),
                config=config,
                t_submit=float(row[2]),
                t_start=float(row[3]),
                t_end=float(row[4]),
                status=row[5],
                runtime=float(row[6]),
                objective=float(row[7]),
            )
        except ValueError as exc:
            raise HistoryFormatError(str(exc), row=line) from None
        records.append(record)
    if len({r.job_id for r in records}) != len(records):
        raise HistoryFormatError("duplicate job_id")
    return SearchHistory(space, records)


def read_history_csv(path, space: ParameterSpace) -> SearchHistory:
    with open(path, newline="") as f:
        history = parse_history_csv(f.read(), space)
    history.metadata["source"] = str(path)
    return history
