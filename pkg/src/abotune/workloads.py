"""Evaluation targets with simulated runtimes.

A workload maps a configuration to a runtime in seconds and "runs" it by
sleeping on a clock.  Runtimes may be split into equal steps so a per-step
time limit can be enforced, mirroring a two-stage pipeline in which each
stage has its own limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import FitError, SpaceFormatError
from .history import OK, SearchHistory, read_history_csv
from .space import CATEGORICAL, ParameterSpace
from .surrogate import RandomForestModel

DEFAULT_TIMEOUT = 600.0
MIN_TRAINING_ROWS = 10


class StepTimeout(Exception):
    """A workload step ran past its time limit."""

    def __init__(self, step: int, elapsed: float):
        super().__init__(f"step {step} exceeded its limit after {elapsed} s")
        self.step = step
        self.elapsed = elapsed


class Workload:
    """Base class: subclasses implement :meth:`runtime`."""

    space: ParameterSpace
    n_steps: int = 1
    time_scale: float = 1.0

    def runtime(self, config: dict, rng: np.random.Generator | None = None) -> float:
        raise NotImplementedError

    def evaluate(self, config: dict, clock, rng: np.random.Generator | None = None, step_timeout=None) -> float:
        """Run ``config``: sleep ``runtime * time_scale`` on ``clock``, return the runtime.

        The runtime is split evenly over ``n_steps``.  When a step would
        exceed ``step_timeout`` (unscaled seconds) the clock advances by the
        limit only and :class:`StepTimeout` is raised.
        """
        self.space.validate(config)
        total = self.runtime(config, rng)
        if not math.isfinite(total) or total <= 0:
            raise ValueError(f"workload produced an invalid runtime {total}")
        step = total / self.n_steps
        for i in range(self.n_steps):
            if step_timeout is not None and step > step_timeout:
                clock.sleep(step_timeout * self.time_scale)
                raise StepTimeout(i, step_timeout)
            clock.sleep(step * self.time_scale)
        return total


@dataclass(frozen=True)
class SyntheticWorkload(Workload):
    """Quadratic-plus-penalty runtime with a known optimum at ``target``.

    ``runtime = base + sum_j w_j (enc(x_j) - enc(t_j))^2 + sum_c p_c [x_c != t_c]``
    plus optional Gaussian noise, clamped below at ``base / 2``.  Numeric
    distances are taken in the unit encoding of each parameter.
    """

    space: ParameterSpace
    target: dict
    weights: dict
    penalties: dict
    base: float
    noise: float = 0.0
    n_steps: int = 1
    time_scale: float = 1.0
    _cols: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.space.validate(self.target)
        if not self.base > 0:
            raise ValueError("base must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.n_steps not in (1, 2):
            raise ValueError("n_steps must be 1 or 2")
        if not 0 < self.time_scale <= 1:
            raise ValueError("time_scale must be in (0, 1]")
        numeric = {p.name for p in self.space if p.kind != CATEGORICAL}
        categorical = {p.name for p in self.space if p.kind == CATEGORICAL}
        if set(self.weights) != numeric:
            raise ValueError("weights must cover exactly the numeric parameters")
        if set(self.penalties) != categorical:
            raise ValueError("penalties must cover exactly the categorical parameters")
        if any(w <= 0 for w in self.weights.values()) or any(c <= 0 for c in self.penalties.values()):
            raise ValueError("weights and penalties must be positive")
        cols = tuple(
            (p, self.space[p.name]._to_unit(np.array([float(self.target[p.name])]))[0])
            for p in self.space
            if p.kind != CATEGORICAL
        )
        object.__setattr__(self, "_cols", cols)

    def runtime(self, config, rng=None):
        t = self.base
        for p, target_unit in self._cols:
            u = p._to_unit(np.array([float(config[p.name])]))[0]
            t += self.weights[p.name] * (u - target_unit) ** 2
        for name, penalty in self.penalties.items():
            if config[name] != self.target[name]:
                t += penalty
        if self.noise > 0:
            if rng is None:
                raise ValueError("a noisy workload needs a random generator")
            t += self.noise * rng.standard_normal()
        return float(max(t, self.base / 2))

    def runtime_array(self, raw: np.ndarray) -> np.ndarray:
        """Noiseless runtimes of raw rows (vectorized)."""
        t = np.full(len(raw), self.base)
        for p, target_unit in self._cols:
            j = self.space.index[p.name]
            t += self.weights[p.name] * (p._to_unit(raw[:, j]) - target_unit) ** 2
        for name, penalty in self.penalties.items():
            p = self.space[name]
            j = self.space.index[name]
            t += penalty * (raw[:, j] != p.labels.index(self.target[name]))
        return t

    def to_json(self) -> dict:
        return {
            "kind": "synthetic",
            "target": self.space.normalize(self.target),
            "weights": dict(self.weights),
            "penalties": dict(self.penalties),
            "base": self.base,
            "noise": self.noise,
            "steps": self.n_steps,
        }

    @classmethod
    def from_json(cls, d: dict, space: ParameterSpace, time_scale: float = 1.0) -> "SyntheticWorkload":
        allowed = {"kind", "target", "weights", "penalties", "base", "noise", "steps"}
        unknown = set(d) - allowed
        if unknown:
            raise SpaceFormatError(f"unknown workload keys {sorted(unknown)}")
        if d.get("kind", "synthetic") != "synthetic":
            raise SpaceFormatError(f"not a synthetic workload: {d.get('kind')!r}")
        return cls(
            space,
            target=dict(d["target"]),
            weights={k: float(v) for k, v in d["weights"].items()},
            penalties={k: float(v) for k, v in d["penalties"].items()},
            base=float(d["base"]),
            noise=float(d.get("noise", 0.0)),
            n_steps=int(d.get("steps", 1)),
            time_scale=time_scale,
        )


def synthetic_runtime(workload: SyntheticWorkload, config: dict, rng=None) -> float:
    return workload.runtime(config, rng)


class SurrogateWorkload(Workload):
    """Replays runtimes predicted by a random forest trained on a history.

    Predictions are a deterministic function of the configuration, so the
    ``rng`` argument of :meth:`runtime` is ignored.
    """

    def __init__(self, space, model: RandomForestModel, time_scale=1.0, timeout_value=DEFAULT_TIMEOUT, n_steps=1):
        if not 0 < time_scale <= 1:
            raise ValueError("time_scale must be in (0, 1]")
        self.space = space
        self.model = model
        self.time_scale = time_scale
        self.timeout_value = timeout_value
        self.n_steps = n_steps

    def runtime(self, config, rng=None):
        mean, _ = self.model.predict(self.space.encode(config)[None, :])
        return float(mean[0])

    def save(self, path) -> None:
        """Write the forest arrays and settings to an ``.npz`` file."""
        m = self.model
        meta = {
            "space": self.space.to_json(),
            "timeout_value": self.timeout_value,
            "n_steps": self.n_steps,
            "n_trees": m.n_trees,
            "min_samples_leaf": m.min_samples_leaf,
            "max_features": m.max_features,
            "bootstrap": m.bootstrap,
            "seed": m.seed,
        }
        with open(path, "wb") as f:
            np.savez(f, meta=np.array(json.dumps(meta)), **m.state())

    @classmethod
    def load(cls, path, time_scale: float = 1.0) -> "SurrogateWorkload":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            model = RandomForestModel(
                n_trees=meta["n_trees"],
                min_samples_leaf=meta["min_samples_leaf"],
                max_features=meta["max_features"],
                bootstrap=meta["bootstrap"],
                seed=meta["seed"],
            )
            model.load_state({k: data[k] for k in data.files if k != "meta"})
        space = ParameterSpace.from_json(meta["space"])
        return cls(space, model, time_scale, meta["timeout_value"], meta["n_steps"])


def surrogate_training_set(history: SearchHistory, timeout_value: float = DEFAULT_TIMEOUT):
    """Encoded rows and runtimes, with non-ok rows imputed at ``timeout_value``."""
    X = np.array([history.space.encode(r.config) for r in history.records])
    y = np.array([r.runtime if r.status == OK else timeout_value for r in history.records])
    return X, y


def fit_surrogate_workload(
    history,
    space: ParameterSpace,
    rf_config: dict | None = None,
    timeout_value: float = DEFAULT_TIMEOUT,
    time_scale: float = 1.0,
    n_steps: int = 1,
) -> SurrogateWorkload:
    """Train a runtime model on a history CSV path or :class:`SearchHistory`.

    Raises:
        HistoryFormatError: the CSV does not match ``space``.
        FitError: fewer than 10 rows.
    """
    if not isinstance(history, SearchHistory):
        history = read_history_csv(history, space)
    elif history.space.names != space.names:
        raise ValueError("history does not belong to the given space")
    if len(history.records) < MIN_TRAINING_ROWS:
        raise FitError(f"need at least {MIN_TRAINING_ROWS} rows, got {len(history.records)}")
    X, y = surrogate_training_set(history, timeout_value)
    model = RandomForestModel(**(rf_config or {})).fit(X, y)
    return SurrogateWorkload(space, model, time_scale, timeout_value, n_steps)


def load_workload(path, space: ParameterSpace, time_scale: float = 1.0) -> Workload:
    """Load a synthetic workload JSON or a saved surrogate workload."""
    path = Path(path)
    if path.suffix == ".npz":
        workload = SurrogateWorkload.load(path, time_scale)
        if workload.space.names != space.names:
            raise ValueError("surrogate workload was fitted on a different space")
        return workload
    with open(path) as f:
        return SyntheticWorkload.from_json(json.load(f), space, time_scale)


def fixture_path(name: str) -> Path:
    """Path of a bundled data file (e.g. ``"hep19_space.json"``)."""
    return Path(str(resources.files("abotune") / "data" / name))


def load_fixture(name: str) -> tuple[ParameterSpace, SyntheticWorkload]:
    """Bundled space and synthetic workload: ``"toy4"`` or ``"hep19"``."""
    space = ParameterSpace.load(fixture_path(f"{name}_space.json"))
    with open(fixture_path(f"{name}_workload.json")) as f:
        workload = SyntheticWorkload.from_json(json.load(f), space)
    return space, workload
