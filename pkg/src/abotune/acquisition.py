"""LCB ranking and constant-liar batch generation behind an ask/tell API.

The optimizer minimizes an internal *cost*, the negative of the objective
it is told.  With objectives of the form ``-log(runtime)`` the cost is the
log-runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .priors import PriorSampler, UniformPrior
from .space import ParameterSpace
from .surrogate import SURROGATE_KINDS, make_model

LIARS = ("worst", "best", "mean")
DEFAULT_TIMEOUT = 600.0
MAX_REDRAWS = 10


def lcb(mean, std, kappa):
    """Lower confidence bound ``mean - kappa * std`` (scalars or arrays)."""
    if np.any(np.asarray(std) < 0):
        raise DomainError("standard deviation must be non-negative")
    if kappa < 0:
        raise DomainError("kappa must be non-negative")
    return mean - kappa * std


@dataclass(frozen=True)
class CandidateScore:
    config: dict
    mean: float
    std: float
    lcb: float


class Optimizer:
    """Sampling-based asynchronous Bayesian optimizer.

    Args:
        space: Search space.
        prior: Sampler for initial points and candidate sets (uniform over
            ``space`` by default).
        surrogate: ``"rf"``, ``"gp"`` or ``"rand"``.
        kappa: Exploration weight of the LCB.
        n_candidates: Candidates drawn from the prior per pick.
        liar: Value imputed at pending picks: the ``"worst"``, ``"best"`` or
            ``"mean"`` observed cost.
        min_observations: Below this many real observations ``ask`` returns
            prior samples without ranking.
        failure_cost: Cost imputed for a failure when nothing finite has
            been observed yet (defaults to ``log(600)``).
        surrogate_params: Extra keyword arguments for the surrogate.
        seed: Seed of the optimizer's random generator.
    """

    def __init__(
        self,
        space: ParameterSpace,
        prior: PriorSampler | None = None,
        surrogate: str = "rf",
        kappa: float = 1.96,
        n_candidates: int = 10_000,
        liar: str = "worst",
        min_observations: int = 1,
        failure_cost: float | None = None,
        surrogate_params: dict | None = None,
        seed=None,
    ):
        if surrogate not in SURROGATE_KINDS:
            raise ValueError(f"unknown surrogate {surrogate!r}")
        if liar not in LIARS:
            raise ValueError(f"unknown liar strategy {liar!r}")
        if kappa < 0:
            raise DomainError("kappa must be non-negative")
        prior = prior or UniformPrior(space)
        if prior.space.names != space.names:
            raise ValueError("prior must sample configurations of the optimizer's space")
        self.space = space
        self.prior = prior
        self.surrogate = surrogate
        self.kappa = kappa
        self.n_candidates = n_candidates
        self.liar = liar
        self.min_observations = min_observations
        self.failure_cost = math.log(DEFAULT_TIMEOUT) if failure_cost is None else failure_cost
        self.surrogate_params = dict(surrogate_params or {})
        self.rng = np.random.default_rng(seed)
        self.observed_X: list[dict] = []
        self.observed_cost: list[float] = []
        self._encoded = np.empty((0, space.n_features))
        self.model = None

    @property
    def n_observations(self) -> int:
        return len(self.observed_cost)

    def _fit(self, X, y):
        return make_model(
            self.surrogate, seed=int(self.rng.integers(2**31 - 1)), **self.surrogate_params
        ).fit(X, y)

    def tell(self, configs, objectives) -> None:
        """Record evaluated configurations and refit the surrogate.

        Non-finite objectives are failures: they are stored with the worst
        finite cost seen so far, or ``failure_cost`` if there is none.
        """
        configs = list(configs)
        objectives = [float(y) for y in objectives]
        if len(configs) != len(objectives):
            raise ValueError(f"{len(configs)} configurations but {len(objectives)} objectives")
        if not configs:
            return
        encoded = np.array([self.space.encode(c) for c in configs])
        for config, y in zip(configs, objectives):
            if math.isfinite(y):
                cost = -y
            else:
                finite = [c for c in self.observed_cost if math.isfinite(c)]
                cost = max(finite) if finite else self.failure_cost
            self.observed_X.append(dict(config))
            self.observed_cost.append(cost)
        self._encoded = np.vstack([self._encoded, encoded])
        if self.surrogate != "rand":
            self.model = self._fit(self._encoded, np.array(self.observed_cost))

    def _lie(self) -> float:
        costs = np.array(self.observed_cost)
        if self.liar == "worst":
            return float(costs.max())
        if self.liar == "best":
            return float(costs.min())
        return float(costs.mean())

    def _prior_batch(self, n):
        picks, seen = [], set()
        for _ in range(n):
            for attempt in range(MAX_REDRAWS + 1):
                row = self.prior.sample_array(1, self.rng)[0]
                if tuple(row) not in seen or attempt == MAX_REDRAWS:
                    break
            seen.add(tuple(row))
            picks.append(self.space.from_raw(row))
        return picks

    def score_candidates(self, raw: np.ndarray, model=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Mean, std and LCB of raw candidate rows under ``model``."""
        model = model or self.model
        mean, std = model.predict(self.space.encode_array(raw))
        return mean, std, lcb(mean, std, self.kappa)

    def ask(self, n: int = 1) -> list[dict]:
        """Propose ``n`` configurations using the constant-liar strategy.

        The live observations are never modified: lies are appended to a
        private copy of the training set and the surrogate is refitted on
        that copy between picks.
        """
        if n < 1:
            raise ValueError("ask needs n >= 1")
        if self.surrogate == "rand" or self.n_observations < self.min_observations:
            return self._prior_batch(n)
        X = self._encoded.copy()
        y = np.array(self.observed_cost)
        lie = self._lie()
        model = self.model
        picks, seen = [], set()
        for i in range(n):
            for attempt in range(MAX_REDRAWS + 1):
                raw = self.prior.sample_array(self.n_candidates, self.rng)
                _, _, score = self.score_candidates(raw, model)
                fresh = np.ones(len(raw), dtype=bool)
                if seen:
                    fresh = np.array([tuple(r) not in seen for r in raw])
                if fresh.any() or attempt == MAX_REDRAWS:
                    break
            if fresh.any():
                score = np.where(fresh, score, np.inf)
            j = int(np.argmin(score))
            seen.add(tuple(raw[j]))
            picks.append(self.space.from_raw(raw[j]))
            if i < n - 1:
                X = np.vstack([X, self.space.encode_array(raw[j : j + 1])])
                y = np.append(y, lie)
                model = self._fit(X, y)
        return picks
