"""Informative priors built from a previous search history."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyHistoryError
from .priors import ComposedPrior, GaussianPrior, PriorSampler, VaePrior, check_compatible
from .space import CATEGORICAL, ParameterSpace
from .tvae import TvaeConfig, fit_tvae

DEFAULT_Q = 0.10
BEST_LABEL_WEIGHT = 8.0
OTHER_LABEL_WEIGHT = 1.0


@dataclass
class HistoryTable:
    """Configurations of ``space`` with their objectives (NaN for failures)."""

    space: ParameterSpace
    rows: list = field(default_factory=list)

    def __post_init__(self):
        for config, _ in self.rows:
            self.space.validate(config)

    def __len__(self):
        return len(self.rows)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([y for _, y in self.rows], dtype=float)

    @property
    def configs(self) -> list:
        return [c for c, _ in self.rows]

    def finite(self) -> "HistoryTable":
        return HistoryTable(self.space, [(c, y) for c, y in self.rows if _is_finite(y)])

    @classmethod
    def from_search(cls, history) -> "HistoryTable":
        """Build from a :class:`~abotune.executor.SearchHistory`."""
        return cls(history.space, [(r.config, r.objective) for r in history.records])


def _is_finite(y) -> bool:
    return y is not None and math.isfinite(y)


def select_top_quantile(history: HistoryTable, q: float = DEFAULT_Q) -> HistoryTable:
    """Keep the rows whose objective reaches the empirical ``1 - q`` quantile.

    Failures are dropped first; the threshold uses linear interpolation and
    ties with it are kept, so the result is never empty.
    """
    if not 0 < q <= 1:
        raise ValueError(f"q must be in (0, 1], got {q}")
    finite = history.finite()
    if not finite.rows:
        raise EmptyHistoryError("history has no finite objective")
    threshold = np.quantile(finite.objectives, 1.0 - q, method="linear")
    return HistoryTable(history.space, [(c, y) for c, y in finite.rows if y >= threshold])


def fit_vae_prior(
    history: HistoryTable,
    q: float = DEFAULT_Q,
    config: TvaeConfig | None = None,
    seed=None,
    n_samples: int | None = None,
) -> VaePrior:
    """Fit a TVAE on the top-``q`` rows of ``history`` and wrap it as a prior.

    ``n_samples`` is accepted for interface compatibility and ignored: the
    prior draws as many samples as the optimizer asks for.
    """
    selected = select_top_quantile(history, q)
    return VaePrior(fit_tvae(history.space, selected.configs, config=config, seed=seed))


def gaussian_prior(history: HistoryTable) -> GaussianPrior:
    """Truncated-normal / weighted-label prior centred on the best row.

    Numeric std is ``max(1, (high - low) / 10)`` in raw units; the best
    label of a categorical gets weight 8 and every other label weight 1.
    """
    finite = history.finite()
    if not finite.rows:
        raise EmptyHistoryError("history has no finite objective")
    best = finite.configs[int(np.argmax(finite.objectives))]
    sigmas, probs = {}, {}
    for p in history.space:
        if p.kind == CATEGORICAL:
            w = np.full(len(p.labels), OTHER_LABEL_WEIGHT)
            w[p.labels.index(best[p.name])] = BEST_LABEL_WEIGHT
            probs[p.name] = w / w.sum()
        else:
            sigmas[p.name] = max(1.0, (p.high - p.low) / 10.0)
    return GaussianPrior(history.space, best, sigmas, probs)


def compose_prior(base: PriorSampler, space_prev: ParameterSpace, space_curr: ParameterSpace) -> PriorSampler:
    """Extend a prior over ``space_prev`` to ``space_curr``.

    Parameters already in ``space_prev`` keep the base's joint distribution;
    new ones are drawn independently from their declared priors.  Returns
    ``base`` unchanged when the two spaces are identical.

    Raises:
        IncompatibleSpacesError: a shared parameter's domain differs, or a
            previous parameter is missing from the current space.
    """
    check_compatible(space_prev, space_curr)
    if space_prev.names == space_curr.names:
        return base
    return ComposedPrior(base, space_curr)
