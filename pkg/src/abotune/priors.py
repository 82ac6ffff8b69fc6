"""Generative distributions over configurations.

Every sampler exposes ``sample_array(n, rng)`` returning raw rows of its
target ``space`` (see :mod:`abotune.space`) and ``sample(rng)`` returning a
single configuration dict.  Samplers are immutable once built and only use
the random generator passed by the caller.
"""

from __future__ import annotations

import numpy as np

from .exceptions import IncompatibleSpacesError
from .space import CATEGORICAL, INTEGER, ParameterSpace, round_half_away
from .tvae import TvaeModel


class PriorSampler:
    kind = "abstract"
    space: ParameterSpace

    def sample_array(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> dict:
        return self.space.from_raw(self.sample_array(1, rng)[0])

    def to_json(self) -> dict:
        raise NotImplementedError


class UniformPrior(PriorSampler):
    """The space's declared per-parameter priors, drawn independently."""

    kind = "uniform"

    def __init__(self, space: ParameterSpace):
        self.space = space

    def sample_array(self, n, rng):
        return self.space.sample_array(n, rng)

    def to_json(self):
        return {"kind": self.kind, "space": self.space.to_json()}


class VaePrior(PriorSampler):
    kind = "vae"

    def __init__(self, model: TvaeModel):
        self.model = model
        self.space = model.space

    def sample_array(self, n, rng):
        return self.model.sample_array(n, rng)

    def to_json(self):
        return {"kind": self.kind, "model": self.model.to_json()}


class GaussianPrior(PriorSampler):
    """Independent truncated normals around a centre plus weighted labels.

    Args:
        space: Target space.
        center: Configuration the distribution is centred on.
        sigmas: Std per numeric parameter name, in raw units.
        label_probs: Probability vector per categorical parameter name.
        max_tries: Redraws of an out-of-bounds value before clamping.
    """

    kind = "gaussian"

    def __init__(self, space, center, sigmas, label_probs, max_tries=100):
        space.validate(center)
        self.space = space
        self.center = dict(center)
        self.sigmas = dict(sigmas)
        self.label_probs = {k: np.asarray(v, dtype=float) for k, v in label_probs.items()}
        self.max_tries = max_tries

    def _numeric(self, p, n, rng):
        mu, sigma = float(self.center[p.name]), self.sigmas[p.name]
        # integers are rounded before the bounds check so every value keeps a full unit bin
        snap = round_half_away if p.kind == INTEGER else (lambda a: a)
        v = snap(rng.normal(mu, sigma, size=n))
        for _ in range(self.max_tries - 1):
            bad = (v < p.low) | (v > p.high)
            if not bad.any():
                break
            v[bad] = snap(rng.normal(mu, sigma, size=int(bad.sum())))
        return np.clip(v, p.low, p.high)

    def sample_array(self, n, rng):
        cols = []
        for p in self.space:
            if p.kind == CATEGORICAL:
                probs = self.label_probs[p.name]
                cols.append(rng.choice(len(probs), size=n, p=probs).astype(float))
            else:
                cols.append(self._numeric(p, n, rng))
        return np.column_stack(cols) if cols else np.empty((n, 0))

    def to_json(self):
        return {
            "kind": self.kind,
            "space": self.space.to_json(),
            "center": self.center,
            "sigmas": self.sigmas,
            "label_probs": {k: v.tolist() for k, v in self.label_probs.items()},
            "max_tries": self.max_tries,
        }


class ComposedPrior(PriorSampler):
    """A base sampler over old parameters joined with independent new ones.

    Columns of the base are drawn first from ``rng`` so the shared-parameter
    draws match the base's own draws for the same generator state; each new
    parameter then follows its declared prior (equiprobable labels for
    categoricals).
    """

    kind = "composed"

    def __init__(self, base: PriorSampler, space: ParameterSpace):
        check_compatible(base.space, space)
        self.base = base
        self.space = space
        self._base_cols = [space.index[name] for name in base.space.names]
        self._new = [j for j, p in enumerate(space.params) if p.name not in base.space]

    def sample_array(self, n, rng):
        out = np.empty((n, len(self.space)))
        out[:, self._base_cols] = self.base.sample_array(n, rng)
        for j in self._new:
            out[:, j] = self.space.params[j].sample_raw(n, rng)
        return out

    def to_json(self):
        return {"kind": self.kind, "space": self.space.to_json(), "base": self.base.to_json()}


def check_compatible(space_prev: ParameterSpace, space_curr: ParameterSpace) -> None:
    for p in space_prev:
        if p.name not in space_curr:
            raise IncompatibleSpacesError(f"{p.name} is missing from the current space")
        if not p.same_domain(space_curr[p.name]):
            raise IncompatibleSpacesError(f"{p.name} has a different domain in the current space")


def prior_from_json(d) -> PriorSampler:
    kind = d["kind"]
    if kind == "uniform":
        return UniformPrior(ParameterSpace.from_json(d["space"]))
    if kind == "vae":
        return VaePrior(TvaeModel.from_json(d["model"]))
    if kind == "gaussian":
        return GaussianPrior(
            ParameterSpace.from_json(d["space"]),
            d["center"],
            d["sigmas"],
            d["label_probs"],
            d.get("max_tries", 100),
        )
    if kind == "composed":
        return ComposedPrior(prior_from_json(d["base"]), ParameterSpace.from_json(d["space"]))
    raise ValueError(f"unknown prior kind {kind!r}")
