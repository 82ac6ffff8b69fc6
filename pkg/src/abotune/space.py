"""Mixed integer / real / categorical parameter spaces.

Three representations of a point are used throughout the package:

* a *configuration*: ``dict`` mapping parameter name to a Python value
  (``int``, ``float`` or ``str``);
* a *raw row*: one float per parameter, categorical values stored as the
  label index (used for vectorized sampling of many candidates);
* an *encoded vector*: numeric slots scaled to ``[0, 1]`` followed, in
  canonical parameter order, by one-hot blocks for categorical parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .exceptions import (
    DomainError,
    LayoutError,
    SpaceFormatError,
    UndefinedCardinalityError,
)

INTEGER = "integer"
REAL = "real"
CATEGORICAL = "categorical"
UNIFORM = "uniform"
LOG_UNIFORM = "log_uniform"

_KINDS = (INTEGER, REAL, CATEGORICAL)
_PRIORS = (UNIFORM, LOG_UNIFORM)
_FILE_KEYS = {"name", "kind", "low", "high", "labels", "prior"}


def round_half_away(x):
    """Round to the nearest integer, halves away from zero (elementwise)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class Parameter:
    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    labels: tuple[str, ...] = ()
    prior: str = UNIFORM

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SpaceFormatError(f"{self.name}: unknown kind {self.kind!r}")
        if self.prior not in _PRIORS:
            raise SpaceFormatError(f"{self.name}: unknown prior {self.prior!r}")
        if self.kind == CATEGORICAL:
            object.__setattr__(self, "labels", tuple(str(lab) for lab in self.labels))
            if len(self.labels) < 2:
                raise SpaceFormatError(f"{self.name}: categorical needs >= 2 labels")
            if len(set(self.labels)) != len(self.labels):
                raise SpaceFormatError(f"{self.name}: duplicate labels")
            if self.prior != UNIFORM:
                raise SpaceFormatError(f"{self.name}: categorical prior is fixed to uniform")
            return
        if self.low is None or self.high is None:
            raise SpaceFormatError(f"{self.name}: numeric parameter needs low and high")
        if self.labels:
            raise SpaceFormatError(f"{self.name}: labels given for numeric parameter")
        if not self.low < self.high:
            raise SpaceFormatError(f"{self.name}: need low < high")
        if self.kind == INTEGER:
            if float(self.low) != int(self.low) or float(self.high) != int(self.high):
                raise SpaceFormatError(f"{self.name}: integer bounds must be whole")
            object.__setattr__(self, "low", int(self.low))
            object.__setattr__(self, "high", int(self.high))
        else:
            object.__setattr__(self, "low", float(self.low))
            object.__setattr__(self, "high", float(self.high))
        if self.prior == LOG_UNIFORM and self.low < 1:
            raise SpaceFormatError(f"{self.name}: log-uniform prior requires low >= 1")

    @property
    def is_numeric(self) -> bool:
        return self.kind != CATEGORICAL

    @property
    def n_slots(self) -> int:
        return len(self.labels) if self.kind == CATEGORICAL else 1

    @property
    def size(self) -> int:
        """Number of distinct values (integer and categorical only)."""
        if self.kind == REAL:
            raise UndefinedCardinalityError(f"{self.name} is real-valued")
        if self.kind == INTEGER:
            return self.high - self.low + 1
        return len(self.labels)

    def same_domain(self, other: "Parameter") -> bool:
        return (self.kind, self.low, self.high, self.labels, self.prior) == (
            other.kind,
            other.low,
            other.high,
            other.labels,
            other.prior,
        )

    def contains(self, value) -> bool:
        if self.kind == CATEGORICAL:
            return isinstance(value, str) and value in self.labels
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            return False
        if not math.isfinite(value) or not self.low <= value <= self.high:
            return False
        return self.kind == REAL or float(value).is_integer()

    # numeric scaling helpers (vectorized, raw value <-> unit slot)
    def _to_unit(self, v):
        if self.prior == LOG_UNIFORM:
            lo, hi = math.log(self.low), math.log(self.high)
            return (np.log(v) - lo) / (hi - lo)
        return (v - self.low) / (self.high - self.low)

    def _from_unit(self, s):
        s = np.clip(s, 0.0, 1.0)
        if self.prior == LOG_UNIFORM:
            lo, hi = math.log(self.low), math.log(self.high)
            v = np.exp(lo + s * (hi - lo))
        else:
            v = self.low + s * (self.high - self.low)
        if self.kind == INTEGER:
            v = np.clip(round_half_away(v), self.low, self.high)
        else:
            v = np.clip(v, self.low, self.high)
        return v

    def sample_raw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` raw values from the parameter's declared prior."""
        if self.kind == CATEGORICAL:
            return rng.integers(0, len(self.labels), size=n).astype(float)
        if self.prior == LOG_UNIFORM:
            v = np.exp(rng.uniform(math.log(self.low), math.log(self.high), size=n))
            if self.kind == INTEGER:
                v = np.clip(round_half_away(v), self.low, self.high)
            return v
        if self.kind == INTEGER:
            return rng.integers(self.low, self.high + 1, size=n).astype(float)
        return rng.uniform(self.low, self.high, size=n)

    def to_python(self, raw: float):
        if self.kind == CATEGORICAL:
            return self.labels[int(raw)]
        if self.kind == INTEGER:
            return int(raw)
        return float(raw)

    def to_raw(self, value) -> float:
        if not self.contains(value):
            raise DomainError(f"{self.name}: {value!r} outside domain")
        if self.kind == CATEGORICAL:
            return float(self.labels.index(value))
        return float(value)

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == CATEGORICAL:
            d["labels"] = list(self.labels)
        else:
            d["low"] = self.low
            d["high"] = self.high
            d["prior"] = self.prior
        return d

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "Parameter":
        if not isinstance(d, Mapping):
            raise SpaceFormatError("parameter entry must be an object")
        unknown = set(d) - _FILE_KEYS
        if unknown:
            raise SpaceFormatError(f"unknown keys {sorted(unknown)}")
        for key in ("name", "kind"):
            if key not in d:
                raise SpaceFormatError(f"parameter missing {key!r}")
        return cls(
            name=str(d["name"]),
            kind=d["kind"],
            low=d.get("low"),
            high=d.get("high"),
            labels=tuple(d.get("labels", ())),
            prior=d.get("prior", UNIFORM),
        )


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered collection of parameters; the order fixes every layout."""

    params: tuple[Parameter, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SpaceFormatError("parameter names must be distinct")

    def __len__(self):
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    def __getitem__(self, name: str) -> Parameter:
        return self.params[self.index[name]]

    def __contains__(self, name) -> bool:
        return name in self.index

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    @cached_property
    def index(self) -> dict[str, int]:
        return {p.name: i for i, p in enumerate(self.params)}

    @cached_property
    def slices(self) -> tuple[slice, ...]:
        """Slice of the encoded vector occupied by each parameter."""
        out, pos = [], 0
        for p in self.params:
            out.append(slice(pos, pos + p.n_slots))
            pos += p.n_slots
        return tuple(out)

    @property
    def n_features(self) -> int:
        return sum(p.n_slots for p in self.params)

    @property
    def numeric_slots(self) -> list[int]:
        return [s.start for p, s in zip(self.params, self.slices) if p.is_numeric]

    @property
    def categorical_blocks(self) -> list[slice]:
        return [s for p, s in zip(self.params, self.slices) if not p.is_numeric]

    # -- validation / conversion -------------------------------------------
    def validate(self, config: Mapping[str, Any]) -> None:
        missing = set(self.names) - set(config)
        extra = set(config) - set(self.names)
        if missing or extra:
            raise DomainError(f"configuration keys mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for p in self.params:
            if not p.contains(config[p.name]):
                raise DomainError(f"{p.name}: {config[p.name]!r} outside domain")

    def to_raw(self, config: Mapping[str, Any]) -> np.ndarray:
        self.validate(config)
        return np.array([p.to_raw(config[p.name]) for p in self.params], dtype=float)

    def from_raw(self, row) -> dict[str, Any]:
        return {p.name: p.to_python(v) for p, v in zip(self.params, row)}

    def normalize(self, config: Mapping[str, Any]) -> dict[str, Any]:
        """Validated copy of ``config`` with plain Python values in canonical order."""
        return self.from_raw(self.to_raw(config))

    def encode_array(self, raw: np.ndarray) -> np.ndarray:
        """Encode an ``(n, len(space))`` raw array to ``(n, n_features)``."""
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        out = np.zeros((raw.shape[0], self.n_features))
        for j, (p, sl) in enumerate(zip(self.params, self.slices)):
            if p.is_numeric:
                out[:, sl.start] = p._to_unit(raw[:, j])
            else:
                out[np.arange(raw.shape[0]), sl.start + raw[:, j].astype(int)] = 1.0
        return out

    def decode_array(self, enc: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`encode_array`, with clamping, rounding and argmax."""
        enc = np.atleast_2d(np.asarray(enc, dtype=float))
        if enc.shape[1] != self.n_features:
            raise LayoutError(f"expected {self.n_features} features, got {enc.shape[1]}")
        raw = np.empty((enc.shape[0], len(self.params)))
        for j, (p, sl) in enumerate(zip(self.params, self.slices)):
            if p.is_numeric:
                raw[:, j] = p._from_unit(enc[:, sl.start])
            else:
                # np.argmax returns the first maximum: lowest-index tie-break
                raw[:, j] = np.argmax(enc[:, sl], axis=1)
        return raw

    def encode(self, config: Mapping[str, Any]) -> np.ndarray:
        return self.encode_array(self.to_raw(config)[None, :])[0]

    def decode(self, vec) -> dict[str, Any]:
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1:
            raise LayoutError("decode expects a single 1-D vector")
        return self.from_raw(self.decode_array(vec[None, :])[0])

    # -- sampling -------------------------------------------------------------
    def sample_array(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if not self.params:
            return np.empty((n, 0))
        return np.column_stack([p.sample_raw(n, rng) for p in self.params])

    def sample(self, rng: np.random.Generator) -> dict[str, Any]:
        return self.from_raw(self.sample_array(1, rng)[0])

    def cardinality(self) -> int:
        """Exact number of distinct configurations (no real parameters)."""
        return math.prod(p.size for p in self.params)

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict[str, Any]:
        return {"parameters": [p.to_json() for p in self.params]}

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "ParameterSpace":
        if not isinstance(d, Mapping) or set(d) != {"parameters"}:
            raise SpaceFormatError('space must be an object with the single key "parameters"')
        return cls(tuple(Parameter.from_json(p) for p in d["parameters"]))

    @classmethod
    def load(cls, path) -> "ParameterSpace":
        with open(path) as f:
            return cls.from_json(json.load(f))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def sample_uniform(space: ParameterSpace, rng: np.random.Generator) -> dict[str, Any]:
    """Draw one configuration from the space's declared (uninformative) prior."""
    return space.sample(rng)


def encode(space: ParameterSpace, config: Mapping[str, Any]) -> np.ndarray:
    return space.encode(config)


def decode(space: ParameterSpace, vec) -> dict[str, Any]:
    return space.decode(vec)


def space_cardinality(space: ParameterSpace) -> int:
    return space.cardinality()

