"""Tabular variational autoencoder over encoded configurations.

Encoder and decoder are two-hidden-layer ReLU networks written in plain
numpy with hand-derived gradients.  Each row is an encoded vector of a
:class:`~abotune.space.ParameterSpace`: numeric slots are reconstructed
through a sigmoid mean under a Gaussian likelihood with fixed width
``decoder_sigma``, categorical blocks through a softmax.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import FitError, TrainingDivergedError
from .space import ParameterSpace

_LOG_2PI = math.log(2.0 * math.pi)

ENCODER_KEYS = ("W1", "b1", "W2", "b2", "Wmu", "bmu", "Wlv", "blv")
DECODER_KEYS = ("V1", "c1", "V2", "c2", "Vo", "co")
PARAM_KEYS = ENCODER_KEYS + DECODER_KEYS


@dataclass
class TvaeConfig:
    latent_dim: int | None = None  # None -> min(8, n_features)
    hidden: int = 64
    epochs: int = 300
    batch_size: int | None = None  # None -> min(n_rows, 64)
    decoder_sigma: float = 0.05
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


def init_params(n_features: int, latent_dim: int, hidden: int, rng: np.random.Generator) -> dict:
    """Glorot-uniform weights, zero biases."""

    def dense(n_in, n_out):
        bound = math.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-bound, bound, size=(n_in, n_out)), np.zeros(n_out)

    p = {}
    p["W1"], p["b1"] = dense(n_features, hidden)
    p["W2"], p["b2"] = dense(hidden, hidden)
    p["Wmu"], p["bmu"] = dense(hidden, latent_dim)
    p["Wlv"], p["blv"] = dense(hidden, latent_dim)
    p["V1"], p["c1"] = dense(latent_dim, hidden)
    p["V2"], p["c2"] = dense(hidden, hidden)
    p["Vo"], p["co"] = dense(hidden, n_features)
    return p


def decode_outputs(p, z):
    """Decoder pre-activations for latent rows ``z``."""
    g1 = np.maximum(z @ p["V1"] + p["c1"], 0.0)
    g2 = np.maximum(g1 @ p["V2"] + p["c2"], 0.0)
    return g2 @ p["Vo"] + p["co"]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(o):
    o = o - o.max(axis=1, keepdims=True)
    return o - np.log(np.exp(o).sum(axis=1, keepdims=True))


def kl_standard_normal(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over the last axis."""
    return 0.5 * np.sum(mu**2 + np.exp(logvar) - 1.0 - logvar, axis=-1)


def elbo_loss_and_grad(p, X, eps, numeric, blocks, sigma):
    """Mean negative ELBO over the rows of ``X`` and its gradient.

    Args:
        p: Parameter dict (see :data:`PARAM_KEYS`).
        X: Encoded rows, shape ``(n, n_features)``.
        eps: Standard-normal draws for the reparameterization, ``(n, d)``.
        numeric: Column indices of numeric slots.
        blocks: Column slices of categorical one-hot blocks.
        sigma: Fixed decoder std for numeric slots.

    Returns:
        ``(loss, grads)`` with ``grads`` keyed like ``p``.
    """
    n = X.shape[0]
    a1 = X @ p["W1"] + p["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ p["W2"] + p["b2"]
    h2 = np.maximum(a2, 0.0)
    mu = h2 @ p["Wmu"] + p["bmu"]
    lv = h2 @ p["Wlv"] + p["blv"]
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    e1 = z @ p["V1"] + p["c1"]
    g1 = np.maximum(e1, 0.0)
    e2 = g1 @ p["V2"] + p["c2"]
    g2 = np.maximum(e2, 0.0)
    o = g2 @ p["Vo"] + p["co"]

    do = np.zeros_like(o)
    loss = 0.0
    if len(numeric):
        m = _sigmoid(o[:, numeric])
        r = (X[:, numeric] - m) / sigma
        loss += np.sum(0.5 * r**2 + math.log(sigma) + 0.5 * _LOG_2PI)
        do[:, numeric] = (m - X[:, numeric]) / sigma**2 * m * (1.0 - m)
    for sl in blocks:
        logp = _log_softmax(o[:, sl])
        xb = X[:, sl]
        loss -= np.sum(xb * logp)
        do[:, sl] = np.exp(logp) * xb.sum(axis=1, keepdims=True) - xb
    loss += np.sum(kl_standard_normal(mu, lv))
    loss /= n
    do /= n

    g = {}
    g["Vo"] = g2.T @ do
    g["co"] = do.sum(axis=0)
    de2 = (do @ p["Vo"].T) * (e2 > 0)
    g["V2"] = g1.T @ de2
    g["c2"] = de2.sum(axis=0)
    de1 = (de2 @ p["V2"].T) * (e1 > 0)
    g["V1"] = z.T @ de1
    g["c1"] = de1.sum(axis=0)
    dz = de1 @ p["V1"].T

    dmu = dz + mu / n
    dlv = dz * eps * 0.5 * std + 0.5 * (np.exp(lv) - 1.0) / n
    g["Wmu"] = h2.T @ dmu
    g["bmu"] = dmu.sum(axis=0)
    g["Wlv"] = h2.T @ dlv
    g["blv"] = dlv.sum(axis=0)
    da2 = (dmu @ p["Wmu"].T + dlv @ p["Wlv"].T) * (a2 > 0)
    g["W2"] = h1.T @ da2
    g["b2"] = da2.sum(axis=0)
    da1 = (da2 @ p["W2"].T) * (a1 > 0)
    g["W1"] = X.T @ da1
    g["b1"] = da1.sum(axis=0)
    return float(loss), g


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in params:
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grads[k]
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grads[k] ** 2
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class TvaeModel:
    """A fitted TVAE bound to the parameter space its rows came from."""

    def __init__(self, space: ParameterSpace, params: dict, config: TvaeConfig, seed=None, loss_trace=()):
        self.space = space
        self.params = params
        self.config = config
        self.seed = seed
        self.loss_trace = list(loss_trace)

    @property
    def latent_dim(self) -> int:
        return self.params["Wmu"].shape[1]

    def decoder_outputs(self, z):
        return decode_outputs(self.params, z)

    def sample_encoded(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` encoded rows: numeric slots noisy and clamped, blocks one-hot."""
        z = rng.standard_normal((n, self.latent_dim))
        o = self.decoder_outputs(z)
        out = np.zeros_like(o)
        numeric = self.space.numeric_slots
        if numeric:
            mean = _sigmoid(o[:, numeric])
            noise = rng.standard_normal(mean.shape)
            out[:, numeric] = np.clip(mean + self.config.decoder_sigma * noise, 0.0, 1.0)
        for sl in self.space.categorical_blocks:
            probs = np.exp(_log_softmax(o[:, sl]))
            u = rng.random((n, 1))
            idx = (probs.cumsum(axis=1) < u).sum(axis=1)
            idx = np.minimum(idx, probs.shape[1] - 1)
            out[np.arange(n), sl.start + idx] = 1.0
        return out

    def sample_array(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.space.decode_array(self.sample_encoded(n, rng))

    def sample(self, rng: np.random.Generator) -> dict:
        return self.space.from_raw(self.sample_array(1, rng)[0])

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "config": asdict(self.config),
            "seed": self.seed,
            "params": {k: v.tolist() for k, v in self.params.items()},
            "loss_trace": list(self.loss_trace),
        }

    @classmethod
    def from_json(cls, d) -> "TvaeModel":
        params = {k: np.asarray(d["params"][k], dtype=float) for k in PARAM_KEYS}
        return cls(
            ParameterSpace.from_json(d["space"]),
            params,
            TvaeConfig(**d["config"]),
            seed=d.get("seed"),
            loss_trace=d.get("loss_trace", ()),
        )


def fit_tvae(space: ParameterSpace, configs, config: TvaeConfig | None = None, seed=None) -> TvaeModel:
    """Train a TVAE on configurations of ``space`` by minimizing the negative ELBO.

    Minibatch Adam steps; the reparameterization noise and the row shuffling
    are drawn from a generator seeded with ``seed``.  After every epoch the
    full-data loss is evaluated with a fixed noise draw and appended to
    ``model.loss_trace``; the mean minibatch loss goes to
    ``model.batch_loss_trace``.

    Raises:
        FitError: fewer than two rows.
        TrainingDivergedError: the loss became non-finite.
    """
    config = config or TvaeConfig()
    X = np.array([space.encode(c) for c in configs], dtype=float)
    n = X.shape[0]
    if n < 2:
        raise FitError("TVAE needs at least 2 rows")
    rng = np.random.default_rng(seed)
    n_features = space.n_features
    latent = config.latent_dim or min(8, n_features)
    batch = config.batch_size or min(n, 64)
    params = init_params(n_features, latent, config.hidden, rng)
    opt = _Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    numeric = space.numeric_slots
    blocks = space.categorical_blocks
    # common random numbers for the per-epoch monitor loss
    monitor_eps = rng.standard_normal((n, latent))
    trace, batch_trace = [], []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            rows = X[perm[start : start + batch]]
            eps = rng.standard_normal((rows.shape[0], latent))
            loss, grads = elbo_loss_and_grad(params, rows, eps, numeric, blocks, config.decoder_sigma)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            opt.step(params, grads)
            total += loss * rows.shape[0]
        batch_trace.append(total / n)
        loss, _ = elbo_loss_and_grad(params, X, monitor_eps, numeric, blocks, config.decoder_sigma)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        trace.append(loss)
    model = TvaeModel(space, params, config, seed=seed, loss_trace=trace)
    model.batch_loss_trace = batch_trace
    return model
