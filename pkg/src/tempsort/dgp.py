"""Synthetic benchmarks: Fourier-basis series with known temporal value models.

Each sample has four series of length 20, each a Dirichlet-weighted mix of
nine sines. The ground-truth sub-marginal value depends on the experiment
kind, marginals follow a self-discounting recurrence, and the label is the
sign of the summed final marginals (positive = class 2).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import Alternative, Dataset


class DgpKind(str, enum.Enum):
    BASIC = "basic"
    NON_MARKOVIAN = "nonmarkovian"
    NON_MONOTONIC = "nonmonotonic"
    NON_INDEPENDENT = "nonindependent"

    @classmethod
    def parse(cls, value) -> "DgpKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown DGP kind {value!r}; choose from {[k.value for k in cls]}")


@dataclass(frozen=True)
class DgpConfig:
    kind: DgpKind = DgpKind.BASIC
    n_samples: int = 3000
    m: int = 4
    T: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DgpKind.parse(self.kind))
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if self.m <= 0 or self.T <= 0:
            raise ValueError("m and T must be positive")
        if self.kind is DgpKind.NON_INDEPENDENT and self.m != 4:
            raise ValueError("the non-independent experiment pools exactly four criteria")


@dataclass(frozen=True)
class BasisSet:
    omegas: tuple = tuple(np.round(np.arange(0.10, 0.50 + 1e-9, 0.05), 2))

    def evaluate(self, T: int) -> np.ndarray:
        """Basis matrix of shape (9, T): sin(omega_i * pi * t), t = 1..T."""
        t = np.arange(1, T + 1, dtype=float)
        return np.sin(np.outer(self.omegas, t) * np.pi)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    weights: np.ndarray  # (n, m, 9) Dirichlet draws
    sub_marginal: np.ndarray  # (n, channels, T)
    discount: np.ndarray  # (n, channels, T - 1)
    marginal: np.ndarray  # (n, channels, T)
    comprehensive: np.ndarray  # (n,)
    labels: np.ndarray  # (n,) with 1 = negative, 2 = positive


def gen_series(basis: BasisSet, rng: np.random.Generator, T: int = 20, weights=None) -> np.ndarray:
    if weights is None:
        weights = rng.dirichlet(np.ones(len(basis.omegas)))
    return np.asarray(weights) @ basis.evaluate(T)


def true_sub_marginal(kind, g: np.ndarray) -> np.ndarray:
    """Ground-truth sub-marginals for series ``g`` of shape (..., m, T).

    The non-independent kind returns two pooled channels, (g1+g2) and (g3+g4).
    """
    kind = DgpKind.parse(kind)
    g = np.asarray(g, dtype=float)
    if kind is DgpKind.BASIC:
        return np.tanh(g)
    if kind is DgpKind.NON_MARKOVIAN:
        prev = np.concatenate([np.zeros_like(g[..., :1]), g[..., :-1]], axis=-1)
        return np.tanh(g + prev)
    if kind is DgpKind.NON_MONOTONIC:
        m = g.shape[-2]
        freq = 2.0 ** np.arange(m)
        return np.sin(freq[:, None] * np.pi * g)
    return np.stack(
        [np.tanh(g[..., 0, :] + g[..., 1, :]), np.tanh(g[..., 2, :] + g[..., 3, :])], axis=-2
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def true_marginal_recurrence(f: np.ndarray):
    """Run u^t = tau u^{t-1} + (1 - tau) f^t with tau = sigmoid(u^{t-2}).

    ``f`` has shape (..., T). Seeds u^0 = u^{-1} = 0, so the first discount
    is 0.5. Returns ``(u, tau)`` with shapes (..., T) and (..., T - 1).
    """
    f = np.asarray(f, dtype=float)
    T = f.shape[-1]
    u = np.empty_like(f)
    tau = np.empty(f.shape[:-1] + (max(T - 1, 0),))
    u[..., 0] = f[..., 0]
    two_back = np.zeros(f.shape[:-1])
    for t in range(1, T):
        tau[..., t - 1] = _sigmoid(two_back)
        u[..., t] = tau[..., t - 1] * u[..., t - 1] + (1.0 - tau[..., t - 1]) * f[..., t]
        two_back = u[..., t - 1]
    return u, tau


def _sample_weights(seed: int, index: int, m: int, n_basis: int) -> np.ndarray:
    rng = np.random.default_rng([seed, index])
    return rng.dirichlet(np.ones(n_basis), size=m)


def generate(config: DgpConfig):
    """Build a labeled two-class dataset and its ground truth.

    Sample ``i`` draws from its own generator seeded by ``(seed, i)``, so
    datasets of different sizes share their common prefix.
    """
    basis = BasisSet()
    B = basis.evaluate(config.T)
    weights = np.stack(
        [_sample_weights(config.seed, i, config.m, len(basis.omegas)) for i in range(config.n_samples)]
    )
    g = weights @ B  # (n, m, T)
    f = true_sub_marginal(config.kind, g)
    u, tau = true_marginal_recurrence(f)
    comprehensive = _sigmoid(u[..., -1].sum(axis=-1))
    labels = np.where(comprehensive >= 0.5, 2, 1)

    names = [f"g{j + 1}" for j in range(config.m)]
    width = len(str(config.n_samples - 1))
    alts = [
        Alternative(f"s{i:0{width}d}", g[i], int(labels[i])) for i in range(config.n_samples)
    ]
    dataset = Dataset(alts, names, config.T, 2)
    truth = GroundTruth(weights, f, tau, u, comprehensive, labels)
    return dataset, truth
