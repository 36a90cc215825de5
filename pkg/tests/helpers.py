"""Independent oracles and fixtures shared by several test modules."""

import numpy as np

from tempsort.tpl import PairwiseSamples


def random_pairs(rng, n_pairs, dim, shape=None):
    v = rng.normal(size=(n_pairs, dim))
    shape = shape or (1, 1, dim)
    return PairwiseSamples(v, np.ones(n_pairs), shape, np.zeros((n_pairs, 2), int))


def pg_oracle(pairs, c_param, iters=20_000):
    """Accelerated projected gradient on the box-constrained dual in mu.

    Minimizes 1/2 ||max(0, A^T mu)||^2 - sum(mu) over 0 <= mu <= C with a
    fixed 1/L step, L = ||A||_2^2. Returns (u, primal objective).
    """
    A = pairs.v_diff * pairs.y[:, None]
    L = max(np.linalg.norm(A, 2) ** 2, 1e-12)
    mu = np.zeros(len(A))
    y = mu.copy()
    t = 1.0
    for _ in range(iters):
        grad = A @ np.maximum(0.0, A.T @ y) - 1.0
        nxt = np.clip(y - grad / L, 0.0, c_param)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = nxt + (t - 1) / t_new * (nxt - mu)
        mu, t = nxt, t_new
    u = np.maximum(0.0, A.T @ mu)
    obj = 0.5 * u @ u + c_param * np.maximum(0.0, 1.0 - A @ u).sum()
    return u, obj


def primal_1d(v, c_param):
    """Closed-form min of 1/2 u^2 + C max(0, 1 - u v) over u >= 0, for v > 0.

    The hinge is active while u < 1/v, where the minimizer is u = C v.
    """
    u = min(c_param * v, 1.0 / v)
    return u, 0.5 * u * u + c_param * max(0.0, 1.0 - u * v)
