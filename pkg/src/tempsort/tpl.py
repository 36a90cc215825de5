"""Temporal preference learning as a regularized convex QP.

Assignment examples become pairwise preferences (a over b when a's class is
higher). With the discount fixed, U is linear in the increment vector, and
the model solves

    min_u  1/2 ||u||^2 + C * sum_i max(0, 1 - y_i u.v_i)   s.t.  u >= 0

either directly (``solve_primal``) or through its dual in the multipliers
``mu`` (``solve_dual``), where ``u = max(0, sum_i y_i mu_i v_i)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ClassStructure,
    DiscountSchedule,
    Grid,
    PiecewiseValueFunction,
    assign,
    assign_many,
    build_grid,
    comprehensive_value,
    encode_array,
    normalize,
)
from .errors import DimensionMismatch, SingleClass

log = logging.getLogger(__name__)

DEFAULT_CAP = 20_000


@dataclass(frozen=True, eq=False)
class PairwiseSamples:
    """Stacked preference pairs; row i is the Lambda-weighted v(a) - v(b)."""

    v_diff: np.ndarray  # (N, m*T*gamma)
    y: np.ndarray  # (N,) entries +-1
    shape: tuple  # (m, T, gamma)
    index: np.ndarray  # (N, 2) positions of (a, b) in the encoded set

    def __len__(self):
        return len(self.y)


def _class_pairs(labels, ha, hb):
    a = np.flatnonzero(labels == ha)
    b = np.flatnonzero(labels == hb)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    return np.column_stack([aa.ravel(), bb.ravel()])


def derive_pairs(encoded, schedule: DiscountSchedule, cap: Optional[int] = DEFAULT_CAP,
                 rng_seed: int = 0, labels=None) -> PairwiseSamples:
    """All ordered cross-class pairs (higher class first), optionally subsampled.

    ``encoded`` is a list of EncodedAlternative or an (n, m, T, gamma) array
    with ``labels`` given separately. When the pair count exceeds ``cap`` a
    uniform subsample is drawn, keeping at least one pair for every boundary
    between consecutive represented classes.
    """
    if isinstance(encoded, np.ndarray):
        v = encoded
        if labels is None:
            raise ValueError("labels are required with an encoded array")
    else:
        v = np.stack([e.v for e in encoded])
        if labels is None:
            labels = [e.label for e in encoded]
    labels = np.asarray(labels, dtype=int)
    present = np.unique(labels[labels > 0])
    if len(present) < 2:
        raise SingleClass(f"need at least two classes to form pairs, got {present.tolist()}")

    blocks = []
    for i, hb in enumerate(present):
        for ha in present[i + 1:]:
            blocks.append(_class_pairs(labels, ha, hb))
    idx = np.concatenate(blocks)

    if cap is not None and len(idx) > cap:
        rng = np.random.default_rng(rng_seed)
        keep = np.sort(rng.choice(len(idx), size=cap, replace=False))
        sub = idx[keep]
        slot = 0
        for hb, ha in zip(present[:-1], present[1:]):
            hit = (labels[sub[:, 0]] == ha) & (labels[sub[:, 1]] == hb)
            if not hit.any():
                candidates = np.flatnonzero((labels[idx[:, 0]] == ha) & (labels[idx[:, 1]] == hb))
                sub[slot] = idx[rng.choice(candidates)]
                slot += 1
        idx = sub

    w = schedule.weights
    diff = (v[idx[:, 0]] - v[idx[:, 1]]) * w[None, None, :, None]
    return PairwiseSamples(diff.reshape(len(idx), -1), np.ones(len(idx)), v.shape[1:], idx)


@dataclass
class SolverReport:
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    dual_mu: Optional[np.ndarray] = None
    dual_slack: Optional[np.ndarray] = None
    method: str = ""

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
            "method": self.method,
        }


def primal_objective(u, pairs: PairwiseSamples, c_param: float) -> float:
    margins = pairs.y * (pairs.v_diff @ u)
    return float(0.5 * u @ u + c_param * np.maximum(0.0, 1.0 - margins).sum())


def dual_objective(mu, pairs: PairwiseSamples) -> float:
    """The P1 objective at its optimal u for fixed mu."""
    u = np.maximum(0.0, pairs.v_diff.T @ (pairs.y * mu))
    return float(0.5 * u @ u - mu.sum())


def kkt_residual(u, mu, pairs: PairwiseSamples, c_param: float) -> float:
    """Largest violation of the optimality conditions, in natural-map form.

    Covers u >= 0, sigma = u - sum y mu v >= 0 with u.sigma = 0, the box on
    mu, and hinge complementarity (mu = C below margin 1, 0 above it).
    """
    w = pairs.v_diff.T @ (pairs.y * mu)
    sigma = u - w
    margins = pairs.y * (pairs.v_diff @ u)
    r_bound = np.abs(np.minimum(u, sigma))
    r_mu = np.abs(mu - np.clip(mu - (margins - 1.0), 0.0, c_param))
    return float(max(r_bound.max(initial=0.0), r_mu.max(initial=0.0)))


# -- primal ----------------------------------------------------------------


def _smoothed(u, A, c_param, delta):
    """Huber-smoothed hinge objective and gradient; A holds rows y_i v_i."""
    z = 1.0 - A @ u
    h = np.where(z > delta, z - 0.5 * delta, np.where(z > 0, 0.5 * z * z / delta, 0.0))
    slope = np.clip(z / delta, 0.0, 1.0)
    val = 0.5 * u @ u + c_param * h.sum()
    grad = u - c_param * (A.T @ slope)
    return val, grad, slope


def _polish(u, A, c_param, delta):
    """Solve the KKT system exactly on the active sets read off the smoothed point."""
    z = 1.0 - A @ u
    over = z >= delta
    margin = (z > 0) & ~over
    pos = u > 0
    mu = np.where(over, c_param, 0.0)
    c = c_param * A[over][:, pos].sum(axis=0)
    B = A[margin][:, pos]
    if B.shape[0]:
        rhs = 1.0 - B @ c
        mu_m = np.linalg.lstsq(B @ B.T, rhs, rcond=None)[0]
        mu[margin] = mu_m
        u_pos = c + B.T @ mu_m
    else:
        u_pos = c
    out = np.zeros_like(u)
    out[pos] = u_pos
    return out, mu


def solve_primal(pairs: PairwiseSamples, c_param: float, tol: float = 1e-6,
                 max_iter: int = 50_000):
    """Projected gradient on the hinge form via smoothing continuation.

    Each stage runs accelerated projected gradient with backtracking on a
    Huber-smoothed hinge of width ``delta``, then tries an exact active-set
    polish. Stages shrink ``delta`` tenfold until the polished point meets
    ``tol`` in :func:`kkt_residual` or ``max_iter`` gradient steps are spent.
    """
    if len(pairs) == 0:
        raise ValueError("no pairs to learn from")
    if not c_param > 0:
        raise ValueError("C must be positive")
    A = pairs.v_diff * pairs.y[:, None]
    d = A.shape[1]
    u = np.zeros(d)
    L = 1.0
    delta = 1.0
    iters = 0
    best = None
    while True:
        x_prev = u.copy()
        yk = u.copy()
        t_k = 1.0
        f_prev = np.inf
        stage_iters = 0
        while iters < max_iter:
            fy, gy, _ = _smoothed(yk, A, c_param, delta)
            while True:
                x_new = np.maximum(0.0, yk - gy / L)
                step = x_new - yk
                fx, _, _ = _smoothed(x_new, A, c_param, delta)
                if fx <= fy + gy @ step + 0.5 * L * step @ step + 1e-12 * abs(fy):
                    break
                L *= 2.0
            iters += 1
            stage_iters += 1
            if fx > f_prev:
                # adaptive restart kills the momentum
                t_k = 1.0
                yk = x_prev.copy()
                f_prev = np.inf
                continue
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
            yk = x_new + ((t_k - 1.0) / t_next) * (x_new - x_prev)
            x_prev, t_k, f_prev = x_new, t_next, fx
            L = max(L * 0.9, 1e-12)
            _, gx, _ = _smoothed(x_new, A, c_param, delta)
            pg = np.abs(x_new - np.maximum(0.0, x_new - gx)).max()
            if pg < min(1e-10, tol * 1e-3) or stage_iters >= 20_000:
                break
        u = x_prev
        cand_u, cand_mu = _polish(u, A, c_param, delta)
        res = kkt_residual(cand_u, cand_mu, pairs, c_param)
        if best is None or res < best[2]:
            best = (cand_u, cand_mu, res)
        if res < tol or iters >= max_iter or delta < 1e-14:
            break
        delta *= 0.1

    cand_u, cand_mu, res = best
    converged = res < tol
    if not converged:
        # polishing never certified; fall back to whichever point scores better
        if primal_objective(u, pairs, c_param) < primal_objective(cand_u, pairs, c_param):
            cand_u = u
            _, _, slope = _smoothed(u, A, c_param, delta)
            cand_mu = c_param * slope
            res = kkt_residual(cand_u, cand_mu, pairs, c_param)
        log.warning("primal solver stopped at KKT residual %.3g after %d steps", res, iters)
    u_final = np.maximum(cand_u, 0.0)
    sigma = u_final - pairs.v_diff.T @ (pairs.y * cand_mu)
    report = SolverReport(
        primal_objective(u_final, pairs, c_param), iters, converged, res,
        cand_mu, sigma, "primal",
    )
    return PiecewiseValueFunction(u_final.reshape(pairs.shape)), report


# -- dual ------------------------------------------------------------------


def _line_min(w, d, lo, hi):
    """argmin over s in [lo, hi] of 1/2 ||max(0, w + s d)||^2 - s.

    The derivative is monotone and piecewise linear; Newton steps inside a
    shrinking bracket land on the root once the right piece is found.
    """

    def deriv(s):
        r = w + s * d
        act = r > 0
        return d[act] @ r[act] - 1.0, d[act] @ d[act]

    g_lo, _ = deriv(lo)
    if g_lo >= 0:
        return lo
    g_hi, _ = deriv(hi)
    if g_hi <= 0:
        return hi
    a, b = lo, hi
    s = min(max(0.0, lo), hi)
    for _ in range(100):
        g, h = deriv(s)
        if g == 0.0:
            return s
        if g < 0:
            a = s
        else:
            b = s
        s_new = s - g / h if h > 0 else 0.5 * (a + b)
        if not a < s_new < b:
            s_new = 0.5 * (a + b)
        if abs(s_new - s) <= 1e-15 * (1.0 + abs(s)):
            return s_new
        s = s_new
    return s


def solve_dual(pairs: PairwiseSamples, c_param: float, tol: float = 1e-6,
               max_iter: int = 50_000, seed: int = 0):
    """Exact coordinate minimisation of the dual in mu.

    ``max_iter`` bounds the number of sweeps. After each sweep the residual
    is recomputed for every coordinate, and the next sweep visits only the
    coordinates that are still off their optimality condition (shrinking).
    """
    if len(pairs) == 0:
        raise ValueError("no pairs to learn from")
    if not c_param > 0:
        raise ValueError("C must be positive")
    A = pairs.v_diff * pairs.y[:, None]
    N = A.shape[0]
    mu = np.zeros(N)
    w = np.zeros(A.shape[1])
    rng = np.random.default_rng(seed)
    res = np.inf
    sweeps = 0
    active = np.arange(N)
    for sweeps in range(1, max_iter + 1):
        for i in active[rng.permutation(len(active))]:
            row = A[i]
            s = _line_min(w, row, -mu[i], c_param - mu[i])
            if s != 0.0:
                mu[i] = min(max(mu[i] + s, 0.0), c_param)
                w += s * row
        w = A.T @ mu  # resync accumulated rounding
        u = np.maximum(0.0, w)
        res = kkt_residual(u, mu, pairs, c_param)
        if res < tol:
            break
        r_mu = np.abs(mu - np.clip(mu - (A @ u - 1.0), 0.0, c_param))
        active = np.flatnonzero((r_mu > 0.1 * tol) | ((mu > 0) & (mu < c_param)))
        if len(active) == 0:
            active = np.arange(N)
    u = np.maximum(0.0, w)
    converged = res < tol
    if not converged:
        log.warning("dual solver stopped at KKT residual %.3g after %d sweeps", res, sweeps)
    report = SolverReport(
        primal_objective(u, pairs, c_param), sweeps, converged, res, mu, u - w, "dual"
    )
    return PiecewiseValueFunction(u.reshape(pairs.shape)), report


# -- thresholds and the model ---------------------------------------------


def fit_thresholds_from_values(u_values, labels, ids, H: int):
    """Midpoint thresholds from the closest correctly ordered cross-boundary pair.

    Returns ``(ClassStructure, fallback_boundaries)``. A boundary with no
    correctly ordered pair gets the midpoint of the two class means.
    """
    u_values = np.asarray(u_values, dtype=float)
    labels = np.asarray(labels, dtype=int)
    ids = np.asarray(ids, dtype=object)
    thresholds = []
    fallbacks = []
    for h in range(1, H):
        lower = np.flatnonzero(labels == h)
        upper = np.flatnonzero(labels == h + 1)
        if len(lower) == 0 or len(upper) == 0:
            pool_lo = u_values[labels <= h]
            pool_hi = u_values[labels > h]
            if len(pool_lo) and len(pool_hi):
                theta = 0.5 * (pool_lo.mean() + pool_hi.mean())
            elif len(pool_lo):
                theta = pool_lo.max() + 1.0
            else:
                theta = pool_hi.min() - 1.0
            thresholds.append(float(theta))
            fallbacks.append(h)
            continue
        gap = u_values[upper][:, None] - u_values[lower][None, :]
        valid = gap >= 0
        if not valid.any():
            thresholds.append(0.5 * (u_values[upper].mean() + u_values[lower].mean()))
            fallbacks.append(h)
            continue
        best = gap[valid].min()
        ia, ib = np.nonzero(valid & (gap == best))
        choice = min(zip(ids[upper[ia]], ids[lower[ib]], ia, ib))
        a, b = upper[choice[2]], lower[choice[3]]
        thresholds.append(0.5 * (u_values[a] + u_values[b]))
    for h in range(1, len(thresholds)):
        if thresholds[h] <= thresholds[h - 1]:
            thresholds[h] = float(np.nextafter(thresholds[h - 1], np.inf))
            fallbacks.append(h + 1)
    return ClassStructure(tuple(thresholds)), sorted(set(fallbacks))


def fit_thresholds(pvf: PiecewiseValueFunction, schedule: DiscountSchedule, encoded,
                   labels=None, ids=None, H: Optional[int] = None):
    """Fit thresholds on an encoded training set (list or (n, m, T, gamma) array)."""
    if isinstance(encoded, np.ndarray):
        v = encoded
    else:
        v = np.stack([e.v for e in encoded])
        labels = [e.label for e in encoded] if labels is None else labels
        ids = [e.id for e in encoded] if ids is None else ids
    labels = np.asarray(labels, dtype=int)
    if ids is None:
        ids = [f"{i:09d}" for i in range(len(labels))]
    H = int(labels.max()) if H is None else H
    values = comprehensive_value(pvf, v, schedule)
    return fit_thresholds_from_values(values, labels, ids, H)


@dataclass(eq=False)
class TplModel:
    grid: Grid
    pvf: PiecewiseValueFunction
    schedule: DiscountSchedule
    classes: ClassStructure
    c_param: float
    info: dict = field(default_factory=dict)

    kind = "tpl"

    def comprehensive(self, series: np.ndarray) -> np.ndarray:
        """U for raw series of shape (..., m, T)."""
        return comprehensive_value(self.pvf, encode_array(series, self.grid), self.schedule)

    def predict_many(self, series: np.ndarray) -> np.ndarray:
        return assign_many(self.comprehensive(series), self.classes)


def predict(model: TplModel, alt, grid: Optional[Grid] = None) -> int:
    grid = model.grid if grid is None else grid
    if alt.series.shape != grid.alpha.shape:
        raise DimensionMismatch(f"alternative shape {alt.series.shape} != grid {grid.alpha.shape}")
    v = encode_array(alt.series, grid)
    return assign(comprehensive_value(model.pvf, v, model.schedule), model.classes)


def train(dataset, gamma: int = 4, tau: float = 0.8, c_param: float = 1.0, *,
          grid: Optional[Grid] = None, cap: Optional[int] = DEFAULT_CAP, seed: int = 0,
          solver: str = "dual", tol: float = 1e-6, max_iter: int = 50_000,
          normalized: bool = True) -> TplModel:
    """Fit increments, thresholds and (optionally) normalize the result.

    ``max_iter`` counts FISTA steps for the primal solver and full sweeps
    for the dual one.
    """
    grid = build_grid(dataset, gamma) if grid is None else grid
    schedule = DiscountSchedule(tau, dataset.horizon)
    v = encode_array(dataset.series, grid)
    labels = dataset.labels
    pairs = derive_pairs(v, schedule, cap=cap, rng_seed=seed, labels=labels)
    if solver == "primal":
        pvf, report = solve_primal(pairs, c_param, tol=tol, max_iter=max_iter)
    elif solver == "dual":
        pvf, report = solve_dual(pairs, c_param, tol=tol, max_iter=max_iter, seed=seed)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    classes, fallbacks = fit_thresholds(pvf, schedule, v, labels, dataset.ids, dataset.class_count)
    if normalized and pvf.delta_f.sum() > 0:
        pvf, scale, offset = normalize(pvf, schedule)
        th = [(x - offset) / scale for x in classes.thresholds]
        for h in range(1, len(th)):
            # thresholds one ulp apart may collide after rescaling
            th[h] = max(th[h], float(np.nextafter(th[h - 1], np.inf)))
        classes = ClassStructure(tuple(th), classes.large)
    info = {"solver": report.to_dict(), "pairs": len(pairs), "threshold_fallbacks": fallbacks}
    return TplModel(grid, pvf, schedule, classes, float(c_param), info)
