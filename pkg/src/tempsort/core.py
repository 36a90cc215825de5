"""Domain types and the piecewise-linear value model with a fixed time discount.

Indices are zero-based in code: criterion ``j`` in ``0..m-1``, timestamp ``t``
in ``0..T-1``, sub-interval ``k`` in ``0..gamma-1``. Class labels are
one-based (``1..H``) because they are user-facing.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, LabelOutOfRange, ZeroScale

LARGE = 1e30
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Alternative:
    id: str
    series: np.ndarray  # (m, T)
    label: Optional[int] = None

    def __post_init__(self):
        arr = np.asarray(self.series, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatch(f"series must be m x T, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"alternative {self.id!r} has non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "series", arr)


@dataclass(frozen=True, eq=False)
class Dataset:
    alternatives: tuple
    criteria_names: tuple
    horizon: int
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        object.__setattr__(self, "criteria_names", tuple(self.criteria_names))
        m = len(self.criteria_names)
        for alt in self.alternatives:
            if alt.series.shape != (m, self.horizon):
                raise DimensionMismatch(
                    f"alternative {alt.id!r} has shape {alt.series.shape}, "
                    f"expected {(m, self.horizon)}"
                )
            if alt.label is not None and not 1 <= alt.label <= self.class_count:
                raise LabelOutOfRange(
                    f"alternative {alt.id!r} has label {alt.label}, "
                    f"outside 1..{self.class_count}"
                )

    @property
    def m(self) -> int:
        return len(self.criteria_names)

    def __len__(self):
        return len(self.alternatives)

    @property
    def series(self) -> np.ndarray:
        """Stacked performance values, shape (n, m, T)."""
        if not self.alternatives:
            return np.zeros((0, self.m, self.horizon))
        return np.stack([a.series for a in self.alternatives])

    @property
    def labels(self) -> np.ndarray:
        """Labels as an int array; unlabeled rows are 0."""
        return np.array([a.label or 0 for a in self.alternatives], dtype=int)

    @property
    def ids(self) -> list:
        return [a.id for a in self.alternatives]

    def subset(self, indices) -> "Dataset":
        return Dataset(
            [self.alternatives[i] for i in indices],
            self.criteria_names,
            self.horizon,
            self.class_count,
        )


@dataclass(frozen=True, eq=False)
class Grid:
    """Equally spaced characteristic points per (criterion, timestamp)."""

    gamma: int
    points: np.ndarray  # (m, T, gamma + 1)
    alpha: np.ndarray  # (m, T)
    beta: np.ndarray  # (m, T)

    @property
    def degenerate(self) -> np.ndarray:
        """Cells where alpha == beta; they encode to all-zero and carry no value."""
        return self.alpha == self.beta

    @property
    def shape(self) -> tuple:
        m, T = self.alpha.shape
        return m, T, self.gamma

    @classmethod
    def from_bounds(cls, alpha, beta, gamma: int) -> "Grid":
        alpha = np.asarray(alpha, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if gamma < 1:
            raise ValueError("gamma must be >= 1")
        if alpha.shape != beta.shape or alpha.ndim != 2:
            raise DimensionMismatch("alpha and beta must both be m x T")
        k = np.arange(gamma + 1) / gamma
        points = alpha[..., None] + k * (beta - alpha)[..., None]
        # pin the endpoints exactly; the affine form can be off by one ulp
        points[..., 0] = alpha
        points[..., -1] = beta
        return cls(gamma, points, alpha, beta)


def build_grid(dataset, gamma: int) -> Grid:
    """Characteristic points over the observed per-(j, t) range.

    ``dataset`` may be a :class:`Dataset` or an (n, m, T) array.
    """
    series = dataset.series if isinstance(dataset, Dataset) else np.asarray(dataset, float)
    if series.ndim != 3 or series.shape[0] == 0:
        raise ValueError("build_grid needs a non-empty (n, m, T) collection")
    alpha, beta = series.min(axis=0), series.max(axis=0)
    # a range at round-off scale carries no signal; encoding it would amplify noise
    tiny = (beta - alpha) <= DEGENERATE_RTOL * np.maximum(1.0, np.maximum(np.abs(alpha), np.abs(beta)))
    beta = np.where(tiny, alpha, beta)
    return Grid.from_bounds(alpha, beta, gamma)


@dataclass(frozen=True, eq=False)
class EncodedAlternative:
    v: np.ndarray  # (m, T, gamma)
    id: str = ""
    label: Optional[int] = None


def encode_array(series: np.ndarray, grid: Grid) -> np.ndarray:
    """Vectorised encoding of an (..., m, T) array into (..., m, T, gamma).

    Each entry is 1 above the sub-interval, 0 below it, and the linear
    fraction inside. Values outside [alpha, beta] saturate.
    """
    series = np.asarray(series, dtype=float)
    if series.shape[-2:] != grid.alpha.shape:
        raise DimensionMismatch(
            f"series trailing shape {series.shape[-2:]} does not match grid {grid.alpha.shape}"
        )
    lo = grid.points[..., :-1]
    width = grid.points[..., 1:] - lo
    safe = np.where(width > 0, width, 1.0)
    v = np.clip((series[..., None] - lo) / safe, 0.0, 1.0)
    return np.where(width > 0, v, 0.0)


def encode(alt: Alternative, grid: Grid) -> EncodedAlternative:
    return EncodedAlternative(encode_array(alt.series, grid), alt.id, alt.label)


@dataclass(frozen=True, eq=False)
class PiecewiseValueFunction:
    delta_f: np.ndarray  # (m, T, gamma), all >= 0
    offsets: Optional[np.ndarray] = None  # (m, T)

    def __post_init__(self):
        d = np.asarray(self.delta_f, dtype=float)
        if d.ndim != 3:
            raise DimensionMismatch("delta_f must be m x T x gamma")
        if np.any(d < 0):
            raise ValueError("increments must be non-negative")
        object.__setattr__(self, "delta_f", d)
        off = np.zeros(d.shape[:2]) if self.offsets is None else np.asarray(self.offsets, float)
        if off.shape != d.shape[:2]:
            raise DimensionMismatch("offsets must be m x T")
        object.__setattr__(self, "offsets", off)

    @property
    def shape(self):
        return self.delta_f.shape

    def values_at_points(self) -> np.ndarray:
        """f_j^t at every characteristic point, shape (m, T, gamma + 1)."""
        cum = np.concatenate(
            [np.zeros(self.delta_f.shape[:2] + (1,)), np.cumsum(self.delta_f, axis=-1)],
            axis=-1,
        )
        return self.offsets[..., None] + cum

    def sub_marginals(self, v: np.ndarray) -> np.ndarray:
        """All f_j^t for encoded input(s) v of shape (..., m, T, gamma)."""
        return self.offsets + np.einsum("...jtk,jtk->...jt", v, self.delta_f)


def sub_marginal(pvf: PiecewiseValueFunction, encoded: EncodedAlternative, j: int, t: int) -> float:
    return float(pvf.offsets[j, t] + np.dot(pvf.delta_f[j, t], encoded.v[j, t]))


@dataclass(frozen=True, eq=False)
class DiscountSchedule:
    tau: float
    horizon: int

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def weights(self) -> np.ndarray:
        """tau ** (T - t) for t = 1..T; the last weight is always 1 (0 ** 0 == 1)."""
        exps = np.arange(self.horizon - 1, -1, -1, dtype=float)
        return np.power(float(self.tau), exps)


def comprehensive_value(pvf, encoded, schedule: DiscountSchedule):
    """U = sum_j sum_t tau^(T-t) f_j^t.

    ``encoded`` may be an EncodedAlternative (returns float) or an array of
    shape (..., m, T, gamma) (returns an array).
    """
    v = encoded.v if isinstance(encoded, EncodedAlternative) else np.asarray(encoded)
    if v.shape[-3:] != pvf.shape:
        raise DimensionMismatch(f"encoded shape {v.shape[-3:]} != model shape {pvf.shape}")
    f = pvf.sub_marginals(v)
    u = np.einsum("...jt,t->...", f, schedule.weights)
    return float(u) if np.ndim(u) == 0 else u


def criterion_values(pvf, v: np.ndarray, schedule: DiscountSchedule) -> np.ndarray:
    """Per-criterion discounted sums, shape (..., m)."""
    return np.einsum("...jt,t->...j", pvf.sub_marginals(v), schedule.weights)


@dataclass(frozen=True)
class ClassStructure:
    thresholds: tuple
    large: float = LARGE

    def __post_init__(self):
        th = tuple(float(x) for x in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError(f"thresholds must be strictly increasing: {th}")
        if any(not math.isfinite(x) for x in th):
            raise ValueError("thresholds must be finite")

    @property
    def class_count(self) -> int:
        return len(self.thresholds) + 1

    @property
    def bounds(self) -> tuple:
        """theta_0 .. theta_H including the sentinels."""
        return (-self.large,) + self.thresholds + (self.large,)


def assign(u_value: float, classes: ClassStructure) -> int:
    """Class h with theta_{h-1} <= U < theta_h; hitting a threshold goes up."""
    return bisect.bisect_right(classes.thresholds, u_value) + 1


def assign_many(u_values, classes: ClassStructure) -> np.ndarray:
    return np.searchsorted(np.asarray(classes.thresholds), np.asarray(u_values), side="right") + 1


def normalize(pvf: PiecewiseValueFunction, schedule: DiscountSchedule):
    """Rescale so that minimal sub-marginals are 0 and the maxima sum to 1.

    Returns ``(normalized_pvf, scale, offset)`` with
    ``U_normalized = (U - offset) / scale``.
    """
    scale = float(pvf.delta_f.sum())
    if not scale > 0:
        raise ZeroScale("all increments are zero; nothing to normalize")
    offset = float(np.sum(pvf.offsets * schedule.weights))
    return PiecewiseValueFunction(pvf.delta_f / scale), scale, offset


def transform_thresholds(classes: ClassStructure, scale: float, offset: float) -> ClassStructure:
    if not scale > 0:
        raise ZeroScale(f"scale must be positive, got {scale}")
    return ClassStructure(tuple((th - offset) / scale for th in classes.thresholds), classes.large)
