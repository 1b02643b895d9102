"""Isotonic least squares: PAVA fits, step functions, cumulative sum diagrams.

Fits are computed on tie-merged data: observations sharing an x-value become
one pseudo-observation carrying the group mean and a weight equal to the
group size. With distinct x-values this is the ordinary unweighted problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import InvalidInputError, RangeError

__all__ = [
    "Sample",
    "StepFit",
    "Block",
    "CumSumDiagram",
    "pava_fit",
    "eval_step",
    "naive_boundary_left",
    "naive_boundary_right",
    "cumsum_diagram",
    "greatest_convex_minorant",
    "gcm_left_derivative",
    "verify_switching",
]


def _as_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """Running variable ``x``, outcome ``y`` and optional treatment ``d``."""

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray | None = None

    def __post_init__(self):
        x = _as_vector(self.x)
        y = _as_vector(self.y)
        if x.size == 0:
            raise InvalidInputError("sample is empty")
        if x.shape != y.shape:
            raise InvalidInputError(f"x and y lengths differ: {x.size} != {y.size}")
        bad = ~(np.isfinite(x) & np.isfinite(y))
        if bad.any():
            rows = np.flatnonzero(bad)[:10].tolist()
            raise InvalidInputError(f"non-finite x or y at rows {rows}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.d is not None:
            d = _as_vector(self.d)
            if d.shape != x.shape:
                raise InvalidInputError(f"x and d lengths differ: {x.size} != {d.size}")
            if not np.isin(d, (0.0, 1.0)).all():
                raise InvalidInputError("treatment indicators must be 0 or 1")
            object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def has_treatment(self) -> bool:
        return self.d is not None

    def channel(self, name: str) -> np.ndarray:
        """Response vector used by a fit: ``"y"`` or ``"d"``."""
        if name == "y":
            return self.y
        if name == "d":
            if self.d is None:
                raise InvalidInputError("sample carries no treatment indicators")
            return self.d
        raise InvalidInputError(f"unknown channel {name!r}")

    def order(self) -> np.ndarray:
        """Permutation sorting by x, ties broken by y then d (row-order free)."""
        keys = [self.y, self.x] if self.d is None else [self.d, self.y, self.x]
        return np.lexsort(keys)

    def sorted(self) -> "Sample":
        o = self.order()
        return self.take(o)

    def take(self, index) -> "Sample":
        return Sample(self.x[index], self.y[index], None if self.d is None else self.d[index])

    def with_y(self, y) -> "Sample":
        return Sample(self.x, y, self.d)

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.x) >= 0))

    def n_ties(self) -> int:
        """Number of observations whose x-value repeats an earlier one."""
        return self.n - int(np.unique(self.x).size)


@dataclass(frozen=True)
class _Groups:
    """Tie structure of an x-sorted vector."""

    knots: np.ndarray
    starts: np.ndarray  # len(knots) + 1 boundaries into the sorted observations
    weights: np.ndarray

    def means(self, v: np.ndarray) -> np.ndarray:
        sums = np.add.reduceat(v, self.starts[:-1])
        return sums / self.weights


def _groups(x_sorted: np.ndarray) -> _Groups:
    new = np.empty(x_sorted.size, dtype=bool)
    new[0] = True
    np.not_equal(x_sorted[1:], x_sorted[:-1], out=new[1:])
    starts = np.append(np.flatnonzero(new), x_sorted.size).astype(np.int64)
    weights = np.diff(starts).astype(float)
    return _Groups(x_sorted[starts[:-1]], starts, weights)


@dataclass(frozen=True)
class Block:
    """Level set of a fit: sorted-sample positions ``[start, stop)``."""

    start: int
    stop: int
    count: int
    mean: float


@dataclass(frozen=True, eq=False)
class StepFit:
    """Left-continuous non-decreasing step function over the distinct x-values."""

    knots: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    block_starts: np.ndarray = field(repr=False)  # knot indices, with a final sentinel
    obs_starts: np.ndarray = field(repr=False)  # knot -> first sorted observation

    def __call__(self, x):
        return eval_step(self, x)

    def __len__(self):
        return int(self.knots.size)

    @property
    def blocks(self) -> list[Block]:
        out = []
        for a, b in zip(self.block_starts[:-1], self.block_starts[1:]):
            start, stop = int(self.obs_starts[a]), int(self.obs_starts[b])
            out.append(Block(start, stop, stop - start, float(self.values[a])))
        return out

    def index_of(self, x: float) -> int:
        """Knot index whose level :func:`eval_step` returns at ``x``."""
        i = int(np.searchsorted(self.knots, x, side="left"))
        return min(i, self.knots.size - 1)


def _fit_groups(groups: _Groups, v_sorted: np.ndarray, increasing: bool = True) -> StepFit:
    means = groups.means(v_sorted)
    if not increasing:
        means = -means
    fitted, starts, k = _kernels.pava(means, groups.weights)
    if not increasing:
        fitted = -fitted
    fitted.flags.writeable = False
    return StepFit(groups.knots, fitted, groups.weights, starts[: k + 1].copy(), groups.starts)


def pava_fit(sample: Sample, channel: str = "y", increasing: bool = True) -> StepFit:
    """Isotonic least-squares fit of ``channel`` on ``x``.

    Sorts internally. ``increasing=False`` fits a non-increasing function.
    """
    s = sample if sample.is_sorted() else sample.sorted()
    return _fit_groups(_groups(s.x), s.channel(channel), increasing)


def eval_step(fit: StepFit, x):
    """Evaluate the left-continuous interpolation of ``fit``.

    For ``x`` in ``(knot[i], knot[i+1]]`` this is ``values[i+1]``; points
    below the first knot get the first level and points above the last knot
    get the last level.
    """
    if len(fit) == 0:
        raise InvalidInputError("empty fit")
    idx = np.searchsorted(fit.knots, x, side="left")
    idx = np.minimum(idx, fit.knots.size - 1)
    out = fit.values[idx]
    return float(out) if np.ndim(out) == 0 else out


def _sorted_group_means(sample: Sample, channel: str) -> tuple[np.ndarray, np.ndarray]:
    s = sample if sample.is_sorted() else sample.sorted()
    g = _groups(s.x)
    return g.means(s.channel(channel)), g.weights


def naive_boundary_left(sample: Sample, channel: str = "y") -> float:
    """Fit value at the smallest x: the minimum running prefix mean."""
    means, w = _sorted_group_means(sample, channel)
    prefix = np.cumsum(means * w) / np.cumsum(w)
    return float(prefix.min())


def naive_boundary_right(sample: Sample, channel: str = "y") -> float:
    """Fit value at the largest x: the maximum running suffix mean."""
    means, w = _sorted_group_means(sample, channel)
    suffix = np.cumsum((means * w)[::-1]) / np.cumsum(w[::-1])
    return float(suffix.max())


@dataclass(frozen=True, eq=False)
class CumSumDiagram:
    """Points ``(F_n(t), M_n(t))`` at the distinct order statistics, from (0, 0)."""

    u: np.ndarray
    v: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])

    def __len__(self):
        return int(self.u.size)


def cumsum_diagram(sample: Sample, channel: str = "y") -> CumSumDiagram:
    means, w = _sorted_group_means(sample, channel)
    n = w.sum()
    u = np.concatenate([[0.0], np.cumsum(w) / n])
    v = np.concatenate([[0.0], np.cumsum(means * w) / n])
    # the final abscissa is exactly one
    u[-1] = 1.0
    return CumSumDiagram(u, v)


def _points_uv(points) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(points, CumSumDiagram):
        return points.u, points.v
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise InvalidInputError("points must be an (m, 2) array with m >= 2")
    u, v = np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1])
    if not np.all(np.diff(u) > 0):
        raise InvalidInputError("abscissae must be strictly increasing")
    return u, v


def greatest_convex_minorant(points) -> tuple[np.ndarray, np.ndarray]:
    """Hull vertex indices and the minorant evaluated at every abscissa."""
    u, v = _points_uv(points)
    hull = _kernels.lower_hull(u, v)
    return hull, np.interp(u, u[hull], v[hull])


def gcm_left_derivative(points, at: float) -> float:
    """Left derivative at ``at`` of the greatest convex minorant of ``points``.

    ``at`` must lie in ``(u[0], u[-1]]``; at a hull vertex the slope of the
    segment ending there is returned.
    """
    u, v = _points_uv(points)
    if not (u[0] < at <= u[-1]):
        raise RangeError(f"at={at} outside ({u[0]}, {u[-1]}]")
    hull = _kernels.lower_hull(u, v)
    j = int(np.searchsorted(u[hull], at, side="left"))
    a, b = hull[j - 1], hull[j]
    return float((v[b] - v[a]) / (u[b] - u[a]))


def _exact_group_sums(sample: Sample, channel: str):
    s = sample if sample.is_sorted() else sample.sorted()
    g = _groups(s.x)
    v = s.channel(channel)
    sums = [sum((Fraction(float(t)) for t in v[a:b]), Fraction(0)) for a, b in zip(g.starts[:-1], g.starts[1:])]
    return g.knots, sums, [int(w) for w in g.weights]


def verify_switching(sample: Sample, level: float, x: float, channel: str = "y") -> tuple[bool, bool]:
    """Both sides of the switching relation at ``(level, x)``.

    Returns ``(fit(x) <= level, U(level) >= x)`` where ``U(a)`` is the
    rightmost maximiser of ``a*F_n(s) - M_n(s)`` over the origin and the data
    points. The two flags agree for every sample. This is a test oracle and
    runs in exact rational arithmetic, so near-ties cannot flip either side.
    """
    knots, sums, weights = _exact_group_sums(sample, channel)
    lvl = Fraction(float(level))
    # exact weighted PAVA on the group sums
    blocks: list[list] = []
    for k, (sm, w) in enumerate(zip(sums, weights)):
        blocks.append([sm, w, k])
        while len(blocks) > 1 and blocks[-2][0] * blocks[-1][1] > blocks[-1][0] * blocks[-2][1]:
            sm2, w2, _ = blocks.pop()
            blocks[-1][0] += sm2
            blocks[-1][1] += w2
    j = min(int(np.searchsorted(knots, x, side="left")), len(knots) - 1)
    block = max((b for b in blocks if b[2] <= j), key=lambda b: b[2])
    lhs = Fraction(block[0], block[1]) <= lvl
    # a*F(s) - M(s) on the cumulative sum diagram, origin included
    best_val, best_idx, cum_w, cum_s = Fraction(0), 0, 0, Fraction(0)
    for k, (sm, w) in enumerate(zip(sums, weights), start=1):
        cum_w += w
        cum_s += sm
        val = lvl * cum_w - cum_s
        if val >= best_val:
            best_val, best_idx = val, k
    rhs = best_idx > 0 and bool(knots[best_idx - 1] >= x)
    return bool(lhs), bool(rhs)
