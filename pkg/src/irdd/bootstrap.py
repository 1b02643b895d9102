"""Trimmed wild bootstrap for boundary values and the sharp iRDD effect.

The bootstrap world is built from a fit that is frozen at its
boundary-corrected value near the boundary. Pseudo-outcomes are
``m~(x_i) + eta_i * e_i`` with residuals ``e_i = y_i - m~(x_i)`` and i.i.d.
mean-zero, unit-variance multipliers ``eta_i``. Each replicate refits the
isotonic regression on the original design and reads it at the same offset.

Replicate ``b`` draws its multipliers from the substream
``(seed, TAG_BOOTSTRAP, b)`` over the rows sorted by ``(x, y, d)``, so the
replicate set depends neither on the input row order nor on how replicates
are spread over workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .errors import ConfigError, InvalidInputError
from .isotonic import Sample, _groups, pava_fit
from .rdd import RddConfig, _Sides, correction_offset, trimmed_fit
from .rng import TAG_BOOTSTRAP, SeedLike, stream

__all__ = [
    "MultiplierKind",
    "BootstrapReport",
    "draw_multipliers",
    "sharp_wild_ci",
    "boundary_wild_ci",
    "naive_wild_ci",
    "MIN_RELIABLE_REPS",
]

MIN_RELIABLE_REPS = 100
INTERVALS = ("basic", "percentile")

_SQRT5 = math.sqrt(5.0)
MAMMEN_LOW = -(_SQRT5 - 1.0) / 2.0
MAMMEN_HIGH = (_SQRT5 + 1.0) / 2.0
MAMMEN_P_LOW = (_SQRT5 + 1.0) / (2.0 * _SQRT5)


class MultiplierKind(str, Enum):
    RADEMACHER = "rademacher"
    GAUSSIAN = "gaussian"
    MAMMEN = "mammen"


def draw_multipliers(kind: MultiplierKind | str, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. multipliers with mean 0 and variance 1."""
    kind = MultiplierKind(kind)
    if n < 1:
        raise ConfigError("need at least one multiplier")
    if kind is MultiplierKind.RADEMACHER:
        return rng.integers(0, 2, n).astype(float) * 2.0 - 1.0
    if kind is MultiplierKind.GAUSSIAN:
        return rng.standard_normal(n)
    return np.where(rng.random(n) < MAMMEN_P_LOW, MAMMEN_LOW, MAMMEN_HIGH)


@dataclass(frozen=True, eq=False)
class BootstrapReport:
    """Replicates are ``estimate* - estimate`` on the original scale."""

    estimate: float
    replicates: np.ndarray = field(repr=False)
    ci: tuple[float, float]
    level: float
    reps: int
    settings: dict
    warnings: tuple[str, ...] = ()

    @property
    def length(self) -> float:
        return self.ci[1] - self.ci[0]

    def interval(self, level: float, kind: str = "basic") -> tuple[float, float]:
        """Interval at another level from the same replicate set."""
        return _interval(self.estimate, self.replicates, level, kind)

    def to_dict(self, with_replicates: bool = False) -> dict:
        out = {
            "estimate": self.estimate,
            "ci": list(self.ci),
            "length": self.length,
            "level": self.level,
            "reps": self.reps,
            "settings": self.settings,
            "warnings": list(self.warnings),
        }
        if with_replicates:
            out["replicates"] = self.replicates.tolist()
        return out


def _interval(estimate: float, reps: np.ndarray, level: float, kind: str) -> tuple[float, float]:
    if not 0 < level < 1:
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    if kind not in INTERVALS:
        raise ConfigError(f"interval must be one of {INTERVALS}, got {kind!r}")
    alpha = 1.0 - level
    lo_q, hi_q = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    if kind == "basic":
        return float(estimate - hi_q), float(estimate - lo_q)
    return float(estimate + lo_q), float(estimate + hi_q)


@dataclass(frozen=True, eq=False)
class _SidePlan:
    """One side in left-boundary orientation: fit value is ``sign * pava[idx]``.

    ``cols`` maps the side's observations to columns of the multiplier
    matrix, which is laid out over the sorted full sample.
    """

    base: np.ndarray
    resid: np.ndarray
    starts: np.ndarray
    weights: np.ndarray
    idx: int
    cols: np.ndarray
    sign: float
    increasing: bool

    def values(self, eta_full: np.ndarray) -> np.ndarray:
        eta = np.ascontiguousarray(eta_full[:, self.cols])
        if self.increasing:
            out = _kernels.wild_replicates(self.base, self.resid, eta, self.starts, self.weights, self.idx)
        else:
            out = -_kernels.wild_replicates(-self.base, -self.resid, eta, self.starts, self.weights, self.idx)
        return self.sign * out


def _plan(x_left: np.ndarray, base: np.ndarray, resid: np.ndarray, idx: int, cols, sign: float,
          increasing: bool) -> _SidePlan:
    g = _groups(x_left)
    return _SidePlan(
        np.ascontiguousarray(base, dtype=float),
        np.ascontiguousarray(resid, dtype=float),
        g.starts,
        g.weights,
        int(idx),
        np.asarray(cols, dtype=np.int64),
        sign,
        increasing,
    )


def _multiplier_block(seed: SeedLike, kind: str, n: int, lo: int, hi: int) -> np.ndarray:
    eta = np.empty((hi - lo, n))
    for r, b in enumerate(range(lo, hi)):
        eta[r] = draw_multipliers(kind, n, stream(seed, TAG_BOOTSTRAP, b))
    return eta


def _run_chunk(plans, seed, kind, n, lo, hi) -> np.ndarray:
    eta = _multiplier_block(seed, kind, n, lo, hi)
    return sum(p.values(eta) for p in plans)


def _replicate(plans: list[_SidePlan], seed: SeedLike, kind: str, n: int, reps: int,
               workers: int | None, chunk: int = 256) -> np.ndarray:
    bounds = [(lo, min(lo + chunk, reps)) for lo in range(0, reps, chunk)]
    if workers is None or workers <= 1 or len(bounds) == 1:
        parts = [_run_chunk(plans, seed, kind, n, lo, hi) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, plans, seed, kind, n, lo, hi) for lo, hi in bounds]
            parts = [f.result() for f in futures]
    return np.concatenate(parts)


def _check(reps: int, level: float, interval: str, multiplier: str) -> tuple[str, ...]:
    if reps < 2:
        raise ConfigError("need at least two bootstrap replicates")
    if not 0 < level < 1:
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    if interval not in INTERVALS:
        raise ConfigError(f"interval must be one of {INTERVALS}, got {interval!r}")
    try:
        MultiplierKind(multiplier)
    except ValueError:
        raise ConfigError(f"unknown multiplier {multiplier!r}") from None
    if reps < MIN_RELIABLE_REPS:
        msg = f"only {reps} bootstrap replicates; interval endpoints are unreliable below {MIN_RELIABLE_REPS}"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return (msg,)
    return ()


def _report(estimate, reps_values, level, interval, settings, flags) -> BootstrapReport:
    reps_values.flags.writeable = False
    return BootstrapReport(
        estimate=float(estimate),
        replicates=reps_values,
        ci=_interval(estimate, reps_values, level, interval),
        level=level,
        reps=int(reps_values.size),
        settings=settings,
        warnings=flags,
    )


def _side_cols(sorted_sample: Sample, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    below = np.flatnonzero(sorted_sample.x < cutoff)
    above = np.flatnonzero(sorted_sample.x >= cutoff)
    return below, above


def sharp_wild_ci(
    sample: Sample, cutoff: float = 0.0, c: float = 1.0, reps: int = 999, level: float = 0.95,
    multiplier: str = "rademacher", seed: SeedLike = 0, *, a: float = 0.5, n_rule: str = "total",
    interval: str = "basic", increasing: tuple[bool, bool] = (True, True),
    workers: int | None = None,
) -> BootstrapReport:
    """Trimmed wild bootstrap interval for the sharp effect.

    The estimate is the boundary-corrected effect at ``a = 1/2``. The basic
    interval is ``[est - q_hi, est - q_lo]`` with ``q`` the empirical
    quantiles of the replicates; ``interval="percentile"`` gives
    ``[est + q_lo, est + q_hi]`` instead.
    """
    flags = _check(reps, level, interval, multiplier)
    s = sample.sorted()
    tf = trimmed_fit(s, cutoff, c, a, n_rule=n_rule, increasing=increasing)
    below, above = _side_cols(s, cutoff)
    base, resid = tf.fitted, tf.residuals

    # below the cutoff the side is mirrored, (x, y) -> (-x, -y), and read as a left boundary
    rev = below[::-1]
    x_mirror = -(s.x[rev] - cutoff)
    mirror_fit = pava_fit(Sample(x_mirror, -s.y[rev]), increasing=increasing[0])
    plans = [
        _plan(s.x[above] - cutoff, base[above], resid[above],
              tf.plus_fit.index_of(tf.e_plus), above, 1.0, increasing[1]),
        _plan(x_mirror, -base[rev], -resid[rev],
              mirror_fit.index_of(tf.e_minus), rev, 1.0, increasing[0]),
    ]
    stars = _replicate(plans, seed, multiplier, s.n, reps, workers)
    reps_values = stars - tf.theta
    settings = {
        "cutoff": cutoff, "c": c, "a": a, "n_rule": n_rule, "multiplier": str(MultiplierKind(multiplier).value),
        "trimmed": True, "seed": _seed_repr(seed), "interval": interval,
        "eval_offsets": (tf.e_minus, tf.e_plus), "side_n": tf.side_n,
    }
    return _report(tf.theta, reps_values, level, interval, settings, flags)


def boundary_wild_ci(
    sample: Sample, c: float = 1.0, reps: int = 999, level: float = 0.95,
    multiplier: str = "rademacher", seed: SeedLike = 0, *, a: float = 0.5, trim: bool = True,
    interval: str = "basic", workers: int | None = None,
) -> BootstrapReport:
    """Trimmed wild bootstrap interval for ``m(0)`` from a sample on ``x >= 0``.

    With ``trim=False`` the bootstrap world uses the unfrozen fit; the
    estimate is still read at ``c * n**(-a)``.
    """
    flags = _check(reps, level, interval, multiplier)
    if sample.x.min() < 0:
        raise InvalidInputError("left-boundary sample must satisfy x >= 0")
    s = sample.sorted()
    offset = correction_offset(c, a, s.n)
    fit = pava_fit(s)
    idx = fit.index_of(offset)
    estimate = float(fit.values[idx])
    base = fit(s.x)
    if trim:
        base = np.where(s.x <= offset, estimate, base)
    resid = s.y - base
    plan = _plan(s.x, base, resid, idx, np.arange(s.n), 1.0, True)
    stars = _replicate([plan], seed, multiplier, s.n, reps, workers)
    settings = {
        "c": c, "a": a, "multiplier": str(MultiplierKind(multiplier).value), "trimmed": trim,
        "seed": _seed_repr(seed), "interval": interval, "eval_offset": offset, "n": s.n,
    }
    return _report(estimate, stars - estimate, level, interval, settings, flags)


def naive_wild_ci(
    sample: Sample, cutoff: float = 0.0, reps: int = 999, level: float = 0.95,
    multiplier: str = "rademacher", seed: SeedLike = 0, *, interval: str = "basic",
    workers: int | None = None,
) -> BootstrapReport:
    """Wild bootstrap without trimming or boundary correction.

    Fits are read at the observations nearest the cutoff and residuals come
    from the unfrozen fits. This bootstrap is inconsistent; it exists to
    show the failure.
    """
    flags = _check(reps, level, interval, multiplier)
    s = sample.sorted()
    sides = _Sides(s, RddConfig(cutoff=cutoff))
    below, above = _side_cols(s, cutoff)
    plus_fit = pava_fit(sides.plus)
    rev = below[::-1]
    x_mirror = -(s.x[rev] - cutoff)
    mirror_fit = pava_fit(Sample(x_mirror, -s.y[rev]))
    base_plus = plus_fit(sides.plus.x)
    base_mirror = mirror_fit(x_mirror)
    estimate = float(plus_fit.values[0] + mirror_fit.values[0])
    plans = [
        _plan(sides.plus.x, base_plus, s.y[above] - base_plus, 0, above, 1.0, True),
        _plan(x_mirror, base_mirror, -s.y[rev] - base_mirror, 0, rev, 1.0, True),
    ]
    stars = _replicate(plans, seed, multiplier, s.n, reps, workers)
    settings = {
        "cutoff": cutoff, "multiplier": str(MultiplierKind(multiplier).value), "trimmed": False,
        "seed": _seed_repr(seed), "interval": interval,
    }
    return _report(estimate, stars - estimate, level, interval, settings, flags)


def _seed_repr(seed: SeedLike):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return int(seed)
