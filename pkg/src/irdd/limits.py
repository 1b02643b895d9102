"""Simulated limit laws of boundary-corrected isotonic estimators.

Brownian motion is discretised on a regular grid. The boundary law is the
left derivative at ``t = 1`` of the greatest convex minorant on ``[0, T]``
of ``sqrt(sigma2 / (c f)) W_t + t**2 c m' / 2`` (the parabola is dropped
when the offset decays faster than ``n**(-1/3)``). The interior law is the
Chernoff-type argmax of ``W_t - t**2`` scaled by ``|4 m' sigma2 / f|**(1/3)``.

Batches are generated in fixed-size chunks; chunk ``k`` of a law with code
``L`` uses the substream ``(seed, TAG_LIMIT, L, k)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .errors import ConfigError
from .rdd import RddConfig, sharp_estimate
from .rng import TAG_CLT, TAG_CSTAR, TAG_LIMIT, SeedLike, stream, substream

__all__ = [
    "REGIMES",
    "ProcessGrid",
    "LimitDrawSpec",
    "brownian_grid",
    "chernoff_draw",
    "chernoff_draws",
    "boundary_limit_draw",
    "boundary_limit_draws",
    "limit_draws",
    "irdd_limit_draws",
    "FuzzySide",
    "fuzzy_limit_draws",
    "CltReport",
    "verify_clt",
    "CstarReport",
    "estimate_cstar",
]

REGIMES = ("interior-chernoff", "boundary-a-third", "boundary-fast")
CHERNOFF_STEP, CHERNOFF_HORIZON = 1e-3, 3.0
BOUNDARY_STEP, BOUNDARY_HORIZON = 1e-3, 5.0
CHUNK = 500

_LAW_CODES = {"chernoff": 0, "boundary": 1, "fuzzy": 2}


@dataclass(frozen=True, eq=False)
class ProcessGrid:
    """Process values on ``{0, step, ..., T}`` or ``{-T, ..., T}``."""

    step: float
    horizon: float
    values: np.ndarray
    two_sided: bool = False

    @property
    def t(self) -> np.ndarray:
        m = _n_steps(self.step, self.horizon)
        pos = np.arange(m + 1) * self.step
        return np.concatenate([-pos[:0:-1], pos]) if self.two_sided else pos


@dataclass(frozen=True)
class LimitDrawSpec:
    """Constants at the boundary and the regime of the offset exponent."""

    sigma2: float = 1.0
    density: float = 1.0
    slope: float = 1.0
    c: float = 1.0
    regime: str = "boundary-a-third"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        for name in ("sigma2", "density", "c"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.regime != "boundary-fast" and not (self.slope > 0 and math.isfinite(self.slope)):
            raise ConfigError(f"slope must be positive in regime {self.regime}, got {self.slope}")

    @classmethod
    def for_exponent(cls, a: float, **kw) -> "LimitDrawSpec":
        if not 0 < a < 1:
            raise ConfigError(f"a must lie in (0, 1), got {a}")
        if math.isclose(a, 1.0 / 3.0):
            regime = "boundary-a-third"
        else:
            regime = "interior-chernoff" if a < 1.0 / 3.0 else "boundary-fast"
        return cls(regime=regime, **kw)

    @property
    def noise_scale(self) -> float:
        return math.sqrt(self.sigma2 / (self.c * self.density))

    @property
    def drift(self) -> float:
        """Coefficient of ``t**2``."""
        return self.c * self.slope / 2.0 if self.regime == "boundary-a-third" else 0.0

    @property
    def chernoff_scale(self) -> float:
        return abs(4.0 * self.slope * self.sigma2 / self.density) ** (1.0 / 3.0)


def _n_steps(step: float, horizon: float) -> int:
    if not (step > 0 and horizon > 0):
        raise ConfigError("step and horizon must be positive")
    m = int(round(horizon / step))
    if not math.isclose(m * step, horizon, rel_tol=1e-9):
        raise ConfigError(f"horizon {horizon} is not a multiple of step {step}")
    return m


def _bm_paths(rng: np.random.Generator, count: int, m: int, step: float) -> np.ndarray:
    """``count`` Brownian paths at ``0, step, ..., m*step`` (first column zero)."""
    out = np.zeros((count, m + 1))
    np.cumsum(rng.standard_normal((count, m)), axis=1, out=out[:, 1:])
    out[:, 1:] *= math.sqrt(step)
    return out


def brownian_grid(rng: np.random.Generator, step: float = BOUNDARY_STEP, horizon: float = BOUNDARY_HORIZON,
                  two_sided: bool = False) -> ProcessGrid:
    """One Brownian path; two-sided paths glue two independent halves at zero."""
    m = _n_steps(step, horizon)
    if not two_sided:
        return ProcessGrid(step, horizon, _bm_paths(rng, 1, m, step)[0])
    halves = _bm_paths(rng, 2, m, step)
    return ProcessGrid(step, horizon, np.concatenate([halves[1, :0:-1], halves[0]]), True)


def _chernoff_argmax(rng, count, step, horizon, noise=True) -> np.ndarray:
    m = _n_steps(step, horizon)
    pos = np.arange(m + 1) * step
    t = np.concatenate([-pos[:0:-1], pos])
    if noise:
        right = _bm_paths(rng, count, m, step)
        left = _bm_paths(rng, count, m, step)
        paths = np.concatenate([left[:, :0:-1], right], axis=1)
    else:
        paths = np.zeros((count, t.size))
    return t[np.argmax(paths - t * t, axis=1)]


def chernoff_draw(rng: np.random.Generator, step: float = CHERNOFF_STEP,
                  horizon: float = CHERNOFF_HORIZON, *, noise: bool = True) -> float:
    """Grid location of the maximum of ``W_t - t**2`` over ``[-T, T]``.

    ``noise=False`` replaces the Brownian motion by zero.
    """
    return float(_chernoff_argmax(rng, 1, step, horizon, noise)[0])


def _boundary_slopes(rng, count, spec: LimitDrawSpec, step, horizon, at=1.0) -> np.ndarray:
    m = _n_steps(step, horizon)
    q = int(round(at / step))
    if not (1 <= q <= m and math.isclose(q * step, at, rel_tol=1e-9)):
        raise ConfigError(f"evaluation point {at} must be a grid point in (0, {horizon}]")
    t = np.arange(m + 1) * step
    paths = spec.noise_scale * _bm_paths(rng, count, m, step) + spec.drift * t * t
    return _kernels.grid_gcm_slopes(paths, step, np.array([q], dtype=np.int64))[:, 0]


def boundary_limit_draw(spec: LimitDrawSpec, rng: np.random.Generator, step: float = BOUNDARY_STEP,
                        horizon: float = BOUNDARY_HORIZON) -> float:
    """One draw of the boundary law at ``t = 1``."""
    if spec.regime == "interior-chernoff":
        return spec.chernoff_scale * chernoff_draw(rng)
    return float(_boundary_slopes(rng, 1, spec, step, horizon)[0])


def _chunked(fn, seed: SeedLike, law: int, reps: int, workers: int | None, args=()) -> np.ndarray:
    if reps < 1:
        raise ConfigError("reps must be positive")
    jobs = [(substream(seed, TAG_LIMIT, law, k), min(CHUNK, reps - lo), *args)
            for k, lo in enumerate(range(0, reps, CHUNK))]
    if workers is None or workers <= 1 or len(jobs) == 1:
        parts = [fn(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, *zip(*jobs)))
    return np.concatenate(parts)


def _chernoff_job(ss, count, step, horizon):
    return _chernoff_argmax(stream(ss), count, step, horizon)


def _boundary_job(ss, count, spec, step, horizon):
    return _boundary_slopes(stream(ss), count, spec, step, horizon)


def chernoff_draws(seed: SeedLike, reps: int, step: float = CHERNOFF_STEP,
                   horizon: float = CHERNOFF_HORIZON, *, workers: int | None = None) -> np.ndarray:
    return _chunked(_chernoff_job, seed, _LAW_CODES["chernoff"], reps, workers, (step, horizon))


def boundary_limit_draws(spec: LimitDrawSpec, seed: SeedLike, reps: int, step: float = BOUNDARY_STEP,
                         horizon: float = BOUNDARY_HORIZON, *, workers: int | None = None) -> np.ndarray:
    """Draws of the boundary law; the same seed reuses the same Brownian paths."""
    return _chunked(_boundary_job, seed, _LAW_CODES["boundary"], reps, workers, (spec, step, horizon))


def limit_draws(spec: LimitDrawSpec, seed: SeedLike, reps: int, *, workers: int | None = None) -> np.ndarray:
    """Draws of the limit law for the regime in ``spec`` at default grids."""
    if spec.regime == "interior-chernoff":
        return spec.chernoff_scale * chernoff_draws(seed, reps, workers=workers)
    return boundary_limit_draws(spec, seed, reps, workers=workers)


def irdd_limit_draws(plus: LimitDrawSpec, minus: LimitDrawSpec, seed: SeedLike, reps: int, *,
                     workers: int | None = None) -> np.ndarray:
    """Draws of the sharp effect's limit law.

    ``minus`` describes the side below the cutoff reflected through it, so
    its slope is the left derivative of the mean there. The law is
    ``D_plus + D_minus`` with independent draws.
    """
    d_plus = boundary_limit_draws(plus, substream(seed, 0), reps, workers=workers)
    d_minus = boundary_limit_draws(minus, substream(seed, 1), reps, workers=workers)
    return d_plus + d_minus


@dataclass(frozen=True)
class FuzzySide:
    """Constants for one side of the cutoff in the original orientation.

    ``cov`` is the conditional covariance of the outcome noise with the
    treatment noise ``D - p(X)`` at the cutoff.
    """

    mean: float
    slope: float
    sigma2: float
    prob: float
    prob_slope: float
    cov: float
    density: float

    def processes(self, c: float) -> tuple[float, float, float, float, float]:
        """``(corr, w_scale, w_drift, b_scale, b_drift)``."""
        p = self.prob
        if not 0 < p < 1:
            raise ConfigError("treatment probabilities must lie strictly inside (0, 1)")
        corr = self.cov / math.sqrt(self.sigma2 * p * (1.0 - p))
        if abs(corr) > 1:
            raise ConfigError(f"implied correlation {corr:.4g} is outside [-1, 1]")
        return (
            corr,
            math.sqrt(self.sigma2 / (c * self.density)),
            c * self.slope / 2.0,
            math.sqrt(p * (1.0 - p) / (c * self.density)),
            c * self.prob_slope / 2.0,
        )


def _fuzzy_job(ss, count, consts, step, horizon):
    rng = stream(ss)
    m = _n_steps(step, horizon)
    t2 = (np.arange(m + 1) * step) ** 2
    q = np.array([int(round(1.0 / step))], dtype=np.int64)
    xi = np.zeros((2, count))
    # the side below the cutoff is reflected; reflection keeps the correlation
    # and turns its contribution to both differences into a plus sign
    for corr, w_scale, w_drift, b_scale, b_drift in consts:
        w = _bm_paths(rng, count, m, step)
        b = corr * w + math.sqrt(1.0 - corr * corr) * _bm_paths(rng, count, m, step)
        xi[0] += _kernels.grid_gcm_slopes(w_scale * w + w_drift * t2, step, q)[:, 0]
        xi[1] += _kernels.grid_gcm_slopes(b_scale * b + b_drift * t2, step, q)[:, 0]
    return xi.T


def fuzzy_limit_draws(
    plus: FuzzySide, minus: FuzzySide, c: float, seed: SeedLike, reps: int,
    step: float = BOUNDARY_STEP, horizon: float = BOUNDARY_HORIZON, *, workers: int | None = None,
) -> np.ndarray:
    """Draws of ``xi1 / dp - dm / dp**2 * xi2``, the fuzzy effect's limit law.

    ``xi1`` and ``xi2`` are the sharp-type laws of the outcome and of the
    treatment indicator, built from Brownian motions that are correlated
    within a side and independent across sides.
    """
    dp = plus.prob - minus.prob
    if abs(dp) < 1e-8:
        raise ConfigError("treatment probabilities must jump at the cutoff")
    consts = [plus.processes(c), minus.processes(c)]
    xi = _chunked(_fuzzy_job, seed, _LAW_CODES["fuzzy"], reps, workers, (consts, step, horizon))
    dm = plus.mean - minus.mean
    return xi[:, 0] / dp - dm / dp**2 * xi[:, 1]


@dataclass(frozen=True, eq=False)
class CltReport:
    """KS distance between scaled estimates and limit draws.

    ``ks_reference`` compares two independent limit batches of the same
    size and shows the distance expected from sampling noise alone.
    """

    ks: float
    pvalue: float
    ks_reference: float
    n: int
    reps: int
    settings: dict
    estimates: np.ndarray = field(repr=False)
    draws: np.ndarray = field(repr=False)


def _clt_block(spec, n, cfg, seed, lo, hi):
    from .mc import dgp_sample

    out = np.empty(hi - lo)
    for i, r in enumerate(range(lo, hi)):
        sample = dgp_sample(spec, n, stream(seed, TAG_CLT, spec.seed_key, n, r))
        out[i] = sharp_estimate(sample, cfg).theta
    return out


def verify_clt(dgp, a: float = 1.0 / 3.0, c: float = 1.0, n: int = 5000, reps: int = 2000,
               seed: SeedLike = 0, *, workers: int | None = None) -> CltReport:
    """Compare ``n**(1/3) (theta_hat - theta)`` with its simulated limit law.

    Uses the DGP's oracle constants and the full sample size in the offset,
    so the x-density is the unconditional one.
    """
    from .mc import _chunks, _map_chunks, get_dgp

    if not math.isclose(a, 1.0 / 3.0):
        raise ConfigError("the sharp limit law is simulated for a = 1/3 only")
    spec = get_dgp(dgp)
    o = spec.oracle
    plus = LimitDrawSpec(o.sigma2_plus, o.density, o.slope_plus, c)
    minus = LimitDrawSpec(o.sigma2_minus, o.density, o.slope_minus, c)
    cfg = RddConfig(c=c, a=a)
    jobs = [(spec, n, cfg, seed, lo, hi) for lo, hi in _chunks(reps, 100)]
    theta = np.concatenate(_map_chunks(_clt_block, jobs, workers))
    scaled = n ** (1.0 / 3.0) * (theta - spec.theta)
    draws = irdd_limit_draws(plus, minus, substream(seed, TAG_CLT, 0), reps, workers=workers)
    reference = irdd_limit_draws(plus, minus, substream(seed, TAG_CLT, 1), reps, workers=workers)
    test = stats.ks_2samp(scaled, draws)
    settings = {"dgp": spec.label, "a": a, "c": c, "oracle": asdict(o)}
    return CltReport(float(test.statistic), float(test.pvalue),
                     float(stats.ks_2samp(draws, reference).statistic), n, reps, settings, scaled, draws)


@dataclass(frozen=True, eq=False)
class CstarReport:
    """Minimiser of ``c -> E|D(c)|**2`` with the grid it was found on."""

    cstar: float
    objective_min: float
    c_grid: np.ndarray = field(repr=False)
    objective: np.ndarray = field(repr=False)
    std_error: np.ndarray = field(repr=False)
    reps: int = 0
    step: float = BOUNDARY_STEP
    horizon: float = BOUNDARY_HORIZON

    def to_dict(self) -> dict:
        return {
            "cstar": self.cstar, "objective_min": self.objective_min, "reps": self.reps,
            "step": self.step, "horizon": self.horizon,
            "c_grid": self.c_grid.tolist(), "objective": self.objective.tolist(),
            "std_error": self.std_error.tolist(),
        }


def _cstar_job(ss, count, query, step, horizon):
    m = _n_steps(step, horizon)
    t = np.arange(m + 1) * step
    paths = _bm_paths(stream(ss), count, m, step) + t * t
    d = _kernels.grid_gcm_slopes(paths, step, query)
    return np.stack([(d * d).sum(axis=0), (d**4).sum(axis=0)])


def default_c_grid(step: float = BOUNDARY_STEP) -> np.ndarray:
    return np.round(np.arange(0.1, 1.0 + 1e-9, 0.005) / step) * step


def estimate_cstar(seed: SeedLike, reps: int = 100_000, step: float = BOUNDARY_STEP,
                   horizon: float = BOUNDARY_HORIZON, c_grid=None, *,
                   workers: int | None = None) -> CstarReport:
    """Minimise the second moment of the convex-minorant slope over ``c_grid``.

    The functional is the left derivative at ``c`` of the greatest convex
    minorant of ``W_t + t**2`` on ``[0, T]``; all grid values of ``c`` are
    read from the same paths.
    """
    if reps < 2:
        raise ConfigError("need at least two paths")
    grid = default_c_grid(step) if c_grid is None else np.asarray(c_grid, dtype=float)
    query = np.round(grid / step).astype(np.int64)
    m = _n_steps(step, horizon)
    if np.any(query < 1) or np.any(query > m) or np.any(np.diff(query) <= 0):
        raise ConfigError("c grid must be increasing and inside (0, horizon]")
    jobs = [(substream(seed, TAG_CSTAR, k), min(CHUNK, reps - lo), query, step, horizon)
            for k, lo in enumerate(range(0, reps, CHUNK))]
    if workers is None or workers <= 1 or len(jobs) == 1:
        parts = [_cstar_job(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_cstar_job, *zip(*jobs)))
    s2, s4 = np.sum(parts, axis=0)
    objective = s2 / reps
    std_error = np.sqrt(np.maximum(s4 / reps - objective**2, 0.0) / reps)
    best = int(np.argmin(objective))
    grid_used = query * step
    return CstarReport(float(grid_used[best]), float(objective[best]), grid_used, objective, std_error,
                       reps, step, horizon)
