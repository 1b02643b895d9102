"""Monte Carlo designs and the replication harness.

Data are ``Y = m(X) + theta * 1{X >= 0} + sigma(X) * eps`` with
``X = 2 * Beta(a, a) - 1`` and standard normal ``eps``. Replication ``r`` of
cell ``(dgp, n)`` draws from the substream ``(seed, TAG_MC, dgp, n, r)``, so
every estimator in a table sees the same samples and results do not depend
on how replications are spread over workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import sharp_baseline_estimate
from .bootstrap import sharp_wild_ci
from .errors import ConfigError, DegenerateWindowError, InsufficientDataError
from .isotonic import Sample
from .rdd import CSTAR, RddConfig, sharp_estimate, sharp_optimal_estimate
from .rng import TAG_COVERAGE, TAG_MC, SeedLike, stream, substream

__all__ = [
    "OracleConstants",
    "DgpSpec",
    "DGPS",
    "get_dgp",
    "mean_function",
    "dgp_sample",
    "McRow",
    "CoverageRow",
    "McReport",
    "ESTIMATORS",
    "mc_table",
    "coverage_table",
]

_E125 = math.exp(-1.25)


def _m_exp(x):
    return np.exp(0.25 * x)


def _m_cubic(x):
    return x**3 + 0.25 * x


def _m_steep(x):
    return np.where(x >= 0, 1.0 - np.exp(4.0 * x), 0.2 * x)


def _m_bump(x):
    upper = -_E125 + np.exp(-((x - 0.5) ** 2))
    middle = -(_E125 - np.exp(-5.0 * (x - 0.5) ** 2))
    return np.where(x >= 0.5, upper, np.where(x >= 0, middle, 0.2 * x))


def _m_constant(x):
    return np.zeros_like(x)


MEAN_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp": _m_exp,
    "cubic": _m_cubic,
    "steep": _m_steep,
    "bump": _m_bump,
    "constant": _m_constant,
}

# one-sided derivatives at zero: (below, above)
_SLOPES = {
    "exp": (0.25, 0.25),
    "cubic": (0.25, 0.25),
    "steep": (0.2, -4.0),
    "bump": (0.2, 5.0 * _E125),
    "constant": (0.0, 0.0),
}

X_LAWS = {"beta22": 2.0, "beta05": 0.5}
# density of 2 * Beta(a, a) - 1 at zero
_DENSITY_AT_ZERO = {"beta22": 0.75, "beta05": 1.0 / math.pi}

SIGMA_FUNCTIONS = ("homoskedastic", "heteroskedastic", "zero")


def mean_function(name: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return MEAN_FUNCTIONS[name]
    except KeyError:
        raise ConfigError(f"unknown mean function {name!r}; choose from {sorted(MEAN_FUNCTIONS)}") from None


def _sigma(name: str, x: np.ndarray) -> np.ndarray | float:
    if name == "homoskedastic":
        return 1.0
    if name == "heteroskedastic":
        return np.sqrt(x + 1.0)
    return 0.0


@dataclass(frozen=True)
class OracleConstants:
    """Slopes, noise variance and x-density at the cutoff."""

    slope_minus: float
    slope_plus: float
    sigma2_minus: float
    sigma2_plus: float
    density: float

    def side(self, which: str) -> tuple[float, float, float]:
        """``(slope, sigma2, density)`` for ``"minus"`` or ``"plus"``."""
        if which == "minus":
            return self.slope_minus, self.sigma2_minus, self.density
        return self.slope_plus, self.sigma2_plus, self.density


@dataclass(frozen=True)
class DgpSpec:
    id: int | str
    mean_fn: str
    x_law: str
    sigma_fn: str = "homoskedastic"
    theta: float = 1.0

    def __post_init__(self):
        mean_function(self.mean_fn)
        if self.x_law not in X_LAWS:
            raise ConfigError(f"unknown x law {self.x_law!r}; choose from {sorted(X_LAWS)}")
        if self.sigma_fn not in SIGMA_FUNCTIONS:
            raise ConfigError(f"unknown sigma function {self.sigma_fn!r}; choose from {SIGMA_FUNCTIONS}")
        if not math.isfinite(self.theta):
            raise ConfigError("theta must be finite")

    @property
    def oracle(self) -> OracleConstants:
        s2 = 0.0 if self.sigma_fn == "zero" else 1.0  # sqrt(x + 1) squared is 1 at zero
        lo, hi = _SLOPES[self.mean_fn]
        return OracleConstants(lo, hi, s2, s2, _DENSITY_AT_ZERO[self.x_law])

    def m(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return mean_function(self.mean_fn)(x) + self.theta * (x >= 0)

    @property
    def seed_key(self) -> int:
        """Integer used in seed derivation; string ids hash to a stable value."""
        if isinstance(self.id, (int, np.integer)):
            return int(self.id)
        return zlib.crc32(str(self.id).encode()) + 2**32

    def with_(self, **changes) -> "DgpSpec":
        return replace(self, **changes)

    @property
    def label(self) -> str:
        return f"{self.id}" if self.sigma_fn == "homoskedastic" else f"{self.id}-{self.sigma_fn}"


DGPS: dict[int, DgpSpec] = {
    1: DgpSpec(1, "exp", "beta22"),
    2: DgpSpec(2, "exp", "beta05"),
    3: DgpSpec(3, "cubic", "beta22"),
    4: DgpSpec(4, "cubic", "beta05"),
    5: DgpSpec(5, "steep", "beta22"),
    6: DgpSpec(6, "steep", "beta05"),
    7: DgpSpec(7, "bump", "beta22"),
    8: DgpSpec(8, "bump", "beta05"),
}


def get_dgp(dgp: int | DgpSpec, sigma_fn: str | None = None) -> DgpSpec:
    if isinstance(dgp, DgpSpec):
        spec = dgp
    else:
        try:
            spec = DGPS[int(dgp)]
        except (KeyError, ValueError):
            raise ConfigError(f"unknown DGP id {dgp!r}; choose from {sorted(DGPS)}") from None
    return spec if sigma_fn is None else spec.with_(sigma_fn=sigma_fn)


def dgp_sample(spec: DgpSpec, n: int, rng: np.random.Generator) -> Sample:
    """One sample of size ``n``; ``d = 1{x >= 0}``."""
    if n < 1:
        raise ConfigError("n must be positive")
    shape = X_LAWS[spec.x_law]
    x = 2.0 * rng.beta(shape, shape, n) - 1.0
    eps = rng.standard_normal(n)
    y = spec.m(x) + _sigma(spec.sigma_fn, x) * eps
    return Sample(x, y, (x >= 0).astype(float))


# estimators map (sample, spec) to a point estimate of theta
Estimator = Callable[[Sample, DgpSpec], float]


def _irdd(sample, spec):
    return sharp_estimate(sample, RddConfig()).theta


def _irdd_naive(sample, spec):
    return sharp_estimate(sample, RddConfig()).naive_theta


def _knn(sample, spec):
    return sharp_baseline_estimate(sample, method="knn").theta


def _ll(sample, spec):
    return sharp_baseline_estimate(sample, method="ll").theta


def _irdd_opt(sample, spec):
    o = spec.oracle
    return sharp_optimal_estimate(sample, o.side("minus"), o.side("plus"), cstar=CSTAR).theta


def _oracle(sample, spec):
    return spec.theta


ESTIMATORS: dict[str, Estimator] = {
    "irdd": _irdd,
    "irdd_naive": _irdd_naive,
    "knn": _knn,
    "ll": _ll,
    "irdd_opt": _irdd_opt,
    "oracle": _oracle,
}


def _resolve_estimators(estimators) -> dict[str, Estimator]:
    if isinstance(estimators, Mapping):
        return dict(estimators)
    out = {}
    for name in estimators:
        if name not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}")
        out[name] = ESTIMATORS[name]
    return out


def _check_compatible(spec: DgpSpec, names) -> None:
    if "irdd_opt" in names:
        o = spec.oracle
        if min(o.slope_minus, o.slope_plus, o.sigma2_minus, o.sigma2_plus) <= 0:
            raise ConfigError(
                f"irdd_opt needs positive oracle slopes and variances; DGP {spec.label} has {o}"
            )


@dataclass(frozen=True)
class McRow:
    dgp: str
    n: int
    estimator: str
    bias: float
    var: float
    mse: float
    reps: int
    skipped: int


@dataclass(frozen=True)
class CoverageRow:
    dgp: str
    n: int
    c: float
    coverage: float
    length: float
    reps: int
    skipped: int


@dataclass(frozen=True)
class McReport:
    rows: tuple
    seed: int | None
    settings: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    def row(self, **keys):
        """The unique row whose fields equal ``keys``."""
        if "dgp" in keys:
            keys["dgp"] = str(keys["dgp"])
        hits = [r for r in self.rows if all(getattr(r, k) == v for k, v in keys.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {keys}")
        return hits[0]

    def to_csv(self) -> str:
        records = self.to_records()
        buf = io.StringIO()
        if records:
            w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(records)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "settings": self.settings, "rows": self.to_records()},
            indent=2, sort_keys=True,
        )


_SKIPPABLE = (InsufficientDataError, DegenerateWindowError)


def _estimate_block(spec, n, names, fns, seed, lo, hi):
    out = np.full((hi - lo, len(names)), np.nan)
    for i, r in enumerate(range(lo, hi)):
        sample = dgp_sample(spec, n, stream(seed, TAG_MC, spec.seed_key, n, r))
        for j, fn in enumerate(fns):
            try:
                out[i, j] = fn(sample, spec)
            except _SKIPPABLE:
                pass
    return out


def _chunks(reps: int, size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, reps)) for lo in range(0, reps, size)]


def _map_chunks(fn, args_list, workers):
    if workers is None or workers <= 1 or len(args_list) == 1:
        return [fn(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args) for args in args_list]
        return [f.result() for f in futures]


def _summarize(errors: np.ndarray) -> tuple[float, float, float, int]:
    ok = errors[np.isfinite(errors)]
    skipped = int(errors.size - ok.size)
    if ok.size == 0:
        return math.nan, math.nan, math.nan, skipped
    bias = math.fsum(ok) / ok.size
    var = math.fsum((ok - bias) ** 2) / ok.size
    return bias, var, bias * bias + var, skipped


def _check_reps(reps: int, minimum: int = 100) -> None:
    if reps < minimum:
        raise ConfigError(f"reps must be at least {minimum}, got {reps}")


def mc_table(
    dgps: Sequence[int | DgpSpec], sizes: Sequence[int], estimators=("irdd", "knn", "ll"),
    reps: int = 1000, seed: int = 0, *, sigma_fn: str | None = None, workers: int | None = None,
    chunk: int = 100,
) -> McReport:
    """Bias, variance (ddof 0) and MSE of ``theta_hat - theta`` per cell.

    ``estimators`` is a list of names from :data:`ESTIMATORS` or a mapping
    from names to callables ``(sample, spec) -> float``. Replications with
    an empty side (or a degenerate local window) are counted as skipped.
    """
    _check_reps(reps)
    fns = _resolve_estimators(estimators)
    names = list(fns)
    specs = [get_dgp(d, sigma_fn) for d in dgps]
    for spec in specs:
        _check_compatible(spec, names)
    rows = []
    for spec in specs:
        for n in sizes:
            jobs = [(spec, int(n), names, [fns[k] for k in names], seed, lo, hi) for lo, hi in _chunks(reps, chunk)]
            est = np.concatenate(_map_chunks(_estimate_block, jobs, workers))
            for j, name in enumerate(names):
                bias, var, mse, skipped = _summarize(est[:, j] - spec.theta)
                rows.append(McRow(spec.label, int(n), name, bias, var, mse, reps, skipped))
    settings = {"dgps": [asdict(s) for s in specs], "sizes": list(map(int, sizes)),
                "estimators": names, "reps": reps}
    return McReport(tuple(rows), seed, settings)


def _coverage_block(spec, n, c_grid, boot_reps, level, multiplier, seed, lo, hi):
    out = np.full((hi - lo, len(c_grid), 2), np.nan)
    for i, r in enumerate(range(lo, hi)):
        rep_seed = substream(seed, TAG_COVERAGE, spec.seed_key, n, r)
        sample = dgp_sample(spec, n, stream(rep_seed))
        for j, c in enumerate(c_grid):
            try:
                rep = sharp_wild_ci(sample, 0.0, c, boot_reps, level, multiplier, substream(rep_seed, j))
            except _SKIPPABLE:
                continue
            lo_ci, hi_ci = rep.ci
            out[i, j] = (float(lo_ci <= spec.theta <= hi_ci), hi_ci - lo_ci)
    return out


def coverage_table(
    dgps: Sequence[int | DgpSpec], sizes: Sequence[int], c_grid: Sequence[float] = (1.0,),
    reps: int = 1000, boot_reps: int = 499, level: float = 0.95, seed: int = 0, *,
    multiplier: str = "rademacher", sigma_fn: str | None = None, workers: int | None = None,
    chunk: int = 50,
) -> McReport:
    """Coverage rate and mean length of the trimmed wild bootstrap interval."""
    _check_reps(reps)
    specs = [get_dgp(d, sigma_fn) for d in dgps]
    c_grid = [float(c) for c in c_grid]
    rows = []
    for spec in specs:
        for n in sizes:
            jobs = [(spec, int(n), c_grid, boot_reps, level, multiplier, seed, lo, hi)
                    for lo, hi in _chunks(reps, chunk)]
            res = np.concatenate(_map_chunks(_coverage_block, jobs, workers))
            for j, c in enumerate(c_grid):
                hit, length = res[:, j, 0], res[:, j, 1]
                ok = np.isfinite(hit)
                k = int(ok.sum())
                cov = math.fsum(hit[ok]) / k if k else math.nan
                mean_len = math.fsum(length[ok]) / k if k else math.nan
                rows.append(CoverageRow(spec.label, int(n), c, cov, mean_len, reps, reps - k))
    settings = {"dgps": [asdict(s) for s in specs], "sizes": list(map(int, sizes)), "c_grid": c_grid,
                "reps": reps, "boot_reps": boot_reps, "level": level, "multiplier": multiplier}
    return McReport(tuple(rows), seed, settings)

