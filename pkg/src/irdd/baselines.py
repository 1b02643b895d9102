"""Unrestricted boundary estimators used as benchmarks: k-NN and local linear."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DegenerateWindowError, InvalidInputError
from .isotonic import Sample
from .rdd import RddEstimate, split_sides

__all__ = [
    "LocalLinearConfig",
    "icbrt",
    "default_k",
    "rule_of_thumb_bandwidth",
    "knn_boundary",
    "local_linear_boundary",
    "sharp_baseline_estimate",
]


def icbrt(n: int) -> int:
    """Exact integer cube root, ``floor(n ** (1/3))`` without rounding error."""
    if n < 0:
        raise ValueError("n must be non-negative")
    r = int(round(n ** (1.0 / 3.0)))
    while r**3 > n:
        r -= 1
    while (r + 1) ** 3 <= n:
        r += 1
    return r


def default_k(n: int) -> int:
    return max(1, icbrt(n))


def knn_boundary(sample: Sample, k: int | None = None, boundary: float = 0.0) -> float:
    """Mean outcome of the ``k`` observations closest to ``boundary``.

    All observations tied with the k-th distance are averaged in, so the
    result never depends on row order.
    """
    n = sample.n
    k = default_k(n) if k is None else int(k)
    if not 1 <= k <= n:
        raise ConfigError(f"k must lie in [1, {n}], got {k}")
    dist = np.abs(sample.x - boundary)
    kth = np.partition(dist, k - 1)[k - 1]
    return float(sample.y[dist <= kth].mean())


@dataclass(frozen=True)
class LocalLinearConfig:
    """Bandwidth for the triangular-kernel local linear fit.

    ``bandwidth=None`` selects :func:`rule_of_thumb_bandwidth` per side.
    """

    bandwidth: float | None = None
    kernel: str = "triangular"

    def __post_init__(self):
        if self.bandwidth is not None and not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.kernel != "triangular":
            raise ConfigError("only the triangular kernel is supported")


def rule_of_thumb_bandwidth(x: np.ndarray) -> float:
    """``1.06 * sd(x) * n**(-1/5)``."""
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    if sd <= 0:
        raise DegenerateWindowError("rule-of-thumb bandwidth needs variation in x")
    return 1.06 * sd * n ** (-0.2)


def local_linear_boundary(
    sample: Sample, cfg: LocalLinearConfig | None = None, boundary: float = 0.0
) -> float:
    """Intercept at ``boundary`` of a triangular-kernel weighted linear fit."""
    cfg = cfg or LocalLinearConfig()
    h = rule_of_thumb_bandwidth(sample.x) if cfg.bandwidth is None else cfg.bandwidth
    u = (sample.x - boundary) / h
    w = np.clip(1.0 - np.abs(u), 0.0, None)
    keep = w > 0
    if np.unique(sample.x[keep]).size < 2:
        raise DegenerateWindowError(
            f"fewer than two distinct x within bandwidth {h:.4g}; use a larger bandwidth"
        )
    xc = sample.x[keep] - boundary
    yk = sample.y[keep]
    wk = w[keep]
    s0, s1, s2 = wk.sum(), (wk * xc).sum(), (wk * xc * xc).sum()
    t0, t1 = (wk * yk).sum(), (wk * xc * yk).sum()
    det = s0 * s2 - s1 * s1
    if det <= 1e-14 * max(s0 * s2, 1e-300):
        raise DegenerateWindowError("singular local design; use a larger bandwidth")
    return float((s2 * t0 - s1 * t1) / det)


METHODS = ("knn", "ll")


def sharp_baseline_estimate(
    sample: Sample, cutoff: float = 0.0, method: str = "knn", *,
    k: int | None = None, bandwidth: float | None = None,
) -> RddEstimate:
    """Jump at the cutoff from two one-sided baseline fits.

    For k-NN the default ``k`` is ``floor(n**(1/3))`` with ``n`` the full
    sample size, applied on each side.
    """
    if method not in METHODS:
        raise InvalidInputError(f"unknown baseline method {method!r}; choose from {METHODS}")
    minus, plus = split_sides(sample, cutoff)
    if method == "knn":
        kk = default_k(sample.n) if k is None else k
        km, kp = min(kk, minus.n), min(kk, plus.n)
        m_minus = knn_boundary(minus, km)
        m_plus = knn_boundary(plus, kp)
        settings = {"method": method, "k": (km, kp)}
    else:
        cfg = LocalLinearConfig(bandwidth)
        m_minus = local_linear_boundary(minus, cfg)
        m_plus = local_linear_boundary(plus, cfg)
        hs = (rule_of_thumb_bandwidth(minus.x), rule_of_thumb_bandwidth(plus.x)) if bandwidth is None else (bandwidth, bandwidth)
        settings = {"method": method, "bandwidth": hs, **asdict(cfg)}
    theta = m_plus - m_minus
    return RddEstimate(
        theta=theta,
        side_n=(minus.n, plus.n),
        eval_points=(cutoff, cutoff),
        m_minus=m_minus,
        m_plus=m_plus,
        naive_theta=theta,
        naive_m_minus=m_minus,
        naive_m_plus=m_plus,
        config={"cutoff": cutoff, **settings},
    )
