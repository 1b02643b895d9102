import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from irdd.errors import ConfigError
from irdd.limits import (
    FuzzySide,
    LimitDrawSpec,
    boundary_limit_draw,
    boundary_limit_draws,
    brownian_grid,
    chernoff_draw,
    chernoff_draws,
    estimate_cstar,
    fuzzy_limit_draws,
    irdd_limit_draws,
    limit_draws,
    verify_clt,
)


def hull_left_slope_oracle(t, v, at):
    """Left slope at ``t[at]`` of the lower convex hull, by brute force over segments."""
    best = -math.inf
    # the hull value at t[at] is the max over chords from i <= at to j >= at lying below all points
    n = len(t)
    hull = np.empty(n)
    for k in range(n):
        h = v[k]
        for i in range(k + 1):
            for j in range(k, n):
                if i == j:
                    continue
                lam = (t[k] - t[i]) / (t[j] - t[i])
                chord = (1 - lam) * v[i] + lam * v[j]
                slope = (v[j] - v[i]) / (t[j] - t[i])
                if np.all(v[i:j + 1] >= v[i] + slope * (t[i:j + 1] - t[i]) - 1e-12):
                    h = min(h, chord)
        hull[k] = h
    best = (hull[at] - hull[at - 1]) / (t[at] - t[at - 1])
    return best


class TestGrid:
    def test_increment_variance(self):
        rng = np.random.default_rng(0)
        step = 0.01
        paths = np.stack([brownian_grid(rng, step, 1.0).values for _ in range(4000)])
        assert np.all(paths[:, 0] == 0)
        var = np.diff(paths, axis=1).var(axis=0)
        assert np.all(np.abs(var / step - 1) < 0.1)
        assert abs(var.mean() / step - 1) < 0.05

    def test_two_sided(self):
        g = brownian_grid(np.random.default_rng(1), 0.1, 1.0, two_sided=True)
        assert g.values.size == g.t.size == 21
        assert g.values[10] == 0 and g.t[10] == 0

    def test_horizon_must_be_multiple(self):
        with pytest.raises(ConfigError):
            brownian_grid(np.random.default_rng(0), 0.3, 1.0)


class TestChernoff:
    def test_zero_noise(self):
        assert chernoff_draw(np.random.default_rng(0), noise=False) == 0.0

    def test_symmetric(self):
        d = chernoff_draws(3, 100_000)
        assert abs(d.mean()) < 0.02

    def test_chunks_and_workers(self):
        a = chernoff_draws(5, 1200)
        np.testing.assert_array_equal(a, chernoff_draws(5, 1200, workers=2))
        np.testing.assert_array_equal(a[:500], chernoff_draws(5, 500))

    def test_horizon_sufficiency(self):
        rng = np.random.default_rng(8)
        step, same = 1e-3, 0
        for _ in range(500):
            g = brownian_grid(rng, step, 6.0, two_sided=True)
            score = g.values - g.t**2
            inner = np.abs(g.t) <= 3.0 + 1e-9
            same += g.t[np.argmax(score)] == g.t[inner][np.argmax(score[inner])]
        assert same / 500 >= 0.99

    @pytest.mark.slow
    def test_sd_matches_dense_grid(self):
        coarse = chernoff_draws(11, 20_000)
        dense = chernoff_draws(12, 20_000, step=1e-4)
        print(f"chernoff sd coarse {coarse.std():.4f} dense {dense.std():.4f}")
        assert coarse.std() == pytest.approx(dense.std(), rel=0.02)

    def test_interior_scale_law(self):
        s1 = LimitDrawSpec(sigma2=1, density=1, slope=1, regime="interior-chernoff")
        s2 = LimitDrawSpec(sigma2=3, density=0.5, slope=2, regime="interior-chernoff")
        d1, d2 = limit_draws(s1, 1, 20_000), limit_draws(s2, 2, 20_000)
        ratio = d2.std() / d1.std()
        assert ratio == pytest.approx(s2.chernoff_scale / s1.chernoff_scale, rel=0.05)
        assert s2.chernoff_scale == pytest.approx(48 ** (1 / 3))


class TestBoundary:
    def test_parabola_only(self):
        spec = LimitDrawSpec(sigma2=1e-14, density=1, slope=2.0, c=1.5)
        d = boundary_limit_draws(spec, 0, 50)
        # slope at 1 of the discretised c m' t^2 / 2 is c m' (1 - step / 2)
        assert np.allclose(d, 3.0, atol=3e-3)

    def test_scale_identity(self):
        a = LimitDrawSpec(sigma2=1.0, density=1.0, slope=0.7, c=1.0)
        b = LimitDrawSpec(sigma2=2.0, density=2.0, slope=0.7, c=1.0)
        assert a.noise_scale == b.noise_scale
        np.testing.assert_array_equal(boundary_limit_draws(a, 4, 300), boundary_limit_draws(b, 4, 300))

    def test_against_bruteforce_hull(self):
        spec = LimitDrawSpec(sigma2=1, density=1, slope=1, c=1)
        step, horizon = 0.1, 2.0
        rng_a, rng_b = np.random.default_rng(2), np.random.default_rng(2)
        got = boundary_limit_draw(spec, rng_a, step, horizon)
        m = 20
        t = np.arange(m + 1) * step
        w = np.zeros(m + 1)
        w[1:] = np.cumsum(rng_b.standard_normal((1, m)), axis=1)[0] * math.sqrt(step)
        assert got == pytest.approx(hull_left_slope_oracle(t, w + 0.5 * t * t, 10), abs=1e-9)

    def test_monotone_in_evaluation_point(self):
        from irdd import _kernels

        rng = np.random.default_rng(6)
        step, m = 1e-2, 500
        t = np.arange(m + 1) * step
        path = np.concatenate([[0.0], np.cumsum(rng.standard_normal(m)) * 0.1]) + t * t
        q = np.arange(1, m + 1, dtype=np.int64)
        slopes = _kernels.grid_gcm_slopes(path[None, :], step, q)[0]
        assert np.all(np.diff(slopes) >= -1e-12)

    def test_driftless_mean_is_negative(self):
        # on [0, inf) the convex minorant of a driftless Brownian path has
        # non-positive slopes, so the law at t = 1 is shifted below zero
        d = boundary_limit_draws(LimitDrawSpec(regime="boundary-fast"), 9, 20_000)
        se = d.std() / math.sqrt(d.size)
        assert d.mean() < -3 * se

    def test_for_exponent(self):
        assert LimitDrawSpec.for_exponent(1 / 3).regime == "boundary-a-third"
        assert LimitDrawSpec.for_exponent(0.5).regime == "boundary-fast"
        assert LimitDrawSpec.for_exponent(0.2).regime == "interior-chernoff"
        assert LimitDrawSpec(regime="boundary-fast").drift == 0.0

    @pytest.mark.parametrize("kw", [dict(sigma2=0), dict(density=-1), dict(c=0), dict(slope=0), dict(regime="x")])
    def test_spec_errors(self, kw):
        with pytest.raises(ConfigError):
            LimitDrawSpec(**kw)

    def test_evaluation_point_on_grid(self):
        with pytest.raises(ConfigError):
            boundary_limit_draw(LimitDrawSpec(), np.random.default_rng(0), step=0.3, horizon=0.9)


class TestSharpAndFuzzy:
    def test_irdd_law_is_sum_of_sides(self):
        p = LimitDrawSpec(slope=0.5)
        m = LimitDrawSpec(slope=0.25, sigma2=2)
        d = irdd_limit_draws(p, m, 3, 400)
        assert d.shape == (400,)
        assert np.all(np.isfinite(d))

    def test_fuzzy_reduces_to_sharp_when_treatment_noise_vanishes(self):
        plus = FuzzySide(mean=2.0, slope=0.5, sigma2=1.0, prob=0.999999, prob_slope=1e-9, cov=0.0, density=1.0)
        minus = FuzzySide(mean=1.0, slope=0.5, sigma2=1.0, prob=0.000001, prob_slope=1e-9, cov=0.0, density=1.0)
        d = fuzzy_limit_draws(plus, minus, 1.0, 0, 2000)
        sharp = irdd_limit_draws(LimitDrawSpec(slope=0.5), LimitDrawSpec(slope=0.5), 1, 2000)
        assert ks_2samp(d, sharp).statistic < 0.06

    def test_fuzzy_errors(self):
        side = FuzzySide(1.0, 0.5, 1.0, 0.5, 0.1, 0.0, 1.0)
        with pytest.raises(ConfigError):
            fuzzy_limit_draws(side, side, 1.0, 0, 10)
        bad = FuzzySide(1.0, 0.5, 1.0, 0.5, 0.1, 5.0, 1.0)
        with pytest.raises(ConfigError):
            bad.processes(1.0)


class TestClt:
    def test_identical_samples(self):
        rep = verify_clt(1, n=200, reps=100, seed=0)
        assert ks_2samp(rep.draws, rep.draws).statistic == 0
        assert rep.estimates.size == rep.draws.size == 100

    def test_regime_mismatch(self):
        with pytest.raises(ConfigError):
            verify_clt(1, a=0.5)

    def test_reproducible(self):
        a, b = verify_clt(1, n=200, reps=150, seed=3), verify_clt(1, n=200, reps=150, seed=3)
        assert a.ks == b.ks


class TestCstar:
    def test_objective_finite_and_positive(self):
        rep = estimate_cstar(0, reps=2000, c_grid=[0.1, 1.0, 3.0])
        assert np.all(np.isfinite(rep.objective)) and np.all(rep.objective > 0)

    def test_fresh_seed_agrees(self):
        grid = [0.2, 0.35, 0.6]
        a = estimate_cstar(1, reps=4000, c_grid=grid)
        b = estimate_cstar(2, reps=4000, c_grid=grid)
        band = 4 * np.hypot(a.std_error, b.std_error)
        assert np.all(np.abs(a.objective - b.objective) < band)

    def test_grid_errors(self):
        with pytest.raises(ConfigError):
            estimate_cstar(0, reps=10, c_grid=[0.5, 0.2])
        with pytest.raises(ConfigError):
            estimate_cstar(0, reps=10, c_grid=[6.0])
