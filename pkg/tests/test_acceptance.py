"""Exit criteria at their stated tolerances.

Each test records one PASS/FAIL line, repeated in the terminal summary.
Table cells outside tolerance are listed individually.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy.stats import ks_2samp

from conftest import record_criterion
from irdd.bootstrap import naive_wild_ci, sharp_wild_ci
from irdd.cli import ingest_csv
from irdd.isotonic import Sample, cumsum_diagram, eval_step, gcm_left_derivative, pava_fit, verify_switching
from irdd.limits import estimate_cstar, verify_clt
from irdd.mc import coverage_table, dgp_sample, get_dgp, mc_table
from irdd.rdd import RddConfig, sharp_estimate, split_sides

pytestmark = pytest.mark.acceptance

SIZES = (200, 500, 1000)

# (bias, mse) per dgp and n, for iRDD, local linear and k-NN
HOMOSKEDASTIC = {
    1: {200: ((0.001, 0.043), (0.008, 0.319), (0.010, 0.500)),
        500: ((-0.009, 0.022), (-0.007, 0.110), (0.010, 0.280)),
        1000: ((-0.008, 0.013), (-0.002, 0.056), (0.000, 0.220))},
    2: {200: ((-0.111, 0.092), (0.003, 0.747), (0.040, 0.500)),
        500: ((-0.079, 0.049), (-0.002, 0.225), (0.010, 0.290)),
        1000: ((-0.063, 0.031), (0.001, 0.102), (0.000, 0.220))},
    3: {200: ((-0.131, 0.057), (-0.002, 0.322), (0.030, 0.510)),
        500: ((-0.114, 0.031), (-0.005, 0.109), (0.010, 0.290)),
        1000: ((-0.098, 0.020), (0.001, 0.056), (0.010, 0.220))},
    4: {200: ((-0.337, 0.158), (-0.019, 0.774), (0.050, 0.490)),
        500: ((-0.261, 0.087), (-0.021, 0.213), (0.010, 0.290)),
        1000: ((-0.213, 0.055), (-0.007, 0.104), (0.010, 0.220))},
}

HETEROSKEDASTIC = {
    1: {200: ((0.005, 0.043), (0.009, 0.319), (0.010, 0.490)),
        500: ((-0.007, 0.022), (-0.008, 0.111), (0.010, 0.280)),
        1000: ((-0.007, 0.013), (-0.001, 0.056), (0.000, 0.220))},
    2: {200: ((-0.101, 0.093), (0.006, 0.791), (0.090, 0.210)),
        500: ((-0.075, 0.049), (0.000, 0.224), (0.040, 0.090)),
        1000: ((-0.061, 0.031), (-0.000, 0.103), (0.030, 0.070))},
    3: {200: ((-0.127, 0.057), (-0.004, 0.323), (0.020, 0.510)),
        500: ((-0.111, 0.031), (-0.005, 0.109), (0.020, 0.280)),
        1000: ((-0.096, 0.020), (0.000, 0.057), (0.000, 0.230))},
    4: {200: ((-0.286, 0.155), (-0.019, 0.754), (0.020, 0.490)),
        500: ((-0.223, 0.084), (-0.019, 0.213), (0.000, 0.280)),
        1000: ((-0.181, 0.052), (-0.009, 0.104), (0.010, 0.210))},
}

BIAS_TOL = 0.02
MSE_TOL = {"irdd": 0.15, "knn": 0.15, "ll": 0.40}


def minmax_fast(y):
    """Min-max isotonic formula with prefix sums."""
    n = len(y)
    csum = [0.0]
    for v in y:
        csum.append(csum[-1] + v)
    return [
        max(min((csum[t + 1] - csum[s]) / (t + 1 - s) for t in range(i, n)) for s in range(i + 1))
        for i in range(n)
    ]


def test_criterion_1_oracle_equivalence():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_oracle = worst_gcm = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        s = Sample(rng.uniform(-1, 1, n), rng.normal(size=n) * rng.choice([0.1, 1, 10]))
        srt = s.sorted()
        fitted = eval_step(pava_fit(s), srt.x)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(fitted - minmax_fast(srt.y.tolist())))))
        d = cumsum_diagram(s)
        gcm = np.array([gcm_left_derivative(d, d.u[i + 1]) for i in range(n)])
        worst_gcm = max(worst_gcm, float(np.max(np.abs(fitted - gcm))))
    elapsed = time.perf_counter() - start
    ok = worst_oracle <= 1e-10 and worst_gcm <= 1e-10 and elapsed < 10
    record_criterion(1, ok, f"max |PAVA - oracle| {worst_oracle:.1e}, max |PAVA - GCM| {worst_gcm:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_switching_relation():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    pairs = mismatches = 0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        s = Sample(rng.uniform(-1, 1, n), rng.normal(size=n)).sorted()
        v = np.unique(pava_fit(s).values)
        levels = [*v, *((v[1:] + v[:-1]) / 2), v[0] - 1, v[-1] + 1, *rng.normal(size=3)]
        for level in levels:
            for x in s.x:
                lhs, rhs = verify_switching(s, float(level), float(x))
                pairs += 1
                mismatches += lhs != rhs
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 5
    record_criterion(2, ok, f"{pairs} (level, point) pairs, {mismatches} mismatches, {elapsed:.2f}s")
    assert ok


def _table_check(number, printed, sigma_fn, seed):
    dgps = sorted(printed)
    report = mc_table(dgps, SIZES, estimators=("irdd", "ll", "knn"), reps=1000, seed=seed, sigma_fn=sigma_fn)
    misses, cells = [], 0
    for d in dgps:
        for n in SIZES:
            for name, (bias_ref, mse_ref) in zip(("irdd", "ll", "knn"), printed[d][n]):
                row = report.rows[[(r.dgp.split("-")[0], r.n, r.estimator) for r in report.rows].index((str(d), n, name))]
                cells += 1
                bias_ok = abs(row.bias - bias_ref) <= BIAS_TOL
                mse_ok = abs(row.mse - mse_ref) <= MSE_TOL[name] * mse_ref
                if not (bias_ok and mse_ok):
                    misses.append(
                        f"DGP {d} n={n} {name}: bias {row.bias:+.3f} (printed {bias_ref:+.3f}), "
                        f"mse {row.mse:.3f} (printed {mse_ref:.3f})"
                    )
    for m in misses:
        print("  outside tolerance:", m)
    ok = not misses
    record_criterion(number, ok, f"{cells - len(misses)}/{cells} cells within tolerance")
    return ok, misses


def test_criterion_3_homoskedastic_table():
    ok, misses = _table_check(3, HOMOSKEDASTIC, None, seed=3)
    assert ok, "\n".join(misses)


def test_criterion_4_heteroskedastic_table():
    ok, misses = _table_check(4, HETEROSKEDASTIC, "heteroskedastic", seed=4)
    assert ok, "\n".join(misses)


@pytest.mark.slow
def test_criterion_5_bootstrap_coverage():
    printed = {200: (0.892, 1.108), 500: (0.910, 0.897), 1000: (0.909, 0.763)}
    report = coverage_table([1], SIZES, c_grid=(1.0,), reps=1000, boot_reps=499, seed=5)
    misses = []
    for n, (cov_ref, len_ref) in printed.items():
        row = report.row(dgp=1, n=n, c=1.0)
        print(f"  n={n}: coverage {row.coverage:.3f} (printed {cov_ref}), length {row.length:.3f} (printed {len_ref})")
        if abs(row.coverage - cov_ref) > 0.03 or abs(row.length - len_ref) > 0.10 * len_ref:
            misses.append(n)
    ok = not misses
    record_criterion(5, ok, "all sizes within tolerance" if ok else f"sizes outside tolerance: {misses}")
    assert ok


def test_criterion_6_inconsistency_of_naive_estimator():
    spec = get_dgp(3)
    m_plus0 = float(spec.m(0.0))
    naive_bias, corrected_bias, violations, bracketed = {}, {}, 0, 0
    for n in (200, 1000, 5000):
        naive, corrected = [], []
        for r in range(1000):
            s = dgp_sample(spec, n, np.random.default_rng([6, n, r]))
            est = sharp_estimate(s, RddConfig())
            naive.append(est.naive_m_plus - m_plus0)
            corrected.append(est.m_plus - m_plus0)
            minus, plus = split_sides(s, 0.0)
            if est.eval_points[1] >= plus.x[0] and est.eval_points[0] <= minus.x[-1]:
                bracketed += 1
                violations += est.naive_theta > est.theta
        naive_bias[n] = float(np.mean(naive))
        corrected_bias[n] = float(np.mean(corrected))
    stays = all(b < -0.05 for b in naive_bias.values()) and naive_bias[5000] <= 0.5 * naive_bias[200]
    shrinks = abs(corrected_bias[5000]) < abs(corrected_bias[1000]) < abs(corrected_bias[200])
    ok = stays and shrinks and violations == 0
    detail = (
        "naive bias " + ", ".join(f"{v:+.3f}" for v in naive_bias.values())
        + "; corrected bias " + ", ".join(f"{v:+.3f}" for v in corrected_bias.values())
        + f"; ordering violations {violations}/{bracketed}"
    )
    record_criterion(6, ok, detail)
    assert ok


def test_criterion_7_limit_law():
    first = verify_clt(1, n=5000, reps=2000, seed=70)
    threshold = 0.08
    big, small = [first.ks], []
    for k in range(5):
        if k:
            big.append(verify_clt(1, n=5000, reps=2000, seed=70 + k).ks)
        small.append(verify_clt(1, n=200, reps=2000, seed=70 + k).ks)
    ok = first.ks < threshold and np.mean(big) <= np.mean(small)
    record_criterion(
        7, ok,
        f"KS n=5000 {first.ks:.4f} (two-batch reference {first.ks_reference:.4f}, threshold {threshold}); "
        f"mean KS over 5 repeats n=5000 {np.mean(big):.4f} vs n=200 {np.mean(small):.4f}",
    )
    assert ok


def test_criterion_8_cstar():
    rep = estimate_cstar(8, reps=100_000)
    ok = 0.25 <= rep.cstar <= 0.45
    record_criterion(8, ok, f"c* = {rep.cstar:.3f} (objective {rep.objective_min:.4f}, step {rep.step}, T {rep.horizon})")
    assert ok


LEE = os.environ.get("IRDD_LEE_CSV")


@pytest.mark.skipif(not LEE or not os.path.exists(LEE), reason="Lee House elections CSV not available")
def test_criterion_9_empirical_application():
    sample, _ = ingest_csv(LEE, os.environ.get("IRDD_LEE_X", "x"), os.environ.get("IRDD_LEE_Y", "y"))
    est = sharp_estimate(sample, RddConfig(c=1.0, a=1.0 / 3.0))
    ci = sharp_wild_ci(sample, c=1.0, reps=999, seed=9).ci
    ok = (
        abs(est.theta - 0.138) <= 0.005 and abs(est.naive_theta - 0.066) <= 0.005
        and abs(ci[0] - 0.066) <= 0.02 and abs(ci[1] - 0.265) <= 0.02
    )
    record_criterion(9, ok, f"theta {est.theta:.3f}, naive {est.naive_theta:.3f}, CI [{ci[0]:.3f}, {ci[1]:.3f}]")
    assert ok


def test_criterion_10_bootstrap_failure_ordering():
    spec, n, reps = get_dgp(3), 1000, 2000
    scale = n**0.25
    exact = scale * (np.array([
        sharp_estimate(dgp_sample(spec, n, np.random.default_rng([10, r])), c=1.0, a=0.5).theta
        for r in range(reps)
    ]) - spec.theta)
    sample = dgp_sample(spec, n, np.random.default_rng([10, 10**6]))
    trimmed = scale * sharp_wild_ci(sample, c=1.0, reps=reps, seed=10).replicates
    naive = scale * naive_wild_ci(sample, reps=reps, seed=10).replicates
    ks_trim = ks_2samp(trimmed, exact).statistic
    ks_naive = ks_2samp(naive, exact).statistic
    ok = ks_trim < ks_naive
    record_criterion(10, ok, f"KS trimmed {ks_trim:.4f} < naive {ks_naive:.4f}" if ok
                     else f"KS trimmed {ks_trim:.4f} >= naive {ks_naive:.4f}")
    assert ok
