import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irdd.baselines import (
    LocalLinearConfig,
    default_k,
    icbrt,
    knn_boundary,
    local_linear_boundary,
    rule_of_thumb_bandwidth,
    sharp_baseline_estimate,
)
from irdd.errors import ConfigError, DegenerateWindowError, InvalidInputError
from irdd.isotonic import Sample

positions = st.lists(st.integers(1, 500), min_size=1, max_size=25, unique=True)


def knn_oracle(x, y, k):
    order = sorted(range(len(x)), key=lambda i: abs(x[i]))
    cutoff = abs(x[order[k - 1]])
    chosen = [y[i] for i in range(len(x)) if abs(x[i]) <= cutoff]
    return sum(chosen) / len(chosen)


class TestKnn:
    def test_all_points(self):
        s = Sample([0.1, 0.4, 0.3, 0.8], [2.0, 1.0, 5.0, 4.0])
        assert knn_boundary(s, 4) == 3.0

    def test_single_neighbour(self):
        s = Sample([0.4, 0.05, 0.3], [2.0, -1.0, 5.0])
        assert knn_boundary(s, 1) == -1.0

    def test_two_closest(self):
        assert knn_boundary(Sample([0.1, 0.2, 0.3], [5.0, 7.0, 9.0]), 2) == 6.0

    def test_ties_are_averaged(self):
        s = Sample([-0.1, 0.1, 0.1, 0.5], [1.0, 2.0, 6.0, 100.0])
        assert knn_boundary(s, 2) == 3.0

    @pytest.mark.parametrize("k", [0, 4, -1])
    def test_k_range(self, k):
        with pytest.raises(ConfigError):
            knn_boundary(Sample([0.1, 0.2, 0.3], [1, 2, 3]), k)

    def test_default_k(self):
        assert [icbrt(n) for n in (0, 1, 7, 8, 26, 27, 999, 1000, 1001)] == [0, 1, 1, 2, 2, 3, 9, 10, 10]
        assert default_k(0) == 1
        assert all(icbrt(m**3) == m and icbrt(m**3 - 1) == m - 1 for m in range(1, 200))

    @given(positions, st.data())
    def test_against_oracle(self, pos, data):
        x = [p / 500 for p in pos]
        y = data.draw(st.lists(st.floats(-100, 100), min_size=len(x), max_size=len(x)))
        k = data.draw(st.integers(1, len(x)))
        got = knn_boundary(Sample(x, y), k)
        assert got == pytest.approx(knn_oracle(x, y, k), abs=1e-9)
        perm = np.random.default_rng(len(x)).permutation(len(x))
        assert knn_boundary(Sample(np.array(x)[perm], np.array(y)[perm]), k) == pytest.approx(got, abs=1e-9)
        assert knn_boundary(Sample(x, np.array(y) + 3.5), k) == pytest.approx(got + 3.5, abs=1e-9)


class TestLocalLinear:
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.05, 10), positions.filter(lambda p: len(p) >= 2))
    def test_affine_exact(self, a, b, h, pos):
        x = np.array(pos) / 500
        if np.unique(x[x < h]).size < 2:
            return
        got = local_linear_boundary(Sample(x, a + b * x), LocalLinearConfig(h))
        assert got == pytest.approx(a, abs=1e-8)

    def test_two_points(self):
        s = Sample([0.1, 0.2, 0.9], [1.0, 2.0, 50.0])
        assert local_linear_boundary(s, LocalLinearConfig(0.25)) == pytest.approx(0.0)

    def test_degenerate(self):
        s = Sample([0.1, 0.5, 0.9], [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateWindowError, match="larger bandwidth"):
            local_linear_boundary(s, LocalLinearConfig(0.2))

    def test_rule_of_thumb(self):
        x = np.linspace(0, 1, 32)
        assert rule_of_thumb_bandwidth(x) == pytest.approx(1.06 * np.std(x, ddof=1) * 32 ** -0.2)
        with pytest.raises(DegenerateWindowError):
            rule_of_thumb_bandwidth(np.ones(5))

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("inf")])
    def test_bad_bandwidth(self, bad):
        with pytest.raises(ConfigError):
            LocalLinearConfig(bad)

    def test_shift(self):
        rng = np.random.default_rng(2)
        x, y = rng.uniform(0, 1, 50), rng.normal(size=50)
        base = local_linear_boundary(Sample(x, y))
        assert local_linear_boundary(Sample(x, y - 2)) == pytest.approx(base - 2)


class TestSharpBaseline:
    @pytest.mark.parametrize("method", ["knn", "ll"])
    def test_flat(self, method):
        x = np.linspace(-1, 1, 40)
        assert sharp_baseline_estimate(Sample(x, (x >= 0) * 1.0), method=method).theta == pytest.approx(1.0)

    def test_knn_side_means(self):
        x = np.array([-0.3, -0.2, -0.1, 0.0, 0.2])
        y = np.array([1.0, 2.0, 6.0, 4.0, 8.0])
        est = sharp_baseline_estimate(Sample(x, y), method="knn", k=3)
        assert est.theta == pytest.approx(6.0 - 3.0)
        assert est.config["k"] == (3, 2)

    def test_knn_hand_computed(self):
        x = np.array([-0.4, -0.25, -0.05, 0.02, 0.1, 0.3])
        y = np.array([9.0, 3.0, 1.0, 4.0, 6.0, 0.0])
        est = sharp_baseline_estimate(Sample(x, y), method="knn", k=2)
        assert (est.m_minus, est.m_plus, est.theta) == (2.0, 5.0, 3.0)

    def test_cutoff_shift(self):
        x = np.linspace(-1, 1, 60) + 10
        s = Sample(x, 2 * x + (x >= 10))
        assert sharp_baseline_estimate(s, 10, "ll", bandwidth=0.5).theta == pytest.approx(1.0)

    def test_unknown_method(self):
        with pytest.raises(InvalidInputError):
            sharp_baseline_estimate(Sample([-1, 1], [0, 1]), method="spline")


@pytest.mark.slow
def test_local_linear_mse_dgp1_n500():
    from irdd.mc import mc_table

    report = mc_table([1], [500], estimators=("ll",), reps=5000, seed=11)
    mse = report.row(dgp=1, n=500, estimator="ll").mse
    print(f"local linear DGP1 n=500 MSE {mse:.4f}")
    assert 0.08 <= mse <= 0.16
