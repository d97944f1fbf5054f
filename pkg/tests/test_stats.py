import math
import random
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps
from scipy.integrate import trapezoid
from scipy.special import kolmogorov

from egodyn.errors import AnalysisError
from egodyn.stats import (
    DegeneratePartitionWarning,
    SubgroupPartition,
    TestResult,
    compare_subgroups,
    descriptive,
    kde_1d,
    kde_2d,
    kde_grid,
    kolmogorov_sf,
    ks_statistic,
    ks_two_sample,
    kruskal_wallis,
    midranks,
    percentile_split,
    quantile,
    render_table,
    scott_factor,
    significance_stars,
    write_report,
)

small_samples = st.lists(st.integers(1, 10), min_size=3, max_size=8)


def kw_variance_form(a, b):
    """H as (N-1) * between-group / total rank variance; tie-corrected by construction."""
    ranks = sps.rankdata(list(a) + list(b))
    n = len(ranks)
    mean = (n + 1) / 2
    ra, rb = ranks[: len(a)], ranks[len(a):]
    total = sum((r - mean) ** 2 for r in ranks)
    if total == 0:
        return 0.0
    between = len(a) * (ra.mean() - mean) ** 2 + len(b) * (rb.mean() - mean) ** 2
    return (n - 1) * between / total


def ks_brute(a, b):
    """Exact sup of |ECDF difference| by enumerating every sample value."""
    best = Fraction(0)
    for v in set(a) | set(b):
        fa = Fraction(sum(x <= v for x in a), len(a))
        fb = Fraction(sum(x <= v for x in b), len(b))
        best = max(best, abs(fa - fb))
    return float(best)


class TestQuantile:
    def test_known_cuts(self):
        xs = list(range(1, 9))
        assert quantile(xs, 0.25) == 2.75
        assert quantile(xs, 0.75) == 6.25

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.floats(0, 1))
    def test_matches_numpy_linear(self, xs, q):
        assert quantile(xs, q) == pytest.approx(np.quantile(xs, q), rel=1e-12, abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            quantile([], 0.5)
        with pytest.raises(ValueError):
            quantile([1], 1.5)


class TestPercentileSplit:
    def test_eight_scores(self):
        part = percentile_split({f"e{k}": float(k) for k in range(1, 9)}, "openness")
        assert (part.low_cut, part.high_cut) == (2.75, 6.25)
        assert part.low == {"e1", "e2"}
        assert part.high == {"e7", "e8"}
        assert part.middle == {"e3", "e4", "e5", "e6"}
        assert not part.degenerate

    def test_boundary_ties_join_both_extremes(self):
        # P25 = 2 exactly; both egos scoring 2 are low
        part = percentile_split({"a": 1, "b": 2, "c": 2, "d": 5, "e": 9}, "t")
        assert part.low == {"a", "b", "c"}

    def test_degenerate_warning(self):
        with pytest.warns(DegeneratePartitionWarning):
            part = percentile_split({f"e{k}": 40.0 for k in range(6)}, "t")
        assert part.degenerate and part.low == part.high

    def test_restrict_to_egos(self):
        scores = {f"e{k}": float(k) for k in range(1, 11)}
        part = percentile_split(scores, "t", egos=[f"e{k}" for k in range(1, 9)])
        assert part.members == {f"e{k}" for k in range(1, 9)}

    def test_too_few(self):
        with pytest.raises(AnalysisError):
            percentile_split({"a": 1, "b": 2, "c": 3}, "t")

    @given(st.lists(st.integers(15, 70), min_size=4, max_size=60))
    def test_every_ego_in_a_group(self, scores):
        profiles = {f"e{k}": float(s) for k, s in enumerate(scores)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegeneratePartitionWarning)
            part = percentile_split(profiles, "t")
        assert part.members == set(profiles)
        assert all(profiles[e] <= part.low_cut for e in part.low)
        assert all(profiles[e] >= part.high_cut for e in part.high)


def test_descriptive():
    d = descriptive([1, 2, 3, 4, 5])
    assert (d.median, d.q1, d.q3, d.n) == (3, 2, 4, 5)
    with pytest.raises(AnalysisError):
        descriptive([])


@pytest.mark.parametrize(
    "p, stars", [(0.2, "ns"), (0.05, "ns"), (0.049, "*"), (0.01, "*"), (0.009, "**"), (0.0009, "***")]
)
def test_stars(p, stars):
    assert significance_stars(p) == stars


def test_result_format():
    assert TestResult("KW", 9.3149, 0.003).format() == "9.31**"
    assert TestResult("KW", 1.0, 0.4).format() == "1.00"
    with pytest.raises(ValueError):
        TestResult("KW", 1.0, 1.5)


def test_midranks():
    ranks, ties = midranks([10, 20, 20, 30])
    assert ranks == [1.0, 2.5, 2.5, 4.0]
    assert sorted(ties) == [1, 1, 2]


class TestKruskalWallis:
    def test_hand_value(self):
        # ranks 1..3 vs 4..6: H = 12/42 * (36/3 + 225/3) - 21 = 27/7
        res = kruskal_wallis([1, 2, 3], [4, 5, 6])
        assert res.statistic == pytest.approx(27 / 7, abs=1e-12)
        assert round(res.statistic, 6) == 3.857143
        assert res.p_value == pytest.approx(0.0495, abs=5e-5)
        assert res.stars == "*"

    def test_all_identical(self):
        res = kruskal_wallis([4, 4, 4], [4, 4, 4, 4])
        assert (res.statistic, res.p_value) == (0.0, 1.0)

    def test_too_small(self):
        with pytest.raises(AnalysisError):
            kruskal_wallis([1, 2], [3, 4, 5])

    @given(small_samples, small_samples)
    @settings(max_examples=300)
    def test_oracles(self, a, b):
        res = kruskal_wallis(a, b)
        assert res.statistic == pytest.approx(kw_variance_form(a, b), abs=1e-10)
        if len(set(a + b)) > 1:
            ref = sps.kruskal(a, b)
            assert res.statistic == pytest.approx(ref.statistic, abs=1e-10)
            assert res.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    @given(small_samples, small_samples)
    def test_monotone_invariance(self, a, b):
        f = lambda x: math.exp(x / 3) + 7  # noqa: E731
        assert kruskal_wallis(a, b).statistic == pytest.approx(
            kruskal_wallis([f(x) for x in a], [f(x) for x in b]).statistic, abs=1e-10
        )


class TestKolmogorovSmirnov:
    def test_separated_samples(self):
        assert ks_statistic([1, 2, 3], [4, 5, 6]) == 1.0

    def test_identical_samples(self):
        res = ks_two_sample([1, 2, 3, 4], [1, 2, 3, 4])
        assert res.statistic == 0.0 and res.p_value == 1.0

    @given(small_samples, small_samples)
    @settings(max_examples=300)
    def test_oracles(self, a, b):
        res = ks_two_sample(a, b)
        assert res.statistic == ks_brute(a, b)
        assert res.statistic == pytest.approx(sps.ks_2samp(a, b, method="asymp").statistic, abs=1e-12)
        lam = math.sqrt(len(a) * len(b) / (len(a) + len(b))) * res.statistic
        assert res.p_value == pytest.approx(float(kolmogorov(lam)), abs=1e-10)

    @pytest.mark.parametrize("x", [0.05, 0.3, 0.7, 1.0, 1.17, 1.19, 1.5, 2.5, 5.0])
    def test_survival_function(self, x):
        assert kolmogorov_sf(x) == pytest.approx(float(kolmogorov(x)), abs=1e-12)

    @given(small_samples, small_samples)
    def test_monotone_invariance(self, a, b):
        f = lambda x: x**3 - 2  # noqa: E731
        assert ks_statistic(a, b) == ks_statistic([f(x) for x in a], [f(x) for x in b])


class TestKDE:
    def test_scott_factors(self):
        assert scott_factor(100, 1) == pytest.approx(0.3981, abs=5e-5)
        assert scott_factor(100, 2) == pytest.approx(0.4642, abs=5e-5)
        assert scott_factor(100, 1) == pytest.approx(100 ** -0.2, abs=1e-15)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_matches_scipy_and_integrates_to_one(self, seed):
        x = np.random.default_rng(seed).normal(size=50) * 2 + 1
        grid = kde_grid(x, 2000, pad=8.0)
        dens = kde_1d(x, grid)
        assert np.allclose(dens, sps.gaussian_kde(x, bw_method="scott")(grid), rtol=1e-10, atol=1e-14)
        assert trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)

    def test_zero_variance_rejected(self):
        with pytest.raises(AnalysisError, match="zero-variance"):
            kde_1d([2.0, 2.0, 2.0], [0, 1, 2])

    def test_2d_matches_loop(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(30, 2)) * [1.0, 3.0]
        gx, gy = np.linspace(-3, 3, 7), np.linspace(-9, 9, 5)
        dens = kde_2d(pts, gx, gy)
        assert dens.shape == (7, 5)
        n = len(pts)
        hx, hy = pts.std(axis=0, ddof=1) * n ** (-1 / 6)
        for i, x in enumerate(gx):
            for j, y in enumerate(gy):
                total = sum(
                    math.exp(-0.5 * ((x - px) / hx) ** 2 - 0.5 * ((y - py) / hy) ** 2) for px, py in pts
                )
                assert dens[i, j] == pytest.approx(total / (n * hx * hy * 2 * math.pi), rel=1e-10)

    def test_2d_integrates_to_one(self):
        pts = np.random.default_rng(9).normal(size=(40, 2))
        gx = np.linspace(-8, 8, 321)
        gy = np.linspace(-8, 8, 321)
        dens = kde_2d(pts, gx, gy)
        assert trapezoid(trapezoid(dens, gy, axis=1), gx) == pytest.approx(1.0, abs=1e-3)


def _partition():
    return SubgroupPartition(
        "openness",
        low=frozenset({"l1", "l2"}),
        middle=frozenset({"m"}),
        high=frozenset({"h1", "h2"}),
        low_cut=30.0,
        high_cut=50.0,
    )


class TestReport:
    def test_identical_groups_are_not_significant(self):
        samples = {"h1": [0.2, 0.3], "h2": [0.4, 0.5], "l1": [0.2, 0.3], "l2": [0.4, 0.5], "m": [9.0]}
        rows = compare_subgroups(samples, _partition())
        assert [r.subgroup for r in rows] == ["high", "low"]
        assert rows[0].kw.stars == "ns" and rows[0].ks.stars == "ns"
        table = render_table(rows)
        assert "*" not in table.splitlines()[2] and "*" not in table.splitlines()[3]

    def test_significant_difference_on_high_row_only(self, tmp_path):
        rng = random.Random(1)
        samples = {e: [rng.random() for _ in range(40)] for e in ("l1", "l2")}
        samples.update({e: [5 + rng.random() for _ in range(40)] for e in ("h1", "h2")})
        rows = compare_subgroups(samples, _partition())
        assert rows[0].kw.p_value < 0.001
        lines = render_table(rows, "turnover").splitlines()
        assert lines[0] == "turnover"
        high, low = lines[3], lines[4]
        assert "***" in high and "*" not in low

        path = tmp_path / "r.csv"
        write_report(rows, path)
        out = path.read_text().splitlines()
        assert out[0] == "trait,subgroup,n,median,q1,q3,kw_stat,kw_p,ks_stat,ks_p"
        assert out[1].startswith("openness,high,80,")
        assert out[1].split(",")[6:] == out[2].split(",")[6:]

    def test_missing_values_are_fatal(self):
        with pytest.raises(AnalysisError):
            compare_subgroups({"h1": [1.0]}, _partition())
