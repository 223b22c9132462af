import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from kinetic1d.errors import InsufficientDataError, InvalidInputError
from kinetic1d.stats import kolmogorov_q, ks_normal, ks_statistic, qq_export, qq_slope, summarize


def test_summarize_examples():
    s = summarize([1, 1, 1, 1])
    assert (s.mean, s.variance) == (1.0, 0.0)
    s = summarize([0, 2])
    assert (s.mean, s.variance) == (1.0, 2.0)
    assert s.ci95[0] <= s.mean <= s.ci95[1]
    x = np.random.default_rng(1).standard_normal(10**5)
    s = summarize(x)
    assert abs(s.mean) < 0.013 and abs(s.variance - 1) < 0.015


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200), st.randoms())
def test_summarize_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert summarize(xs) == summarize(ys)
    assert summarize(xs).variance >= 0


def test_summarize_needs_two():
    with pytest.raises(InsufficientDataError):
        summarize([1.0])


def test_ks_examples():
    x = np.random.default_rng(2).normal(0, 2, 10**4)
    assert ks_normal(x, 2.0).p_value_approx > 0.01
    assert ks_normal(x, 1.0).p_value_approx < 1e-6
    assert ks_normal(np.zeros(100), 1.0).ks_statistic == 0.5


def test_ks_statistic_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(0.1, 1.3, int(rng.integers(50, 2000)))
        ref = sps.kstest(x, "norm", args=(0, 1.2)).statistic
        assert ks_statistic(x, 1.2) == pytest.approx(ref, abs=1e-14)


@given(st.floats(0.0, 4.0))
def test_kolmogorov_series_against_scipy(lam):
    assert kolmogorov_q(lam) == pytest.approx(sps.kstwobign.sf(lam), abs=1e-9)


def test_ks_does_not_recentre():
    x = np.random.default_rng(4).standard_normal(500)
    assert ks_normal(x + 0.5, 1.0).ks_statistic != ks_normal(x, 1.0).ks_statistic


def test_ks_errors():
    with pytest.raises(InvalidInputError):
        ks_normal(np.zeros(100), 0.0)
    with pytest.raises(InsufficientDataError):
        ks_normal(np.zeros(49), 1.0)


def test_qq_examples():
    x = np.random.default_rng(6).normal(0, 1.7, 10**4)
    t = qq_export(x)
    assert np.array_equal(t[:, 1], np.sort(x))
    assert abs(qq_slope(t) / 1.7 - 1) < 0.03
    sym = np.array([-3.0, -1.0, -0.5, 0.5, 1.0, 3.0])
    t = qq_export(sym)
    assert np.allclose(t[:, 0], -t[::-1, 0], atol=1e-12)
    assert np.allclose(t[:, 1], -t[::-1, 1])
    n = 10
    assert t.shape == (6, 2)
    assert qq_export(np.arange(n))[0, 0] == pytest.approx(sps.norm.ppf((1 - 0.375) / (n + 0.25)))
