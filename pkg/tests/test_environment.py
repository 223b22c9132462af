import numpy as np
import pytest

from kinetic1d.environment import Environment, GapDistSpec, moments, sample_environment, trajectory_rng
from kinetic1d.errors import InvalidInputError
from kinetic1d.model import ModelParams


def test_moments_examples():
    assert moments(GapDistSpec.exponential(2.0)) == (2.0, 4.0)
    mu, var = moments(GapDistSpec.uniform(0.0, 1.0))
    assert mu == 0.5 and var == pytest.approx(1 / 12, abs=1e-15)
    assert moments(GapDistSpec.constant(3.0)) == (3.0, 0.0)
    assert moments(GapDistSpec.gamma(2.0, 1.5)) == (3.0, 4.5)


def test_constant_flagged_outside_hypotheses():
    assert GapDistSpec.constant(1.0).outside_theorem_hypotheses
    assert not GapDistSpec.exponential(1.0).outside_theorem_hypotheses


def test_sample_examples():
    env = sample_environment(ModelParams(stick_prob=1.0), 5, 1)
    assert env.sticky.tolist() == [1, 1, 1, 1, 1]
    env = sample_environment(ModelParams(gap_dist=GapDistSpec.constant(1.0)), 3, 1)
    assert env.positions.tolist() == [1.0, 2.0, 3.0]
    assert env.outside_theorem_hypotheses
    env = sample_environment(ModelParams(), 10**6, 42)
    assert abs(env.gaps.mean() - 1.0) < 0.005


def test_reproducible_and_independent_streams():
    p = ModelParams()
    a = sample_environment(p, 1000, 7, 3)
    b = sample_environment(p, 1000, 7, 3)
    c = sample_environment(p, 1000, 7, 4)
    assert np.array_equal(a.gaps, b.gaps) and np.array_equal(a.sticky, b.sticky)
    assert not np.array_equal(a.gaps, c.gaps)
    g1, s1 = trajectory_rng(7, 3)
    assert g1.bit_generator.state != s1.bit_generator.state


@pytest.mark.parametrize(
    "spec",
    [GapDistSpec.exponential(1.5), GapDistSpec.uniform(0.5, 2.0), GapDistSpec.gamma(2.5, 0.7)],
)
def test_empirical_moments_within_four_standard_errors(spec):
    n = 10**6
    env = sample_environment(ModelParams(gap_dist=spec), n, 11)
    mu, var = moments(spec)
    x = env.gaps
    assert abs(x.mean() - mu) < 4 * np.sqrt(var / n)
    m4 = np.mean((x - x.mean()) ** 4)
    assert abs(x.var(ddof=1) - var) < 4 * np.sqrt((m4 - var**2) / n)
    assert np.all(x > 0)


def test_positions_and_immutability():
    env = sample_environment(ModelParams(), 100, 3)
    assert np.all(np.diff(env.positions) > 0)
    assert np.allclose(np.diff(env.positions), env.gaps[1:], rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        env.gaps[0] = 1.0


def test_csv_round_trip():
    env = sample_environment(ModelParams(), 50, 5)
    text = env.to_csv()
    assert text.startswith("i,xi,eta,S\r\n")
    back = Environment.from_csv(text)
    assert np.array_equal(back.gaps, env.gaps)
    assert np.array_equal(back.sticky, env.sticky)
    assert np.array_equal(back.positions, env.positions)


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        sample_environment(ModelParams(), 0, 1)
    with pytest.raises(InvalidInputError):
        GapDistSpec.uniform(2.0, 1.0)
    with pytest.raises(InvalidInputError):
        Environment.from_arrays([1.0, -1.0], [0, 1])
    with pytest.raises(InvalidInputError):
        Environment.from_csv("a,b\n1,2\n")
