import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hn_spectra import GOLDEN, BaseSystem, Potential, orbit, potential_sequence, sample_potential
from hn_spectra.base import iid_uniform, reduce_phase
from hn_spectra.errors import ConfigError


def test_rotation_period_two():
    b = BaseSystem.rotation(0.5)
    assert orbit(b, 0.0, 0, 3).tolist() == [0.0, 0.5, 0.0, 0.5]


def test_rotation_forward_backward_exact():
    b = BaseSystem.rotation(GOLDEN)
    x = b.step(0.25, 10)
    assert b.step(x, -10) == 0.25


@given(alpha=st.floats(0, 1, exclude_max=True), x0=st.floats(0, 1, exclude_max=True),
       n=st.integers(-10**6, 10**6))
@settings(max_examples=200, deadline=None)
def test_rotation_invertible_bitwise(alpha, x0, n):
    b = BaseSystem.rotation(alpha)
    x0 = reduce_phase(x0)
    assert b.step(b.step(x0, n), -n) == x0


@given(alpha=st.floats(0, 1, exclude_max=True), x=st.floats(0, 1, exclude_max=True),
       y=st.floats(0, 1, exclude_max=True), n=st.integers(-5000, 5000))
@settings(max_examples=200, deadline=None)
def test_skew_shift_invertible_bitwise(alpha, x, y, n):
    b = BaseSystem.skew_shift(alpha)
    p0 = (reduce_phase(x), reduce_phase(y))
    assert b.step(b.step(p0, n), -n) == p0


def test_skew_shift_matches_direct_recursion():
    b = BaseSystem.skew_shift(0.3)
    got = b.orbit((0.0, 0.0), 0, 3)
    x, y = 0.0, 0.0
    ref = []
    for _ in range(4):
        ref.append((x, y))
        x, y = (x + 0.3) % 1.0, (y + x) % 1.0
    assert np.allclose(got, ref, atol=1e-12)
    assert np.allclose(got[2], (0.6, 0.3), atol=1e-12)


def test_skew_shift_long_orbit_matches_recursion():
    b = BaseSystem.skew_shift(GOLDEN, (0.1, 0.7))
    got = b.orbit(None, 0, 500)
    x, y = b.initial_phase
    a = b.alpha
    for k in range(501):
        d = np.abs(((got[k] - (x, y)) + 0.5) % 1.0 - 0.5)
        assert d.max() < 1e-9
        x, y = (x + a) % 1.0, (y + x) % 1.0


def test_phases_reduced():
    b = BaseSystem.rotation(0.7, 0.9)
    xs = b.orbit(None, -50, 50)
    assert np.all((xs >= 0) & (xs < 1))
    assert reduce_phase(1.0 - 1e-16) == 0.0
    assert reduce_phase(-0.25) == 0.75


def test_periodic_and_iid():
    p = BaseSystem.periodic_orbit(5, 3)
    assert p.orbit(None, 0, 6).tolist() == [3, 4, 0, 1, 2, 3, 4]
    a = potential_sequence(BaseSystem.iid(7, 2.0), Potential.iid_diagonal(), None, -20, 20)
    b = potential_sequence(BaseSystem.iid(7, 2.0), Potential.iid_diagonal(), None, -20, 20)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 2.0) and np.all(a.imag == 0)
    c = potential_sequence(BaseSystem.iid(8, 2.0), Potential.iid_diagonal(), None, -20, 20)
    assert not np.array_equal(a, c)
    # replay of a sub-window is index-keyed
    assert np.array_equal(iid_uniform(7, [3, -4]), iid_uniform(7, np.arange(-4, 4))[[7, 0]])
    assert BaseSystem.iid(1).describe()["strictly_ergodic"] is False


def test_potential_examples():
    assert sample_potential(Potential.cosine(1.0), 0.0) == pytest.approx(2.0)
    assert abs(sample_potential(Potential.single_exponential(2.0), 0.25) - 2j) < 1e-15
    v = sample_potential(Potential.fourier({1: 1.0, -1: 1.0}), 1 / 3)
    ref = sum(c * np.exp(2j * np.pi * k / 3) for k, c in {1: 1.0, -1: 1.0}.items())
    assert abs(v - ref) < 1e-14 and abs(v + 1) < 1e-12


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=4),
       st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_fourier_real_symmetric_is_real(cs, x):
    coeffs = {0: complex(cs[0][0], 0.0)}
    for k, (a, b) in enumerate(cs[1:], start=1):
        coeffs[k] = complex(a, b)
        coeffs[-k] = complex(a, -b)
    p = Potential.fourier(coeffs)
    assert p.is_real_valued()
    assert abs(p.evaluate(x).imag) < 1e-12


@given(st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=100, deadline=None)
def test_single_exponential_modulus(x, a, b):
    lam = complex(a, b)
    assert abs(abs(Potential.single_exponential(lam).evaluate(x)) - abs(lam)) <= 1e-12 * max(1, abs(lam))


def test_imaginary_shift():
    p = Potential.cosine(1.0, y=0.1)
    assert abs(p.evaluate(0.0) - 2 * np.cos(2j * np.pi * 0.1)) < 1e-14


def test_skew_shift_reads_second_coordinate():
    b = BaseSystem.skew_shift(0.3)
    v = potential_sequence(b, Potential.cosine(1.0), (0.0, 0.0), 0, 3)
    assert np.allclose(v, 2 * np.cos(2 * np.pi * np.array([0.0, 0.0, 0.3, 0.9])))


def test_unique_ergodicity_surrogate():
    b = BaseSystem.rotation(GOLDEN)
    p = Potential.cosine(1.0)
    m1 = potential_sequence(b, p, 0.0, 0, 10**5 - 1).real.mean()
    m2 = potential_sequence(b, p, 0.37, 0, 10**5 - 1).real.mean()
    assert abs(m1 - m2) < 5e-3


def test_minimality_surrogate():
    xs = BaseSystem.rotation(GOLDEN).orbit(0.0, 0, 10**4 - 1)
    assert len(np.unique(np.floor(xs / 0.01))) == 100


def test_rejections():
    with pytest.raises(ConfigError):
        BaseSystem("torus")
    with pytest.raises(ConfigError):
        Potential("bessel")
    with pytest.raises(ConfigError):
        Potential.iid_diagonal().sample(BaseSystem.rotation(), [0.0])
    with pytest.raises(ValueError):
        BaseSystem.rotation().orbit(0.0, 3, 1)
    assert math.isclose(Potential.cosine(2.0).sup_bound(), 4.0)
