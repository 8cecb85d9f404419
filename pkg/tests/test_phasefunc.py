import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from latticebath import phasefunc as pf


def theta_quad(y):
    """Independent sine-weighted quadrature of the phase function."""
    f = lambda w: pf.bump(np.array([w]))[0] / w if w > 0 else 1.0
    return (2 / np.pi) * integrate.quad(f, 0, 1, weight="sin", wvar=y, limit=400)[0]


@pytest.mark.parametrize("y", [0.5, 3.0, 10.0, 30.0, 100.0])
def test_matches_quadrature(y):
    assert pf.T(np.array([y]))[0] == pytest.approx(theta_quad(y), abs=1e-9)


def test_odd_zero_and_limits():
    y = np.linspace(-50, 50, 401)
    t = pf.T(y)
    assert pf.T(np.array([0.0]))[0] == 0.0
    assert np.allclose(t, -pf.T(-y), atol=1e-15)
    assert pf.T(np.array([1e5]))[0] == 1.0 and pf.T(np.array([-1e5]))[0] == -1.0


def test_tail_bound():
    y = np.array([10.0, 20.0, 50.0, 100.0, 200.0, 300.0])
    bound = y ** -0.25 * np.exp(-np.sqrt(y))
    assert np.all(np.abs(pf.T(y) - 1) <= bound)
    y = np.linspace(300, 1500, 50)
    assert np.max(np.abs(pf.T(y) - 1)) < 1e-9


def test_derivative():
    y = np.linspace(-20, 20, 81)
    h = 1e-4
    fd = (pf.T(y + h) - pf.T(y - h)) / (2 * h)
    assert np.allclose(pf.T_prime(y), fd, atol=1e-7)


def test_overshoot_frozen():
    # the sine transform of a bump overshoots Sign like a smoothed Gibbs peak
    y = np.linspace(0, 300, 300001)
    t = pf.T(y)
    assert t.max() - 1 == pytest.approx(0.06928, abs=1e-4)
    assert y[t.argmax()] == pytest.approx(4.997, abs=2e-3)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 200), st.floats(0.05, 2))
def test_pi_bounded_and_monotone_core(rho, eps):
    tab = pf.PhaseFunctionTable(rho, eps, n=401)
    x = np.linspace(-1, 1, 401)
    p = 0.5 * (1 + tab(x))
    assert np.all(p >= -0.0347) and np.all(p <= 1.0347)
    core = np.abs(rho * eps * x) <= 4.99
    assert np.all(np.diff(p[core]) >= -1e-12)


def test_heaviside_limit():
    x = np.array([-0.3, -0.05, 0.05, 0.3])
    errs = [np.max(np.abs(0.5 * (1 + pf.PhaseFunctionTable(r, 0.5)(x)) - (x > 0)))
            for r in (10, 100, 1000)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_table_cubic_and_errors():
    tab = pf.PhaseFunctionTable(40, 0.3, interp="cubic")
    x = np.linspace(-0.9, 0.9, 37)
    assert np.allclose(tab(x), pf.T(12 * x), atol=1e-6)
    with pytest.raises(ValueError):
        pf.PhaseFunctionTable(-1, 0.3)
    with pytest.raises(ValueError):
        pf.PhaseFunctionTable(1, 0.3, interp="linear")
