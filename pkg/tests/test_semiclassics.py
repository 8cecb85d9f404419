import numpy as np
import pytest

from latticebath import greens as gf, lattice as lat, resonant as res, semiclassics as sc
from latticebath.errors import ClosedOrbit, ValidationError

SQ11 = lat.build_square(1.0, 1.0)
SQ12 = lat.build_square(1.0, 2.0)
KY0 = np.arccos(-0.75)          # point of S(-1) on square(1, 2) with kx = 0


@pytest.fixture(scope="module")
def s12():
    return res.extract(SQ12, 0, -1.0)


def test_periods_square12(s12):
    op = sc.orbit_periods(s12, 0.01)
    assert np.allclose(op.l, [0.0, 100.0], atol=1e-8)
    assert op.tau == pytest.approx(28.52535657551098, rel=1e-9)
    assert op.transverse_extent > 0


def test_tau_gamma_relation(s12):
    op = sc.orbit_periods(s12, 0.01)
    g0 = gf.gamma(SQ12, 0, (0, 0), -1.0)
    assert op.tau_from_gamma == pytest.approx(g0 / 0.02, rel=1e-10)
    assert op.tau == pytest.approx(op.tau_from_gamma, rel=1e-9)


@pytest.mark.parametrize("jy", [2.0, 3.0])
def test_l_invariant_under_anisotropy(jy):
    op = sc.orbit_periods(res.extract(lat.build_square(1.0, jy), 0, -1.0), 0.01)
    assert np.hypot(*op.l) == pytest.approx(100.0, rel=1e-8)


def test_closed_orbit_rejected():
    with pytest.raises(ClosedOrbit):
        sc.orbit_periods(res.extract(SQ11, 0, -1.0), 0.01)


def test_field_doubling_halves_periods(s12):
    a = sc.orbit_periods(s12, 0.01)
    b = sc.orbit_periods(s12, 0.02)
    assert np.allclose(b.l, a.l / 2) and b.tau == pytest.approx(a.tau / 2)


@pytest.mark.parametrize("alpha", [0.005, 0.01, 0.02])
def test_ode_matches_quadrature(s12, alpha):
    tr = sc.integrate_orbit(SQ12, 0, (0.0, KY0), alpha=alpha)
    op = sc.orbit_periods(s12, alpha)
    assert tr.classification == "open"
    assert tr.period == pytest.approx(op.tau, rel=1e-2)
    # the two open branches drift in opposite directions; compare with the one through k0
    l, tau = min(op.per_curve, key=lambda p: np.hypot(*(p[0] - tr.l)))
    assert np.allclose(tr.l, l, rtol=1e-2, atol=1e-2 * np.hypot(*l))
    assert np.allclose(tr.drift_velocity, l / tau, rtol=1e-2, atol=1e-2 * np.hypot(*l) / tau)
    assert tr.energy_drift < 1e-8
    # k stays on the level set
    assert np.max(np.abs(lat.bands(SQ12, tr.k)[:, 0] + 1.0)) < 1e-8


def test_closed_orbit_bounded():
    k0 = (np.pi, np.pi / 3)
    tr = sc.integrate_orbit(SQ11, 0, k0, alpha=0.01)
    assert tr.classification == "closed"
    assert np.hypot(*tr.l) < 1e-6 * np.ptp(tr.r[:, 0])
    assert tr.energy_drift < 1e-8


def test_closed_orbit_period_independent_of_start():
    rs = res.extract(SQ11, 0, -1.0)
    c = rs.curves[0]
    periods = [sc.integrate_orbit(SQ11, 0, c.k[j], alpha=0.01).period for j in (0, c.n // 3)]
    assert periods[0] == pytest.approx(periods[1], rel=1e-6)
    quad = float(c.integrate(1 / c.geom.speed)) / sc.field_strength(SQ11, 0.01)
    assert periods[0] == pytest.approx(quad, rel=1e-6)
    half = sc.integrate_orbit(SQ11, 0, c.k[0], alpha=0.02).period
    assert half == pytest.approx(periods[0] / 2, rel=1e-6)


def test_reversed_field_reverses_drift():
    a = sc.integrate_orbit(SQ12, 0, (0.0, KY0), alpha=0.01)
    # alpha must be positive; reversing B is equivalent to mirroring kx -> -kx, vx -> -vx
    b = sc.integrate_orbit(SQ12, 0, (0.0, -KY0), alpha=0.01)
    assert np.allclose(a.drift_velocity, -b.drift_velocity, rtol=1e-6, atol=1e-9)


def test_invalid_alpha():
    with pytest.raises(ValidationError):
        sc.integrate_orbit(SQ12, 0, (0.0, KY0), alpha=0.0)


def test_trace_csv(tmp_path):
    tr = sc.integrate_orbit(SQ12, 0, (0.0, KY0), alpha=0.02, n_samples=11)
    p = tmp_path / "o.csv"
    tr.to_csv(p)
    assert p.read_text().splitlines()[0] == "t,x,y,kx,ky"
