"""Semiclassical wavepacket motion in a uniform artificial magnetic field.

    r_dot = v(k),     k_dot = -v(k) x B,     B = 2 pi alpha / A  (z axis)

so ``k_dot = B (-v_y, v_x)``: the wavevector slides along its resonant curve
in the direction of the tangent ``t = R_90 v_hat`` at speed ``B v``, and
``r(t) - r(0) = R_{-90}(k(t) - k(0)) / B``.  Over one period of an open orbit
the packet drifts by ``l = (1/B) int v_hat ds`` in time ``tau = (1/B) int ds / v``.
Berry curvature is taken to vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import lattice as lat
from . import resonant as res
from .errors import ClosedOrbit, EnergyDriftExceeded, ValidationError

__all__ = ["OrbitTrace", "OrbitPeriods", "field_strength", "integrate_orbit", "orbit_periods"]


def field_strength(spec, alpha: float) -> float:
    """``B = 2 pi alpha / A`` for flux ``2 pi alpha`` per unit cell."""
    return 2 * np.pi * alpha / spec.unit_cell_volume


@dataclass
class OrbitTrace:
    """Samples of one semiclassical trajectory.

    Attributes
    ----------
    t : ndarray (n,)
    r, k : ndarray (n, 2)
        ``k`` is unwrapped (continuous); see :attr:`k_bz` for the reduced one.
    energy_drift : float
        ``max |omega(k(t)) - omega(k(0))|``.
    classification : {"open", "closed", "unknown"}
    period : float
        First return time of ``k`` modulo reciprocal vectors (nan if none).
    shift : ndarray (2,)
        Reciprocal vector gained over one period (zero for closed orbits).
    l : ndarray (2,)
        Real-space displacement over one period.
    """

    spec: lat.LatticeSpec
    band: int
    t: np.ndarray
    r: np.ndarray
    k: np.ndarray
    energy_drift: float
    classification: str
    period: float
    shift: np.ndarray
    l: np.ndarray

    @property
    def k_bz(self) -> np.ndarray:
        return lat.reduce_to_bz(self.spec, self.k)

    @property
    def drift_velocity(self) -> np.ndarray:
        return self.l / self.period if np.isfinite(self.period) else np.full(2, np.nan)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.t, self.r, self.k]), delimiter=",",
                   header="t,x,y,kx,ky", comments="", fmt="%.15g")


def integrate_orbit(spec, band, k0, r0=(0.0, 0.0), alpha: float = 0.01, t_max: float = None,
                    n_samples: int = 2001, rtol: float = 1e-11, atol: float = 1e-12,
                    max_drift: float = 1e-8) -> OrbitTrace:
    """Integrate the semiclassical equations with an adaptive Runge-Kutta method.

    Parameters
    ----------
    k0 : array_like (2,)
        Initial wavevector (its energy sets Delta).
    alpha : float
        Flux per unit cell in units of the flux quantum; ``alpha > 0``.
    t_max : float, optional
        Integration time.  Defaults to three semiclassical periods estimated
        from the resonant curve through ``k0``.

    Raises
    ------
    EnergyDriftExceeded
        If ``|omega(k(t)) - omega(k0)|`` exceeds ``max_drift`` times the
        largest hopping amplitude.
    """
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    k0 = np.asarray(k0, dtype=float).reshape(2)
    r0 = np.asarray(r0, dtype=float).reshape(2)
    B = field_strength(spec, alpha)
    e0 = float(lat.band_derivatives(spec, k0, band, order=1)[0])
    b = spec.reciprocal
    g0 = res._geometry(spec, band, k0)
    if g0.speed <= res.V_MIN * spec.energy_scale:
        raise ValidationError("initial wavevector sits at a Van Hove point")
    if t_max is None:
        t_max = 3.0 * _period_estimate(spec, band, e0, k0, B) * 1.05 + 1.0

    def rhs(t, y):
        _, v, _ = lat.band_derivatives(spec, y[2:], band, order=1)
        return np.r_[v, -B * v[1], B * v[0]]

    # Poincare sections: k returns modulo reciprocal vectors when both
    # fractional coordinates of k - k0 are integers
    a = spec.vectors

    def sec1(t, y):
        return float(np.sin(0.5 * np.dot(y[2:] - k0, a[0])))

    def sec2(t, y):
        return float(np.sin(0.5 * np.dot(y[2:] - k0, a[1])))

    sol = integrate.solve_ivp(rhs, (0.0, t_max), np.r_[r0, k0], method="DOP853", rtol=rtol,
                              atol=atol, dense_output=True, events=(sec1, sec2))
    t = np.linspace(0.0, sol.t[-1], n_samples)
    y = sol.sol(t)
    r, k = y[:2].T, y[2:].T
    w = lat.band_derivatives(spec, k, band, order=1)[0]
    drift = float(np.max(np.abs(w - e0)))
    period, shift, cls = np.nan, np.zeros(2), "unknown"
    binv = np.linalg.inv(b)
    evs = sorted((te, tuple(ye)) for q in range(2) for te, ye in zip(sol.t_events[q], sol.y_events[q]))
    for te, ye in evs:
        ye = np.asarray(ye)
        if te <= 1e-9 * t_max:
            continue
        d = ye[2:] - k0
        m = d @ binv
        if np.all(np.abs(m - np.round(m)) < 1e-6) and np.hypot(*(d - np.round(m) @ b)) < 1e-6:
            period = float(te)
            shift = np.round(m) @ b
            cls = "closed" if np.all(np.round(m) == 0) else "open"
            break
    if drift > max_drift * spec.energy_scale:
        raise EnergyDriftExceeded(f"energy drift {drift:.2e} exceeds {max_drift:.1e}")
    # measured real-space displacement over one period
    l = sol.sol(period)[:2] - r0 if np.isfinite(period) else np.full(2, np.nan)
    return OrbitTrace(spec, band, t, r, k, drift, cls, period, shift, l)


def _period_estimate(spec, band, e0, k0, B):
    """Quadrature period of the resonant curve through ``k0``."""
    b = spec.reciprocal
    try:
        rs = res.extract(spec, band, e0, grid_n=256)
    except Exception:
        return 4 * np.pi * np.max(np.hypot(*b.T)) / (B * res._geometry(spec, band, k0).speed)
    best, dist = None, np.inf
    for c in rs.curves:
        d = c.k - k0
        m = d @ np.linalg.inv(b)
        d = d - np.round(m) @ b
        dd = np.min(np.hypot(d[:, 0], d[:, 1]))
        if dd < dist:
            best, dist = c, dd
    return float(best.integrate(1.0 / best.geom.speed)) / B


@dataclass
class OrbitPeriods:
    """Quadrature periods of an open orbit.

    Attributes
    ----------
    l : ndarray (2,)
        Spatial period of the first open curve.
    tau : float
        Temporal period of the first open curve.
    transverse_extent : float
        Width of the real-space orbit perpendicular to ``l``.
    per_curve : list of (l, tau)
    tau_from_gamma : float
        ``Gamma(0, Delta) / (2 alpha)``, with Gamma summed over all branches.
    """

    l: np.ndarray
    tau: float
    transverse_extent: float
    per_curve: list
    tau_from_gamma: float


def orbit_periods(rs: res.ResonantSet, alpha: float) -> OrbitPeriods:
    """Spatial and temporal periods of an open resonant set.

    Raises
    ------
    ClosedOrbit
        If the winding number of ``rs`` is not zero.
    """
    n, _ = res.winding(rs)
    if n != 0 or any(c.closed for c in rs.curves):
        raise ClosedOrbit(f"resonant set has winding {n}; periods need an open orbit")
    B = field_strength(rs.spec, alpha)
    per = []
    for c in rs.curves:
        l = c.integrate(c.geom.normal.T) / B
        tau = float(c.integrate(1.0 / c.geom.speed)) / B
        per.append((l, tau))
    c = rs.curves[0]
    l0 = per[0][0]
    d = c.k - c.k[0]
    r = np.column_stack([d[:, 1], -d[:, 0]]) / B
    perp = np.array([-l0[1], l0[0]]) / np.hypot(*l0)
    proj = r @ perp
    extent = float(proj.max() - proj.min())
    A = rs.spec.unit_cell_volume
    gamma0 = A / (2 * np.pi) * sum(float(cc.integrate(1.0 / cc.geom.speed)) for cc in rs.curves)
    return OrbitPeriods(l0, per[0][1], extent, per, gamma0 / (2 * alpha))
