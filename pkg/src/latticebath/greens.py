"""Lattice Green's function G(rho, Delta) = Omega - i Gamma / 2.

    G(rho, Delta) = A int d^2k/(2 pi)^2  sum_nu  e^{i k.rho} Phi_nu(k) / (Delta - omega_nu(k) + i0)

with ``Phi_nu = U_{i nu} U*_{j nu}`` for the sublattice pair ``sub = (i, j)``
and ``rho`` the real-space separation of the two sites.  ``Gamma`` is the
surface integral over the resonant set and ``Omega`` the principal value.

Evaluators
----------
gamma
    Spectral arclength quadrature of ``A/(2 pi) int_S Phi e^{ik.rho}/v ds``.
omega_exact
    Principal value split by a Gaussian energy window ``chi(Delta - omega)``.
    The windowed part is reduced by the coarea formula to a regular 1D
    integral over energy shells,
        PV int chi(x) F(Delta - x) / x dx = int_0^eps chi(x) [F(Delta-x) - F(Delta+x)] / x dx,
    where ``F(E) = int_{S(E)} Phi e^{ik.rho} / v ds`` is computed on shells
    obtained by gradient flow from S(Delta).  The rest,
    ``(1 - chi)/(Delta - omega)``, is analytic and summed with the periodic
    trapezoid rule.
omega_brute
    Dense-grid ``Delta + i eta`` sums extrapolated to ``eta -> 0``; an oracle.
tube_approximant
    ``-i A int_S Pi(rho_hat . n) Phi e^{ik.rho} / (2 pi v) ds`` with
    ``Pi = (1 + Theta)/2``.
stationary_phase
    Far field from the points of S whose normal is parallel to ``rho``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import lattice as lat
from . import phasefunc
from . import resonant as res
from .errors import (CausticDirection, EmptySet, EpsilonTooLarge, FitUnreliable,
                     NoResonantDirection, QuadratureNotConverged, ValidationError)

__all__ = [
    "GreensValue",
    "resonant_bands",
    "resonant_sets",
    "gamma",
    "omega_exact",
    "omega_brute",
    "greens_exact",
    "tube_approximant",
    "stationary_phase",
    "ghost_scan",
    "decay_rate",
    "spin_coupling",
    "default_epsilon",
]


@dataclass
class GreensValue:
    """One evaluation of G.  ``G`` is assembled as ``omega - 0.5j * gamma``."""

    rho: np.ndarray
    delta: float
    omega: complex
    gamma: complex
    method: str
    error: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def G(self) -> complex:
        return self.omega - 0.5j * self.gamma


def _bands_for(spec, band):
    if band is None:
        return list(range(spec.n_sub))
    if not 0 <= band < spec.n_sub:
        raise ValidationError(f"band index {band} out of range")
    return [band]


def resonant_bands(spec, band, delta) -> list:
    """Bands (among the selected ones) whose range contains ``delta``."""
    out = []
    for b in _bands_for(spec, band):
        lo, hi = lat.band_range(spec, b)
        if lo < delta < hi:
            out.append(b)
    return out


@functools.lru_cache(maxsize=32)
def _cached_set(spec, band, delta, grid_n):
    return res.extract(spec, band, delta, grid_n=grid_n)


def resonant_sets(spec, band, delta, grid_n: int = 256) -> list:
    """Resonant sets of every selected band that intersects ``delta``."""
    return [_cached_set(spec, b, float(delta), grid_n) for b in resonant_bands(spec, band, delta)]


def _rho(rho):
    r = np.asarray(rho, dtype=float)
    if r.shape[-1] != 2:
        raise ValidationError("rho must have a trailing axis of length 2")
    return r


def _phi(spec, band, k, sub):
    if spec.n_sub == 1:
        return np.ones(k.shape[:-1])
    _, U = lat.bands(spec, k, vectors=True)
    i, j = sub
    return U[..., i, band] * U[..., j, band].conj()


def _samples_per_length(rho_max):
    return (rho_max + 40.0) / np.pi


def _curve_terms(spec, curve, rho, sub):
    """Per-sample factor ``w Phi / v`` and phase matrix ``exp(i k . rho)``."""
    phi = _phi(spec, curve.band, curve.k, sub)
    a = curve.weights * phi / curve.geom.speed
    ph = np.exp(1j * (curve.k @ rho.T))
    return a, ph


def _squeeze(x, rho):
    x = np.asarray(x)
    return x.reshape(rho.shape[:-1]) if rho.ndim > 1 else x.reshape(())[()]


def _realify(x, tol=1e-12):
    x = np.asarray(x)
    if np.all(np.abs(x.imag) <= tol * np.maximum(np.abs(x), 1e-300)) or np.all(np.abs(x.imag) < 1e-15):
        return x.real
    return x


def gamma(spec, band, rho, delta, sub=(0, 0), grid_n: int = 256, sets=None):
    """Incoherent part ``Gamma(rho, Delta)``.

    Parameters
    ----------
    band : int or None
        Single band, or ``None`` to sum all bands.
    rho : array_like, shape (2,) or (n, 2)
    sub : tuple of int
        Sublattice pair ``(i, j)``.

    Returns
    -------
    float or ndarray
        Real unless the model breaks the ``rho -> -rho`` symmetry.
    """
    rho = _rho(rho)
    r2 = rho.reshape(-1, 2)
    sets = resonant_sets(spec, band, delta, grid_n) if sets is None else sets
    A = spec.unit_cell_volume
    tot = np.zeros(len(r2), dtype=complex)
    spl = _samples_per_length(np.max(np.hypot(r2[:, 0], r2[:, 1])))
    for rs in sets:
        for c in rs.resampled(spl).curves:
            a, ph = _curve_terms(spec, c, r2, sub)
            tot += a @ ph
    return _realify(_squeeze(A / (2 * np.pi) * tot, rho))


def default_epsilon(sets) -> float:
    """Half the smallest radius of curvature over all resonant curves."""
    kmax = max(np.max(np.abs(c.geom.K)) for rs in sets for c in rs.curves)
    return 0.5 / kmax


def tube_approximant(spec, band, rho, delta, eps: Optional[float] = None, sub=(0, 0),
                     grid_n: int = 256, sets=None):
    """Tube-formula approximant of G (complex).

    Raises
    ------
    EpsilonTooLarge
        If ``eps >= 0.9 / max|K|``.
    """
    rho = _rho(rho)
    r2 = rho.reshape(-1, 2)
    sets = resonant_sets(spec, band, delta, grid_n) if sets is None else sets
    if not sets:
        raise EmptySet(f"no band resonant at Delta={delta}")
    kmax = max(np.max(np.abs(c.geom.K)) for rs in sets for c in rs.curves)
    if eps is None:
        eps = 0.5 / kmax
    if eps * kmax >= 0.9:
        raise EpsilonTooLarge(f"eps={eps:g} exceeds 0.9 x minimal curvature radius {1 / kmax:g}")
    A = spec.unit_cell_volume
    tot = np.zeros(len(r2), dtype=complex)
    spl = _samples_per_length(np.max(np.hypot(r2[:, 0], r2[:, 1])))
    for rs in sets:
        for c in rs.resampled(spl).curves:
            a, ph = _curve_terms(spec, c, r2, sub)
            y = eps * (c.geom.normal @ r2.T)
            pi_ = 0.5 * (1.0 + phasefunc.T(y))
            tot += a @ (ph * pi_)
    return _squeeze(-1j * A / (2 * np.pi) * tot, rho)


def stationary_phase(spec, band, rho, delta, sub=(0, 0), grid_n: int = 256,
                     angle_tol: float = res.CAUSTIC_ANGLE_TOL, sets=None) -> complex:
    """Leading far-field term of G along ``rho``.

    Sums ``-i A Phi e^{i k0.rho} e^{i sgn(K) pi/4} / (v sqrt|K| sqrt(2 pi rho))``
    over points ``k0`` of S with ``v_hat(k0) = rho_hat``.

    Raises
    ------
    CausticDirection
        ``rho_hat`` within ``angle_tol`` of a caustic direction.
    NoResonantDirection
        No point of S radiates along ``rho_hat`` (ghost regime).
    """
    rho = _rho(rho).reshape(2)
    r = float(np.hypot(*rho))
    rhat = rho / r
    sets = resonant_sets(spec, band, delta, grid_n) if sets is None else sets
    A = spec.unit_cell_volume
    total = 0j
    found = False
    for rs in sets:
        for p in res.caustics(rs):
            if np.arccos(np.clip(np.dot(p.direction, rhat), -1, 1)) < angle_tol:
                raise CausticDirection(f"rho is along a caustic direction {p.direction}")
        for k0 in res.stationary_points(rs, rhat):
            g = res._geometry(spec, rs.band, k0)
            phi = _phi(spec, rs.band, k0, sub)
            total += (-1j * A * phi * np.exp(1j * np.dot(k0, rho))
                      * np.exp(1j * np.sign(g.K) * np.pi / 4)
                      / (g.speed * np.sqrt(abs(g.K)) * np.sqrt(2 * np.pi * r)))
            found = True
    if not found:
        raise NoResonantDirection(f"no resonant state radiates along {rhat}")
    return complex(total)


# ---------------------------------------------------------------------------
# exact principal value

def _flow_shells(spec, band, delta, curve, energies, h_max=0.05):
    """Carry the samples of ``curve`` to the level sets at ``energies``.

    ``energies`` must be monotone and on one side of ``delta``.  Returns a
    list of (k, weights) per energy.
    """
    k = curve.k.copy()
    e_cur = delta
    out = []

    def f(kk):
        _, v, _ = lat.band_derivatives(spec, kk, band, order=1)
        return v / np.sum(v * v, axis=-1)[:, None]

    for e in energies:
        span = e - e_cur
        nst = max(1, int(np.ceil(abs(span) / h_max)))
        h = span / nst
        for _ in range(nst):
            k1 = f(k)
            k2 = f(k + 0.5 * h * k1)
            k3 = f(k + 0.5 * h * k2)
            k4 = f(k + h * k3)
            k = k + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        k = res.polish(spec, band, e, k)
        e_cur = e
        shell = res.Curve.__new__(res.Curve)
        shell.spec, shell.band, shell.delta = spec, band, e
        shell.k, shell.shift = k, curve.shift
        shell.winding_vector, shell.length = curve.winding_vector, curve.length
        w = shell._weights()
        out.append((k.copy(), w))
    return out


def _shell_F(spec, band, k, w, rho, sub):
    _, v, _ = lat.band_derivatives(spec, k, band, order=1)
    speed = np.hypot(v[:, 0], v[:, 1])
    a = w * _phi(spec, band, k, sub) / speed
    return a @ np.exp(1j * (k @ rho.T)), (a[::2] * 2) @ np.exp(1j * (k[::2] @ rho.T))


def _window_width(spec, band, delta):
    crit = lat.critical_values(spec, band)
    lo, hi = lat.band_range(spec, band)
    dist = np.min(np.abs(np.r_[crit, lo, hi] - delta))
    return 0.9 * dist


def _lattice_coords(spec, rho, sub):
    """Integer cell coordinates of ``rho - (r_i - r_j)`` or None."""
    off = spec.offsets[sub[0]] - spec.offsets[sub[1]]
    m = (rho - off) @ np.linalg.inv(spec.vectors)
    mi = np.round(m)
    if np.all(np.abs(m - mi) < 1e-9):
        return mi.astype(int), off
    return None, off


def _remainder(spec, delta, rho, sub, windows, tol_fn, n_max=4096, n0=128):
    """Trapezoid sum of the window-free part; returns (values, error, N).

    ``tol_fn(values)`` gives the absolute tolerance for the current values.
    """
    coords, off = _lattice_coords(spec, rho, sub)
    i, j = sub
    prev = None
    N = n0
    while True:
        vals = np.zeros(len(rho), dtype=complex)
        half = np.zeros(len(rho), dtype=complex)
        grid = np.zeros((N, N), dtype=complex)
        K = lat.frac_grid(spec, N)
        if spec.n_sub == 1:
            e = lat.bands(spec, K)
            U = None
        else:
            e, U = lat.bands(spec, K, vectors=True)
        for b in range(spec.n_sub):
            x = delta - e[..., b]
            w = windows.get(b)
            if w is None:
                g = 1.0 / x
            else:
                with np.errstate(invalid="ignore", divide="ignore"):
                    g = np.where(x == 0, 0.0, -np.expm1(-(x / w) ** 2) / x)
            phi = 1.0 if U is None else U[..., i, b] * U[..., j, b].conj()
            grid += phi * g
        if coords is not None:
            grid_ph = grid * np.exp(1j * (K @ off))
            F = np.fft.ifft2(grid_ph)
            Fh = np.fft.ifft2(grid_ph[::2, ::2])
            vals = F[coords[:, 0] % N, coords[:, 1] % N]
            half = Fh[coords[:, 0] % (N // 2), coords[:, 1] % (N // 2)]
        else:
            Kf = K.reshape(-1, 2)
            gf = grid.ravel()
            for s in range(0, len(rho)):
                ph = np.exp(1j * (Kf @ rho[s]))
                vals[s] = np.mean(gf * ph)
                half[s] = np.mean((grid * ph.reshape(N, N))[::2, ::2])
        err = np.abs(vals - half)
        if np.all(err <= tol_fn(vals)) or N >= n_max:
            return vals, err, N
        N *= 2


def omega_exact(spec, band, rho, delta, sub=(0, 0), grid_n: int = 256, n_energy: Optional[int] = None,
                rtol: float = 1e-7, full_output: bool = False, raise_on_fail: bool = True):
    """Exact coherent part ``Omega(rho, Delta)`` (principal value).

    Parameters
    ----------
    band : int or None
        Single band, or ``None`` for the sum over all bands.
    rho : array_like, shape (2,) or (n, 2)
    n_energy : int, optional
        Gauss-Legendre nodes for the energy-shell integral.  By default
        ``48 + rho_max eps / v_min``, enough to follow the oscillation of
        the shell integrals in energy.
    rtol : float
        Target error relative to ``|G|``.
    full_output : bool
        Return a list of :class:`GreensValue` carrying Gamma and the error
        estimate instead of bare values.

    Raises
    ------
    QuadratureNotConverged
        If the estimated relative error exceeds ``rtol``.
    """
    rho = _rho(rho)
    r2 = rho.reshape(-1, 2)
    A = spec.unit_cell_volume
    rb = resonant_bands(spec, band, delta)
    sets = resonant_sets(spec, band, delta, grid_n)
    windows = {}
    tube = np.zeros(len(r2), dtype=complex)
    tube_err = np.zeros(len(r2))
    gam = np.zeros(len(r2), dtype=complex)
    spl = _samples_per_length(np.max(np.hypot(r2[:, 0], r2[:, 1])))
    for rs in sets:
        b = rs.band
        eps = _window_width(spec, b, delta)
        w = eps / 6.1
        windows[b] = w
        vmin = min(np.min(c.geom.speed) for c in rs.curves)
        ne = n_energy or 48 + int(np.max(np.hypot(r2[:, 0], r2[:, 1])) * eps / vmin)
        x, wx = np.polynomial.legendre.leggauss(ne)
        x = 0.5 * eps * (x + 1)
        wx = 0.5 * eps * wx
        xh, wxh = np.polynomial.legendre.leggauss(int(ne * 0.6))
        xh = 0.5 * eps * (xh + 1)
        wxh = 0.5 * eps * wxh
        for c in rs.resampled(spl).curves:
            F0, _ = _shell_F(spec, b, c.k, c.weights, r2, sub)
            gam += F0
            for nodes, wts, acc in ((x, wx, "main"), (xh, wxh, "half")):
                Fp = [_shell_F(spec, b, k, ww, r2, sub) for k, ww in
                      _flow_shells(spec, b, delta, c, delta + nodes)]
                Fm = [_shell_F(spec, b, k, ww, r2, sub) for k, ww in
                      _flow_shells(spec, b, delta, c, delta - nodes)]
                Fp_, Fm_ = np.array([f[0] for f in Fp]), np.array([f[0] for f in Fm])
                kern = (wts * np.exp(-(nodes / w) ** 2) / nodes)[:, None]
                val = np.sum(kern * (Fm_ - Fp_), axis=0)
                if acc == "main":
                    tube += val
                    # sample-count error from the subsampled shells
                    Fp2, Fm2 = np.array([f[1] for f in Fp]), np.array([f[1] for f in Fm])
                    tube_err += np.abs(np.sum(kern * (Fm2 - Fp2), axis=0) - val)
                else:
                    tube_err += np.abs(val - main_val)
                main_val = val
    tube *= A / (2 * np.pi) ** 2
    tube_err *= A / (2 * np.pi) ** 2
    gam *= A / (2 * np.pi)
    # the trapezoid mean over the reciprocal cell already carries A/(2 pi)^2
    rem, rem_err, N = _remainder(
        spec, delta, r2, sub, windows,
        lambda v: np.maximum(0.1 * rtol * np.abs(tube + v - 0.5j * gam), 1e-16))
    omega = tube + rem
    G = omega - 0.5j * gam
    err = (tube_err + rem_err) / np.maximum(np.abs(G), 1e-300)
    worst = float(np.max(err))
    if worst > rtol and raise_on_fail:
        raise QuadratureNotConverged(f"omega_exact relative error {worst:.2e} > {rtol:.1e}",
                                     estimate=_squeeze(omega, rho), error=worst)
    if spec.is_real and sub[0] == sub[1]:
        omega, gam = omega.real, gam.real
    if full_output:
        out = [GreensValue(r2[q], float(delta), omega[q], gam[q], "exact",
                           float(err[q]), dict(N=N, windows=windows, bands=rb))
               for q in range(len(r2))]
        return out if rho.ndim > 1 else out[0]
    return _realify(_squeeze(omega, rho))


def greens_exact(spec, band, rho, delta, sub=(0, 0), **kw):
    """Complex ``G = Omega - i Gamma / 2`` from :func:`omega_exact`."""
    vals = omega_exact(spec, band, rho, delta, sub=sub, full_output=True, **kw)
    if isinstance(vals, list):
        return np.array([v.G for v in vals])
    return vals.G


# ---------------------------------------------------------------------------
# brute-force oracle

@dataclass
class BruteResult:
    G: complex
    omega: complex
    gamma: complex
    residual: float
    etas: np.ndarray
    values: np.ndarray


def _brute_sum(spec, band, rho, z, sub, N, chunk=512):
    coords, off = _lattice_coords(spec, rho, sub)
    b = spec.reciprocal
    i, j = sub
    u = np.arange(N) / N
    out = np.zeros(len(rho), dtype=complex)
    if coords is not None:
        grid = np.empty((N, N), dtype=complex)
    for s in range(0, N, chunk):
        U1, U2 = np.meshgrid(u[s:s + chunk], u, indexing="ij")
        K = U1[..., None] * b[0] + U2[..., None] * b[1]
        h = lat.hamiltonian(spec, K)
        if spec.n_sub == 1:
            val = 1.0 / (z - h[..., 0, 0])
        elif band is None:
            eye = np.eye(spec.n_sub)
            val = np.linalg.inv(z * eye - h)[..., i, j]
        else:
            e, Uv = np.linalg.eigh(h)
            val = Uv[..., i, band] * Uv[..., j, band].conj() / (z - e[..., band])
        if coords is not None:
            grid[s:s + chunk] = val * np.exp(1j * (K @ off))
        else:
            for q in range(len(rho)):
                out[q] += np.sum(val * np.exp(1j * (K @ rho[q])))
    if coords is not None:
        F = np.fft.ifft2(grid)
        return F[coords[:, 0] % N, coords[:, 1] % N]
    return out / N ** 2


def omega_brute(spec, band, rho, delta, eta_list=None, sub=(0, 0), degree=None,
                n_cap: int = 6000) -> BruteResult:
    """Oracle ``G(Delta + i eta)`` on dense grids, extrapolated to ``eta -> 0``.

    The grid size for each eta is chosen so that the trapezoid error of the
    Lorentzian-broadened integrand is below ~1e-13.  Values are fitted by a
    polynomial in eta; the residual is the change between degrees ``m`` and
    ``m - 1``.

    Returns
    -------
    BruteResult
        ``omega = Re``-like principal part and ``gamma = -2 Im`` part of the
        extrapolated value (complex for a batch of rho: arrays).
    """
    rho = _rho(rho)
    r2 = rho.reshape(-1, 2)
    if band is not None:
        _bands_for(spec, band)
    if eta_list is None:
        # the eta -> 0 expansion converges within the distance to the
        # nearest critical value, which sets the eta scale
        d = min(np.min(np.abs(np.r_[lat.critical_values(spec, bb), lat.band_range(spec, bb)] - delta))
                for bb in _bands_for(spec, band))
        d = min(max(d, 0.05 * spec.energy_scale), 4 * spec.energy_scale)
        eta_list = d * (0.08 + 0.52 * (1 - np.cos(np.linspace(0, np.pi / 2, 12))))
    etas = np.sort(np.asarray(eta_list, dtype=float))[::-1]
    # fastest velocity over the zone bounds the width of the Lorentzian in k
    K = lat.frac_grid(spec, 64)
    vmax = 0.0
    for bb in _bands_for(spec, band):
        _, v, _ = lat.band_derivatives(spec, K, bb, order=1)
        vmax = max(vmax, float(np.max(np.hypot(v[..., 0], v[..., 1]))))
    bl = float(np.max(np.hypot(*spec.reciprocal.T)))
    vals = []
    for eta in etas:
        N = int(np.ceil(30 * max(vmax, 1e-3) * bl / (2 * np.pi * eta)))
        N = min(max(64, 2 * ((N + 1) // 2)), n_cap)
        vals.append(_brute_sum(spec, band, r2, delta + 1j * eta, sub, N))
    vals = np.array(vals)                      # (n_eta, n_rho)
    m = len(etas) - 2 if degree is None else degree
    x = etas / etas.max()
    V = np.vander(x, m + 1, increasing=True)
    V1 = np.vander(x, m, increasing=True)
    c = np.linalg.lstsq(V, vals, rcond=None)[0]
    c1 = np.linalg.lstsq(V1, vals, rcond=None)[0]
    g0 = c[0]
    resid = np.abs(c[0] - c1[0]) / np.maximum(np.abs(c[0]), 1e-300)
    # the trapezoid mean already carries A/(2 pi)^2; split G = Omega - i Gamma / 2 for symmetric kernels; general case keeps the
    # anti-Hermitian part from G(-rho)
    omega = g0.real if spec.is_real and sub[0] == sub[1] else g0
    gam = -2 * g0.imag
    return BruteResult(_squeeze(g0, rho), _squeeze(omega, rho), _squeeze(gam, rho),
                       float(np.max(resid)), etas, vals)


def spin_coupling(g: float, greens) -> complex:
    """Emitter-emitter coupling ``H_ij = g^2 G(rho_ij, Delta)``.

    Parameters
    ----------
    greens : GreensValue or complex
    """
    if abs(g) > 0.2:
        warnings.warn("g > 0.2 J lies outside the weak-coupling regime", stacklevel=2)
    G = greens.G if isinstance(greens, GreensValue) else complex(greens)
    return g * g * G


# ---------------------------------------------------------------------------
# ghost waves

@dataclass
class DecayFit:
    kappa: float
    intercept: float
    r2: float
    n: np.ndarray
    envelope: np.ndarray


def decay_rate(n, values, length: float = 1.0, min_points: int = 4) -> DecayFit:
    """Fit ``log(|Gamma| sqrt(rho)) = c - kappa rho`` on envelope maxima.

    Parameters
    ----------
    n : array_like
        Integer multiples of the step vector.
    values : array_like
        Gamma at ``n`` times the step.
    length : float
        Length of the step vector, so that ``rho = n * length``.
    """
    n = np.asarray(n, dtype=float)
    y = np.abs(np.asarray(values)) * np.sqrt(n * length)
    ly = np.log(np.maximum(y, 1e-300))
    # local maxima of the oscillating envelope
    idx = [q for q in range(1, len(y) - 1) if y[q] >= y[q - 1] and y[q] >= y[q + 1]]
    if len(idx) < min_points:
        idx = list(range(len(y)))
    idx = np.array(idx)
    fit = stats.linregress(n[idx] * length, ly[idx])
    return DecayFit(-fit.slope, fit.intercept, fit.rvalue ** 2, n[idx], y[idx])


@dataclass
class GhostScan:
    theta_c: float
    thetas: np.ndarray
    kappa: np.ndarray
    fits: list
    p: float
    prefactor: float
    r2: float
    directions: list


def ghost_scan(spec, band, delta, theta_c, directions, n_range, grid_n: int = 256,
               r2_min: float = 0.98, sets=None) -> GhostScan:
    """Exponential decay rates of Gamma beyond a caustic and their power law.

    Parameters
    ----------
    theta_c : float
        Caustic angle (radians from the x axis), e.g. from :func:`caustics`.
    directions : sequence of (p, q)
        Integer lattice steps; ``rho = n (p a_1 + q a_2)``.  Lattice steps
        keep every ``rho`` on a lattice site.
    n_range : sequence of int or callable
        Multiples ``n`` used per direction (callable receives the direction).

    Raises
    ------
    FitUnreliable
        If the power-law fit of ``log kappa`` against ``log |theta - theta_c|``
        has ``R^2 < r2_min``.
    """
    sets = resonant_sets(spec, band, delta, grid_n) if sets is None else sets
    thetas, kappas, fits = [], [], []
    for d in directions:
        step = np.asarray(d, dtype=float) @ spec.vectors
        L = float(np.hypot(*step))
        th = float(np.arctan2(step[1], step[0]))
        ns = np.asarray(n_range(d) if callable(n_range) else n_range, dtype=float)
        g = gamma(spec, band, ns[:, None] * step, delta, sets=sets)
        f = decay_rate(ns, g, L)
        thetas.append(th)
        kappas.append(f.kappa)
        fits.append(f)
    thetas = np.array(thetas)
    kappas = np.array(kappas)
    dth = np.abs(thetas - theta_c)
    ok = kappas > 0
    fit = stats.linregress(np.log(dth[ok]), np.log(kappas[ok]))
    scan = GhostScan(theta_c, thetas, kappas, fits, fit.slope, float(np.exp(fit.intercept)),
                     fit.rvalue ** 2, list(directions))
    if scan.r2 < r2_min:
        raise FitUnreliable(f"power-law fit R^2 = {scan.r2:.3f} < {r2_min}", result=scan)
    return scan
