"""Resonant level sets S(Delta) = {k : omega(k) = Delta} and their geometry.

Curves are located by marching squares on the periodic reciprocal cell,
seeded vertices are polished onto S by Newton steps along grad omega, and
each connected component is then retraced with an arclength ODE so that the
stored samples are uniform in arclength and accurate to ~1e-12.  Samples
carry spectral quadrature weights, so smooth integrals over S converge
exponentially in the number of samples.

Orientation and sign conventions
--------------------------------
The unit tangent is ``t = R_90 v_hat = (-v_y, v_x)/v``; curves are traversed
along ``t``, which is the direction of motion of a wavepacket under
``k_dot = -v x B`` with ``B > 0``.  The outward normal is ``n = v_hat``.
With ``tHt = t . H . t`` we store

    K   = -tHt / v        (curvature; negative around a band minimum)
    m^T = 1 / tHt         (transverse mass)

so that ``K m^T v = -1``.  The winding number
``n = (1/2 pi) sum_S ds tHt / v`` equals +1 for a pocket around a band
minimum, -1 for a pocket around a maximum and 0 for an open orbit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

from . import lattice as lat
from .errors import EmptySet, NearVanHove, NonIntegerResidual, VanHove, ValidationError

__all__ = [
    "Curve",
    "ResonantSet",
    "Geometry",
    "CausticPoint",
    "CrossSection",
    "extract",
    "geometry_at",
    "winding",
    "caustics",
    "directional_cross_section",
    "polish",
]

V_MIN = 1e-6
VAN_HOVE_MARGIN = 1e-3
CAUSTIC_ANGLE_TOL = 1e-3


class Geometry(NamedTuple):
    v: np.ndarray
    speed: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    K: np.ndarray
    mT: np.ndarray
    tHt: np.ndarray


class CausticPoint(NamedTuple):
    k: np.ndarray
    direction: np.ndarray
    order: int
    curve_id: int
    s: float


class CrossSection(NamedTuple):
    sigma: float
    at_caustic: bool
    k_points: np.ndarray


def polish(spec, band, delta, k, iters: int = 12):
    """Newton-project points onto ``omega = delta`` along the gradient."""
    k = np.array(k, dtype=float)
    scale = spec.energy_scale
    for _ in range(iters):
        w, v, _ = lat.band_derivatives(spec, k, band, order=1)
        d = delta - w
        v2 = np.sum(v * v, axis=-1)
        k = k + (d / v2)[..., None] * v
        if np.max(np.abs(d)) < 1e-15 * scale:
            break
    return k


def _geometry(spec, band, k):
    w, v, H, gap = lat.band_derivatives(spec, k, band)
    speed = np.hypot(v[..., 0], v[..., 1])
    vh = v / speed[..., None]
    t = np.stack([-vh[..., 1], vh[..., 0]], axis=-1)
    tHt = np.einsum("...a,...ab,...b->...", t, H, t)
    with np.errstate(divide="ignore"):
        mT = 1.0 / tHt
    return Geometry(v, speed, vh, t, -tHt / speed, mT, tHt)


def geometry_at(spec, band, k, delta=None, tol: float = 1e-8):
    """Velocity, outward normal, curvature and transverse mass at ``k``.

    Parameters
    ----------
    k : array_like, shape (..., 2)
        Points on S.  If ``delta`` is given they are checked to lie on S.

    Raises
    ------
    VanHove
        If ``|v| <= 1e-6 J a`` anywhere.
    """
    k = np.asarray(k, dtype=float)
    if delta is not None:
        w = lat.band_derivatives(spec, k, band, order=1)[0]
        if np.max(np.abs(w - delta)) > tol * spec.energy_scale:
            raise ValidationError("point is not on the resonant set")
    g = _geometry(spec, band, k)
    if np.min(g.speed) <= V_MIN * spec.energy_scale:
        raise VanHove(f"group velocity {np.min(g.speed):.2e} below v_min")
    return g


@dataclass
class Curve:
    """One connected component of S, sampled uniformly in arclength.

    Attributes
    ----------
    k : ndarray (M, 2)
        Samples, unwrapped so that the curve is continuous.
    shift : ndarray (2,)
        ``k(L) - k(0)``; zero for closed curves, a reciprocal vector otherwise.
    winding_vector : tuple of int
        ``shift`` in the reciprocal basis.
    length : float
        Arclength of one period.
    """

    spec: lat.LatticeSpec
    band: int
    delta: float
    k: np.ndarray
    shift: np.ndarray
    winding_vector: tuple
    length: float
    geom: Geometry = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.geom = _geometry(self.spec, self.band, self.k)
        self.weights = self._weights()

    @property
    def closed(self) -> bool:
        return self.winding_vector == (0, 0)

    @property
    def n(self) -> int:
        return len(self.k)

    @property
    def s(self) -> np.ndarray:
        return np.cumsum(np.r_[0.0, self.weights[:-1]])

    def _periodic_coeffs(self):
        u = np.arange(self.n) / self.n
        p = self.k - u[:, None] * self.shift
        return np.fft.fft(p, axis=0) / self.n

    def _weights(self):
        c = self._periodic_coeffs()
        m = np.fft.fftfreq(self.n, 1.0 / self.n)
        dc = 2j * np.pi * m[:, None] * c
        if self.n % 2 == 0:
            dc[self.n // 2] = 0
        dk = np.fft.ifft(dc * self.n, axis=0).real + self.shift
        return np.hypot(dk[:, 0], dk[:, 1]) / self.n

    def tail(self) -> float:
        """Relative size of the top quarter of Fourier coefficients."""
        c = np.abs(self._periodic_coeffs()).max(axis=1)
        m = np.abs(np.fft.fftfreq(self.n, 1.0 / self.n))
        top = c[m > self.n / 4].max() if np.any(m > self.n / 4) else 0.0
        return float(top / max(self.length, 1e-300))

    def at(self, u):
        """Fourier-interpolated curve at parameters ``u`` in [0, 1), polished."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        c = self._periodic_coeffs()
        m = np.fft.fftfreq(self.n, 1.0 / self.n)
        if self.n % 2 == 0:
            c = c.copy()
            c[self.n // 2] *= 0.5
            c = np.vstack([c, c[self.n // 2][None]])
            m = np.r_[m, self.n // 2]
        e = np.exp(2j * np.pi * np.outer(u, m))
        k = (e @ c).real + u[:, None] * self.shift
        return polish(self.spec, self.band, self.delta, k)

    def resampled(self, n: int) -> "Curve":
        """Same curve with ``n`` samples via zero-padded Fourier interpolation."""
        if n == self.n:
            return self
        c = self._periodic_coeffs()
        M = self.n
        cn = np.zeros((n, 2), dtype=complex)
        h = M // 2
        if n > M:
            cn[:h] = c[:h]
            cn[n - (M - h) + (1 if M % 2 == 0 else 0):] = c[h + (1 if M % 2 == 0 else 0):]
            if M % 2 == 0:
                cn[h] = 0.5 * c[h]
                cn[n - h] = 0.5 * c[h]
        else:
            h2 = n // 2
            cn[:h2] = c[:h2]
            cn[n - h2 + (1 if n % 2 == 0 else 0):] = c[M - h2 + (1 if n % 2 == 0 else 0):]
        u = np.arange(n) / n
        k = np.fft.ifft(cn * n, axis=0).real + u[:, None] * self.shift
        k = polish(self.spec, self.band, self.delta, k)
        return Curve(self.spec, self.band, self.delta, k, self.shift,
                     self.winding_vector, self.length)

    def integrate(self, f) -> complex:
        """Spectral quadrature of samples ``f`` over one period of the curve."""
        return np.sum(np.asarray(f) * self.weights, axis=-1)


@dataclass
class ResonantSet:
    spec: lat.LatticeSpec
    band: int
    delta: float
    curves: list

    @property
    def closed(self) -> list:
        return [c.closed for c in self.curves]

    @property
    def length(self) -> float:
        return float(sum(c.length for c in self.curves))

    def integrate(self, fn) -> complex:
        """Sum over curves of ``sum_j w_j fn(curve)[j]``."""
        return sum(c.integrate(fn(c)) for c in self.curves)

    def resampled(self, n_per_length: float) -> "ResonantSet":
        """Copy with at least ``n_per_length * L`` samples on every curve."""
        cur = []
        for c in self.curves:
            n = max(c.n, int(2 ** np.ceil(np.log2(max(8, n_per_length * c.length)))))
            cur.append(c.resampled(n))
        return ResonantSet(self.spec, self.band, self.delta, cur)

    def to_csv(self, path) -> None:
        """Write columns (curve_id, s, k_x, k_y, v_x, v_y, K, mT)."""
        rows = []
        for i, c in enumerate(self.curves):
            g = c.geom
            rows.append(np.column_stack([np.full(c.n, i), c.s, c.k, g.v, g.K, g.mT]))
        data = np.vstack(rows) if rows else np.zeros((0, 8))
        np.savetxt(path, data, delimiter=",", header="curve_id,s,k_x,k_y,v_x,v_y,K,mT",
                   comments="", fmt=["%d"] + ["%.15g"] * 7)


def check_energy(spec, band, delta):
    """Raise unless ``delta`` lies inside ``band`` away from critical values."""
    lo, hi = lat.band_range(spec, band)
    scale = spec.energy_scale
    if not lo < delta < hi:
        raise EmptySet(f"Delta={delta} outside band {band} range [{lo:.6g}, {hi:.6g}]")
    crit = lat.critical_values(spec, band)
    if len(crit) and np.min(np.abs(crit - delta)) < VAN_HOVE_MARGIN * scale:
        raise NearVanHove(f"Delta={delta} within {VAN_HOVE_MARGIN} of a critical value")


def _march(F):
    """Periodic marching squares on a 2D array; returns loops of edge nodes.

    Nodes are edges of the grid carrying a sign change: ("h", i, j) between
    (i, j) and (i+1, j), ("v", i, j) between (i, j) and (i, j+1).
    """
    n0, n1 = F.shape
    pos = F > 0
    adj = {}

    def link(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    s00 = pos
    s10 = np.roll(pos, -1, 0)
    s01 = np.roll(pos, -1, 1)
    s11 = np.roll(s10, -1, 1)
    mixed = ~((s00 == s10) & (s00 == s01) & (s00 == s11))
    for i, j in np.argwhere(mixed):
        ip, jp = (i + 1) % n0, (j + 1) % n1
        # cell edges in cyclic order: bottom, right, top, left
        edges = [("h", i, j), ("v", ip, j), ("h", i, jp), ("v", i, j)]
        corners = [pos[i, j], pos[ip, j], pos[ip, jp], pos[i, jp]]
        cut = [e for q, e in enumerate(edges) if corners[q] != corners[(q + 1) % 4]]
        if len(cut) == 2:
            link(cut[0], cut[1])
        else:
            centre = 0.25 * (F[i, j] + F[ip, j] + F[ip, jp] + F[i, jp])
            # connect around the corner whose sign differs from the centre
            if (centre > 0) == corners[0]:
                link(edges[0], edges[1])
                link(edges[2], edges[3])
            else:
                link(edges[3], edges[0])
                link(edges[1], edges[2])
    loops = []
    seen = set()
    for start in adj:
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nb = adj[cur]
            nxt = nb[0] if nb[0] != prev else nb[1]
            if len(nb) > 1 and nb[0] == nb[1]:
                nxt = nb[0]
            if nxt == start:
                break
            seen.add(nxt)
            loop.append(nxt)
            prev, cur = cur, nxt
        loops.append(loop)
    return loops


def _node_frac(F, node):
    n0, n1 = F.shape
    kind, i, j = node
    if kind == "h":
        a, b = F[i, j], F[(i + 1) % n0, j]
        t = a / (a - b)
        return np.array([(i + t) / n0, j / n1])
    a, b = F[i, j], F[i, (j + 1) % n1]
    t = a / (a - b)
    return np.array([i / n0, (j + t) / n1])


def _trace(spec, band, delta, k0, shift, length_guess):
    """Arclength ODE along the tangent from ``k0`` to ``k0 + shift``."""
    target = k0 + shift
    t0 = _geometry(spec, band, k0).tangent

    def rhs(s, k):
        return _geometry(spec, band, k).tangent

    def event(s, k):
        if s < 0.5 * length_guess or np.hypot(*(k - target)) > 0.1 * length_guess:
            return -1.0
        return float(np.dot(k - target, t0))

    event.terminal = True
    event.direction = 1
    sol = integrate.solve_ivp(rhs, (0.0, 2.0 * length_guess + 1.0), k0, method="DOP853",
                              rtol=1e-12, atol=1e-13, events=event, dense_output=True)
    if not sol.t_events[0].size:
        raise ValidationError("failed to close resonant curve")
    return float(sol.t_events[0][0]), sol.sol


def extract(spec: lat.LatticeSpec, band: int, delta: float, grid_n: int = 512,
            check: bool = True) -> ResonantSet:
    """Resonant set of ``band`` at energy ``delta``.

    Parameters
    ----------
    grid_n : int
        Marching-squares grid resolution per reciprocal direction.

    Raises
    ------
    EmptySet
        ``delta`` outside the band.
    NearVanHove
        ``delta`` within ``1e-3 |J|`` of a critical value.
    """
    if check:
        check_energy(spec, band, delta)
    K = lat.frac_grid(spec, grid_n)
    F = lat.bands(spec, K)[..., band] - delta
    loops = _march(F)
    b = spec.reciprocal
    curves = []
    for loop in loops:
        fr = np.array([_node_frac(F, nd) for nd in loop])
        d = np.diff(np.vstack([fr, fr[:1]]), axis=0)
        d -= np.round(d)
        unwrapped = fr[0] + np.vstack([np.zeros(2), np.cumsum(d[:-1], axis=0)])
        wv = np.round(d.sum(axis=0)).astype(int)
        kp = unwrapped @ b
        kp = polish(spec, band, delta, kp)
        seg = np.diff(np.vstack([kp, kp[:1] + wv @ b]), axis=0)
        L_poly = float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))
        # orient along the tangent
        t0 = _geometry(spec, band, kp[0]).tangent
        if np.dot(seg[0], t0) < 0:
            wv = -wv
        shift = wv @ b
        L, sol = _trace(spec, band, delta, kp[0], shift, L_poly)
        M = 64
        while True:
            s = np.arange(M) * L / M
            k = polish(spec, band, delta, sol(s).T)
            c = Curve(spec, band, delta, k, shift, tuple(int(x) for x in wv), L)
            if c.tail() < 1e-11 or M >= 2 ** 15:
                break
            M *= 2
        if np.min(c.geom.speed) <= V_MIN * spec.energy_scale:
            raise VanHove("resonant curve passes through a Van Hove point")
        curves.append(c)
    # canonical order: by starting point
    curves.sort(key=lambda c: (c.winding_vector, round(float(c.k[:, 1].mean()), 9)))
    return ResonantSet(spec, band, float(delta), curves)


def winding(rs: ResonantSet, tol: float = 0.05):
    """Winding number ``(1/2 pi) int_S ds / (m^T v)``.

    Closed curves are traversed counter-clockwise, so the integral equals
    the turning number of the outward normal: a pocket around a band
    maximum (velocity pointing inward, negative ``m^T``) counts +1 just
    like a pocket around a minimum.

    Returns
    -------
    n : int
    residual : float
        ``|n_raw - n|``.
    """
    raw = 0.0
    for c in rs.curves:
        part = c.integrate(c.geom.tHt / c.geom.speed)
        if c.closed:
            # sign of the velocity flux through the curve: + outward, - inward
            dk = np.roll(c.k, -1, axis=0) - np.roll(c.k, 1, axis=0)
            area = np.sum(c.k[:, 0] * dk[:, 1] - c.k[:, 1] * dk[:, 0])
            flux = np.sum(c.geom.v[:, 0] * dk[:, 1] - c.geom.v[:, 1] * dk[:, 0])
            part *= np.sign(flux * area)
        raw += part
    raw /= 2 * np.pi
    n = int(np.round(raw))
    res = abs(raw - n)
    if res > tol:
        raise NonIntegerResidual(f"winding quadrature {raw:.4f} is not close to an integer")
    return n, float(res)


def _K_on_curve(c: Curve, u):
    return _geometry(c.spec, c.band, c.at(u)).K


def caustics(rs: ResonantSet, touch_tol: float = 1e-6) -> list:
    """Points of vanishing curvature on every curve.

    Simple caustics (order 1) are sign changes of K, refined by Brent's
    method.  Order-2 points are zeros where dK/ds also vanishes: either a
    sign change with ``|dK/ds| < touch_tol`` or a local minimum of ``|K|``
    that touches zero without a sign change.
    """
    out = []
    for ci, c in enumerate(rs.curves):
        K = c.geom.K
        n = c.n
        scale = max(np.max(np.abs(K)), 1e-300)
        f = lambda u: float(_K_on_curve(c, u)[0])
        cand = []
        for j in range(n):
            jn = (j + 1) % n
            a, b = K[j], K[jn]
            u0, u1 = j / n, (j + 1) / n
            if a == 0:
                cand.append(u0)
            elif a * b < 0:
                cand.append(optimize.brentq(f, u0, u1, xtol=1e-15, rtol=1e-15))
            else:
                # local minimum of |K| that may touch zero
                am = abs(K[j - 1])
                if abs(a) <= am and abs(a) <= abs(b) and abs(a) < 1e-2 * scale:
                    r = optimize.minimize_scalar(lambda u: f(u) ** 2, bracket=((j - 1) / n, u0, u1),
                                                 tol=1e-14)
                    if abs(f(r.x)) < touch_tol * 1e-2:
                        cand.append(float(r.x) % 1.0)
        for u in cand:
            k = c.at(u)[0]
            g = _geometry(c.spec, c.band, k)
            h = 1e-4 / max(c.length, 1e-12)
            dK = (f(u + h) - f(u - h)) / (2 * h * c.length)
            order = 2 if abs(dK) < touch_tol * scale else 1
            s = u * c.length
            if not any(p.curve_id == ci and abs(p.s - s) < 1e-6 * c.length for p in out):
                out.append(CausticPoint(k, g.normal, order, ci, s))
    return out


def directional_cross_section(rs: ResonantSet, vhat, tol: float = CAUSTIC_ANGLE_TOL,
                              caustic_list=None) -> CrossSection:
    """Directional density of resonant states ``sum A / ((2 pi)^2 v |K|)``.

    Sums over all ``k`` on S whose outward normal equals ``vhat``.  Returns
    ``sigma = inf`` with ``at_caustic=True`` when ``vhat`` is within ``tol``
    radians of a caustic direction and 0 beyond the caustic cutoff.
    """
    vhat = np.asarray(vhat, dtype=float)
    vhat = vhat / np.hypot(*vhat)
    spec = rs.spec
    A = spec.unit_cell_volume
    cl = caustics(rs) if caustic_list is None else caustic_list
    for p in cl:
        if np.arccos(np.clip(np.dot(p.direction, vhat), -1, 1)) < tol:
            return CrossSection(np.inf, True, np.array([p.k]))
    pts = stationary_points(rs, vhat)
    sigma = 0.0
    for k in pts:
        g = _geometry(spec, rs.band, k)
        sigma += A / ((2 * np.pi) ** 2 * g.speed * abs(g.K))
    return CrossSection(float(sigma), False, np.array(pts).reshape(-1, 2))


def stationary_points(rs: ResonantSet, vhat) -> list:
    """All ``k`` on S with outward normal parallel (not antiparallel) to ``vhat``."""
    vhat = np.asarray(vhat, dtype=float)
    vhat = vhat / np.hypot(*vhat)
    pts = []
    for c in rs.curves:
        nrm = c.geom.normal
        cr = nrm[:, 0] * vhat[1] - nrm[:, 1] * vhat[0]
        dot = nrm @ vhat
        n = c.n

        def f(u):
            g = _geometry(c.spec, c.band, c.at(u))
            return float(g.normal[0, 0] * vhat[1] - g.normal[0, 1] * vhat[0])

        for j in range(n):
            jn = (j + 1) % n
            if dot[j] <= 0 and dot[jn] <= 0:
                continue
            if cr[j] == 0:
                u = j / n
            elif cr[j] * cr[jn] < 0:
                u = optimize.brentq(f, j / n, (j + 1) / n, xtol=1e-15, rtol=1e-15)
            else:
                continue
            k = c.at(u)[0]
            if np.dot(_geometry(c.spec, c.band, k).normal, vhat) > 0:
                pts.append(k)
    return pts
