"""Periodic tight-binding lattices in two dimensions.

A lattice is a list of sublattice positions inside a unit cell plus a list of
hoppings.  A coupling ``(i, j, cell, J)`` is the matrix element
``<i, R | H | j, R + cell . a>`` = J.  Bloch Hamiltonians use the atomic gauge

    h_ij(k) = sum J exp(i k . (cell . a + r_j - r_i)),

so that Bloch eigenfunctions read ``psi_nu(k, r) = exp(i k.r) U_{i nu}(k)``.

All quantities are in units of the hopping scale J and lattice constant a
unless stated otherwise.  Energies are in J, wavevectors in 1/a, velocities
in J a and Hessians in J a^2.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .errors import DegenerateBand, ValidationError

__all__ = [
    "Coupling",
    "LatticeSpec",
    "BlochSample",
    "DispersionDerivatives",
    "build_square",
    "build_honeycomb",
    "hamiltonian",
    "bands",
    "band_derivatives",
    "bloch",
    "derivatives",
    "critical_values",
    "band_range",
    "reduce_to_bz",
    "to_json",
    "from_json",
]

DEGENERACY_TOL = 1e-8


class Coupling(NamedTuple):
    """Hopping from sublattice ``src`` in cell 0 to ``dst`` in cell ``cell``."""

    src: int
    dst: int
    cell: tuple
    amplitude: complex


@dataclass(frozen=True)
class LatticeSpec:
    """Immutable tight-binding model.

    Parameters
    ----------
    lattice_vectors : tuple of tuple
        Primitive vectors ``a_i`` as rows.
    sublattice_offsets : tuple of tuple
        Positions of the sublattice sites inside the unit cell.
    couplings : tuple of Coupling
        Hopping list.  Missing Hermitian partners are added on construction.
    name : str
        Free-form label.
    """

    lattice_vectors: tuple
    sublattice_offsets: tuple
    couplings: tuple
    name: str = ""
    dimension: int = 2

    def __post_init__(self):
        if self.dimension != 2:
            raise ValidationError("only d = 2 lattices are supported")
        lv = tuple(tuple(float(x) for x in v) for v in self.lattice_vectors)
        off = tuple(tuple(float(x) for x in v) for v in self.sublattice_offsets)
        if len(lv) != 2 or any(len(v) != 2 for v in lv):
            raise ValidationError("need two 2-component lattice vectors")
        if abs(np.linalg.det(np.array(lv))) < 1e-12:
            raise ValidationError("lattice vectors are linearly dependent")
        if not off:
            raise ValidationError("need at least one sublattice")
        ns = len(off)
        cpl = []
        for c in self.couplings:
            c = Coupling(int(c[0]), int(c[1]), tuple(int(x) for x in c[2]),
                         complex(c[3]))
            if not (0 <= c.src < ns and 0 <= c.dst < ns) or len(c.cell) != 2:
                raise ValidationError(f"bad coupling {c}")
            cpl.append(c)
        cpl = _hermitian_closure(cpl)
        object.__setattr__(self, "lattice_vectors", lv)
        object.__setattr__(self, "sublattice_offsets", off)
        object.__setattr__(self, "couplings", tuple(cpl))

    @property
    def n_sub(self) -> int:
        return len(self.sublattice_offsets)

    @property
    def vectors(self) -> np.ndarray:
        """Lattice vectors as a (2, 2) array, one vector per row."""
        return np.array(self.lattice_vectors)

    @property
    def offsets(self) -> np.ndarray:
        return np.array(self.sublattice_offsets)

    @property
    def reciprocal(self) -> np.ndarray:
        """Reciprocal basis ``b_j`` as rows, ``a_i . b_j = 2 pi delta_ij``."""
        return 2 * np.pi * np.linalg.inv(self.vectors).T

    @property
    def unit_cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.vectors)))

    @property
    def energy_scale(self) -> float:
        return max(abs(c.amplitude) for c in self.couplings) if self.couplings else 1.0

    @property
    def is_real(self) -> bool:
        return all(abs(c.amplitude.imag) == 0 for c in self.couplings)

    @functools.cached_property
    def _arrays(self):
        a = self.vectors
        r = self.offsets
        src = np.array([c.src for c in self.couplings], dtype=int)
        dst = np.array([c.dst for c in self.couplings], dtype=int)
        cell = np.array([c.cell for c in self.couplings], dtype=float).reshape(-1, 2)
        amp = np.array([c.amplitude for c in self.couplings], dtype=complex)
        bond = cell @ a + r[dst] - r[src]
        return src, dst, bond, amp

    def bond_vectors(self) -> np.ndarray:
        """Real-space displacement of every coupling, shape (n_couplings, 2)."""
        return self._arrays[2].copy()


def _hermitian_closure(cpl):
    keyed = {}
    for c in cpl:
        key = (c.src, c.dst, c.cell)
        keyed[key] = keyed.get(key, 0) + c.amplitude
    out = dict(keyed)
    for (i, j, cell), amp in keyed.items():
        partner = (j, i, (-cell[0], -cell[1]))
        if partner in keyed:
            if abs(keyed[partner] - np.conj(amp)) > 1e-12 * max(1.0, abs(amp)):
                raise ValidationError(f"couplings {(i, j, cell)} and {partner} "
                                      "are not Hermitian conjugates")
        else:
            out[partner] = np.conj(amp)
    return [Coupling(i, j, cell, complex(amp)) for (i, j, cell), amp in sorted(out.items())]


class BlochSample(NamedTuple):
    k: np.ndarray
    h: np.ndarray
    bands: np.ndarray
    eigenvectors: np.ndarray


class DispersionDerivatives(NamedTuple):
    energy: float
    v: np.ndarray
    speed: float
    H: np.ndarray


def build_square(jx: float = 1.0, jy: float = 1.0, a: float = 1.0) -> LatticeSpec:
    """Square lattice with ``omega = 2 (jx cos kx a + jy cos ky a)``."""
    if not a > 0:
        raise ValidationError("lattice constant must be positive")
    cpl = [Coupling(0, 0, (1, 0), jx), Coupling(0, 0, (0, 1), jy)]
    return LatticeSpec(((a, 0.0), (0.0, a)), ((0.0, 0.0),), tuple(cpl),
                       name=f"square(jx={jx:g}, jy={jy:g})")


def build_honeycomb(j1: float = 1.0, j2: float = 0.0, a: float = 1.0,
                    nnn: str = "a1a2") -> LatticeSpec:
    """Honeycomb lattice with nearest-neighbour distance ``a``.

    Uses ``a1 = a (3/2, sqrt(3)/2)``, ``a2 = a (3/2, -sqrt(3)/2)``, with the
    A site at the origin and the B site at ``(a, 0)``.  The intra-sublattice
    hopping ``j2`` acts along ``+-a1`` and ``+-a2`` by default, giving

        omega_pm(k) = 2 j2 [cos k.a1 + cos k.a2] +- |j1| |1 + e^{ik.a1} + e^{ik.a2}|.

    Parameters
    ----------
    nnn : {"a1a2", "isotropic"}
        ``"isotropic"`` also adds ``+-(a1 - a2)``, i.e. all six second
        neighbours.
    """
    if not a > 0:
        raise ValidationError("lattice constant must be positive")
    s3 = np.sqrt(3.0)
    a1 = (1.5 * a, 0.5 * s3 * a)
    a2 = (1.5 * a, -0.5 * s3 * a)
    cpl = [Coupling(0, 1, (0, 0), j1), Coupling(0, 1, (-1, 0), j1),
           Coupling(0, 1, (0, -1), j1)]
    cells = [(1, 0), (0, 1)]
    if nnn == "isotropic":
        cells.append((1, -1))
    elif nnn != "a1a2":
        raise ValidationError(f"unknown nnn option {nnn!r}")
    if j2 != 0:
        for s in (0, 1):
            cpl += [Coupling(s, s, c, j2) for c in cells]
    return LatticeSpec((a1, a2), ((0.0, 0.0), (a, 0.0)), tuple(cpl),
                       name=f"honeycomb(j1={j1:g}, j2={j2:g}, nnn={nnn})")


def _kv(k):
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != 2:
        raise ValidationError("wavevectors must have a trailing axis of length 2")
    return k


def hamiltonian(spec: LatticeSpec, k, order: int = 0):
    """Bloch matrix and optionally its k-derivatives.

    Parameters
    ----------
    k : array_like, shape (..., 2)
    order : {0, 1, 2}

    Returns
    -------
    h : ndarray, shape (..., ns, ns)
    dh : ndarray, shape (..., 2, ns, ns), if ``order >= 1``
    d2h : ndarray, shape (..., 2, 2, ns, ns), if ``order == 2``
    """
    k = _kv(k)
    src, dst, bond, amp = spec._arrays
    ns = spec.n_sub
    shp = k.shape[:-1]
    ph = amp * np.exp(1j * (k @ bond.T))                  # (..., nc)
    flat = src * ns + dst
    h = np.zeros(shp + (ns * ns,), dtype=complex)
    # few couplings, so a loop is cheaper than scatter with broadcasting
    for c in range(len(amp)):
        h[..., flat[c]] += ph[..., c]
    out = [h.reshape(shp + (ns, ns))]
    if order >= 1:
        dh = np.zeros(shp + (2, ns * ns), dtype=complex)
        for c in range(len(amp)):
            dh[..., :, flat[c]] += 1j * bond[c] * ph[..., c, None]
        out.append(dh.reshape(shp + (2, ns, ns)))
    if order >= 2:
        d2h = np.zeros(shp + (2, 2, ns * ns), dtype=complex)
        for c in range(len(amp)):
            bb = -np.outer(bond[c], bond[c])
            d2h[..., :, :, flat[c]] += bb * ph[..., c, None, None]
        out.append(d2h.reshape(shp + (2, 2, ns, ns)))
    return out[0] if order == 0 else tuple(out)


def bands(spec: LatticeSpec, k, vectors: bool = False):
    """Band energies (ascending) and optionally eigenvectors at ``k``."""
    h = hamiltonian(spec, k)
    if spec.n_sub == 1:
        w = h[..., 0].real
        if vectors:
            return w, np.ones_like(h)
        return w
    if vectors:
        return np.linalg.eigh(h)
    return np.linalg.eigvalsh(h)


def band_derivatives(spec: LatticeSpec, k, band: int, order: int = 2):
    """Vectorized energy, velocity, Hessian and gap of one band.

    Multiband derivatives use the perturbation formulas

        v_a = <nu| d_a h |nu>,
        H_ab = <nu| d_ab h |nu> + 2 Re sum_mu (d_a h)_{nu mu}(d_b h)_{mu nu}/(w_nu - w_mu).

    Returns
    -------
    w : ndarray (...)
    v : ndarray (..., 2)
    H : ndarray (..., 2, 2), only if ``order == 2``
    gap : ndarray (...), distance to the nearest other band (inf for one band)
    """
    k = _kv(k)
    h, dh, d2h = hamiltonian(spec, k, order=2)
    if spec.n_sub == 1:
        w = h[..., 0, 0].real
        v = dh[..., 0, 0].real
        H = d2h[..., 0, 0].real
        gap = np.full(w.shape, np.inf)
        return (w, v, H, gap) if order == 2 else (w, v, gap)
    if not 0 <= band < spec.n_sub:
        raise ValidationError(f"band index {band} out of range")
    e, U = np.linalg.eigh(h)
    w = e[..., band]
    u = U[..., :, band]
    # matrix elements of dh in the eigenbasis
    dhe = np.einsum("...ip,...aij,...jq->...apq", U.conj(), dh, U)
    v = dhe[..., :, band, band].real
    others = [m for m in range(spec.n_sub) if m != band]
    gap = np.min(np.abs(e[..., others] - w[..., None]), axis=-1)
    if order < 2:
        return w, v, gap
    H = np.einsum("...i,...abij,...j->...ab", u.conj(), d2h, u).real
    for m in others:
        de = w - e[..., m]
        with np.errstate(divide="ignore", invalid="ignore"):
            H = H + 2 * np.real(dhe[..., :, None, band, m] * dhe[..., None, :, m, band]) / de[..., None, None]
    return w, v, H, gap


def reduce_to_bz(spec: LatticeSpec, k) -> np.ndarray:
    """Map ``k`` into the first Brillouin zone (Wigner-Seitz cell)."""
    k = _kv(k)
    b = spec.reciprocal
    frac = k @ spec.vectors.T / (2 * np.pi)
    k = k - np.round(frac) @ b
    shifts = np.array([i * b[0] + j * b[1] for i in (-1, 0, 1) for j in (-1, 0, 1)])
    cand = k[..., None, :] - shifts
    best = np.argmin(np.einsum("...ij,...ij->...i", cand, cand), axis=-1)
    return np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]


def bloch(spec: LatticeSpec, k) -> BlochSample:
    """Bloch matrix and its eigendecomposition at a single wavevector."""
    k = np.asarray(k, dtype=float).reshape(2)
    if not np.all(np.isfinite(k)):
        raise ValidationError("wavevector must be finite")
    kr = reduce_to_bz(spec, k)
    h = hamiltonian(spec, k)
    try:
        w, U = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise DegenerateBand(f"eigensolver failed at k={k}: {exc}") from exc
    return BlochSample(kr, h, w, U)


def derivatives(spec: LatticeSpec, k, band: int = 0) -> DispersionDerivatives:
    """Energy, group velocity and Hessian of ``band`` at a single ``k``.

    Raises
    ------
    DegenerateBand
        If another band lies within ``1e-8 |J|``.
    """
    k = np.asarray(k, dtype=float).reshape(2)
    w, v, H, gap = band_derivatives(spec, k, band)
    if gap < DEGENERACY_TOL * spec.energy_scale:
        raise DegenerateBand(f"band {band} is degenerate at k={k} (gap {gap:.2e})")
    return DispersionDerivatives(float(w), v, float(np.hypot(*v)), H)


def frac_grid(spec: LatticeSpec, n: int, shift: float = 0.0) -> np.ndarray:
    """Uniform n x n grid over the reciprocal unit cell, shape (n, n, 2)."""
    u = (np.arange(n) + shift) / n
    U1, U2 = np.meshgrid(u, u, indexing="ij")
    b = spec.reciprocal
    return U1[..., None] * b[0] + U2[..., None] * b[1]


@functools.lru_cache(maxsize=64)
def band_range(spec: LatticeSpec, band: int) -> tuple:
    """(min, max) of ``band`` over the Brillouin zone."""
    crit = critical_points(spec, band)
    ws = [c[1] for c in crit if c[2] in ("min", "max", "degenerate")]
    g = bands(spec, frac_grid(spec, 64))[..., band]
    ws += [g.min(), g.max()]
    return float(min(ws)), float(max(ws))


@functools.lru_cache(maxsize=64)
def critical_points(spec: LatticeSpec, band: int, n: int = 96) -> tuple:
    """Stationary points and band touchings of one band.

    Returns a tuple of ``(k, energy, kind)`` with ``kind`` one of
    ``"min"``, ``"max"``, ``"saddle"``, ``"degenerate"`` or ``"flat"``.
    Candidates are local minima of ``|v|`` (or of the gap) on an ``n x n``
    grid, refined by Newton iteration.
    """
    K = frac_grid(spec, n)
    w, v, gap = band_derivatives(spec, K, band, order=1)
    scale = spec.energy_scale
    out = []

    def is_local_min(field):
        f = field
        m = np.ones(f.shape, bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    m &= f <= np.roll(np.roll(f, di, 0), dj, 1)
        return np.argwhere(m)

    sp = np.hypot(v[..., 0], v[..., 1])
    for idx in is_local_min(sp):
        k = K[tuple(idx)].copy()
        ok = False
        for _ in range(50):
            ww, vv, HH, gg = band_derivatives(spec, k, band)
            if gg < 1e-6 * scale:
                break
            try:
                step = np.linalg.solve(HH, vv)
            except np.linalg.LinAlgError:
                break
            k = k - step
            if np.hypot(*step) < 1e-13:
                ok = True
                break
        ww, vv, HH, gg = band_derivatives(spec, k, band)
        if ok or np.hypot(*vv) < 1e-9 * scale:
            if np.hypot(*vv) > 1e-7 * scale:
                continue
            ev = np.linalg.eigvalsh(HH)
            if np.all(ev > 1e-9):
                kind = "min"
            elif np.all(ev < -1e-9):
                kind = "max"
            elif ev[0] < -1e-9 and ev[1] > 1e-9:
                kind = "saddle"
            else:
                kind = "flat"
            out.append((tuple(reduce_to_bz(spec, k)), float(ww), kind))
    if spec.n_sub > 1:
        for idx in is_local_min(gap):
            k0 = K[tuple(idx)]
            if gap[tuple(idx)] > 0.2 * scale:
                continue

            def gfun(x):
                return band_derivatives(spec, x, band, order=1)[2]

            res = optimize.minimize(gfun, k0, method="Nelder-Mead",
                                    options=dict(xatol=1e-12, fatol=1e-14, maxiter=2000))
            if res.fun < 1e-6 * scale:
                ww = band_derivatives(spec, res.x, band, order=1)[0]
                out.append((tuple(reduce_to_bz(spec, res.x)), float(ww), "degenerate"))
    # deduplicate
    uniq = []
    for c in out:
        if not any(abs(c[1] - u[1]) < 1e-9 and np.allclose(c[0], u[0], atol=1e-6) for u in uniq):
            uniq.append(c)
    return tuple(uniq)


def critical_values(spec: LatticeSpec, band: int) -> np.ndarray:
    """Sorted distinct critical energies (Van Hove energies and touchings)."""
    vals = sorted({round(c[1], 12) for c in critical_points(spec, band)})
    return np.array(vals)


def to_json(spec: LatticeSpec) -> str:
    """Serialize to the JSON lattice schema (see README)."""
    doc = {
        "dimension": spec.dimension,
        "name": spec.name,
        "lattice_vectors": [list(v) for v in spec.lattice_vectors],
        "sublattices": [list(r) for r in spec.sublattice_offsets],
        "couplings": [
            {"from": c.src, "to": c.dst, "cell": list(c.cell),
             "amplitude": [c.amplitude.real, c.amplitude.imag]}
            for c in spec.couplings
        ],
    }
    return json.dumps(doc, indent=2)


def from_json(text: str) -> LatticeSpec:
    """Inverse of :func:`to_json`.  Amplitudes may be a number or [re, im]."""
    try:
        doc = json.loads(text)
        cpl = []
        for c in doc["couplings"]:
            amp = c["amplitude"]
            amp = complex(amp[0], amp[1]) if isinstance(amp, Sequence) else complex(amp)
            cpl.append(Coupling(c["from"], c["to"], tuple(c["cell"]), amp))
        return LatticeSpec(tuple(map(tuple, doc["lattice_vectors"])),
                           tuple(map(tuple, doc["sublattices"])), tuple(cpl),
                           name=doc.get("name", ""), dimension=doc.get("dimension", 2))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"invalid lattice document: {exc}") from exc
