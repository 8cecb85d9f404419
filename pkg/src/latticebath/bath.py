"""Single-excitation dynamics of emitters coupled to a finite square lattice.

The bath is an open-boundary ``nx x ny`` square lattice with hoppings
``J_x, J_y``, an optional uniform flux ``2 pi alpha`` per plaquette (Peierls
phases in the symmetric gauge), decoupled obstruction sites and on-site
disorder ``X J_x`` with ``X ~ U[-chi, chi]``.  Emitters are two-level systems
of frequency ``Delta`` coupled with strength ``g`` to a single site.  In the
single-excitation sector the Hamiltonian is the ``(N_sites + N_emitters)``
square sparse matrix

    H = sum_<ij> J_ij e^{i phi_ij} |i><j| + sum_r X_r J_x |r><r|
        + sum_e Delta_e |e><e| + g_e (|e><r_e| + |r_e><e|),

with ``phi_ij = int_{r_i}^{r_j} A . dr`` and ``A = (B/2) z x r``, ``B = 2 pi alpha``.
This sign makes the loop sum of ``phi`` around every counter-clockwise
plaquette equal to ``+2 pi alpha`` and matches ``k_dot = -v x B`` of the
semiclassical module.

Site ``(x, y)`` has integer coordinates ``x = ix - nx//2``, ``y = iy - ny//2``;
bath arrays are stored row-major with shape ``(ny, nx)``.
"""

from __future__ import annotations

import concurrent.futures as cf
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, sparse

from .errors import EmptySlice, NormDriftExceeded, ValidationError

__all__ = [
    "Emitter", "SimulationConfig", "ExcitationState", "EvolutionResult", "KrylovPropagator",
    "RefocusMetric", "EnsembleResult", "build_hamiltonian", "plaquette_fluxes", "excite",
    "dark_state", "evolve", "refocusing_metric", "disorder_ensemble", "load_config",
]

NORM_DRIFT_MAX = 1e-6


@dataclass(frozen=True)
class Emitter:
    """Two-level emitter at integer site ``(x, y)``."""

    x: int
    y: int
    delta: float = -1.0
    g: float = 0.1


@dataclass
class SimulationConfig:
    """Finite-lattice simulation parameters (units ``a = 1``, energies in ``J``).

    Attributes
    ----------
    nx, ny : int
        Lattice size in sites.
    jx, jy : float
        Hopping amplitudes.
    alpha : float
        Flux per plaquette in units of ``2 pi``.
    emitters : tuple of Emitter
    obstructions : tuple of (x, y)
        Sites whose couplings are all removed.
    chi : float
        Disorder strength; on-site energies ``X J_x``, ``X ~ U[-chi, chi]``.
    seed : int
        Seed of the disorder stream.
    t_grid : tuple of float
        Times at which emitter amplitudes are recorded.
    snapshot_times : tuple of float
        Times (subset of ``t_grid``) at which bath populations are stored.
    slices : tuple of float
        Rows ``y`` whose populations are stored at every snapshot.
    """

    nx: int = 61
    ny: int = 401
    jx: float = 1.0
    jy: float = 2.0
    alpha: float = 0.0
    emitters: tuple = ()
    obstructions: tuple = ()
    chi: float = 0.0
    seed: int = 0
    t_grid: tuple = (0.0,)
    snapshot_times: tuple = ()
    slices: tuple = ()

    def __post_init__(self):
        self.emitters = tuple(e if isinstance(e, Emitter) else Emitter(**e) for e in self.emitters)
        self.obstructions = tuple(tuple(int(c) for c in o) for o in self.obstructions)
        self.t_grid = tuple(float(t) for t in np.atleast_1d(self.t_grid))
        self.snapshot_times = tuple(float(t) for t in np.atleast_1d(self.snapshot_times))
        self.slices = tuple(float(y) for y in np.atleast_1d(self.slices))
        self.validate()

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny

    @property
    def dim(self) -> int:
        return self.n_sites + len(self.emitters)

    @property
    def x_coords(self) -> np.ndarray:
        return np.arange(self.nx) - self.nx // 2

    @property
    def y_coords(self) -> np.ndarray:
        return np.arange(self.ny) - self.ny // 2

    def contains(self, x, y) -> bool:
        return (0 <= x + self.nx // 2 < self.nx) and (0 <= y + self.ny // 2 < self.ny)

    def site_index(self, x, y) -> int:
        if not self.contains(x, y):
            raise ValidationError(f"site ({x}, {y}) outside the {self.nx}x{self.ny} lattice")
        return int((y + self.ny // 2) * self.nx + (x + self.nx // 2))

    def validate(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ValidationError("lattice needs at least 2x2 sites")
        if self.chi < 0:
            raise ValidationError("chi must be non-negative")
        if not all(np.isfinite([self.jx, self.jy, self.alpha])):
            raise ValidationError("non-finite hopping or flux")
        blocked = set(self.obstructions)
        for o in self.obstructions:
            self.site_index(*o)
        for e in self.emitters:
            self.site_index(e.x, e.y)
            if (e.x, e.y) in blocked:
                raise ValidationError(f"emitter at obstruction site ({e.x}, {e.y})")
        t = np.asarray(self.t_grid)
        if t.size == 0 or np.any(np.diff(t) < 0) or t[0] < 0:
            raise ValidationError("t_grid must be non-negative and ascending")
        for ts in self.snapshot_times:
            if not np.any(np.isclose(t, ts, rtol=0, atol=1e-12)):
                raise ValidationError(f"snapshot time {ts} not on t_grid")
        for y in self.slices:
            if not self.contains(0, int(round(y))):
                raise ValidationError(f"slice y={y} outside lattice")

    def replace(self, **kw) -> "SimulationConfig":
        d = self.to_dict()
        d.update(kw)
        return SimulationConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["emitters"] = [asdict(e) for e in self.emitters]
        d["obstructions"] = [list(o) for o in self.obstructions]
        for k in ("t_grid", "snapshot_times", "slices"):
            d[k] = list(d[k])
        return d


def load_config(path) -> SimulationConfig:
    """Read a :class:`SimulationConfig` from a JSON or TOML document."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    try:
        return SimulationConfig(**data)
    except TypeError as exc:
        raise ValidationError(f"bad simulation config: {exc}") from None


def _bonds(config: SimulationConfig):
    """Nearest-neighbour bonds ``(i, j, amplitude)`` with Peierls phases."""
    nx, ny = config.nx, config.ny
    x = config.x_coords[None, :].astype(float)
    y = config.y_coords[:, None].astype(float)
    idx = np.arange(nx * ny).reshape(ny, nx)
    B = 2 * np.pi * config.alpha
    # midpoint rule for A = (B/2)(-y, x): exact for straight bonds
    px = -0.5 * B * y * np.ones_like(x)           # (x, y) -> (x + 1, y)
    py = 0.5 * B * x * np.ones_like(y)            # (x, y) -> (x, y + 1)
    i = np.r_[idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    j = np.r_[idx[:, 1:].ravel(), idx[1:, :].ravel()]
    amp = np.r_[config.jx * np.exp(1j * px[:, :-1]).ravel(),
                config.jy * np.exp(1j * py[:-1, :]).ravel()]
    if config.obstructions:
        blocked = np.array([config.site_index(*o) for o in config.obstructions])
        keep = ~(np.isin(i, blocked) | np.isin(j, blocked))
        i, j, amp = i[keep], j[keep], amp[keep]
    return i, j, amp


def onsite_disorder(config: SimulationConfig, rng=None) -> np.ndarray:
    """On-site energies ``X J_x`` (zeros when ``chi = 0``)."""
    if config.chi == 0:
        return np.zeros(config.n_sites)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    return config.jx * rng.uniform(-config.chi, config.chi, config.n_sites)


def build_hamiltonian(config: SimulationConfig, rng=None, disorder=None) -> sparse.csr_matrix:
    """Sparse Hermitian single-excitation Hamiltonian.

    Parameters
    ----------
    rng : numpy.random.Generator, optional
        Disorder stream; defaults to ``default_rng(config.seed)``.
    disorder : ndarray, optional
        Explicit on-site energies (overrides ``rng``).
    """
    n = config.n_sites
    i, j, amp = _bonds(config)
    eps = onsite_disorder(config, rng) if disorder is None else np.asarray(disorder, float)
    rows = [i, j, np.arange(n)]
    cols = [j, i, np.arange(n)]
    vals = [amp, amp.conj(), eps.astype(complex)]
    for e, em in enumerate(config.emitters):
        s, q = config.site_index(em.x, em.y), n + e
        rows += [[q], [q], [s]]
        cols += [[q], [s], [q]]
        vals += [[em.delta], [em.g], [em.g]]
    H = sparse.coo_matrix((np.concatenate(vals).astype(complex),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(config.dim, config.dim)).tocsr()
    H.sum_duplicates()
    return H


def plaquette_fluxes(config: SimulationConfig) -> np.ndarray:
    """Counter-clockwise phase sums ``sum phi_ij`` on every plaquette, shape ``(ny-1, nx-1)``.

    Read back from the assembled Hamiltonian and wrapped into ``(-pi, pi]``.
    """
    H = build_hamiltonian(config.replace(chi=0.0, emitters=(), obstructions=()))
    idx = np.arange(config.n_sites).reshape(config.ny, config.nx)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    ph = lambda p, q: np.angle(np.asarray(H[p, q]).ravel())  # noqa: E731
    tot = np.angle(np.exp(1j * (ph(a, b) + ph(b, c) + ph(c, d) + ph(d, a))))
    return tot.reshape(config.ny - 1, config.nx - 1)


@dataclass
class ExcitationState:
    """Single-excitation amplitudes.

    Attributes
    ----------
    emitter : ndarray (n_emitters,)
    bath : ndarray (ny, nx)
    t : float
    """

    emitter: np.ndarray
    bath: np.ndarray
    t: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.bath.ravel(), self.emitter]).astype(complex)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.emitter) ** 2) + np.sum(np.abs(self.bath) ** 2)))

    @classmethod
    def from_vector(cls, config: SimulationConfig, psi, t: float = 0.0) -> "ExcitationState":
        psi = np.asarray(psi)
        return cls(psi[config.n_sites:].copy(), psi[:config.n_sites].reshape(config.ny, config.nx).copy(), t)


def excite(config: SimulationConfig, amplitudes) -> ExcitationState:
    """Emitter superposition with the bath in its vacuum."""
    c = np.asarray(amplitudes, dtype=complex).ravel()
    if c.size != len(config.emitters):
        raise ValidationError(f"{c.size} amplitudes for {len(config.emitters)} emitters")
    return ExcitationState(c, np.zeros((config.ny, config.nx), complex))


def dark_state(n: int, config: SimulationConfig = None) -> ExcitationState:
    """Subradiant emitter superposition for two or three emitters.

    ``n = 2``: ``(|eg> - |ge>)/sqrt 2``; ``n = 3``: ``(|egg> - 2|geg> + |gge>)/sqrt 6``.
    Without ``config`` the bath part is empty (shape ``(0, 0)``).
    """
    if n == 2:
        c = np.array([1.0, -1.0]) / np.sqrt(2)
    elif n == 3:
        c = np.array([1.0, -2.0, 1.0]) / np.sqrt(6)
    else:
        raise ValidationError(f"dark states are defined for 2 or 3 emitters, not {n}")
    if config is None:
        return ExcitationState(c.astype(complex), np.zeros((0, 0), complex))
    if len(config.emitters) != n:
        raise ValidationError(f"config has {len(config.emitters)} emitters, dark state needs {n}")
    return excite(config, c)


class KrylovPropagator:
    """Short-iterative Lanczos propagator for ``i d psi/dt = H psi``.

    Each step builds a Lanczos basis of the Krylov space and applies
    ``exp(-i T dt)`` in the subspace.  The
    basis grows until the change between order ``m`` and ``m + 1`` falls
    below ``tol``; if ``m_max`` is reached the step is shortened instead.

    Parameters
    ----------
    H : sparse matrix
        Hermitian.
    tol : float
        Error bound per step (2-norm of the state).
    m_max : int
        Largest Krylov dimension.
    reorth : {"auto", "full"}
        ``"full"`` reorthogonalizes every Lanczos vector against the whole
        basis; ``"auto"`` does so only for steps that fail a norm check.
    """

    def __init__(self, H, tol: float = 1e-9, m_max: int = 40, reorth: str = "auto"):
        if reorth not in ("auto", "full"):
            raise ValidationError(f"unknown reorthogonalization {reorth!r}")
        self.H = H
        self.tol = float(tol)
        self.m_max = int(m_max)
        self.reorth = reorth
        self.n_matvec = 0
        self.n_steps = 0
        self.n_redo = 0

    def _err(self, lam_a, qa, lam_b, qb, dt):
        ya = qa @ (np.exp(-1j * lam_a * dt) * qa[0].conj())
        yb = qb @ (np.exp(-1j * lam_b * dt) * qb[0].conj())
        return np.sqrt(np.sum(np.abs(ya - yb[:ya.size]) ** 2) + np.sum(np.abs(yb[ya.size:]) ** 2)), yb

    def step(self, psi: np.ndarray, dt: float):
        """Advance by at most ``dt``; returns ``(psi_new, dt_taken)``.

        With ``reorth="auto"`` the basis uses the three-term recurrence only;
        if the result's norm departs from the input's by more than ``tol``
        the step is redone with full reorthogonalization.
        """
        if self.reorth == "full":
            return self._step(psi, dt, True)
        out, taken = self._step(psi, dt, False)
        b0 = np.linalg.norm(psi)
        if abs(np.linalg.norm(out) - b0) > self.tol * max(b0, 1e-300):
            self.n_redo += 1
            return self._step(psi, dt, True)
        return out, taken

    def _step(self, psi, dt, full):
        beta = np.linalg.norm(psi)
        if beta == 0 or dt == 0:
            return psi.copy(), dt
        m_max = min(self.m_max, psi.size)
        V = np.empty((m_max + 1, psi.size), complex)
        V[0] = psi / beta
        al, be = [], []
        prev = None
        for j in range(m_max):
            w = self.H @ V[j]
            self.n_matvec += 1
            a = np.vdot(V[j], w).real
            w -= a * V[j]
            if j > 0:
                w -= be[-1] * V[j - 1]
            b = np.linalg.norm(w)
            # Gram-Schmidt against the whole basis, repeated when cancellation is strong
            for _ in range(2 if full else 0):
                b0 = b
                w -= np.conj(V[:j + 1] @ w.conj()) @ V[:j + 1]
                b = np.linalg.norm(w)
                if b > 0.7 * b0:
                    break
            al.append(a)
            lam, q = linalg.eigh_tridiagonal(np.array(al), np.array(be)) if j else (np.array(al), np.ones((1, 1)))
            cur = (lam, q)
            if b < 1e-14 * max(1.0, abs(a)):
                # invariant subspace: exact
                y = q @ (np.exp(-1j * lam * dt) * q[0].conj())
                return beta * (V[:j + 1].T @ y), dt
            if prev is not None:
                err, y = self._err(*prev, *cur, dt)
                if err <= self.tol:
                    return beta * (V[:j + 1].T @ y), dt
                pair = (prev, cur)
            prev = cur
            be.append(b)
            V[j + 1] = w / b
        # order exhausted: shorten the step (error grows monotonically in dt)
        lo, hi = 0.0, dt
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self._err(*pair[0], *pair[1], mid)[0] <= self.tol:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-6 * hi:
                break
        dt = lo
        _, y = self._err(*pair[0], *pair[1], dt)
        return beta * (V[:m_max].T @ y), dt

    def propagate(self, psi: np.ndarray, t: float, dt_max: float = np.inf) -> np.ndarray:
        """Advance ``psi`` by a total time ``t``."""
        done = 0.0
        psi = np.asarray(psi, complex)
        dt_try = min(t, dt_max)
        while done < t * (1 - 1e-15):
            step = min(dt_try, t - done)
            psi, taken = self.step(psi, step)
            if taken <= 0:
                raise NormDriftExceeded("Krylov step size collapsed")
            done += taken
            self.n_steps += 1
            dt_try = min(dt_max, taken * 1.25 if taken < step else dt_try * 1.25)
        return psi


@dataclass
class EvolutionResult:
    """Observables recorded by :func:`evolve`.

    Attributes
    ----------
    t : ndarray (nt,)
    emitter_amplitudes : ndarray (nt, n_emitters)
    norm_drift : ndarray (nt,)
        ``| ||psi(t)|| - ||psi(0)|| |``.
    snapshots : dict
        Time -> bath population ``(ny, nx)``.
    slices : dict
        ``(t, y)`` -> population along the row ``y``.
    edge_population : dict
        Time -> largest population on the boundary sites.
    final : ExcitationState
    n_matvec : int
    """

    config: SimulationConfig
    t: np.ndarray
    emitter_amplitudes: np.ndarray
    norm_drift: np.ndarray
    snapshots: dict
    slices: dict
    edge_population: dict
    final: ExcitationState
    n_matvec: int = 0

    @property
    def emitter_population(self) -> np.ndarray:
        return np.abs(self.emitter_amplitudes) ** 2

    @property
    def total_emitter_population(self) -> np.ndarray:
        return self.emitter_population.sum(axis=1)

    def write(self, out_dir, prefix: str = "") -> dict:
        """Write snapshots (one CSV matrix per time), emitter series and a manifest."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"snapshots": {}, "slices": {}}
        for t, snap in self.snapshots.items():
            name = f"{prefix}snapshot_t{t:.6g}.csv"
            np.savetxt(out / name, snap, delimiter=",", fmt="%.8e")
            files["snapshots"][f"{t:.12g}"] = name
        for (t, y), row in self.slices.items():
            name = f"{prefix}slice_t{t:.6g}_y{y:.6g}.csv"
            np.savetxt(out / name, np.column_stack([self.config.x_coords, row]), delimiter=",",
                       header="x,population", comments="", fmt="%.10e")
            files["slices"][f"{t:.12g},{y:.12g}"] = name
        ne = self.emitter_amplitudes.shape[1]
        name = f"{prefix}emitters.csv"
        cols = [self.t] + [self.emitter_population[:, e] for e in range(ne)]
        cols.append(self.total_emitter_population)
        header = ",".join(["t"] + [f"pop_{e}" for e in range(ne)] + ["total"])
        np.savetxt(out / name, np.column_stack(cols), delimiter=",", header=header, comments="",
                   fmt="%.12e")
        files["emitters"] = name
        manifest = {
            "config": self.config.to_dict(),
            "files": files,
            "max_norm_drift": float(np.max(self.norm_drift)),
            "edge_population": {f"{t:.12g}": float(v) for t, v in self.edge_population.items()},
            "n_matvec": self.n_matvec,
        }
        (out / f"{prefix}manifest.json").write_text(json.dumps(manifest, indent=2))
        return manifest


def _edge(pop: np.ndarray) -> float:
    return float(max(pop[0].max(), pop[-1].max(), pop[:, 0].max(), pop[:, -1].max()))


def evolve(config: SimulationConfig, initial: ExcitationState = None, t_grid=None, H=None,
           rng=None, tol: float = 1e-9, m_max: int = 40,
           max_norm_drift: float = NORM_DRIFT_MAX) -> EvolutionResult:
    """Propagate a single-excitation state and record observables.

    Parameters
    ----------
    initial : ExcitationState, optional
        Defaults to the first emitter excited.
    t_grid : array_like, optional
        Overrides ``config.t_grid``.
    H : sparse matrix, optional
        Prebuilt Hamiltonian (e.g. a gauge-transformed copy).

    Raises
    ------
    NormDriftExceeded
        If the norm changes by more than ``max_norm_drift``.
    """
    t_grid = np.asarray(config.t_grid if t_grid is None else t_grid, float)
    if initial is None:
        if not config.emitters:
            raise ValidationError("no emitters and no initial state")
        initial = excite(config, np.eye(len(config.emitters))[0])
    psi = initial.vector
    if psi.size != config.dim:
        raise ValidationError("initial state does not match the configuration")
    n0 = np.linalg.norm(psi)
    if abs(n0 - 1) > 1e-9:
        raise ValidationError(f"initial state not normalized (norm {n0:.12g})")
    H = build_hamiltonian(config, rng=rng) if H is None else H
    prop = KrylovPropagator(H, tol=tol, m_max=m_max)
    n, ne = config.n_sites, len(config.emitters)
    amps = np.empty((t_grid.size, ne), complex)
    drift = np.empty(t_grid.size)
    snaps, slices, edges = {}, {}, {}
    snap_t = np.asarray(config.snapshot_times)
    rows = [int(round(y)) + config.ny // 2 for y in config.slices]
    t_now = initial.t
    for q, t in enumerate(t_grid):
        if t < t_now - 1e-12:
            raise ValidationError("t_grid starts before the initial state")
        if t > t_now:
            psi = prop.propagate(psi, t - t_now)
            t_now = t
        amps[q] = psi[n:]
        drift[q] = abs(np.linalg.norm(psi) - n0)
        if drift[q] > max_norm_drift:
            raise NormDriftExceeded(f"norm drift {drift[q]:.2e} at t={t:g}")
        if snap_t.size and np.any(np.abs(snap_t - t) <= 1e-12):
            pop = (np.abs(psi[:n]) ** 2).reshape(config.ny, config.nx)
            snaps[float(t)] = pop
            edges[float(t)] = _edge(pop)
            for y, r in zip(config.slices, rows):
                slices[(float(t), y)] = pop[r].copy()
    final = ExcitationState.from_vector(config, psi, t_now)
    return EvolutionResult(config, t_grid, amps, drift, snaps, slices, edges, final, prop.n_matvec)


@dataclass
class RefocusMetric:
    """Transverse profile of one lattice row.

    Attributes
    ----------
    peak_site : int
        ``x`` coordinate of the most populated site.
    peak_fraction : float
        Peak population over the row total.
    fwhm_sites : int
        Contiguous sites around the peak with population >= peak/2.
    neighbour_contrast : float
        Peak over the larger of its two neighbours.
    background : float
        Median population of the row away from the peak (|x - peak| > 2).
    """

    peak_site: int
    peak_fraction: float
    fwhm_sites: int
    neighbour_contrast: float
    background: float


def refocusing_metric(snapshot, slice_y=None, config: SimulationConfig = None) -> RefocusMetric:
    """Analyse the population along the row ``y = slice_y``.

    ``snapshot`` is either a ``(ny, nx)`` population array (then ``config``
    gives the coordinates, or the row index is ``slice_y + ny//2``) or a
    one-dimensional row.

    Raises
    ------
    EmptySlice
        If the row is outside the snapshot or carries no population.
    """
    snap = np.asarray(snapshot, dtype=float)
    if snap.ndim == 2:
        ny, nx = snap.shape
        r = int(round(slice_y)) + ny // 2
        if not 0 <= r < ny:
            raise EmptySlice(f"slice y={slice_y} outside the snapshot")
        row = snap[r]
    else:
        row = snap
        nx = row.size
    xs = config.x_coords if config is not None else np.arange(nx) - nx // 2
    tot = row.sum()
    if not tot > 0:
        raise EmptySlice("slice carries no population")
    p = int(np.argmax(row))
    peak = row[p]
    lo = p
    while lo > 0 and row[lo - 1] >= 0.5 * peak:
        lo -= 1
    hi = p
    while hi < nx - 1 and row[hi + 1] >= 0.5 * peak:
        hi += 1
    nb = [row[q] for q in (p - 1, p + 1) if 0 <= q < nx]
    nbmax = max(nb) if nb else 0.0
    contrast = peak / nbmax if nbmax > 0 else np.inf
    off = np.abs(np.arange(nx) - p) > 2
    bg = float(np.median(row[off])) if np.any(off) else 0.0
    return RefocusMetric(int(xs[p]), float(peak / tot), int(hi - lo + 1), float(contrast), bg)


@dataclass
class EnsembleResult:
    """Statistics of ``log10`` bath populations over disorder realizations.

    Attributes
    ----------
    times : ndarray (ns,)
    mean_log, std_log : ndarray (ns, ny, nx)
    slice_y : float or None
    slice_mean, slice_std : ndarray (ns, nx) or None
        Row ``y = slice_y`` of the statistics.
    emitter_population : ndarray (n_realizations, ns)
    """

    config: SimulationConfig
    n_realizations: int
    times: np.ndarray
    mean_log: np.ndarray
    std_log: np.ndarray
    slice_y: float
    slice_mean: np.ndarray
    slice_std: np.ndarray
    emitter_population: np.ndarray

    def to_csv(self, path, snapshot: int = -1) -> None:
        """Columns ``site, x, y, mean_log_pop, std_log_pop`` for one snapshot."""
        c = self.config
        X, Y = np.meshgrid(c.x_coords, c.y_coords)
        site = np.arange(c.n_sites)
        np.savetxt(path, np.column_stack([site, X.ravel(), Y.ravel(), self.mean_log[snapshot].ravel(),
                                          self.std_log[snapshot].ravel()]),
                   delimiter=",", header="site,x,y,mean_log_pop,std_log_pop", comments="",
                   fmt=["%d", "%d", "%d", "%.10e", "%.10e"])

    def slice_csv(self, path, snapshot: int = -1) -> None:
        np.savetxt(path, np.column_stack([self.config.x_coords, self.slice_mean[snapshot],
                                          self.slice_std[snapshot]]),
                   delimiter=",", header="x,mean_log_pop,std_log_pop", comments="", fmt="%.10e")


LOG_FLOOR = 1e-300


def _member(args):
    cfg_dict, seed_seq, initial, times, tol = args
    cfg = SimulationConfig(**cfg_dict)
    rng = np.random.default_rng(seed_seq)
    res = evolve(cfg, initial, t_grid=times, rng=rng, tol=tol)
    logs = np.stack([np.log10(np.maximum(res.snapshots[float(t)], LOG_FLOOR)) for t in times])
    return logs, res.total_emitter_population


def disorder_ensemble(config: SimulationConfig, n_realizations: int = 100, t_snapshots=None,
                      initial: ExcitationState = None, slice_y: float = None, workers: int = 1,
                      tol: float = 1e-9) -> EnsembleResult:
    """Mean and standard deviation of ``log10`` populations over disorder draws.

    Realization ``i`` draws its on-site energies from child ``i`` of
    ``SeedSequence(config.seed)``, so results do not depend on ``workers``.
    Accumulation runs in realization order, which makes reruns bit-identical.
    """
    if n_realizations < 1:
        raise ValidationError("need at least one realization")
    times = np.atleast_1d(np.asarray(config.snapshot_times if t_snapshots is None else t_snapshots,
                                     float))
    cfg = config.replace(t_grid=list(times), snapshot_times=list(times), slices=[])
    children = np.random.SeedSequence(config.seed).spawn(n_realizations)
    jobs = [(cfg.to_dict(), s, initial, times, tol) for s in children]
    mean = np.zeros((times.size, cfg.ny, cfg.nx))
    m2 = np.zeros_like(mean)
    pops = np.empty((n_realizations, times.size))

    def fold(i, out):
        logs, pop = out
        d = logs - mean
        mean[...] += d / (i + 1)
        m2[...] += d * (logs - mean)
        pops[i] = pop

    if workers > 1 and n_realizations > 1:
        with cf.ProcessPoolExecutor(max_workers=workers) as ex:
            for i, out in enumerate(ex.map(_member, jobs)):
                fold(i, out)
    else:
        for i, job in enumerate(jobs):
            fold(i, _member(job))
    std = np.sqrt(m2 / n_realizations)
    if slice_y is not None:
        r = int(round(slice_y)) + cfg.ny // 2
        if not 0 <= r < cfg.ny:
            raise ValidationError(f"slice y={slice_y} outside lattice")
        sm, ss = mean[:, r].copy(), std[:, r].copy()
    else:
        sm = ss = None
    return EnsembleResult(cfg, n_realizations, times, mean, std, slice_y, sm, ss, pops)
