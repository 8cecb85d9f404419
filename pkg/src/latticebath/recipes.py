"""Data reproductions of the figures, at desk or full scale.

Each recipe writes CSV/JSON files into an output directory and returns a
:class:`RecipeOutput` with the file list and a small summary.  Parameters
can be overridden by keyword; unknown keys are rejected.

Desk-scale defaults
-------------------
Green's-function recipes run at their natural sizes.  Bath recipes use a
61-site-wide lattice with the height chosen so that wavefronts stay inside
the lattice for the recorded time, and 100 disorder realizations.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import bath
from . import greens as gf
from . import lattice as lat
from . import resonant as res
from . import semiclassics as sc
from .errors import CausticDirection, NoResonantDirection, ValidationError

__all__ = ["FIGURES", "RecipeOutput", "reproduce", "defaults", "ghost_directions",
           "stationary_exponent", "caustic_exponent"]


@dataclass
class RecipeOutput:
    figure: str
    scale: str
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


_SQ = dict(jx=1.0, jy=2.0, delta=-1.0, alpha=0.01)

DEFAULTS = {
    "fig1b": {"desk": dict(jx=1.0, jy=1.0, delta=-1.0, n_max=40, eps=None),
              "full": dict(jx=1.0, jy=1.0, delta=-1.0, n_max=80, eps=None)},
    "fig2b": {"desk": dict(jx=1.0, jy=2.0, delta=-1.0, n_theta=360),
              "full": dict(jx=1.0, jy=2.0, delta=-1.0, n_theta=1440)},
    "fig2c": {"desk": dict(jx=1.0, jy=2.0, delta=-1.0, radius=15, n_axis=30),
              "full": dict(jx=1.0, jy=2.0, delta=-1.0, radius=40, n_axis=60)},
    "fig2d": {"desk": dict(jx=1.0, jy=2.0, delta=-1.0, dmin=0.02, dmax=0.2, max_step=12.0),
              "full": dict(jx=1.0, jy=2.0, delta=-1.0, dmin=0.01, dmax=0.3, max_step=25.0)},
    "fig3a": {"desk": dict(_SQ, nx=61, ny=1401, g=0.1, periods=6.0),
              "full": dict(_SQ, nx=111, ny=1201, g=0.1, periods=6.0)},
    "fig3b": {"desk": dict(_SQ, nx=61, ny=401, g=0.1, periods=1.0, n_traj=24),
              "full": dict(_SQ, nx=111, ny=1201, g=0.1, periods=1.0, n_traj=48)},
    "fig3c": {"desk": dict(_SQ, nx=61, ny=401, g=0.1, periods=1.0),
              "full": dict(_SQ, nx=111, ny=1201, g=0.1, periods=1.0)},
    "fig3d": {"desk": dict(_SQ, nx=61, ny=2801, g=0.25, periods=10.0, n_t=101),
              "full": dict(_SQ, nx=111, ny=1201, g=0.025, periods=10.0, n_t=201)},
    "fig3e": {"desk": dict(_SQ, nx=61, ny=2401, g=0.25, periods=10.0),
              "full": dict(_SQ, nx=111, ny=1201, g=0.025, periods=10.0)},
    "fig4a": {"desk": dict(_SQ, nx=61, ny=701, g=0.025, periods=3.0, half_width=10),
              "full": dict(_SQ, nx=111, ny=1201, g=0.025, periods=3.0, half_width=10)},
    "fig4b": {"desk": dict(_SQ, nx=61, ny=701, g=0.025, periods=3.0, chi=0.5, n_real=100, seed=1),
              "full": dict(_SQ, nx=111, ny=1201, g=0.025, periods=3.0, chi=0.5, n_real=500, seed=1)},
    "fig4cf": {"desk": dict(_SQ, nx=61, ny=701, g=0.025, periods=3.0, chis=(0.1, 0.2, 0.3, 0.5),
                            n_real=100, seed=1),
               "full": dict(_SQ, nx=111, ny=1201, g=0.025, periods=3.0, chis=(0.1, 0.2, 0.3, 0.5),
                            n_real=500, seed=1)},
    "appD": {"desk": dict(j2_iso=0.0, delta_iso=2.0, n_iso=60, j2=0.25, delta=-1.5, n_lo=20,
                          n_hi=300),
             "full": dict(j2_iso=0.0, delta_iso=2.0, n_iso=120, j2=0.25, delta=-1.5, n_lo=20,
                          n_hi=1000)},
}

FIGURES = tuple(DEFAULTS)


def defaults(figure: str, scale: str = "desk") -> dict:
    if figure not in DEFAULTS:
        raise ValidationError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    if scale not in ("desk", "full"):
        raise ValidationError(f"scale must be 'desk' or 'full', not {scale!r}")
    return dict(DEFAULTS[figure][scale])


def _csv(path, header, cols, fmt="%.15g"):
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header), comments="",
               fmt=fmt)
    return str(path)


def _envelope(y):
    y = np.asarray(y)
    return np.array([q for q in range(1, len(y) - 1) if y[q] >= y[q - 1] and y[q] >= y[q + 1]])


def stationary_exponent(n, err):
    """Power-law exponent of an oscillating error, fitted on its local maxima."""
    n, err = np.asarray(n, float), np.asarray(err, float)
    idx = _envelope(err)
    if len(idx) < 3:
        idx = np.arange(len(n))
    f = stats.linregress(np.log(n[idx]), np.log(err[idx]))
    return float(f.slope), float(f.rvalue ** 2)


def caustic_exponent(n, values):
    """Exponent of ``|values| ~ n^p`` fitted on the envelope maxima."""
    return stationary_exponent(n, np.abs(values))


def ghost_directions(spec, theta_c, dmin, dmax, max_step):
    """Coprime lattice steps ``(p, q)`` whose angle lies ``dmin..dmax`` below ``theta_c``.

    Angles are measured from the first lattice vector towards the second, so
    this applies to rectangular lattices.  Returns ``[(p, q), ...]`` sorted by
    angular distance, one (the shortest) per distinct angle.
    """
    out = {}
    pm = int(max_step) + 1
    for p in range(1, pm):
        for q in range(1, pm):
            if math.gcd(p, q) != 1:
                continue
            st = p * spec.vectors[0] + q * spec.vectors[1]
            L = float(np.hypot(*st))
            if L > max_step:
                continue
            d = theta_c - math.atan2(st[1], st[0])
            if dmin <= d <= dmax:
                key = round(d, 12)
                if key not in out or out[key][1] > L:
                    out[key] = ((p, q), L)
    return [out[k][0] for k in sorted(out)]


def _ghost_n_range(spec, theta_c):
    # asymptotic window: rho between ~2 and ~9 times |theta - theta_c|^(-3/2)
    def nr(d):
        st = d[0] * spec.vectors[0] + d[1] * spec.vectors[1]
        L = float(np.hypot(*st))
        dd = theta_c - math.atan2(st[1], st[0])
        r0, r1 = 2 * dd ** -1.5, 9 * dd ** -1.5
        n0 = max(1, int(r0 / L))
        return np.arange(n0, max(int(r1 / L), n0 + 12) + 1)
    return nr


# ---------------------------------------------------------------------------
# Green's-function figures

def fig1b(out, p):
    spec = lat.build_square(p["jx"], p["jy"])
    n = np.arange(1, int(p["n_max"]) + 1)
    rho = n[:, None] * np.array([1.0, 1.0])
    ex = gf.omega_exact(spec, 0, rho, p["delta"], full_output=True)
    om = np.array([v.omega for v in ex]).real
    G = np.array([v.G for v in ex])
    tube = gf.tube_approximant(spec, 0, rho, p["delta"], eps=p["eps"])
    stat = np.array([gf.stationary_phase(spec, 0, r, p["delta"]) for r in rho])
    ot, os_ = tube.real, stat.real
    et = np.abs(ot - om) / np.abs(om)
    es = np.abs(os_ - om) / np.abs(om)
    # Omega has zeros, so errors are also given relative to the envelope |G|
    etg = np.abs(ot - om) / np.abs(G)
    esg = np.abs(os_ - om) / np.abs(G)
    f = _csv(out / "fig1b.csv", ["n", "Omega_exact", "Omega_tube", "Omega_stat", "err_tube", "err_stat",
                                 "err_tube_G", "err_stat_G"],
             [n, om, ot, os_, et, es, etg, esg])
    k = n >= 5
    slope, r2 = stationary_exponent(n[k], esg[k])
    return [f], dict(err_tube_last=float(et[-1]), err_tube_G_last=float(etg[-1]),
                     stat_exponent=slope, stat_fit_r2=r2)


def fig2b(out, p):
    spec = lat.build_square(p["jx"], p["jy"])
    rs = res.extract(spec, 0, p["delta"])
    cl = res.caustics(rs)
    th = np.linspace(-np.pi, np.pi, int(p["n_theta"]), endpoint=False)
    sig, atc = [], []
    for t in th:
        cs = res.directional_cross_section(rs, (np.cos(t), np.sin(t)), caustic_list=cl)
        sig.append(cs.sigma)
        atc.append(int(cs.at_caustic))
    f = _csv(out / "fig2b.csv", ["theta", "sigma", "at_caustic"], [th, sig, atc])
    f2 = _csv(out / "fig2b_caustics.csv", ["curve_id", "k_x", "k_y", "dir_x", "dir_y", "order", "theta"],
              [[c.curve_id for c in cl], [c.k[0] for c in cl], [c.k[1] for c in cl],
               [c.direction[0] for c in cl], [c.direction[1] for c in cl], [c.order for c in cl],
               [math.atan2(c.direction[1], c.direction[0]) for c in cl]])
    return [f, f2], dict(n_caustics=len(cl))


def fig2c(out, p):
    spec = lat.build_square(p["jx"], p["jy"])
    R = int(p["radius"])
    # quadrant suffices: the model is even in x and y
    X, Y = np.meshgrid(np.arange(0, R + 1), np.arange(0, R + 1))
    m = (X ** 2 + Y ** 2 <= R * R) & ((X > 0) | (Y > 0))
    rho = np.column_stack([X[m], Y[m]]).astype(float)
    vals = gf.omega_exact(spec, 0, rho, p["delta"], full_output=True, raise_on_fail=False)
    om = np.array([v.omega for v in vals]).real
    ga = np.array([v.gamma for v in vals]).real
    G = om - 0.5j * ga
    th = np.arctan2(rho[:, 1], rho[:, 0])
    f1 = _csv(out / "fig2c.csv", ["x", "y", "theta", "log10_absG", "Omega", "Gamma"],
              [rho[:, 0], rho[:, 1], th, np.log10(np.abs(G)), om, ga])
    n = np.arange(1, int(p["n_axis"]) + 1)
    ax = gf.omega_exact(spec, 0, n[:, None] * np.array([1.0, 0.0]), p["delta"], full_output=True,
                        raise_on_fail=False)
    aom = np.array([v.omega for v in ax]).real
    aga = np.array([v.gamma for v in ax]).real
    f2 = _csv(out / "fig2c_axis.csv", ["n", "Omega", "Gamma", "abs_ratio"],
              [n, aom, aga, np.abs(aom / aga)])
    return [f1, f2], dict(max_ratio_axis=float(np.max(np.abs(aom / aga)[n >= 10])),
                          worst_rel_err=float(max(v.error for v in vals + ax)))


def fig2d(out, p):
    spec = lat.build_square(p["jx"], p["jy"])
    rs = res.extract(spec, 0, p["delta"])
    cl = res.caustics(rs)
    thc = min(abs(math.atan2(c.direction[1], c.direction[0])) for c in cl)
    dirs = ghost_directions(spec, thc, p["dmin"], p["dmax"], p["max_step"])
    scan = gf.ghost_scan(spec, 0, p["delta"], thc, dirs, _ghost_n_range(spec, thc), r2_min=0.0)
    dth = np.abs(scan.thetas - thc)
    kfit = scan.prefactor * dth ** scan.p
    f = _csv(out / "fig2d.csv", ["theta", "kappa_exact", "kappa_fit", "dtheta", "p", "q", "fit_r2"],
             [scan.thetas, scan.kappa, kfit, dth, [d[0] for d in dirs], [d[1] for d in dirs],
              [ft.r2 for ft in scan.fits]])
    return [f], dict(theta_c=thc, p=scan.p, prefactor=scan.prefactor, r2=scan.r2,
                     max_rel_dev=float(np.max(np.abs(kfit / scan.kappa - 1))))


# ---------------------------------------------------------------------------
# bath figures

def _periods(p):
    spec = lat.build_square(p["jx"], p["jy"])
    op = sc.orbit_periods(res.extract(spec, 0, p["delta"]), p["alpha"])
    return spec, op.tau, float(np.hypot(*op.l)), op


def _config(p, emitters, times, snaps=(), slices=(), **kw):
    return bath.SimulationConfig(nx=int(p["nx"]), ny=int(p["ny"]), jx=p["jx"], jy=p["jy"],
                                 alpha=p["alpha"], emitters=emitters, t_grid=list(times),
                                 snapshot_times=list(snaps), slices=list(slices), **kw)


def _snapshot(out, name, snap):
    path = out / name
    np.savetxt(path, snap, delimiter=",", fmt="%.8e")
    return str(path)


def fig3a(out, p):
    _, tau, l, _ = _periods(p)
    T = p["periods"] * tau
    cfg = _config(p, [bath.Emitter(0, 0, p["delta"], p["g"])], [0.0, T], [T])
    r = bath.evolve(cfg)
    f = _snapshot(out, "fig3a_snapshot.csv", r.snapshots[T])
    return [f], dict(tau=tau, l=l, t=T, edge_population=r.edge_population[T],
                     emitter_population=float(r.total_emitter_population[-1]))


def fig3b(out, p):
    spec, tau, l, op = _periods(p)
    T = p["periods"] * tau
    cfg = _config(p, [bath.Emitter(0, 0, p["delta"], p["g"])], [0.0, T], [T])
    r = bath.evolve(cfg)
    files = [_snapshot(out, "fig3b_snapshot.csv", r.snapshots[T])]
    # semiclassical trajectories from the origin, k sampled along S
    rs = res.extract(spec, 0, p["delta"])
    rows = []
    per = int(p["n_traj"]) // len(rs.curves)
    for c in rs.curves:
        for u in np.arange(per) / per:
            k0 = c.at(u)[0]
            tr = sc.integrate_orbit(spec, 0, k0, (0.0, 0.0), p["alpha"], t_max=T, n_samples=201)
            tid = len(rows)
            rows.append(np.column_stack([np.full(tr.t.size, tid), tr.t, tr.r, tr.k]))
    traj = np.vstack(rows)
    files.append(_csv(out / "fig3b_trajectories.csv", ["traj_id", "t", "x", "y", "kx", "ky"],
                      traj.T))
    return files, dict(tau=tau, l=l, edge_population=r.edge_population[T])


def fig3c(out, p):
    _, tau, l, _ = _periods(p)
    T = p["periods"] * tau
    yl = float(round(l))
    cfg = _config(p, [bath.Emitter(0, 0, p["delta"], p["g"])], [0.0, T], [T], [0.0, yl])
    r = bath.evolve(cfg)
    s0, sl = r.slices[(T, 0.0)], r.slices[(T, yl)]
    f = _csv(out / "fig3c.csv", ["x", "pop_y0", "pop_yl"], [cfg.x_coords, s0, sl], fmt="%.10e")
    m0, ml = bath.refocusing_metric(s0), bath.refocusing_metric(sl)
    summ = dict(tau=tau, l=l, y0=m0.__dict__, yl=ml.__dict__, edge_population=r.edge_population[T])
    (out / "fig3c_metrics.json").write_text(json.dumps(summ, indent=2))
    return [f, str(out / "fig3c_metrics.json")], summ


def _emitter_rows(p, l, count):
    sep = 3 * l
    ys = {1: [0.0], 2: [-sep / 2, sep / 2], 3: [-sep, 0.0, sep]}[count]
    return [bath.Emitter(0, int(round(y)), p["delta"], p["g"]) for y in ys]


def fig3d(out, p):
    _, tau, l, _ = _periods(p)
    ts = np.linspace(0, p["periods"] * tau, int(p["n_t"]))
    cols, summ = [ts, ts / tau], dict(tau=tau, l=l)
    for count in (1, 2, 3):
        cfg = _config(p, _emitter_rows(p, l, count), ts)
        init = bath.excite(cfg, [1.0]) if count == 1 else bath.dark_state(count, cfg)
        r = bath.evolve(cfg, init)
        cols.append(r.total_emitter_population)
        summ[f"final_{count}"] = float(r.total_emitter_population[-1])
    summ["ratio_2_1"] = summ["final_2"] / summ["final_1"]
    f = _csv(out / "fig3d.csv", ["t", "t_over_tau", "one", "two", "three"], cols, fmt="%.12e")
    return [f], summ


def fig3e(out, p):
    _, tau, l, _ = _periods(p)
    T = p["periods"] * tau
    cfg = _config(p, _emitter_rows(p, l, 2), [0.0, T], [T])
    r = bath.evolve(cfg, bath.dark_state(2, cfg))
    f = _snapshot(out, "fig3e_snapshot.csv", r.snapshots[T])
    return [f], dict(tau=tau, l=l, emitter_population=float(r.total_emitter_population[-1]),
                     edge_population=r.edge_population[T])


def fig4a(out, p):
    _, tau, l, _ = _periods(p)
    T = p["periods"] * tau
    yo = int(round(l / 2))
    hw = int(p["half_width"])
    obs = [(x, yo) for x in range(-hw, hw + 1)]
    cfg = _config(p, [bath.Emitter(0, 0, p["delta"], p["g"])], [0.0, T], [T], obstructions=obs)
    r = bath.evolve(cfg)
    snap = r.snapshots[T]
    f = _snapshot(out, "fig4a_snapshot.csv", snap)
    win = np.abs(cfg.x_coords) <= 15
    frac = float(snap[:, win].sum() / snap.sum())
    return [f], dict(tau=tau, l=l, obstruction_y=yo, window_fraction=frac,
                     edge_population=r.edge_population[T])


def _ensemble(p, chi, threads):
    _, tau, l, _ = _periods(p)
    T = p["periods"] * tau
    cfg = _config(p, [bath.Emitter(0, 0, p["delta"], p["g"])], [0.0, T], [T], chi=chi,
                  seed=int(p["seed"]))
    n = int(p["n_real"]) if chi > 0 else 1
    return bath.disorder_ensemble(cfg, n, [T], slice_y=2 * round(l), workers=threads), tau, l


def fig4b(out, p, threads=1):
    e, tau, l = _ensemble(p, p["chi"], threads)
    e.to_csv(out / "fig4b_ensemble.csv")
    return [str(out / "fig4b_ensemble.csv")], dict(tau=tau, l=l, n_realizations=e.n_realizations)


def fig4cf(out, p, threads=1):
    clean, tau, l = _ensemble(p, 0.0, threads)
    cols = [clean.config.x_coords, clean.slice_mean[0]]
    header = ["x", "clean_log_pop"]
    summ = dict(tau=tau, l=l, slice_y=2 * round(l))
    c = clean.config.nx // 2
    for chi in p["chis"]:
        e, _, _ = _ensemble(p, chi, threads)
        cols += [e.slice_mean[0], e.slice_std[0]]
        header += [f"mean_chi{chi:g}", f"std_chi{chi:g}"]
        summ[f"center_shift_chi{chi:g}"] = float(e.slice_mean[0][c] - clean.slice_mean[0][c])
    f = _csv(out / "fig4cf.csv", header, cols, fmt="%.10e")
    return [f], summ


# ---------------------------------------------------------------------------
# honeycomb appendix

def appD(out, p):
    files, summ = [], {}
    g0 = lat.build_honeycomb(1.0, p["j2_iso"])
    n = np.arange(1, int(p["n_iso"]) + 1)
    rho = n[:, None] * g0.vectors[0]
    ex = gf.greens_exact(g0, None, rho, p["delta_iso"])
    tb = gf.tube_approximant(g0, None, rho, p["delta_iso"])
    st = []
    for r in rho:
        try:
            st.append(gf.stationary_phase(g0, None, r, p["delta_iso"]))
        except (CausticDirection, NoResonantDirection):
            st.append(np.nan)
    st = np.array(st)
    et = np.abs(tb - ex) / np.abs(ex)
    es = np.abs(st - ex) / np.abs(ex)
    files.append(_csv(out / "appD_convergence.csv",
                      ["n", "G_re", "G_im", "tube_re", "tube_im", "err_tube", "err_stat"],
                      [n, ex.real, ex.imag, tb.real, tb.imag, et, es]))
    summ["err_tube_last"] = float(et[-1])
    hc = lat.build_honeycomb(1.0, p["j2"])
    step = hc.vectors[0] - hc.vectors[1]
    m = np.arange(int(p["n_lo"]), int(p["n_hi"]) + 1)
    g = gf.gamma(hc, 0, m[:, None] * step, p["delta"])
    slope, r2 = caustic_exponent(m, g)
    files.append(_csv(out / "appD_caustic.csv", ["n", "Gamma", "abs_Gamma"], [m, g, np.abs(g)]))
    summ.update(caustic_exponent=slope, caustic_fit_r2=r2, caustic_step=step.tolist())
    return files, summ


_RUNNERS = dict(fig1b=fig1b, fig2b=fig2b, fig2c=fig2c, fig2d=fig2d, fig3a=fig3a, fig3b=fig3b,
                fig3c=fig3c, fig3d=fig3d, fig3e=fig3e, fig4a=fig4a, fig4b=fig4b, fig4cf=fig4cf,
                appD=appD)


def reproduce(figure: str, scale: str = "desk", out_dir=".", threads: int = 1,
              **overrides) -> RecipeOutput:
    """Run one figure recipe and write its data files into ``out_dir``."""
    p = defaults(figure, scale)
    bad = set(overrides) - set(p)
    if bad:
        raise ValidationError(f"unknown parameters for {figure}: {', '.join(sorted(bad))}")
    p.update(overrides)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    fn = _RUNNERS[figure]
    files, summ = fn(out, p, threads) if figure in ("fig4b", "fig4cf") else fn(out, p)
    summ["seconds"] = time.perf_counter() - t0
    return RecipeOutput(figure, scale, files, summ, p)
