"""Diffusion-constant estimators: ensemble MSD fits, exponentially
weighted time averages, and the fiber-space resolvent sweep.

Three routes to the same number:

  fit        least-squares slope of the ensemble mean M_11(t) past the
             ballistic transient (window opens at 5 dissipative
             relaxation times, t1 = 5/(c g));
  abel       D(g, eta) = eta^2 integral e^{-eta t} M_11(t) dt, the
             diffusion constant on the time scale 1/eta;
  resolvent  2 u^2 <phi, (eta + G0)^{-1} phi> on the translation-fibered
             disorder box, extrapolated to eta -> 0.

All ensemble reductions run in seed order independent of parallelism.
"""

from dataclasses import dataclass

import numpy as np

from . import disorder
from ._parallel import parallel_map
from .errors import NonlinearRegime, NoPlateau, TailDominates, WindowTooShort
from .evolution import GeneratorParams, evolve, hamiltonian
from .fiber import build_fiber_space, operator_norms, resolvent_diffusion
from .kernels import GainKernel
from .lattice import Boundary, LatticeBox, new_point_state
from .results import (DiffusionEstimate, LocalizationEstimate, MsdSeries,
                      SlopeEstimate)


# ---------------------------------------------------------------------------
# ensemble second moments


def _moment_observable(box: LatticeBox):
    coords = box.site_coords().astype(float)
    d = box.d
    prods = np.empty((d, d, box.n_sites))
    for i in range(d):
        for j in range(d):
            prods[i, j] = coords[:, i] * coords[:, j]

    def fn(mat, t):
        diag = np.real(np.diagonal(mat))
        return prods @ diag

    return fn


def _msd_worker(args):
    (box, params, kernel_lite, dist, seed, t_grid, tol, boundary_tol) = args
    kernel = None
    if kernel_lite is not None:
        d, radius, values, scale = kernel_lite
        kernel = GainKernel(d=d, radius=radius, values=values, spec=None,
                            scale=scale)
    fld = None
    if params.lam != 0.0:
        fld = disorder.sample(box, dist, seed)
    state0 = new_point_state(box)
    traj = evolve(state0, params, fld, kernel, t_grid, tol,
                  boundary_tol=boundary_tol, keep_states=False,
                  observables={"m": _moment_observable(box)})
    return np.asarray(traj.observables["m"])


def msd_ensemble(params: GeneratorParams, kernel: GainKernel | None,
                 box: LatticeBox, dist, seeds, t_grid,
                 tol: float = 1e-6, boundary_tol: float = 1e-8,
                 workers: int = 1, min_seeds: int = 8) -> MsdSeries:
    """Per-seed position second moments M_ij(t), reduced in seed order.

    Disordered runs need at least ``min_seeds`` seeds for error bars; a
    clean system (lam = 0) is deterministic and one seed suffices.
    """
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) == 0:
        raise ValueError("need at least one seed")
    if params.lam > 0 and len(seeds) < min_seeds:
        raise ValueError(f"disordered ensembles need >= {min_seeds} seeds")
    t_grid = np.asarray(t_grid, dtype=float)
    lite = None
    if kernel is not None:
        lite = (kernel.d, kernel.radius, kernel.values, kernel.scale)
    jobs = [(box, params, lite, dist, s, t_grid, tol, boundary_tol)
            for s in sorted(seeds)]
    moments = parallel_map(_msd_worker, jobs, workers)
    per_seed = {s: m for s, m in zip(sorted(seeds), moments)}
    stack = np.stack([per_seed[s] for s in sorted(seeds)])
    mean = stack.mean(axis=0)
    if len(seeds) > 1:
        stderr = stack.std(axis=0, ddof=1) / np.sqrt(len(seeds))
    else:
        stderr = np.zeros_like(mean)
    return MsdSeries(times=t_grid, per_seed=per_seed, mean=mean,
                     stderr=stderr, seeds=tuple(sorted(seeds)), d=box.d)


# ---------------------------------------------------------------------------
# exponentially weighted time average


def _exp_weighted_integral(times: np.ndarray, m: np.ndarray,
                           eta: float) -> tuple:
    """integral_0^inf e^{-eta t} M(t) dt with M piecewise linear on the
    grid and linearly extended beyond it.  Exact for linear M.

    Returns (total, tail_part)."""
    t = np.asarray(times, dtype=float)
    dt = np.diff(t)
    a = m[:-1]
    b = np.diff(m) / dt
    E = np.exp(-eta * dt)
    seg = np.exp(-eta * t[:-1]) * (a * (1.0 - E) / eta
                                   + b * (1.0 - E * (1.0 + eta * dt)) / eta**2)
    body = float(np.sum(seg))
    slope = b[-1] if len(b) else 0.0
    tail = float(np.exp(-eta * t[-1]) * (m[-1] / eta + slope / eta**2))
    return body + tail, tail


def abel_diffusion(msd: MsdSeries, eta: float) -> DiffusionEstimate:
    """D(g, eta) = eta^2 * integral e^{-eta t} M(t) dt, per component.

    Requires eta * T_max >= 5 so the extrapolated tail is a correction,
    not the answer; TailDominates if it still exceeds 10% of the total.
    Per-seed values give the ensemble error.
    """
    if len(msd.times) < 2:
        raise ValueError("need at least two time points")
    T = float(msd.times[-1])
    if eta * T < 5.0:
        raise ValueError(f"eta*T = {eta * T:.2f} < 5: tail would dominate")
    d = msd.d
    dm = np.zeros((d, d))
    err = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            total, tail = _exp_weighted_integral(msd.times, msd.mean[:, i, j],
                                                 eta)
            if i == j and abs(tail) > 0.1 * max(abs(total), 1e-300):
                raise TailDominates(
                    f"tail correction {tail:.3e} vs total {total:.3e} on "
                    f"axis {i}")
            dm[i, j] = eta**2 * total
            vals = []
            for s in msd.seeds:
                tot_s, _ = _exp_weighted_integral(msd.times,
                                                  msd.per_seed[s][:, i, j], eta)
                vals.append(eta**2 * tot_s)
            if len(vals) > 1:
                err[i, j] = np.std(vals, ddof=1) / np.sqrt(len(vals))
    return DiffusionEstimate(d_matrix=dm, stderr=err, method="abel",
                             params={"eta": eta, "T": T,
                                     "n_seeds": len(msd.seeds)},
                             extras={"eta_T": eta * T})


# ---------------------------------------------------------------------------
# window fit


def fit_diffusion(msd: MsdSeries, window) -> DiffusionEstimate:
    """Weighted least-squares slope of M_ij(t) over the window.

    The window should open past the ballistic transient (5/(c g) as a
    rule).  A quadratic refit quantifies residual curvature; the fraction
    is reported for the caller to act on.
    """
    t1, t2 = float(window[0]), float(window[1])
    mask = (msd.times >= t1 - 1e-12) & (msd.times <= t2 + 1e-12)
    if int(np.sum(mask)) < 3:
        raise WindowTooShort(f"window [{t1}, {t2}] holds "
                             f"{int(np.sum(mask))} samples (< 3)")
    t = msd.times[mask]
    d = msd.d
    dm = np.zeros((d, d))
    err = np.zeros((d, d))
    curve = 0.0
    for i in range(d):
        for j in range(d):
            y = msd.mean[mask, i, j]
            sig = msd.stderr[mask, i, j]
            if np.all(sig > 0):
                w = 1.0 / sig**2
            else:
                w = np.ones_like(y)
            V = np.vstack([np.ones_like(t), t]).T
            W = np.diag(w)
            cov = np.linalg.inv(V.T @ W @ V)
            beta = cov @ (V.T @ W @ y)
            resid = y - V @ beta
            if not np.all(sig > 0):
                dof = max(len(t) - 2, 1)
                s2 = float(resid @ resid) / dof
                cov = cov * s2
            dm[i, j] = beta[1]
            err[i, j] = np.sqrt(max(cov[1, 1], 0.0))
            if i == 0 and j == 0:
                V2 = np.vstack([np.ones_like(t), t, t * t]).T
                b2, *_ = np.linalg.lstsq(np.sqrt(w)[:, None] * V2,
                                         np.sqrt(w) * y, rcond=None)
                if abs(b2[1]) > 0:
                    curve = abs(b2[2]) * (t2 - t1) / abs(b2[1])
                else:
                    curve = np.inf
    return DiffusionEstimate(d_matrix=dm, stderr=err, method="fit",
                             params={"window": [t1, t2],
                                     "n_seeds": len(msd.seeds)},
                             extras={"curvature_fraction": float(curve)})


def fit_window(c: float, g: float, t_max: float) -> tuple:
    """Default fit window [5/(c g), t_max]: five dissipative relaxation
    times clear the ballistic transient."""
    if c <= 0 or g <= 0:
        raise ValueError("need c > 0 and g > 0")
    return 5.0 / (c * g), t_max


# ---------------------------------------------------------------------------
# localization length (no bath)


def _loc_worker(args):
    box, u, lam, dist, seed, times = args
    fld = disorder.sample(box, dist, seed)
    H = hamiltonian(box, GeneratorParams(u=u, lam=lam, g=0.0), fld).toarray()
    E, V = np.linalg.eigh(H)
    coords = box.site_coords().astype(float)
    if box.boundary is Boundary.PERIODIC:
        # translation averaging: every site is a starting point; the
        # distribution of the potential around any site is the same, so
        # averaging over origins (ring metric) is an unbiased variance
        # reduction of the disorder expectation
        ns = box.n_side
        delta = coords[:, None, :] - coords[None, :, :]
        delta = np.minimum(np.abs(delta), ns - np.abs(delta))
        w2 = (delta**2).sum(axis=2) / box.d  # [x, x0]
        mom = np.empty(len(times))
        for k, t in enumerate(times):
            U = (V * np.exp(-1j * E * t)) @ V.T
            mom[k] = np.mean(np.sum(w2 * np.abs(U) ** 2, axis=0))
        return mom
    psi0 = np.zeros(box.n_sites)
    psi0[box.site_index(np.zeros(box.d, dtype=int))] = 1.0
    c = V.T @ psi0
    phases = np.exp(-1j * np.outer(E, times))
    psi_t = V @ (phases * c[:, None])  # (n_sites, n_times)
    w = (coords**2).sum(axis=1) / box.d
    return w @ (np.abs(psi_t) ** 2)


def localization_length(u: float, lam: float, box: LatticeBox, dist, seeds,
                        t_max: float, n_times: int = 0, workers: int = 1,
                        plateau_tol: float = 0.05) -> LocalizationEstimate:
    """Time-sup of the disorder-averaged second moment of |<x|psi_t|0>|^2.

    Pure Hamiltonian evolution (g = 0) by exact diagonalization per seed.
    On a periodic box the moment is additionally averaged over starting
    sites (self-averaging; errors stay clustered by seed).  The estimate
    is accepted only if the running sup grows by less than ``plateau_tol``
    over the last quarter of the horizon and stays far below the box
    scale; NoPlateau otherwise (e.g. ballistic motion at lam = 0).
    """
    seeds = tuple(int(s) for s in seeds)
    n_times = n_times or max(int(2 * t_max) + 1, 51)
    times = np.linspace(0.0, t_max, n_times)
    jobs = [(box, u, lam, dist, s, times) for s in sorted(seeds)]
    rows = parallel_map(_loc_worker, jobs, workers)
    stack = np.stack(rows)  # (n_seeds, n_times)
    mean = stack.mean(axis=0)
    stderr = (stack.std(axis=0, ddof=1) / np.sqrt(len(seeds))
              if len(seeds) > 1 else np.zeros_like(mean))
    k_star = int(np.argmax(mean))
    sup_full = float(mean[k_star])
    cut = times <= 0.75 * t_max
    sup_early = float(np.max(mean[cut]))
    ratio = sup_early / sup_full if sup_full > 0 else 1.0
    if ratio < 1.0 - plateau_tol:
        raise NoPlateau(
            f"running sup grew {1 - ratio:.1%} in the last quarter "
            f"(> {plateau_tol:.0%}): not in the localized regime")
    if sup_full > (box.L / 2.0) ** 2:
        raise NoPlateau(
            f"second moment {sup_full:.3g} is at the box scale "
            f"(L/2)^2 = {(box.L / 2) ** 2:.3g}: saturation, not localization")
    return LocalizationEstimate(ell2=sup_full, stderr=float(stderr[k_star]),
                                sup_time=float(times[k_star]),
                                plateau_ratio=ratio, seeds=tuple(sorted(seeds)))


# ---------------------------------------------------------------------------
# small-coupling slope of D(g)


def _slope_worker(args):
    (fiber_box, u, lam, g, kernel, dist, seed, eta_list) = args
    fld = disorder.sample(fiber_box, dist, seed)
    fs = build_fiber_space(fiber_box, GeneratorParams(u=u, lam=lam, g=g),
                           kernel, fld)
    est = resolvent_diffusion(fs, eta_list)
    return est.scalar, est.scalar_err, operator_norms(fs)


def small_g_slope(u: float, lam: float, kernel: GainKernel, g_list, dist,
                  config_seeds, fiber_box: LatticeBox,
                  ell2: LocalizationEstimate | None = None,
                  workers: int = 1,
                  curvature_tol: float = 0.2) -> SlopeEstimate:
    """Through-origin slope Delta of D(g) from resolvent sweeps.

    D(g) is computed per (g, disorder configuration) on the periodic fiber
    box and averaged over configurations.  The slope must be consistent
    with the localization bounds: positive, at least 4 c u^2 / |A0|^2, and
    at most (1 + 1/c) ell^2.  Residual curvature above ``curvature_tol``
    raises NonlinearRegime (g not small enough for the linear law).
    """
    g_list = np.asarray(sorted(g_list), dtype=float)
    if g_list[0] <= 0:
        raise ValueError("g values must be positive")
    if g_list[-1] / g_list[0] < 10 - 1e-9:
        raise ValueError("g_list should span at least a decade")
    c = kernel.certified.get("gap")
    if not c or c <= 0:
        raise ValueError("kernel needs a certified positive gap")
    seeds = tuple(int(s) for s in config_seeds)
    jobs = []
    for g in g_list:
        etas = [c * g * 2.0 ** (-k) for k in range(8)]
        for s in sorted(seeds):
            jobs.append((fiber_box, u, lam, float(g), kernel, dist, s, etas))
    out = parallel_map(_slope_worker, jobs, workers)
    n_s = len(seeds)
    d_vals = np.zeros(len(g_list))
    d_errs = np.zeros(len(g_list))
    norm_a_all = []
    per_g_lower = np.zeros(len(g_list))
    for gi, g in enumerate(g_list):
        chunk = out[gi * n_s:(gi + 1) * n_s]
        vals = np.array([v for v, _, _ in chunk])
        d_vals[gi] = vals.mean()
        spread = (np.std(vals, ddof=1) / np.sqrt(n_s)) if n_s > 1 else 0.0
        d_errs[gi] = np.sqrt(spread**2 + np.mean([e for _, e, _ in chunk])**2)
        ng = np.mean([nm["G0"] for _, _, nm in chunk])
        per_g_lower[gi] = 4.0 * g * u * u * c / ng**2
        norm_a_all.extend(nm["A0"] for _, _, nm in chunk)
    w = 1.0 / np.maximum(d_errs, 1e-12 * np.max(np.abs(d_vals)))**2
    delta = float(np.sum(w * g_list * d_vals) / np.sum(w * g_list**2))
    delta_err = float(np.sqrt(1.0 / np.sum(w * g_list**2)))
    # curvature of the residuals: D = Delta g + beta g^2
    A = np.vstack([g_list, g_list**2]).T
    coef, *_ = np.linalg.lstsq(np.sqrt(w)[:, None] * A,
                               np.sqrt(w) * d_vals, rcond=None)
    curvature = abs(coef[1]) * g_list[-1] / max(abs(coef[0]), 1e-300)
    if curvature > curvature_tol:
        raise NonlinearRegime(
            f"quadratic term contributes {curvature:.1%} at g={g_list[-1]}")
    norm_a = float(np.mean(norm_a_all))
    lower = 4.0 * c * u * u / norm_a**2
    upper = float("inf")
    checks = {"positive": bool(delta > 0),
              "positive_3sigma": bool(delta > 3 * delta_err),
              "curvature_fraction": float(curvature),
              "norm_A0": norm_a,
              "lower_bound": float(lower),
              "lower_ok": bool(delta >= lower - 3 * delta_err),
              "per_g_lower": per_g_lower.tolist(),
              "per_g_lower_ok": bool(np.all(
                  d_vals >= per_g_lower - 3 * d_errs - 1e-12))}
    if ell2 is not None:
        upper = (1.0 + 1.0 / c) * ell2.ell2
        upper_err = (1.0 + 1.0 / c) * ell2.stderr
        checks["upper_bound"] = float(upper)
        checks["upper_ok"] = bool(delta <= upper + 3 * (delta_err + upper_err))
    return SlopeEstimate(delta=delta, stderr=delta_err, g_values=g_list,
                         d_values=d_vals, d_errors=d_errs,
                         curvature_fraction=float(curvature),
                         lower_bound=float(lower), upper_bound=float(upper),
                         checks=checks)
