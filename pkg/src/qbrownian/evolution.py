"""Generator assembly and adaptive time evolution of density states.

The equation of motion, in center/relative coordinates, is

    d/dt rho(X, xi) = -i u sum_{|e|=1} [rho(X+e, xi+e) - rho(X+e, xi-e)]
                      - i lam [omega((X+xi)/2) - omega((X-xi)/2)] rho(X, xi)
                      + g sum_eta [r(xi, eta) - r(0, eta-xi)] rho(X, eta).

In (x, y) storage the first two lines are the commutator -i[H, rho] with
H = u * adjacency + lam * diag(omega); the bath term is a sum over diagonal
shifts rho(x, y) -> rho(x+m, y+m) weighted by coefficients depending only
on xi = x - y, so one matrix of coefficients per active shift suffices.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .disorder import DisorderField
from .errors import BoundaryMassExceeded, BoxMismatch, StepSizeUnderflow
from .kernels import GainKernel
from .lattice import Boundary, DensityState, LatticeBox, weighted_norm


@dataclass(frozen=True)
class GeneratorParams:
    """Hopping amplitude u, disorder strength lam, bath coupling g."""

    u: float
    lam: float
    g: float

    def __post_init__(self):
        if not all(np.isfinite([self.u, self.lam, self.g])):
            raise ValueError("parameters must be finite")
        if self.g < 0 or self.lam < 0:
            raise ValueError("lam and g must be >= 0")


def hopping_matrix(box: LatticeBox) -> sp.csr_matrix:
    """Nearest-neighbour adjacency on the box (wrapping if periodic)."""
    coords = box.site_coords()
    n = box.n_sites
    rows, cols = [], []
    for k in range(n):
        for i in range(box.d):
            for step in (-1, 1):
                nb = coords[k].copy()
                nb[i] += step
                if box.boundary is Boundary.PERIODIC:
                    nb = box.wrap(nb)
                elif not box.contains(nb):
                    continue
                rows.append(k)
                cols.append(box.site_index(nb))
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def hamiltonian(box: LatticeBox, params: GeneratorParams,
                fld: DisorderField | None) -> sp.csr_matrix:
    """H = u * adjacency + lam * diag(omega)."""
    H = params.u * hopping_matrix(box)
    if params.lam != 0.0:
        if fld is None:
            raise ValueError("lam != 0 requires a disorder field")
        H = H + params.lam * sp.diags(fld.values)
    return sp.csr_matrix(H)


def _diag_shift(mat: np.ndarray, m: np.ndarray, box: LatticeBox) -> np.ndarray:
    """out(x, y) = mat(x + m, y + m); zero-padded or wrapped per boundary."""
    if not np.any(m):
        return mat
    ns, d = box.n_side, box.d
    t = mat.reshape((ns,) * (2 * d))
    axes = tuple(range(2 * d))
    shifts = tuple(-int(v) for v in list(m) + list(m))
    if box.boundary is Boundary.PERIODIC:
        return np.roll(t, shift=shifts, axis=axes).reshape(mat.shape)
    out = np.zeros_like(t)
    src, dst = [], []
    for mi in (list(m) + list(m)):
        mi = int(mi)
        if mi >= 0:
            dst.append(slice(0, ns - mi))
            src.append(slice(mi, ns))
        else:
            dst.append(slice(-mi, ns))
            src.append(slice(0, ns + mi))
    out[tuple(dst)] = t[tuple(src)]
    return out.reshape(mat.shape)


class GeneratorTable:
    """Precomputed pieces of the generator for one (box, params, field, kernel)."""

    def __init__(self, box: LatticeBox, params: GeneratorParams,
                 fld: DisorderField | None, kernel: GainKernel | None):
        if fld is not None and fld.box != box:
            raise BoxMismatch("disorder field lives on a different box")
        self.box = box
        self.params = params
        self.H = hamiltonian(box, params, fld)
        self.shifts = []
        if kernel is not None and params.g != 0.0:
            coords = box.site_coords()
            # xi = x - y raveled over the difference grid [-2L, 2L]^d
            base = 4 * box.L + 1
            xi_key = np.zeros((box.n_sites, box.n_sites), dtype=np.int64)
            for i in range(box.d):
                diff = coords[:, i][:, None] - coords[:, i][None, :] + 2 * box.L
                xi_key = xi_key * base + diff
            offs = kernel.offsets
            in_range = np.all(np.abs(offs) <= 2 * box.L, axis=1)
            blk_key = np.zeros(len(offs), dtype=np.int64)
            for i in range(box.d):
                blk_key = blk_key * base + np.clip(offs[:, i] + 2 * box.L,
                                                   0, base - 1)
            for m, gain_vals, loss_c in kernel.active_shifts():
                table = np.full(base**box.d, -loss_c, dtype=np.complex128)
                table[blk_key[in_range]] += gain_vals[in_range]
                W = table[xi_key]
                self.shifts.append((np.asarray(m, dtype=int), W))
        # boundary monitor: pairs with |x + y|_inf >= 2L - 2
        coords = box.site_coords()
        Xmax = np.max(np.abs(coords[:, None, :] + coords[None, :, :]), axis=2)
        self.rim = np.nonzero((Xmax >= 2 * box.L - 2).ravel())[0]

    def rhs(self, mat: np.ndarray) -> np.ndarray:
        H = self.H  # real symmetric, so mat @ H = (H @ mat.T).T
        out = -1j * (H @ mat - (H @ mat.T).T)
        g = self.params.g
        for m, W in self.shifts:
            out += g * (W * _diag_shift(mat, m, self.box))
        return out

    def boundary_mass(self, mat: np.ndarray) -> float:
        if len(self.rim) == 0:
            return 0.0
        v = mat.ravel()[self.rim]
        return float(np.sum(np.abs(v) ** 2))


def apply_generator(state: DensityState, params: GeneratorParams,
                    fld: DisorderField | None,
                    kernel: GainKernel | None) -> DensityState:
    """One application of the full generator (the right-hand side above)."""
    if fld is not None and fld.box != state.box:
        raise BoxMismatch("state and disorder field on different boxes")
    table = GeneratorTable(state.box, params, fld, kernel)
    return DensityState(state.box, table.rhs(state.mat))


def generator_matrix(box: LatticeBox, params: GeneratorParams,
                     fld: DisorderField | None,
                     kernel: GainKernel | None) -> sp.csr_matrix:
    """Full generator as a sparse matrix acting on vec(rho), row-major.

    Assembled independently of the shift-based fast path: Hamiltonian part
    by Kronecker products, bath part by explicit index enumeration.
    """
    n = box.n_sites
    H = hamiltonian(box, params, fld)
    eye = sp.identity(n, format="csr")
    G = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    if kernel is not None and params.g != 0.0:
        coords = box.site_coords()
        rows, cols, data = [], [], []
        for m, _, _ in kernel.active_shifts():
            mv = np.asarray(m, dtype=int)
            loss_c = kernel.loss_coeff(mv)
            for ix in range(n):
                x2 = coords[ix] + mv
                if box.boundary is Boundary.PERIODIC:
                    x2 = box.wrap(x2)
                elif not box.contains(x2):
                    continue
                jx = box.site_index(x2)
                for iy in range(n):
                    y2 = coords[iy] + mv
                    if box.boundary is Boundary.PERIODIC:
                        y2 = box.wrap(y2)
                    elif not box.contains(y2):
                        continue
                    jy = box.site_index(y2)
                    xi = coords[ix] - coords[iy]
                    c = kernel.r(xi, xi + 2 * mv) - loss_c
                    if c != 0:
                        rows.append(ix * n + iy)
                        cols.append(jx * n + jy)
                        data.append(params.g * c)
        G = G + sp.csr_matrix((data, (rows, cols)), shape=(n * n, n * n))
    return sp.csr_matrix(G)


def evolve_expm(state: DensityState, params: GeneratorParams,
                fld: DisorderField | None, kernel: GainKernel | None,
                t: float) -> DensityState:
    """Dense matrix-exponential propagation; oracle for the adaptive path."""
    n2 = state.box.n_sites**2
    if n2 > 4000:
        raise ValueError(f"dense exponential limited to dimension 4000, got {n2}")
    G = generator_matrix(state.box, params, fld, kernel).toarray()
    v = expm(t * G) @ state.mat.ravel()
    return DensityState(state.box, v.reshape(state.mat.shape))


# ---------------------------------------------------------------------------
# adaptive Runge-Kutta (Dormand-Prince 5(4), PI step control)

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


@dataclass
class IntegratorStats:
    n_steps: int = 0
    n_rejected: int = 0
    max_local_error: float = 0.0


@dataclass
class Trajectory:
    times: np.ndarray
    states: list | None
    stats: IntegratorStats
    observables: dict = field(default_factory=dict)
    trace_drift: float = 0.0
    herm_defect: float = 0.0
    boundary_mass: float = 0.0

    def state_at(self, t: float) -> DensityState:
        if self.states is None:
            raise ValueError("trajectory was run without stored states")
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise KeyError(f"time {t} not on the trajectory grid")
        return self.states[k]


def evolve(state0: DensityState, params: GeneratorParams,
           fld: DisorderField | None, kernel: GainKernel | None,
           t_grid, tol: float = 1e-9, *, boundary_tol: float = 1e-8,
           keep_states: bool = True, observables: dict | None = None,
           h0: float | None = None) -> Trajectory:
    """Integrate the equation of motion over t_grid with local error <= tol.

    Embedded 5(4) error estimate, PI step-size control.  Trace and
    Hermiticity are linear invariants of the scheme, so their drift is
    roundoff-level; both are monitored, as is the boundary mass
    sum over |X| >= 2L-2 of |rho|^2 (BoundaryMassExceeded when above
    boundary_tol: the truncated box is no longer faithful).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0:
        raise ValueError("t_grid must start at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    table = GeneratorTable(state0.box, params, fld, kernel)

    y = state0.mat.astype(np.complex128).copy()
    t = 0.0
    T = float(t_grid[-1])
    stats = IntegratorStats()
    tr0 = complex(np.trace(y))
    obs = observables or {}
    out_times = []
    out_states = [] if keep_states else None
    out_obs = {k: [] for k in obs}
    max_drift = 0.0
    max_herm = 0.0
    max_rim = 0.0

    def emit(tcur, ycur):
        nonlocal max_drift, max_herm
        out_times.append(tcur)
        if keep_states:
            out_states.append(DensityState(state0.box, ycur.copy()))
        for name, fn in obs.items():
            out_obs[name].append(fn(ycur, tcur))
        max_drift = max(max_drift, abs(complex(np.trace(ycur)) - tr0))
        max_herm = max(max_herm, float(np.max(np.abs(ycur - ycur.conj().T))))

    emit(0.0, y)
    grid_pos = 1
    scale = max(1.0, float(np.max(np.abs(y))))
    # initial step from the generator scale
    f0 = table.rhs(y)
    rate = float(np.max(np.abs(f0))) / scale + 1e-30
    h = h0 if h0 is not None else min(0.1, (tol ** 0.2) / rate)
    err_prev = tol
    k1 = f0
    h_min = 1e-14 * max(1.0, T)

    while t < T - 1e-13 and grid_pos < len(t_grid):
        t_target = t_grid[grid_pos]
        h_step = min(h, t_target - t)
        if h_step < h_min:
            raise StepSizeUnderflow(f"step {h_step:.3e} below minimum at t={t:.6g}")
        ks = [k1]
        for i in range(1, 7):
            acc = np.zeros_like(y)
            for j, a in enumerate(_DP_A[i]):
                if a != 0.0:
                    acc = acc + a * ks[j]
            ks.append(table.rhs(y + h_step * acc))
        err_mat = np.zeros_like(y)
        acc5 = np.zeros_like(y)
        for j in range(7):
            if _DP_B5[j] != 0.0:
                acc5 = acc5 + _DP_B5[j] * ks[j]
            if _DP_E[j] != 0.0:
                err_mat = err_mat + _DP_E[j] * ks[j]
        y5 = y + h_step * acc5
        err = float(np.max(np.abs(h_step * err_mat)))
        if err <= tol:
            stats.max_local_error = max(stats.max_local_error, err)
            t = t + h_step
            y = y5
            k1 = ks[6]  # FSAL
            stats.n_steps += 1
            rim = table.boundary_mass(y)
            max_rim = max(max_rim, rim)
            if rim > boundary_tol:
                raise BoundaryMassExceeded(
                    f"boundary mass {rim:.3e} > {boundary_tol:.1e} at t={t:.6g}")
            if abs(t - t_target) < 1e-12:
                emit(t_target, y)
                grid_pos += 1
            factor = 0.9 * (tol / max(err, 1e-300)) ** 0.14 \
                * (err_prev / tol) ** 0.08
            err_prev = max(err, 1e-300)
            h = h_step * min(5.0, max(0.2, factor))
        else:
            stats.n_rejected += 1
            h = h_step * max(0.2, 0.9 * (tol / err) ** 0.2)

    return Trajectory(times=np.asarray(out_times), states=out_states,
                      stats=stats, observables={k: np.asarray(v) for k, v in
                                                out_obs.items()},
                      trace_drift=max_drift, herm_defect=max_herm,
                      boundary_mass=max_rim)


# ---------------------------------------------------------------------------
# propagation bound


@dataclass
class VelocityCheck:
    max_ratio: float
    passed: bool
    ratios: np.ndarray
    rate: float


def group_velocity_check(traj: Trajectory, m: float, params: GeneratorParams,
                         tol: float = 1e-6) -> VelocityCheck:
    """Verify the weighted-norm growth bound along a trajectory.

    The norm sup_X e^{m|X|} ||rho(X, .)||_2 may grow at most like
    e^{C_m t} with C_m = 4 d e^m u + g.  Returns the worst ratio
    observed; a ratio above 1 + tol indicates an assembly or
    integration bug.
    """
    if traj.states is None:
        raise ValueError("needs a trajectory with stored states")
    d = traj.states[0].box.d
    C = 4.0 * d * np.exp(m) * abs(params.u) + params.g
    A = weighted_norm(traj.states[0], m)
    ratios = np.array([
        weighted_norm(s, m) / (np.exp(C * t) * A)
        for t, s in zip(traj.times, traj.states)])
    worst = float(np.max(ratios))
    return VelocityCheck(worst, worst <= 1.0 + tol, ratios, C)


def ballistic_box_radius(u: float, t_max: float, pad: int = 10) -> int:
    """Box radius safely containing the light cone |x| <= 2u t (+ tail pad)."""
    r = 2.0 * abs(u) * t_max
    return int(np.ceil(r + pad + 4.0 * max(r, 1.0) ** (1.0 / 3.0)))
