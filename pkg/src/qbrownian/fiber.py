"""Translation-fibered transport operators on a periodic disorder box.

The disorder average is realized by translation averaging: one potential
omega on a periodic box stands in for the disorder space, with the
normalized counting measure over its lattice translates as expectation.
On functions f(xi, a) (a labels the translate tau_a omega) the fibered
operators at zero Bloch momentum read

    T0 f(xi, a) = sum_{|e|=1} [f(xi+e, a) - f(xi+e, a+e)]
    V  f(xi, a) = (omega(xi-a) - omega(-a)) f(xi, a)
    Ldiss f(xi, a) = sum_eta [r(xi,eta) - r(0,eta-xi)] f(eta, a + (eta-xi)/2)

and the full generator is G0 = i(u T0 + lam V) - g Ldiss.  It annihilates
delta_0 (x) 1 together with its adjoint, so transport coefficients reduce
to resolvent matrix elements of G0 at the vector
phi = (delta_{e1} - delta_{-e1}) (x) 1:

    D = 2 u^2 lim_{eta->0} < phi, (eta + G0)^{-1} phi >.

The eta -> 0 limit is evaluated both by Richardson extrapolation of direct
solves and by the projected formula <phi, (Pi G0 Pi)^{-1} phi> on the
kernel of the block coupling to the zero fiber; the two must agree.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .disorder import DisorderField
from .errors import (BoxMismatch, IllConditioned, KernelConstraintViolated,
                     SingularLindbladian)
from .evolution import GeneratorParams
from .kernels import GainKernel, block_offsets, fiber_matrices
from .lattice import Boundary, LatticeBox
from .results import DiffusionEstimate

_ZERO_TOL = 1e-12


@dataclass
class FiberSpace:
    """Assembled fiber operators for one disorder configuration."""

    box: LatticeBox
    params: GeneratorParams
    kernel: GainKernel
    field: DisorderField
    T0: sp.csr_matrix
    Vdiag: np.ndarray
    Ldiss: sp.csr_matrix
    A0: sp.csr_matrix
    G0: sp.csr_matrix
    phi: np.ndarray
    e0: np.ndarray
    n_a: int
    diss_diagonal: bool

    @property
    def dim(self) -> int:
        return self.G0.shape[0]

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        """Disorder expectation = normalized translation average."""
        return complex(np.vdot(f, g) / self.n_a)


def _neighbor_index(box: LatticeBox, step) -> np.ndarray:
    """site index map x -> wrap(x + step)."""
    coords = box.site_coords()
    out = np.empty(box.n_sites, dtype=int)
    for k in range(box.n_sites):
        out[k] = box.site_index(box.wrap(coords[k] + step))
    return out


def build_fiber_space(box: LatticeBox, params: GeneratorParams,
                      kernel: GainKernel, fld: DisorderField) -> FiberSpace:
    """Assemble T0, V, Ldiss and G0 on the periodic box and verify the
    structural identities (annihilation of delta_0 (x) 1, real symmetric
    Hamiltonian block)."""
    if box.boundary is not Boundary.PERIODIC:
        raise ValueError("fiber space requires a periodic box")
    if fld.box != box:
        raise BoxMismatch("disorder field lives on a different box")
    # effective kernel support (presets are often much narrower than the
    # truncation block)
    nz = np.abs(kernel.values) > 1e-14 * max(float(np.max(np.abs(kernel.values))),
                                             1e-300)
    if nz.any():
        offs_all = kernel.offsets
        touched = np.nonzero(nz.any(axis=1) | nz.any(axis=0))[0]
        eff_radius = int(np.max(np.abs(offs_all[touched])))
    else:
        eff_radius = 1
    if box.L < eff_radius:
        raise ValueError(
            f"box radius {box.L} < effective kernel radius {eff_radius}")
    d = box.d
    n = box.n_sites
    dim = n * n  # (xi, a)
    coords = box.site_coords()

    dirs = []
    for i in range(d):
        for s in (1, -1):
            e = np.zeros(d, dtype=int)
            e[i] = s
            dirs.append(e)

    nbr = {tuple(e): _neighbor_index(box, e) for e in dirs}
    all_a = np.arange(n)

    # T0
    rows, cols, data = [], [], []
    for e in dirs:
        xi_p = nbr[tuple(e)]  # xi -> xi + e
        a_p = nbr[tuple(e)]
        for xi in range(n):
            base = xi * n
            tgt = xi_p[xi] * n
            rows.extend(range(base, base + n))
            cols.extend(tgt + all_a)
            data.extend([1.0] * n)
            rows.extend(range(base, base + n))
            cols.extend(tgt + a_p[all_a])
            data.extend([-1.0] * n)
    T0 = sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))

    # V: omega(xi - a) - omega(-a)
    grid = fld.grid()
    idx_minus = _neighbor_index(box, np.zeros(d, dtype=int))  # identity
    om = fld.values
    vd = np.empty(dim)
    neg_a = np.array([box.site_index(box.wrap(-coords[a])) for a in range(n)])
    for xi in range(n):
        xi_minus_a = np.array([box.site_index(box.wrap(coords[xi] - coords[a]))
                               for a in range(n)])
        vd[xi * n:(xi + 1) * n] = om[xi_minus_a] - om[neg_a]
    del grid, idx_minus

    # Ldiss
    rows, cols, data = [], [], []
    offs = kernel.offsets
    vals = kernel.values
    scale_ref = max(float(np.max(np.abs(vals))), 1e-300)
    in_box = np.all(np.abs(offs) <= box.L, axis=1)
    blk_site = np.array([box.site_index(o) if ok else -1
                         for o, ok in zip(offs, in_box)])
    # gain: r(xi, eta) moves xi -> eta and shifts the translate by (eta-xi)/2
    for a_i, xi in enumerate(offs):
        for b_i, eta in enumerate(offs):
            r = vals[a_i, b_i]
            if abs(r) <= 1e-14 * scale_ref:
                continue
            if not (in_box[a_i] and in_box[b_i]):
                continue  # unreachable when L >= effective radius
            diff = eta - xi
            if np.any(diff % 2 != 0):
                raise KernelConstraintViolated(
                    f"gain entry r({xi.tolist()},{eta.tolist()}) couples "
                    "fibers of odd separation")
            shift_map = nbr.get(tuple(diff // 2))
            if shift_map is None:
                shift_map = _neighbor_index(box, diff // 2)
                nbr[tuple(diff // 2)] = shift_map
            base = blk_site[a_i] * n
            tgt = blk_site[b_i] * n
            rows.extend(range(base, base + n))
            cols.extend(tgt + shift_map[all_a])
            data.extend([r] * n)
    # loss: -r(0, zeta) at xi -> xi + zeta (wrapped), translate shifted zeta/2
    diss_diagonal = True
    for zeta in offs:
        r0 = kernel.r0(zeta)
        if abs(r0) <= 1e-14 * scale_ref:
            continue
        if np.any(np.asarray(zeta) % 2 != 0):
            raise KernelConstraintViolated(
                f"loss entry r(0,{zeta.tolist()}) has odd offset")
        if np.any(zeta != 0):
            diss_diagonal = False
        xi_map = nbr.get(tuple(zeta))
        if xi_map is None:
            xi_map = _neighbor_index(box, zeta)
            nbr[tuple(zeta)] = xi_map
        a_map = nbr.get(tuple(zeta // 2))
        if a_map is None:
            a_map = _neighbor_index(box, zeta // 2)
            nbr[tuple(zeta // 2)] = a_map
        for xi in range(n):
            base = xi * n
            tgt = xi_map[xi] * n
            rows.extend(range(base, base + n))
            cols.extend(tgt + a_map[all_a])
            data.extend([-r0] * n)
    # gain off-diagonality
    off_gain = np.any([np.any(offs[a_i] != offs[b_i])
                       and abs(vals[a_i, b_i]) > 1e-14 * scale_ref
                       for a_i in range(len(offs)) for b_i in range(len(offs))])
    diss_diagonal = diss_diagonal and not off_gain
    Ldiss = sp.csr_matrix((np.asarray(data, dtype=np.complex128),
                           (rows, cols)), shape=(dim, dim))

    A0 = sp.csr_matrix(params.u * T0 + params.lam * sp.diags(vd))
    G0 = sp.csr_matrix(1j * A0 - params.g * Ldiss)

    e0 = np.zeros(dim, dtype=np.complex128)
    e0[box.site_index(np.zeros(d, dtype=int)) * n + all_a] = 1.0
    e1 = np.zeros(d, dtype=int)
    e1[0] = 1
    phi = np.zeros(dim, dtype=np.complex128)
    phi[box.site_index(e1) * n + all_a] = 1.0
    phi[box.site_index(-e1) * n + all_a] = -1.0

    fs = FiberSpace(box=box, params=params, kernel=kernel, field=fld, T0=T0,
                    Vdiag=vd, Ldiss=Ldiss, A0=A0, G0=G0, phi=phi, e0=e0,
                    n_a=n, diss_diagonal=bool(diss_diagonal))

    opscale = max(1.0, float(np.max(np.abs(G0.data))) if G0.nnz else 1.0)
    if np.max(np.abs(G0 @ e0)) > _ZERO_TOL * opscale * 10:
        raise KernelConstraintViolated(
            "G0 does not annihilate delta_0 (x) 1 (kernel balance defect)")
    if np.max(np.abs(G0.conj().T @ e0)) > _ZERO_TOL * opscale * 10:
        raise KernelConstraintViolated(
            "adjoint of G0 does not annihilate delta_0 (x) 1")
    asym = sp.csr_matrix(A0 - A0.T)
    if asym.nnz and np.max(np.abs(asym.data)) > _ZERO_TOL * max(1.0, abs(params.u) + params.lam):
        raise AssertionError("A0 is not symmetric")
    if A0.nnz and np.max(np.abs(A0.data.imag)) > _ZERO_TOL:
        raise AssertionError("A0 is not real")
    return fs


# ---------------------------------------------------------------------------
# projector onto the kernel of the zero-fiber coupling


class _PiProjector:
    """Orthogonal projector (within {f : f(0,.) = 0}) onto ker Q0 T0 Q1.

    The coupling map S reads only the |xi| = 1 fibers:
       [S f](a) = sum_{|e|=1} (f(e, a) - f(e, a + e)),
    so the projector acts as the identity on every other nonzero fiber,
    annihilates the zero fiber, and projects the |xi| = 1 block onto the
    null space of a small dense matrix.
    """

    def __init__(self, fs: FiberSpace):
        box, n = fs.box, fs.n_a
        d = box.d
        self.n = n
        self.zero_rows = box.site_index(np.zeros(d, dtype=int)) * n + np.arange(n)
        dirs = []
        for i in range(d):
            for s in (1, -1):
                e = np.zeros(d, dtype=int)
                e[i] = s
                dirs.append(e)
        cols = []
        S = np.zeros((n, 2 * d * n))
        for k, e in enumerate(dirs):
            sl = np.arange(k * n, (k + 1) * n)
            cols.append(box.site_index(box.wrap(e)) * n + np.arange(n))
            # +1 at row a for column (e, a); -1 at row wrap(a - e)
            back = _neighbor_index(box, -e)
            S[np.arange(n), sl] += 1.0
            S[back, sl] -= 1.0
        self.cols = np.concatenate(cols)
        u, s, vt = np.linalg.svd(S, full_matrices=True)
        smax = s[0] if len(s) else 1.0
        rank = int(np.sum(s > 1e-10 * max(smax, 1.0)))
        self.null_basis = vt[rank:].T  # (2dn, 2dn - rank), real orthonormal
        self.rank = rank

    def apply(self, v: np.ndarray) -> np.ndarray:
        w = v.copy()
        w[self.zero_rows] = 0.0
        blk = w[self.cols]
        w[self.cols] = self.null_basis @ (self.null_basis.T @ blk)
        return w


def _richardson(etas: np.ndarray, values: np.ndarray) -> complex:
    """Polynomial extrapolation to eta = 0 through the last three points."""
    e = np.asarray(etas, dtype=float)[-3:]
    v = np.asarray(values)[-3:]
    coef = np.polyfit(e, v, len(e) - 1)
    return complex(np.polyval(coef, 0.0))


def resolvent_diffusion(fs: FiberSpace, eta_list) -> DiffusionEstimate:
    """Diffusion constant from resolvent solves, extrapolated to eta -> 0.

    Solves (eta + G0) x = phi over the eta list (spanning at least two
    decades), Richardson-extrapolates, and independently evaluates the
    projected formula 2 u^2 <phi, (Pi G0 Pi)^{-1} phi>.  The two routes
    must agree; their difference enters the reported uncertainty.
    """
    etas = np.asarray(sorted(eta_list, reverse=True), dtype=float)
    if len(etas) < 3:
        raise ValueError("need at least 3 eta values")
    if etas[-1] <= 0:
        raise ValueError("eta values must be positive")
    if etas[0] / etas[-1] < 99:
        raise ValueError("eta list should span at least two decades")
    u = fs.params.u
    dim = fs.dim
    values = []
    if dim <= 2600:
        # dense solves: the (xi, a) coupling graph has 4d-lattice structure
        # whose sparse factors fill in badly
        Gd = fs.G0.toarray()
        for eta in etas:
            x = np.linalg.solve(Gd + eta * np.eye(dim), fs.phi)
            values.append(2.0 * u * u * fs.inner(fs.phi, x))
    else:
        eye = sp.identity(dim, format="csc", dtype=np.complex128)
        for eta in etas:
            lu = spla.splu(sp.csc_matrix(fs.G0 + eta * eye))
            x = lu.solve(fs.phi)
            values.append(2.0 * u * u * fs.inner(fs.phi, x))
    values = np.asarray(values)
    d_eta = _richardson(etas, values)

    diffs = np.abs(np.diff(values))
    stabilizing = bool(len(diffs) < 3
                       or (diffs[-1] <= diffs[-2] * (1 + 1e-9)
                           and diffs[-2] <= diffs[-3] * (1 + 1e-9)))

    # projected route
    pi = _PiProjector(fs)
    phi = fs.phi
    if np.max(np.abs(phi - pi.apply(phi))) > 1e-10 * np.max(np.abs(phi)):
        raise AssertionError("phi is not in the range of Pi")

    cg = fs.params.g * fs.kernel.certified.get("gap", 0.0)
    re_low = _re_lower_bound(fs, pi)
    if cg > 0 and re_low < 0.5 * cg:
        raise IllConditioned(
            f"Re(Pi G0 Pi) lower bound {re_low:.3e} < 0.5*c*g = {0.5 * cg:.3e}")

    def m_apply(v):
        pv = pi.apply(v)
        return pi.apply(fs.G0 @ pv) + (v - pv)

    if dim <= 2600:
        M = np.zeros((dim, dim), dtype=np.complex128)
        basis = np.eye(dim, dtype=np.complex128)
        for k in range(dim):
            M[:, k] = m_apply(basis[:, k])
        y = np.linalg.solve(M, phi)
    else:
        op = spla.LinearOperator((dim, dim), matvec=m_apply, dtype=np.complex128)
        y, info = spla.gmres(op, phi, rtol=1e-12, atol=0.0, restart=250,
                             maxiter=40)
        if info != 0:
            raise SingularLindbladian(f"projected solve did not converge ({info})")
    d_proj = 2.0 * u * u * fs.inner(phi, y)

    agree = abs(d_eta - d_proj)
    tol_agree = 1e-6 * max(1.0, abs(d_proj))
    extras = {
        "eta_values": [float(e) for e in etas],
        "resolvent_values_re": [float(v.real) for v in values],
        "resolvent_values_im": [float(v.imag) for v in values],
        "eta_extrapolated": complex(d_eta),
        "projected_value": complex(d_proj),
        "routes_difference": float(agree),
        "routes_agree": bool(agree <= max(tol_agree, 50 * abs(values[-1] - d_eta))),
        "stabilizing": stabilizing,
        "re_lower_bound": float(re_low),
        "imag_part": float(abs(d_proj.imag)),
    }
    d = fs.box.d
    dm = np.eye(d) * d_proj.real
    err = np.eye(d) * max(agree, abs(d_proj.imag))
    return DiffusionEstimate(d_matrix=dm, stderr=err, method="resolvent",
                             params={"u": u, "lambda": fs.params.lam,
                                     "g": fs.params.g, "L": fs.box.L,
                                     "d": d, "seed": fs.field.seed},
                             extras=extras)


def _re_lower_bound(fs: FiberSpace, pi: _PiProjector) -> float:
    """Lower bound (exact where feasible) of Re(Pi G0 Pi) on ran Pi."""
    B = sp.csr_matrix((fs.G0 + fs.G0.conj().T) / 2.0)  # = g * sym(-Ldiss) >= 0
    if fs.diss_diagonal:
        # B is diagonal: on ran Pi (zero fiber annihilated) the quadratic
        # form is bounded below by the smallest diagonal off the zero fiber
        diag = np.real(B.diagonal())
        mask = np.ones(fs.dim, dtype=bool)
        mask[pi.zero_rows] = False
        return float(np.min(diag[mask]))
    dim = fs.dim
    beta = 2.0 * (abs(fs.params.g) + 1.0)

    def op(v):
        pv = pi.apply(v)
        return pi.apply(B @ pv) + beta * (v - pv)

    if dim <= 2600:
        M = np.zeros((dim, dim), dtype=np.complex128)
        basis = np.eye(dim, dtype=np.complex128)
        for k in range(dim):
            M[:, k] = op(basis[:, k])
        ev = np.linalg.eigvalsh((M + M.conj().T) / 2.0)
        return float(ev[0])
    lin = spla.LinearOperator((dim, dim), matvec=op, dtype=np.complex128)
    ev = spla.eigsh(lin, k=1, which="SA", maxiter=5000,
                    return_eigenvectors=False)
    return float(ev[0])


def operator_norms(fs: FiberSpace) -> dict:
    """Largest singular values of A0 and G0 (for the transport bounds).

    A fixed start vector keeps the iterative solves bit-deterministic."""
    v0 = np.ones(fs.dim) / np.sqrt(fs.dim)
    na = spla.svds(sp.csc_matrix(fs.A0, dtype=np.complex128), k=1, v0=v0,
                   return_singular_vectors=False)[0]
    ng = spla.svds(sp.csc_matrix(fs.G0), k=1, v0=v0,
                   return_singular_vectors=False)[0]
    return {"A0": float(na), "G0": float(ng)}


# ---------------------------------------------------------------------------
# closed form without disorder


def closed_form_ballistic(kernel: GainKernel, u: float, g: float,
                          xi_radius: int | None = None) -> DiffusionEstimate:
    """Exact drift-free diffusion constant D = 2 u^2 <phi, (-g L)^{-1} phi>.

    Without disorder the Hamiltonian block of the fiber generator vanishes
    and the solve reduces to the relative-coordinate fiber alone (zero
    fiber removed).  The 1/g law is exact: D * g is independent of g.
    """
    if g <= 0:
        raise ValueError("g must be > 0")
    d = kernel.d
    rad = xi_radius or max(3 * kernel.radius, 12)

    def solve_at(radius):
        offs = block_offsets(radius, d)
        G, L = fiber_matrices(kernel, radius)
        Lgen = G - L
        nonzero = ~np.all(offs == 0, axis=1)
        A = -g * Lgen[np.ix_(nonzero, nonzero)]
        e1 = np.zeros(d, dtype=int)
        e1[0] = 1
        b = np.zeros(int(np.sum(nonzero)), dtype=np.complex128)
        sub = offs[nonzero]
        b[np.all(sub == e1, axis=1)] = 1.0
        b[np.all(sub == -e1, axis=1)] = -1.0
        x = np.linalg.solve(A, b)
        res = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
        return complex(np.vdot(b, x)), res

    val, res = solve_at(rad)
    if res > 1e-8:
        raise SingularLindbladian(f"dissipator solve residual {res:.3e}")
    val2, _ = solve_at(rad + 4)
    unc = abs(val2 - val)
    D = 2.0 * u * u * val
    if abs(D.imag) > 1e-10 * max(1.0, abs(D.real)):
        raise SingularLindbladian(f"closed-form D has imaginary part {D.imag:.3e}")
    c = kernel.certified.get("gap")
    extras = {"residual": res, "xi_radius": rad,
              "radius_uncertainty": float(2 * u * u * unc)}
    if c:
        extras["upper_bound_Dg"] = 4.0 * u * u / c
        extras["upper_bound_ok"] = bool(D.real * g <= 4.0 * u * u / c * (1 + 1e-10))
    dm = np.eye(d) * D.real
    err = np.eye(d) * max(res, float(2 * u * u * unc))
    return DiffusionEstimate(d_matrix=dm, stderr=err, method="closed_form",
                             params={"u": u, "g": g, "lambda": 0.0, "d": d},
                             extras=extras)
