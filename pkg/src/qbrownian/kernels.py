"""Gain kernels of the momentum-randomizing bath, with certification.

A kernel r(xi, eta) on Z^d x Z^d is the Fourier transform of a positive
measure mu on the torus T^d x T^d (normalized Haar measure):

    r(xi, eta) = sum_atoms  w * exp(i xi.p - i eta.q).

`validate` certifies the structural requirements the transport theory
rests on:

  1. parity        r(xi, eta) = 0 unless xi + eta in 2Z^d
                   (equivalent to invariance of mu under joint shifts
                   (p, q) -> (p + pi n, q + pi n));
  2. positivity    all measure weights >= 0;
  3. balance       r(xi, 0) = r(0, -xi): row and column exit rates of
                   the momentum jump process coincide;
  4. gap           spectral gap c > 0 of the symmetrized jump generator
                   (exponentially fast momentum mixing);
  5. boundedness   finite maximal exit rate M and fiber operator norm;

plus invariance under coordinate inversions and permutations.
"""

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (GridTooCoarse, NegativeWeight, TruncationTooLossy,
                     ZeroKernel)

DEFAULT_RADIUS = 6
DEFAULT_GRID = 64
PARITY_ZERO_TOL = 1e-10


def torus_grid(n_q: int) -> np.ndarray:
    """Uniform grid 2*pi*j/n_q, j = 0..n_q-1."""
    return 2.0 * np.pi * np.arange(n_q) / n_q


def block_offsets(radius: int, d: int) -> np.ndarray:
    """Lexicographic enumeration of [-radius, radius]^d, shape (M^d, d)."""
    axis = np.arange(-radius, radius + 1)
    if d == 1:
        return axis[:, None].copy()
    a, b = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


def band_energy(p: np.ndarray, u: float, d: int) -> np.ndarray:
    """Nearest-neighbour band energy 2u(d - sum_i cos p_i); p has shape (..., d)."""
    return 2.0 * u * (d - np.cos(p).sum(axis=-1))


# ---------------------------------------------------------------------------
# measure specifications


@dataclass
class MeasureSpec:
    """Positive measure on T^d x T^d, as atoms and/or a smooth density.

    Atom arrays: p, q of shape (n, d), weights w of shape (n,).  A density
    callable(P, Q) -> weights (P, Q of shape (..., d)) marks the measure as
    resolvable on any grid; atoms-only specs are tied to their native grid.
    """

    d: int
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    symmetrize_pi: bool = False
    symmetrize_lattice: bool = False
    density: Optional[Callable] = None
    grid_n: int = DEFAULT_GRID
    name: str = ""

    def __post_init__(self):
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float)).reshape(-1, self.d)
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float)).reshape(-1, self.d)
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        if not (len(self.p) == len(self.q) == len(self.w)):
            raise ValueError("atom arrays p, q, w must have equal length")

    @property
    def n_atoms(self) -> int:
        return len(self.w)


def atoms_from_density(density, d: int, n_q: int) -> tuple:
    """Quadrature atoms of a density on the n_q^d x n_q^d product grid."""
    pts = torus_grid(n_q)
    if d == 1:
        P1 = pts[:, None]
    else:
        a, b = np.meshgrid(pts, pts, indexing="ij")
        P1 = np.stack([a.ravel(), b.ravel()], axis=1)
    N = P1.shape[0]
    P = np.repeat(P1, N, axis=0)
    Q = np.tile(P1, (N, 1))
    W = np.asarray(density(P, Q), dtype=float) / (N * N)
    return P, Q, W


def expanded_atoms(spec: MeasureSpec) -> tuple:
    """Atom list with the requested symmetrizations applied and merged.

    pi-closure replaces each atom by its orbit under (p, q) ->
    (p + pi*n, q + pi*n), n in {0,1}^d, with the weight split equally;
    lattice closure does the same for coordinate inversions and
    permutations.  Duplicate atoms are merged by summing weights.
    """
    if spec.density is not None and spec.n_atoms == 0:
        P, Q, W = atoms_from_density(spec.density, spec.d, spec.grid_n)
    else:
        P, Q, W = spec.p.copy(), spec.q.copy(), spec.w.copy()
    d = spec.d
    if spec.symmetrize_lattice:
        ps, qs, ws = [], [], []
        perms = list(itertools.permutations(range(d)))
        signs = list(itertools.product((1.0, -1.0), repeat=d))
        for perm in perms:
            for s in signs:
                sv = np.asarray(s)
                ps.append(P[:, perm] * sv)
                qs.append(Q[:, perm] * sv)
                ws.append(W / (len(perms) * len(signs)))
        P, Q, W = np.vstack(ps), np.vstack(qs), np.concatenate(ws)
    if spec.symmetrize_pi:
        ps, qs, ws = [], [], []
        shifts = list(itertools.product((0.0, np.pi), repeat=d))
        for n in shifts:
            nv = np.asarray(n)
            ps.append(P + nv)
            qs.append(Q + nv)
            ws.append(W / len(shifts))
        P, Q, W = np.vstack(ps), np.vstack(qs), np.concatenate(ws)
    P = np.mod(P, 2.0 * np.pi)
    Q = np.mod(Q, 2.0 * np.pi)
    # merge coincident atoms (1e-9 rad resolution)
    key = np.round(np.hstack([P, Q]) / 1e-9).astype(np.int64)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    Wm = np.zeros(len(uniq))
    np.add.at(Wm, inv, W)
    Pm = np.zeros((len(uniq), d))
    Qm = np.zeros((len(uniq), d))
    Pm[inv] = P
    Qm[inv] = Q
    return Pm, Qm, Wm


def binned_mass(spec: MeasureSpec, n_q: int) -> np.ndarray:
    """Measure mass binned to the n_q^d x n_q^d grid, shape (N, N).

    Density-backed specs are re-evaluated on the requested grid; atomic
    specs are binned to nearest cells (exact when atoms sit on the grid).
    """
    d = spec.d
    N = n_q**d
    if spec.density is not None:
        P, Q, W = atoms_from_density(spec.density, d, n_q)
        return W.reshape(N, N)
    P, Q, W = expanded_atoms(spec)
    step = 2.0 * np.pi / n_q
    ip = np.round(P / step).astype(int) % n_q
    iq = np.round(Q / step).astype(int) % n_q
    if d == 1:
        rp, rq = ip[:, 0], iq[:, 0]
    else:
        rp = ip[:, 0] * n_q + ip[:, 1]
        rq = iq[:, 0] * n_q + iq[:, 1]
    mass = np.zeros((N, N))
    np.add.at(mass, (rp, rq), W)
    return mass


# ---------------------------------------------------------------------------
# the lattice kernel


@dataclass
class GainKernel:
    """Truncated lattice kernel r(xi, eta) with its certification record.

    values[a, b] = r(offsets[a], offsets[b]) over the block |.|_inf <= radius.
    ``scale`` is the cumulative divisor applied to the raw measure values
    (normalization); grid re-evaluations of the measure are divided by it.
    """

    d: int
    radius: int
    values: np.ndarray
    spec: Optional[MeasureSpec]
    discarded_mass: float = 0.0
    retained_mass: float = 0.0
    parity_residual: float = 0.0
    scale: float = 1.0
    certified: dict = field(default_factory=dict)

    @property
    def offsets(self) -> np.ndarray:
        return block_offsets(self.radius, self.d)

    def _idx(self, v) -> Optional[int]:
        v = np.asarray(v, dtype=int).reshape(self.d)
        if np.any(np.abs(v) > self.radius):
            return None
        M = 2 * self.radius + 1
        idx = 0
        for i in range(self.d):
            idx = idx * M + (int(v[i]) + self.radius)
        return idx

    def r(self, xi, eta) -> complex:
        a, b = self._idx(xi), self._idx(eta)
        if a is None or b is None:
            return 0.0 + 0.0j
        return complex(self.values[a, b])

    def r0(self, zeta) -> complex:
        """Loss-row value r(0, zeta)."""
        return self.r(np.zeros(self.d, dtype=int), zeta)

    def loss_coeff(self, m) -> complex:
        """r(0, 2m): weight of the diagonal shift by m in the loss term."""
        return self.r0(2 * np.asarray(m, dtype=int))

    def gain_shift_values(self, m) -> np.ndarray:
        """Array over the xi block of r(xi, xi + 2m) (0 where out of block)."""
        offs = self.offsets
        out = np.zeros(len(offs), dtype=np.complex128)
        for a, xi in enumerate(offs):
            b = self._idx(xi + 2 * np.asarray(m, dtype=int))
            if b is not None:
                out[a] = self.values[a, b]
        return out

    def active_shifts(self, tol: float = 1e-14):
        """Diagonal shifts m with a nonvanishing gain or loss coefficient."""
        shifts = []
        for m in block_offsets(self.radius, self.d):
            gv = self.gain_shift_values(m)
            lc = self.loss_coeff(m)
            if np.max(np.abs(gv)) > tol or abs(lc) > tol:
                shifts.append((m, gv, lc))
        return shifts


def _r_block_from_atoms(P, Q, W, d: int, radius: int) -> np.ndarray:
    offs = block_offsets(radius, d)
    phase_p = np.exp(1j * (offs @ P.T))
    phase_q = np.exp(-1j * (offs @ Q.T))
    return (phase_p * W[None, :]) @ phase_q.T


def _r_block_from_density(spec: MeasureSpec, radius: int):
    """r on the extended block via FFT of the full-grid weights.

    Also returns the total |r| over the whole (aliased) n-grid window, used
    for the truncation report.
    """
    n = spec.grid_n
    d = spec.d
    if n < 4 * radius + 2:
        raise ValueError(f"grid_n={n} too small for radius {radius}")
    pts = torus_grid(n)
    grids = np.meshgrid(*([pts] * (2 * d)), indexing="ij")
    P = np.stack(grids[:d], axis=-1)
    Q = np.stack(grids[d:], axis=-1)
    w = np.asarray(spec.density(P, Q), dtype=float) / float(n ** (2 * d))
    t = w.astype(np.complex128)
    for ax in range(d):
        t = np.fft.ifft(t, axis=ax) * n
    for ax in range(d, 2 * d):
        t = np.fft.fft(t, axis=ax)
    idx = np.arange(-2 * radius, 2 * radius + 1) % n
    ext = t[np.ix_(*([idx] * (2 * d)))]
    M = 4 * radius + 1
    ext = ext.reshape(M**d, M**d)
    return ext, float(np.sum(np.abs(t)))


def build_kernel(spec: MeasureSpec, radius: int = DEFAULT_RADIUS, *,
                 strict: bool = True, lossy_tol: float = 0.1) -> GainKernel:
    """Evaluate the lattice kernel of a measure, truncated to |xi| <= radius.

    The discarded |r| mass outside the block is reported on the kernel and
    must stay below ``lossy_tol`` times the retained mass.  With
    ``strict=False`` negative weights are admitted (for validator fixtures).
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    d = spec.d
    if spec.density is not None and spec.n_atoms == 0:
        ext, total_abs = _r_block_from_density(spec, radius)
    else:
        P, Q, W = expanded_atoms(spec)
        if len(W) and min(W) < -1e-14 * max(1.0, float(np.max(np.abs(W)))):
            k = int(np.argmin(W))
            msg = (f"atom {k}: p={P[k].tolist()} q={Q[k].tolist()} w={W[k]:.3e}")
            if strict:
                raise NegativeWeight(msg)
        ext = _r_block_from_atoms(P, Q, W, d, 2 * radius)
        total_abs = float(np.sum(np.abs(ext)))

    ext_offs = block_offsets(2 * radius, d)
    inner = np.all(np.abs(ext_offs) <= radius, axis=1)
    vals = ext[np.ix_(inner, inner)].copy()
    retained = float(np.sum(np.abs(vals)))
    discarded = max(total_abs - retained, 0.0)
    if discarded > lossy_tol * retained and discarded > 1e-12:
        raise TruncationTooLossy(
            f"discarded |r| mass {discarded:.3e} exceeds "
            f"{lossy_tol:.0%} of retained {retained:.3e}")

    # parity cleanup: entries with xi + eta odd are analytically zero for
    # pi-shift-closed measures; zero them when the residual is roundoff-level
    offs = block_offsets(radius, d)
    s = offs[:, None, :] + offs[None, :, :]
    odd = np.any(s % 2 != 0, axis=2)
    scale_ref = max(float(np.max(np.abs(vals))), 1e-300)
    parity_residual = float(np.max(np.abs(vals[odd]))) if odd.any() else 0.0
    if parity_residual <= PARITY_ZERO_TOL * scale_ref:
        vals[odd] = 0.0

    return GainKernel(d=d, radius=radius, values=vals, spec=spec,
                      discarded_mass=discarded, retained_mass=retained,
                      parity_residual=parity_residual)


# ---------------------------------------------------------------------------
# fiber operators and normalization


def fiber_matrices(kernel: GainKernel, xi_radius: int) -> tuple:
    """Dense gain/loss matrices on the xi box [-xi_radius, xi_radius]^d.

    G[a, b] = r(xi_a, xi_b) (zero outside the kernel block); the loss part
    L[a, b] = r(0, xi_b - xi_a) reaches beyond the gain block.
    """
    offs = block_offsets(xi_radius, kernel.d)
    n = len(offs)
    G = np.zeros((n, n), dtype=np.complex128)
    L = np.zeros((n, n), dtype=np.complex128)
    R = kernel.radius
    in_blk = np.all(np.abs(offs) <= R, axis=1)
    blk_idx = np.array([kernel._idx(o) if ok else -1
                        for o, ok in zip(offs, in_blk)])
    for a in range(n):
        if in_blk[a]:
            ia = blk_idx[a]
            for b in range(n):
                if in_blk[b]:
                    G[a, b] = kernel.values[ia, blk_idx[b]]
        diff = offs - offs[a]
        ok = np.all(np.abs(diff) <= R, axis=1)
        for b in np.nonzero(ok)[0]:
            L[a, b] = kernel.r0(diff[b])
    return G, L


def fiber_opnorm(kernel: GainKernel) -> float:
    """Largest singular value of G - L from the R-block into the 2R-block.

    The loss term maps the block outward, so the rectangular estimate
    dominates the square one while staying below the true lattice norm.
    """
    d, R = kernel.d, kernel.radius
    rows = block_offsets(2 * R, d)
    cols = block_offsets(R, d)
    mat = np.zeros((len(rows), len(cols)), dtype=np.complex128)
    row_in = np.all(np.abs(rows) <= R, axis=1)
    for a, xi in enumerate(rows):
        for b, eta in enumerate(cols):
            g = kernel.r(xi, eta) if row_in[a] else 0.0
            diff = eta - xi
            l = kernel.r0(diff) if np.all(np.abs(diff) <= R) else 0.0
            mat[a, b] = g - l
    if not np.any(np.abs(mat) > 0):
        return 0.0
    return float(np.linalg.svd(mat, compute_uv=False)[0])


def normalize(kernel: GainKernel, g: float) -> tuple:
    """Rescale (r, g) -> (r/s, g*s) so the fiber dissipator has norm <= 1.

    The product g * L is unchanged as an operator.  Raises ZeroKernel for
    an identically-zero kernel.
    """
    if g <= 0:
        raise ValueError("coupling g must be > 0")
    s = fiber_opnorm(kernel)
    if s <= 0.0:
        raise ZeroKernel("cannot normalize the zero kernel")
    if abs(s - 1.0) <= 1e-10:
        kernel.certified.setdefault("opnorm", 1.0)
        return kernel, g
    cert = {k: v / s for k, v in kernel.certified.items()
            if k in ("gap", "gap_uncertainty", "jump_bound")}
    cert["opnorm"] = 1.0
    out = GainKernel(d=kernel.d, radius=kernel.radius, values=kernel.values / s,
                     spec=kernel.spec, discarded_mass=kernel.discarded_mass / s,
                     retained_mass=kernel.retained_mass / s,
                     parity_residual=kernel.parity_residual / s,
                     scale=kernel.scale * s, certified=cert)
    return out, g * s


# ---------------------------------------------------------------------------
# momentum-space certification


def _generator_from_mass(mass: np.ndarray) -> np.ndarray:
    """Jump generator on the grid: (Lf)_i = sum_j K_ij (f_j - f_i), K = mass*N."""
    N = mass.shape[0]
    K = mass * N
    return K - np.diag(K.sum(axis=1))


def _gap_from_mass(mass: np.ndarray) -> float:
    Lgen = _generator_from_mass(mass)
    S = -(Lgen + Lgen.T) / 2.0
    N = S.shape[0]
    # push the deflated constant direction out of the way
    shift = 2.0 * float(np.max(np.abs(S))) + 1.0
    P = np.eye(N) - np.ones((N, N)) / N
    E = np.linalg.eigvalsh(P @ S @ P + shift * np.ones((N, N)) / N)
    return float(max(E[0], 0.0))


def _atoms_aligned(spec: MeasureSpec, n_q: int) -> bool:
    P, Q, _ = expanded_atoms(spec)
    if len(P) == 0:
        return True
    j = np.concatenate([P.ravel(), Q.ravel()]) * n_q / (2 * np.pi)
    return bool(np.max(np.abs(j - np.round(j))) < 1e-9)


def spectral_gap(kernel: GainKernel, n_q: Optional[int] = None) -> float:
    """Certified gap c of the symmetrized momentum jump generator.

    Returns the smallest nonzero eigenvalue of -(L + L^T)/2 on the n_q^d
    grid, constants deflated: it certifies Re<f, -Lf> >= c ||f - mean f||^2
    on the grid (exact under the balance identity).  Density-backed
    measures must be stable under grid doubling (GridTooCoarse otherwise);
    atomic measures are represented exactly on any commensurate grid, and
    incommensurate grids are rejected.
    """
    n_q = n_q or kernel.spec.grid_n
    if n_q % 2 != 0 or n_q < 8:
        raise ValueError("n_q must be even and >= 8")
    g1 = _gap_from_mass(binned_mass(kernel.spec, n_q)) / kernel.scale
    if kernel.spec.density is not None:
        g2 = _gap_from_mass(binned_mass(kernel.spec, 2 * n_q)) / kernel.scale
    elif _atoms_aligned(kernel.spec, n_q):
        g2 = g1  # atoms sit on the grid: the discretization is exact
    else:
        raise GridTooCoarse(
            f"atoms are not commensurate with n_q={n_q}; certify on the "
            f"native grid (grid_n={kernel.spec.grid_n})")
    unc = abs(g2 - g1)
    if max(g1, g2) > 1e-12 and unc > 0.05 * max(g1, 1e-12):
        raise GridTooCoarse(
            f"gap {g1:.6g} at n_q={n_q} vs {g2:.6g} on the refined grid: "
            f"relative change {unc / max(g1, 1e-300):.2%} > 5%")
    kernel.certified["gap"] = g1
    kernel.certified["gap_uncertainty"] = unc
    kernel.certified["gap_grid"] = n_q
    return g1


def jump_rate_bound(kernel: GainKernel, n_q: Optional[int] = None) -> float:
    """Maximal exit rate M = max_p of the quadrature of r^(q, p) over q."""
    n_q = n_q or kernel.spec.grid_n
    if n_q % 2 != 0 or n_q < 8:
        raise ValueError("n_q must be even and >= 8")
    mass = binned_mass(kernel.spec, n_q) / kernel.scale
    N = mass.shape[0]
    col = mass.sum(axis=0) * N  # exit rates Lambda(p_j)
    M = float(np.max(col))
    kernel.certified["jump_bound"] = M
    kernel.certified["jump_bound_row"] = float(np.max(mass.sum(axis=1) * N))
    return M


# ---------------------------------------------------------------------------
# validation report


@dataclass
class ItemReport:
    key: str
    label: str
    passed: bool
    value: Optional[float] = None
    witness: Optional[str] = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"key": self.key, "label": self.label, "passed": self.passed,
                "value": self.value, "witness": self.witness,
                "detail": self.detail}


@dataclass
class ValidationReport:
    items: list
    kernel_info: dict

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def item(self, key: str) -> ItemReport:
        for i in self.items:
            if i.key == key:
                return i
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "kernel": self.kernel_info,
                "items": [i.to_dict() for i in self.items]}

    def summary(self) -> str:
        lines = []
        for i in self.items:
            status = "PASS" if i.passed else "FAIL"
            extra = f" value={i.value:.6g}" if i.value is not None else ""
            wit = f" witness={i.witness}" if (not i.passed and i.witness) else ""
            lines.append(f"[{status}] {i.key}: {i.label}{extra}{wit}")
        return "\n".join(lines)


def validate(kernel: GainKernel, n_q: Optional[int] = None) -> ValidationReport:
    """Check every structural requirement; failures are report entries."""
    d, R = kernel.d, kernel.radius
    offs = kernel.offsets
    vals = kernel.values
    scale_ref = max(float(np.max(np.abs(vals))), 1e-300)
    items = []

    # 1: parity (checked on the raw pre-cleanup residual)
    s = offs[:, None, :] + offs[None, :, :]
    odd = np.any(s % 2 != 0, axis=2)
    res = kernel.parity_residual
    post = float(np.max(np.abs(vals[odd]))) if odd.any() else 0.0
    res = max(res, post)
    wit = None
    if res > PARITY_ZERO_TOL * scale_ref and odd.any():
        masked = np.where(odd, np.abs(vals), -1.0)
        a, b = np.unravel_index(int(np.argmax(masked)), masked.shape)
        wit = f"(xi={offs[a].tolist()}, eta={offs[b].tolist()})"
    items.append(ItemReport(
        "parity", "r(xi,eta)=0 unless xi+eta in 2Z^d",
        res <= PARITY_ZERO_TOL * scale_ref, res, wit))

    # 2: positivity of the measure
    P, Q, W = expanded_atoms(kernel.spec)
    if len(W):
        wmin = float(np.min(W))
        ok = wmin >= -1e-14 * max(1.0, float(np.max(np.abs(W))))
        wit = None
        if not ok:
            k = int(np.argmin(W))
            wit = f"atom p={P[k].tolist()} q={Q[k].tolist()} w={W[k]:.3e}"
        items.append(ItemReport("positivity", "measure weights >= 0",
                                ok, wmin, wit))
    else:
        items.append(ItemReport("positivity", "measure weights >= 0",
                                True, 0.0))

    # 3: balance r(xi,0) = r(0,-xi)
    worst, wit = 0.0, None
    for a, xi in enumerate(offs):
        gap3 = abs(kernel.r(xi, np.zeros(d, int)) - kernel.r0(-xi))
        if gap3 > worst:
            worst, wit = gap3, f"xi={xi.tolist()}"
    ok = worst <= 1e-10 * scale_ref
    items.append(ItemReport("balance", "r(xi,0) - r(0,-xi) = 0",
                            ok, worst, None if ok else wit))

    # 4: spectral gap
    try:
        c = spectral_gap(kernel, n_q)
        unc = kernel.certified.get("gap_uncertainty", 0.0)
        items.append(ItemReport("gap", "momentum mixing gap c > 0",
                                c > 1e-10, c,
                                detail=f"uncertainty {unc:.3g}"))
    except GridTooCoarse as exc:
        items.append(ItemReport("gap", "momentum mixing gap c > 0", False,
                                detail=str(exc)))

    # 5: bounded jumping / bounded fiber operator
    M = jump_rate_bound(kernel, n_q)
    opn = fiber_opnorm(kernel)
    kernel.certified["opnorm"] = opn
    ok = np.isfinite(M) and np.isfinite(opn)
    items.append(ItemReport("bounded", "finite exit rate M and fiber norm",
                            ok, M, detail=f"opnorm={opn:.6g}"))

    # symmetry: coordinate inversions
    grid_shape = (2 * R + 1,) * (2 * d)
    v4 = vals.reshape(grid_shape)
    worst, wit = 0.0, None
    for i in range(d):
        flipped = np.flip(np.flip(v4, axis=i), axis=d + i)
        dev = float(np.max(np.abs(flipped - v4)))
        if dev > worst:
            worst, wit = dev, f"axis {i}"
    ok = worst <= 1e-12 * scale_ref
    items.append(ItemReport("inversion", "invariance under R_i", ok, worst,
                            None if ok else wit))

    # symmetry: coordinate permutations
    if d == 1:
        items.append(ItemReport("permutation", "invariance under T_sigma",
                                True, 0.0))
    else:
        swapped = np.transpose(v4, (1, 0, 3, 2))
        dev = float(np.max(np.abs(swapped - v4)))
        ok = dev <= 1e-12 * scale_ref
        items.append(ItemReport("permutation", "invariance under T_sigma",
                                ok, dev))

    info = {"name": kernel.spec.name, "d": d, "radius": R,
            "discarded_mass": kernel.discarded_mass,
            "retained_mass": kernel.retained_mass,
            "scale": kernel.scale, "certified": dict(kernel.certified)}
    return ValidationReport(items, info)


# ---------------------------------------------------------------------------
# bath kernel from a bosonic reservoir at infinite temperature


def boson_kernel_beta0(form_factor, dispersion, sigma: float, u: float,
                       n_q: int, d: int = 1,
                       prune: float = 1e-15) -> MeasureSpec:
    """Energy-shell kernel of a bosonic bath in the infinite-temperature limit.

    Grid atoms with weights

        F(p-q) * [phi_sigma(eps(p) - eps(q) - omega(p-q))
                  + phi_sigma(eps(p) - eps(q) + omega(p-q))] / N^2,

    where eps is the hopping band energy and phi_sigma a normalized Gaussian
    mollifier standing in for the exact energy-shell delta.  The weight
    function is jointly pi-shift invariant and symmetric under (p, q) swap;
    both closures are enforced exactly by orbit averaging.
    """
    if sigma <= 0:
        raise ValueError("mollifier width sigma must be > 0")
    pts = torus_grid(n_q)
    if d == 1:
        P1 = pts[:, None]
    else:
        a, b = np.meshgrid(pts, pts, indexing="ij")
        P1 = np.stack([a.ravel(), b.ravel()], axis=1)
    N = P1.shape[0]
    P = np.repeat(P1, N, axis=0)
    Q = np.tile(P1, (N, 1))
    s = P - Q
    de = band_energy(P, u, d) - band_energy(Q, u, d)
    om = np.asarray(dispersion(s), dtype=float)
    F = np.asarray(form_factor(s), dtype=float)
    if np.any(F < 0):
        raise ValueError("form factor must be nonnegative")

    def phi(z):
        return np.exp(-z**2 / (2 * sigma**2)) / (sigma * np.sqrt(2 * np.pi))

    W = (F * (phi(de - om) + phi(de + om)) / (N * N)).reshape(N, N)
    W = (W + W.T) / 2.0  # exact detailed balance at infinite temperature
    if n_q % 2 == 0:
        # exact pi-orbit averaging: pi is n_q/2 grid steps per axis
        Wg = W.reshape((n_q,) * (2 * d))
        acc = np.zeros_like(Wg)
        k = 0
        for n in itertools.product((0, n_q // 2), repeat=d):
            sh = tuple(n) + tuple(n)
            acc += np.roll(Wg, shift=sh, axis=tuple(range(2 * d)))
            k += 1
        W = (acc / k).reshape(N, N)
    Wf = W.reshape(-1)
    keep = Wf > prune * max(float(Wf.max()), 1e-300)
    return MeasureSpec(d=d, p=P[keep], q=Q[keep], w=Wf[keep],
                       grid_n=n_q, name="boson-beta0")


# ---------------------------------------------------------------------------
# presets and JSON interface


PRESET_NAMES = ("uniform", "cosine", "boson-beta0")


def _uniform_density(P, Q):
    return np.ones(P.shape[:-1])


def _cosine_density_1d(P, Q):
    return 1.0 + np.cos(P[..., 0] - Q[..., 0])


def _cosine_density_2d(P, Q):
    return (1.0 + 0.5 * np.cos(P[..., 0] - Q[..., 0])
            + 0.5 * np.cos(P[..., 1] - Q[..., 1]))


def _flat_one(s):
    return np.ones(s.shape[:-1])


def preset_spec(name: str, d: int = 1) -> MeasureSpec:
    """Named kernel presets (density-backed where the measure is smooth)."""
    empty = dict(p=np.zeros((0, d)), q=np.zeros((0, d)), w=np.zeros(0))
    if name == "uniform":
        return MeasureSpec(d=d, density=_uniform_density,
                           grid_n=64 if d == 1 else 32, name="uniform", **empty)
    if name == "cosine":
        dens = _cosine_density_1d if d == 1 else _cosine_density_2d
        return MeasureSpec(d=d, density=dens, grid_n=64 if d == 1 else 32,
                           name="cosine", **empty)
    if name == "boson-beta0":
        if d != 1:
            raise ValueError("boson-beta0 preset is 1-dimensional")
        return boson_kernel_beta0(_flat_one, _flat_one,
                                  sigma=0.5, u=1.0, n_q=48, d=1)
    raise KeyError(f"unknown preset {name!r}; have {PRESET_NAMES}")


def spec_to_json(spec: MeasureSpec) -> dict:
    """Atomic JSON form (density-backed specs are materialized on their grid)."""
    P, Q, W = expanded_atoms(spec)
    atoms = [{"p": p.tolist(), "q": q.tolist(), "w": float(w)}
             for p, q, w in zip(P, Q, W)]
    return {"atoms": atoms, "symmetrize_pi": False, "symmetrize_lattice": False,
            "d": spec.d, "grid_n": spec.grid_n, "name": spec.name}


def spec_from_json(doc: dict) -> MeasureSpec:
    atoms = doc.get("atoms", [])
    if atoms:
        P = np.array([a["p"] for a in atoms], dtype=float)
        Q = np.array([a["q"] for a in atoms], dtype=float)
        W = np.array([a["w"] for a in atoms], dtype=float)
        d = doc.get("d", P.shape[1])
    else:
        d = doc.get("d", 1)
        P = np.zeros((0, d))
        Q = np.zeros((0, d))
        W = np.zeros(0)
    grid_n = doc.get("grid_n") or _infer_grid(P, Q)
    return MeasureSpec(d=d, p=P, q=Q, w=W,
                       symmetrize_pi=bool(doc.get("symmetrize_pi", False)),
                       symmetrize_lattice=bool(doc.get("symmetrize_lattice", False)),
                       grid_n=grid_n, name=doc.get("name", ""))


def _infer_grid(P: np.ndarray, Q: np.ndarray) -> int:
    """Smallest even grid the atoms sit on, fallback DEFAULT_GRID."""
    if len(P) == 0:
        return DEFAULT_GRID
    pts = np.concatenate([P.ravel(), Q.ravel()])
    for n in range(8, 257, 2):
        j = pts * n / (2 * np.pi)
        if np.max(np.abs(j - np.round(j))) < 1e-9:
            return n
    return DEFAULT_GRID


def load_spec(path) -> MeasureSpec:
    with open(path) as fh:
        return spec_from_json(json.load(fh))


def save_spec(spec: MeasureSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_json(spec), fh)
