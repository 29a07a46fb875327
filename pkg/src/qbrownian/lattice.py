"""Density matrices of a lattice particle in sum/difference coordinates.

A mixed state of a particle on the box [-L, L]^d is stored as the matrix
``rho[x, y] = <x|rho|y>`` over lexicographically ordered sites.  All
physics-facing accessors use the center/relative coordinates

    X = x + y,   xi = x - y,

in which the admissibility constraint ``X +- xi in 2Z^d`` is automatic:
inadmissible pairs simply do not correspond to any (x, y) entry.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BoxMismatch, NonRealMoment, NonRealTrace

TRACE_IMAG_TOL = 1e-12
MOMENT_IMAG_TOL = 1e-10


class Boundary(str, Enum):
    TRUNCATED = "truncated"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class LatticeBox:
    """Finite box [-L, L]^d with truncated or periodic boundary.

    In truncated mode any amplitude whose x or y coordinate leaves the box
    is defined to be zero; in periodic mode coordinates wrap mod (2L+1).
    """

    d: int
    L: int
    boundary: Boundary = Boundary.TRUNCATED

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.L < 1:
            raise ValueError(f"box radius must be >= 1, got {self.L}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def n_side(self) -> int:
        return 2 * self.L + 1

    @property
    def n_sites(self) -> int:
        return self.n_side**self.d

    def site_coords(self) -> np.ndarray:
        """All sites as an (n_sites, d) int array, lexicographic order."""
        axis = np.arange(-self.L, self.L + 1)
        if self.d == 1:
            return axis[:, None].copy()
        a, b = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([a.ravel(), b.ravel()], axis=1)

    def site_index(self, coord) -> int:
        """Ravel a coordinate vector into the site index (no wrapping)."""
        c = np.asarray(coord, dtype=int).reshape(self.d)
        if np.any(np.abs(c) > self.L):
            raise IndexError(f"site {c.tolist()} outside box of radius {self.L}")
        idx = 0
        for i in range(self.d):
            idx = idx * self.n_side + (int(c[i]) + self.L)
        return idx

    def wrap(self, coord) -> np.ndarray:
        """Map a coordinate vector into the box by periodic wrapping."""
        c = np.asarray(coord, dtype=int)
        return (c + self.L) % self.n_side - self.L

    def contains(self, coord) -> bool:
        c = np.asarray(coord, dtype=int)
        return bool(np.all(np.abs(c) <= self.L))


@dataclass
class DensityState:
    """Density matrix on a LatticeBox.

    ``mat[i, j] = <x_i|rho|x_j>`` with sites ordered as in
    ``box.site_coords()``.  Treated as an immutable value: operations
    return new states.
    """

    box: LatticeBox
    mat: np.ndarray

    def __post_init__(self):
        n = self.box.n_sites
        if self.mat.shape != (n, n):
            raise ValueError(f"matrix shape {self.mat.shape} != ({n}, {n})")
        if not np.iscomplexobj(self.mat):
            self.mat = self.mat.astype(np.complex128)

    def entry(self, X, xi) -> complex:
        """Amplitude rho(X, xi); exactly 0 for inadmissible or out-of-box pairs."""
        X = np.asarray(X, dtype=int).reshape(self.box.d)
        xi = np.asarray(xi, dtype=int).reshape(self.box.d)
        if np.any((X + xi) % 2 != 0):
            return 0.0 + 0.0j
        x = (X + xi) // 2
        y = (X - xi) // 2
        if self.box.boundary is Boundary.PERIODIC:
            x, y = self.box.wrap(x), self.box.wrap(y)
        elif not (self.box.contains(x) and self.box.contains(y)):
            return 0.0 + 0.0j
        return complex(self.mat[self.box.site_index(x), self.box.site_index(y)])

    def hermiticity_defect(self) -> float:
        """Max-abs deviation from rho(X, xi) = conj(rho(X, -xi))."""
        return float(np.max(np.abs(self.mat - self.mat.conj().T)))

    def copy(self) -> "DensityState":
        return DensityState(self.box, self.mat.copy())


def new_point_state(box: LatticeBox) -> DensityState:
    """The pure state fully concentrated at the origin, rho = |0><0|."""
    mat = np.zeros((box.n_sites, box.n_sites), dtype=np.complex128)
    i0 = box.site_index(np.zeros(box.d, dtype=int))
    mat[i0, i0] = 1.0
    return DensityState(box, mat)


def state_from_wavefunction(box: LatticeBox, psi: np.ndarray) -> DensityState:
    """Pure state |psi><psi| from a site-ordered wavefunction."""
    psi = np.asarray(psi, dtype=np.complex128).reshape(box.n_sites)
    return DensityState(box, np.outer(psi, psi.conj()))


def trace(state: DensityState) -> float:
    """Sum of rho(X, 0) over X.  Errors if the imaginary residue is large."""
    t = complex(np.trace(state.mat))
    if abs(t.imag) > TRACE_IMAG_TOL * max(1.0, abs(t.real)):
        raise NonRealTrace(f"trace has imaginary part {t.imag:.3e}")
    return t.real


def position_moment(state: DensityState, i: int, j: int) -> float:
    """Second position moment sum_x x_i x_j <x|rho|x>.

    Evaluated in the X-form (1/4) sum_X X_i X_j rho(X, 0); on the diagonal
    X = 2x the two coincide identically.
    """
    d = state.box.d
    if not (0 <= i < d and 0 <= j < d):
        raise IndexError(f"axes ({i}, {j}) out of range for d={d}")
    coords = state.box.site_coords()
    diag = np.diagonal(state.mat)
    m = complex(np.sum(coords[:, i] * coords[:, j] * diag))
    if abs(m.imag) > MOMENT_IMAG_TOL * max(1.0, abs(m.real)):
        raise NonRealMoment(f"moment ({i},{j}) has imaginary part {m.imag:.3e}")
    return m.real


def fiber_values(state: DensityState, X) -> tuple[np.ndarray, np.ndarray]:
    """All stored amplitudes over the fiber X: returns (xis, values).

    xis has shape (k, d).  Only pairs with both x and y inside the box
    appear (truncated convention).
    """
    box = state.box
    X = np.asarray(X, dtype=int).reshape(box.d)
    coords = box.site_coords()
    # x runs over the box; y = X - x must also lie inside.
    y = X[None, :] - coords
    ok = np.all(np.abs(y) <= box.L, axis=1)
    xs = np.nonzero(ok)[0]
    if xs.size == 0:
        return np.zeros((0, box.d), dtype=int), np.zeros(0, dtype=np.complex128)
    ys = np.array([box.site_index(y[k]) for k in xs])
    vals = state.mat[xs, ys]
    xis = 2 * coords[xs] - X[None, :]
    return xis, vals


def wigner(state: DensityState, X, n_q: int) -> np.ndarray:
    """Momentum-space transform of the fiber over X.

    Returns rho^W(X, p) = sum_xi exp(i p.xi) rho(X, xi) on the uniform
    n_q-point grid per axis of [0, 2pi)^d.  The result is periodic or
    anti-periodic under p -> p + pi depending on the parity of X.
    """
    box = state.box
    xis, vals = fiber_values(state, X)
    p = 2.0 * np.pi * np.arange(n_q) / n_q
    if box.d == 1:
        out = np.zeros(n_q, dtype=np.complex128)
        for xi, v in zip(xis[:, 0], vals):
            out += v * np.exp(1j * p * xi)
        return out
    out = np.zeros((n_q, n_q), dtype=np.complex128)
    p1 = p[:, None]
    p2 = p[None, :]
    for (a, b), v in zip(xis, vals):
        out += v * np.exp(1j * (p1 * a + p2 * b))
    return out


def weighted_norm(state: DensityState, m: float) -> float:
    """sup over X of exp(m |X|_1) times the l2 norm of the fiber over X.

    |X| is the l1 lattice norm: one hop changes it by exactly one unit.
    """
    if m < 0:
        raise ValueError("weight exponent m must be >= 0")
    box = state.box
    coords = box.site_coords()
    n = box.n_sites
    # key(X) ravels X + 2L per axis with base 4L+1
    base = 4 * box.L + 1
    shifted = coords + box.L  # in [0, 2L]
    key1 = np.zeros(n, dtype=np.int64)
    for i in range(box.d):
        key1 = key1 * base + shifted[:, i]
    # keys add because the per-axis shifted coordinates add without carry
    keys = key1[:, None] + key1[None, :]
    absX = np.abs(coords[:, None, :] + coords[None, :, :]).sum(axis=2)
    w2 = np.bincount(keys.ravel(), weights=(np.abs(state.mat) ** 2).ravel(),
                     minlength=base**box.d)
    aX = np.zeros(base**box.d)
    aX[keys.ravel()] = absX.ravel()
    mask = w2 > 0
    return float(np.max(np.exp(m * aX[mask]) * np.sqrt(w2[mask]), initial=0.0))


def check_same_box(*objs) -> LatticeBox:
    boxes = [o.box for o in objs]
    for b in boxes[1:]:
        if b != boxes[0]:
            raise BoxMismatch(f"boxes differ: {boxes[0]} vs {b}")
    return boxes[0]


def state_to_csv(state: DensityState, fh) -> None:
    """Dump all admissible amplitudes as CSV.

    Column order: X_1..X_d, xi_1..xi_d, re, im.  Rows are sorted
    lexicographically by (X, xi).
    """
    box = state.box
    coords = box.site_coords()
    rows = []
    for ix in range(box.n_sites):
        for iy in range(box.n_sites):
            X = coords[ix] + coords[iy]
            xi = coords[ix] - coords[iy]
            v = complex(state.mat[ix, iy])
            rows.append((tuple(int(c) for c in X),
                         tuple(int(c) for c in xi), v.real, v.imag))
    rows.sort(key=lambda r: (r[0], r[1]))
    header = [f"X_{i+1}" for i in range(box.d)] + [f"xi_{i+1}" for i in range(box.d)]
    fh.write(",".join(header + ["re", "im"]) + "\n")
    for X, xi, re, im in rows:
        fields = [str(c) for c in X] + [str(c) for c in xi] + [repr(re), repr(im)]
        fh.write(",".join(fields) + "\n")
