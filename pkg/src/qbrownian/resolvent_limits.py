"""Randomized verification of the resolvent limiting principle.

For a normal matrix A with Re A >= 0 and a matrix B with Re B >= c > 0,

    <phi, (lam A + B)^{-1} psi>  --->  <Pi phi, (Pi B Pi)^{-1} Pi psi>

as lam -> infinity, where Pi projects onto ker A (the limit is 0 when the
kernel is trivial).  This is the correctness oracle for the eta -> 0 and
g -> 0 limits taken by the fiber-space diffusion estimators: there the
roles are played by lam = 1/eta, A = the off-fiber coupling and B = the
dissipative block.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotAccretive, NotNormal

NORMALITY_TOL = 1e-10


@dataclass
class ResolventProblem:
    a: np.ndarray
    b: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    lam_list: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        self.lam_list = np.asarray(self.lam_list, dtype=float)
        if np.any(np.diff(self.lam_list) <= 0):
            raise ValueError("lam_list must be increasing")

    def accretivity(self) -> float:
        """min eigenvalue of Re B (must be > 0)."""
        return float(np.linalg.eigvalsh((self.b + self.b.conj().T) / 2)[0])

    def check(self) -> None:
        n = self.a.shape[0]
        scale = max(float(np.linalg.norm(self.a, 2)) ** 2, 1e-300)
        comm = self.a @ self.a.conj().T - self.a.conj().T @ self.a
        if np.linalg.norm(comm, 2) > NORMALITY_TOL * scale:
            raise NotNormal(f"||[A, A*]|| = {np.linalg.norm(comm, 2):.3e}")
        re_a = np.linalg.eigvalsh((self.a + self.a.conj().T) / 2)[0]
        if re_a < -1e-10 * max(1.0, np.sqrt(scale)):
            raise NotAccretive(f"Re A has eigenvalue {re_a:.3e} < 0")
        if self.accretivity() <= 0:
            raise NotAccretive("Re B is not strictly positive definite")
        if self.phi.shape != (n,) or self.psi.shape != (n,):
            raise ValueError("vector shapes do not match A")


@dataclass
class ResolventLimitResult:
    lam_list: np.ndarray
    values: np.ndarray
    reference: complex
    kernel_dim: int
    norm_bound_ok: bool
    max_norm_ratio: float


def kernel_projector_basis(a: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ker A by singular-value thresholding."""
    _, s, vt = np.linalg.svd(a)
    smax = s[0] if len(s) else 0.0
    mask = s <= rel_tol * max(smax, 1e-300)
    return vt[mask].conj().T  # columns span ker A


def limit_resolvent(prob: ResolventProblem) -> ResolventLimitResult:
    """Solve (lam A + B) x = psi along lam_list and compare the matrix
    element against the projected reference."""
    prob.check()
    c = prob.accretivity()
    K = kernel_projector_basis(prob.a)
    kdim = K.shape[1]
    if kdim == 0:
        reference = 0.0 + 0.0j
    else:
        Bk = K.conj().T @ prob.b @ K
        reference = complex(
            (K.conj().T @ prob.phi).conj() @
            np.linalg.solve(Bk, K.conj().T @ prob.psi))
    values = []
    max_ratio = 0.0
    for lam in prob.lam_list:
        x = np.linalg.solve(lam * prob.a + prob.b, prob.psi)
        values.append(complex(np.vdot(prob.phi, x)))
        ratio = float(np.linalg.norm(x) /
                      (np.linalg.norm(prob.psi) / c))
        max_ratio = max(max_ratio, ratio)
    return ResolventLimitResult(lam_list=prob.lam_list,
                                values=np.asarray(values),
                                reference=reference, kernel_dim=kdim,
                                norm_bound_ok=max_ratio <= 1.0 + 1e-9,
                                max_norm_ratio=max_ratio)


def random_problem(rng: np.random.Generator, dim: int = 20,
                   kernel_dim: int = 3, c: float = 0.5,
                   lam_list=None) -> ResolventProblem:
    """Random normal A (given kernel dimension, Re >= 0) and accretive B."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, _ = np.linalg.qr(z)
    eigs = np.zeros(dim, dtype=np.complex128)
    n_active = dim - kernel_dim
    eigs[kernel_dim:] = (rng.uniform(0.2, 2.0, n_active)
                         + 1j * rng.uniform(-2.0, 2.0, n_active))
    a = (q * eigs[None, :]) @ q.conj().T
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    g /= np.sqrt(2.0 * dim)
    h = rng.standard_normal((dim, dim))
    h = (h + h.T) / np.sqrt(8.0 * dim)
    b = c * np.eye(dim) + g @ g.conj().T + 1j * h
    phi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    phi /= np.linalg.norm(phi)
    psi /= np.linalg.norm(psi)
    if lam_list is None:
        lam_list = np.geomspace(1e2, 1e6, 9)
    return ResolventProblem(a=a, b=b, phi=phi, psi=psi, lam_list=lam_list)


def run_randomized_suite(n_problems: int = 50, dim: int = 20,
                         kernel_dim: int = 3, c: float = 0.5,
                         seed: int = 2024) -> dict:
    """Limit identity on kernel-bearing problems, 1/lam decay on
    kernel-free ones.  Returns a JSON-ready report."""
    rng = np.random.default_rng(seed)
    worst_err = 0.0
    worst_slope = -np.inf
    norm_ok = True
    decay_bound_ok = True
    for k in range(n_problems):
        prob = random_problem(rng, dim, kernel_dim, c)
        res = limit_resolvent(prob)
        err = abs(res.values[-1] - res.reference) / (1 + abs(res.reference))
        worst_err = max(worst_err, err)
        norm_ok = norm_ok and res.norm_bound_ok
    for k in range(n_problems):
        prob = random_problem(rng, dim, 0, c)
        res = limit_resolvent(prob)
        norm_ok = norm_ok and res.norm_bound_ok
        mags = np.abs(res.values)
        slope = np.polyfit(np.log(prob.lam_list), np.log(mags), 1)[0]
        worst_slope = max(worst_slope, float(slope))
        # |value| <= (1 + ||B||/c) ||psi|| ||phi|| / (lam sigma_min)
        sig_min = np.min(np.abs(np.linalg.eigvals(prob.a)))
        bnd = (1 + np.linalg.norm(prob.b, 2) / c) / (prob.lam_list * sig_min)
        decay_bound_ok = decay_bound_ok and bool(np.all(mags <= bnd * (1 + 1e-9)))
    report = {
        "n_problems": n_problems,
        "dim": dim,
        "kernel_dim": kernel_dim,
        "worst_limit_error": float(worst_err),
        "limit_ok": bool(worst_err < 1e-4),
        "worst_decay_slope": float(worst_slope),
        "decay_ok": bool(worst_slope <= -0.9),
        "decay_bound_ok": bool(decay_bound_ok),
        "norm_bound_ok": bool(norm_ok),
    }
    report["passed"] = bool(report["limit_ok"] and report["decay_ok"]
                            and report["norm_bound_ok"]
                            and report["decay_bound_ok"])
    return report
