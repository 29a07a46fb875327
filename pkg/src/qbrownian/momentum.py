"""Continuous-time jump process of the quasi-momentum on a torus grid.

The bath acts on the momentum of the particle as a Markov jump process:
mass(i, j) binned from the kernel measure gives the rate density for jumps
from grid point q_j to p_i.  Haar (uniform) measure is invariant; with a
spectral gap it is the unique invariant law and mixing is exponential.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import GainKernel, MeasureSpec, binned_mass, torus_grid


@dataclass
class JumpProcessModel:
    d: int
    n_q: int
    mass: np.ndarray  # (N, N), mass[i, j] jumps q_j -> p_i

    def __post_init__(self):
        N = self.n_q**self.d
        if self.mass.shape != (N, N):
            raise ValueError(f"mass shape {self.mass.shape} != ({N},{N})")
        if np.min(self.mass) < -1e-14 * max(float(np.max(self.mass)), 1e-300):
            raise ValueError("negative jump rates")

    @property
    def n_states(self) -> int:
        return self.mass.shape[0]

    @property
    def rates(self) -> np.ndarray:
        """Rate matrix K[i, j] (jump rate q_j -> p_i)."""
        return self.mass * self.n_states

    def exit_rates(self) -> np.ndarray:
        """Lambda(p_j): total rate of leaving state j (column sums)."""
        return self.rates.sum(axis=0)

    def grid_point(self, index: int) -> np.ndarray:
        pts = torus_grid(self.n_q)
        if self.d == 1:
            return np.array([pts[index]])
        return np.array([pts[index // self.n_q], pts[index % self.n_q]])

    def grid_index(self, p) -> int:
        p = np.asarray(p, dtype=float).reshape(self.d)
        step = 2.0 * np.pi / self.n_q
        idx = np.round(p / step).astype(int) % self.n_q
        if self.d == 1:
            return int(idx[0])
        return int(idx[0] * self.n_q + idx[1])


def from_measure(spec: MeasureSpec, n_q: int) -> JumpProcessModel:
    return JumpProcessModel(spec.d, n_q, binned_mass(spec, n_q))


def from_kernel(kernel: GainKernel, n_q: int | None = None) -> JumpProcessModel:
    n_q = n_q or kernel.spec.grid_n
    return JumpProcessModel(kernel.d, n_q,
                            binned_mass(kernel.spec, n_q) / kernel.scale)


def generator_matrix(model: JumpProcessModel) -> np.ndarray:
    """(L f)_i = sum_j K[i,j] (f_j - f_i); annihilates constants exactly."""
    K = model.rates
    return K - np.diag(K.sum(axis=1))


def mixing_rate(model: JumpProcessModel) -> float:
    """Spectral gap of the symmetrized generator, constants deflated.

    Computed on an explicit orthonormal basis of the mean-zero subspace, so
    it is an independent cross-check of the kernel-side gap certificate.
    """
    Lgen = generator_matrix(model)
    S = -(Lgen + Lgen.T) / 2.0
    N = S.shape[0]
    basis = np.zeros((N, 1))
    basis[:, 0] = 1.0 / np.sqrt(N)
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(N)]))
    B = q[:, 1:N]  # orthonormal complement of constants
    E = scipy.linalg.eigvalsh(B.T @ S @ B)
    return float(max(E[0], 0.0))


@dataclass
class JumpPath:
    times: np.ndarray
    states: np.ndarray
    model: JumpProcessModel
    absorbed: bool = False

    def points(self) -> np.ndarray:
        return np.array([self.model.grid_point(s) for s in self.states])


def simulate(model: JumpProcessModel, p0, t_max: float, seed: int,
             max_jumps: int = 10**7) -> JumpPath:
    """Sample one path: exponential holding with the exit rate of the
    current state, jump law proportional to the incoming rates.

    A state with zero exit rate is absorbing: the path simply ends there.
    """
    j = p0 if isinstance(p0, (int, np.integer)) else model.grid_index(p0)
    K = model.rates
    lam = model.exit_rates()
    N = model.n_states
    cum = np.cumsum(K, axis=0)  # cum[:, j]: unnormalized target law of state j
    rng = np.random.default_rng(seed)
    times = [0.0]
    states = [int(j)]
    t = 0.0
    absorbed = False
    for _ in range(max_jumps):
        rate = lam[j]
        if rate <= 0.0:
            absorbed = True
            break
        t += rng.exponential(1.0 / rate)
        if t > t_max:
            break
        j = min(int(np.searchsorted(cum[:, j], rng.random() * rate)), N - 1)
        times.append(t)
        states.append(j)
    return JumpPath(np.asarray(times), np.asarray(states, dtype=int), model,
                    absorbed)


def occupation_snapshots(model: JumpProcessModel, p0, sample_times,
                         n_paths: int, seed: int) -> np.ndarray:
    """State histograms of an ensemble of paths at the given times.

    Returns counts of shape (n_times, n_states).  Uses memorylessness to
    redraw holding times at each snapshot, which leaves the law unchanged.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    K = model.rates
    lam = model.exit_rates()
    N = model.n_states
    cumT = np.cumsum(K, axis=0).T  # row j: unnormalized target law of state j
    rng = np.random.default_rng(seed)
    j0 = p0 if isinstance(p0, (int, np.integer)) else model.grid_index(p0)
    state = np.full(n_paths, int(j0), dtype=int)
    t = np.zeros(n_paths)
    counts = np.zeros((len(sample_times), N), dtype=np.int64)
    for k, tau in enumerate(sample_times):
        while True:
            idx = np.nonzero(t < tau)[0]
            if len(idx) == 0:
                break
            rate = lam[state[idx]]
            t[idx[rate <= 0]] = tau  # absorbed paths sit where they are
            live = idx[rate > 0]
            if len(live) == 0:
                continue
            rlive = lam[state[live]]
            t2 = t[live] + rng.exponential(1.0, size=len(live)) / rlive
            jumped = t2 <= tau
            jl = live[jumped]
            if len(jl):
                u = rng.random(len(jl)) * lam[state[jl]]
                rows = cumT[state[jl]]
                state[jl] = np.argmax(rows > u[:, None], axis=1)
                t[jl] = t2[jumped]
            t[live[~jumped]] = tau
        counts[k] = np.bincount(state, minlength=N)
    return counts


def tv_to_uniform(counts: np.ndarray) -> float:
    """Total-variation distance of a histogram to the uniform law."""
    n = counts.sum()
    if n == 0:
        return 1.0
    p = counts / n
    return 0.5 * float(np.sum(np.abs(p - 1.0 / len(counts))))


def path_to_csv(path: JumpPath, fh) -> None:
    """Columns: t, p_1..p_d."""
    d = path.model.d
    fh.write(",".join(["t"] + [f"p_{i+1}" for i in range(d)]) + "\n")
    for t, s in zip(path.times, path.states):
        p = path.model.grid_point(int(s))
        fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in p]) + "\n")


def histogram_to_json(counts: np.ndarray, model: JumpProcessModel, fh) -> None:
    doc = {"n_q": model.n_q, "d": model.d,
           "counts": np.asarray(counts, dtype=int).tolist()}
    json.dump(doc, fh)
