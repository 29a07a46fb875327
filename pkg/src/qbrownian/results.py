"""Result records shared by the diffusion estimators."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MsdSeries:
    """Position second moments M_ij(t) per seed and ensemble-reduced."""

    times: np.ndarray
    per_seed: dict  # seed -> array (n_times, d, d)
    mean: np.ndarray  # (n_times, d, d)
    stderr: np.ndarray  # (n_times, d, d)
    seeds: tuple
    d: int

    def component(self, i: int = 0, j: int = 0) -> tuple:
        return self.mean[:, i, j], self.stderr[:, i, j]


@dataclass
class DiffusionEstimate:
    """Diffusion matrix with method tag and uncertainty."""

    d_matrix: np.ndarray  # (d, d)
    stderr: np.ndarray  # (d, d)
    method: str  # fit | abel | resolvent | closed_form
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def scalar(self) -> float:
        """Mean of the diagonal (the isotropic diffusion constant)."""
        return float(np.trace(self.d_matrix) / self.d_matrix.shape[0])

    @property
    def scalar_err(self) -> float:
        d = self.d_matrix.shape[0]
        return float(np.sqrt(np.sum(np.diag(self.stderr) ** 2)) / d)

    def to_dict(self) -> dict:
        return {"method": self.method,
                "D": np.asarray(self.d_matrix, dtype=float).tolist(),
                "stderr": np.asarray(self.stderr, dtype=float).tolist(),
                "params": self.params,
                "extras": {k: v for k, v in self.extras.items()
                           if isinstance(v, (int, float, str, bool, list))}}


@dataclass
class LocalizationEstimate:
    """Time-sup of the ensemble second moment per axis count."""

    ell2: float
    stderr: float
    sup_time: float
    plateau_ratio: float
    seeds: tuple


@dataclass
class SlopeEstimate:
    """Small-coupling slope of D(g) with its inequality checks."""

    delta: float
    stderr: float
    g_values: np.ndarray
    d_values: np.ndarray
    d_errors: np.ndarray
    curvature_fraction: float
    lower_bound: float
    upper_bound: float
    checks: dict = field(default_factory=dict)
