"""Reproducible i.i.d. random potentials on a lattice box.

Values are produced by a counter-based generator (Philox) keyed by
(seed, site block), so any site's value is a pure function of
(seed, dist, box) and can be computed independently of sampling order.
Parallel ensemble workers therefore reproduce fields bit-exactly.
"""

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import TruncatedBoxShift
from .lattice import Boundary, LatticeBox

_BLOCK = 512


@dataclass(frozen=True)
class Distribution:
    """Bounded site distribution: transform maps uniforms in [0,1) to values."""

    name: str
    bound: float
    transform: Callable[[np.ndarray], np.ndarray]


def _uniform(u: np.ndarray) -> np.ndarray:
    return 2.0 * u - 1.0


def _bernoulli(u: np.ndarray) -> np.ndarray:
    return np.where(u < 0.5, -1.0, 1.0)


DISTRIBUTIONS = {
    "uniform": Distribution("uniform", 1.0, _uniform),
    "bernoulli": Distribution("bernoulli", 1.0, _bernoulli),
}


def get_distribution(dist) -> Distribution:
    if isinstance(dist, Distribution):
        return dist
    try:
        return DISTRIBUTIONS[dist]
    except KeyError:
        raise KeyError(f"unknown distribution {dist!r}; have {sorted(DISTRIBUTIONS)}")


@dataclass(frozen=True)
class DisorderField:
    box: LatticeBox
    values: np.ndarray
    seed: int
    dist: str
    shift_offset: tuple = ()

    def value_at(self, coord) -> float:
        return float(self.values[self.box.site_index(coord)])

    def grid(self) -> np.ndarray:
        """Values reshaped to the (n_side,)*d coordinate grid."""
        return self.values.reshape((self.box.n_side,) * self.box.d)


def _raw_uniforms(seed: int, n: int) -> np.ndarray:
    """n uniforms in [0,1), block-keyed Philox: order-independent access."""
    out = np.empty(n)
    for block in range((n + _BLOCK - 1) // _BLOCK):
        bg = np.random.Generator(np.random.Philox(key=np.array(
            [np.uint64(seed), np.uint64(block)], dtype=np.uint64)))
        lo = block * _BLOCK
        hi = min(lo + _BLOCK, n)
        out[lo:hi] = bg.random(hi - lo)
    return out


def sample(box: LatticeBox, dist="uniform", seed: int = 0) -> DisorderField:
    """Draw an i.i.d. field; identical (seed, dist, box) give identical bits."""
    d = get_distribution(dist)
    vals = d.transform(_raw_uniforms(int(seed), box.n_sites))
    if np.max(np.abs(vals)) > d.bound * (1 + 1e-12):
        raise ValueError(f"distribution {d.name!r} exceeded declared bound {d.bound}")
    return DisorderField(box, vals, int(seed), d.name)


def shift(fld: DisorderField, a) -> DisorderField:
    """Translated field omega'(x) = omega(x - a).  Periodic boxes only."""
    if fld.box.boundary is not Boundary.PERIODIC:
        raise TruncatedBoxShift("lattice shifts are exact only on periodic boxes")
    a = np.asarray(a, dtype=int).reshape(fld.box.d)
    g = np.roll(fld.grid(), shift=tuple(a), axis=tuple(range(fld.box.d)))
    prev = np.asarray(fld.shift_offset if fld.shift_offset else np.zeros(fld.box.d, int))
    return replace(fld, values=g.reshape(-1), shift_offset=tuple((prev + a).tolist()))
