import os

import numpy as np
import pytest

from qbrownian import kernels as K
from qbrownian.lattice import DensityState, LatticeBox

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")
PRESET_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "qbrownian",
                          "presets")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURE_DIR, name)


def preset_path(name: str) -> str:
    return os.path.join(PRESET_DIR, name)


@pytest.fixture(scope="session")
def cosine_kernel():
    kern = K.build_kernel(K.preset_spec("cosine", 1))
    K.spectral_gap(kern, 64)
    K.jump_rate_bound(kern, 64)
    kern, _ = K.normalize(kern, 1.0)
    return kern


@pytest.fixture(scope="session")
def cosine_kernel_2d():
    kern = K.build_kernel(K.preset_spec("cosine", 2))
    K.spectral_gap(kern, 24)
    K.jump_rate_bound(kern, 24)
    kern, _ = K.normalize(kern, 1.0)
    return kern


@pytest.fixture(scope="session")
def uniform_kernel():
    kern = K.build_kernel(K.preset_spec("uniform", 1))
    K.spectral_gap(kern, 64)
    K.jump_rate_bound(kern, 64)
    kern, _ = K.normalize(kern, 1.0)
    return kern


@pytest.fixture(scope="session")
def boson_kernel():
    kern = K.build_kernel(K.preset_spec("boson-beta0", 1), 12)
    K.spectral_gap(kern, 48)
    K.jump_rate_bound(kern, 48)
    kern, _ = K.normalize(kern, 1.0)
    return kern


def random_hermitian_state(box: LatticeBox, seed: int = 0,
                           positive: bool = False) -> DensityState:
    rng = np.random.default_rng(seed)
    n = box.n_sites
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    if positive:
        mat = a @ a.conj().T
    else:
        mat = a + a.conj().T
    mat = mat / np.trace(mat).real
    return DensityState(box, mat)
