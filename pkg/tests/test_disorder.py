import numpy as np
import pytest

from qbrownian import disorder
from qbrownian.errors import TruncatedBoxShift
from qbrownian.lattice import LatticeBox


def test_determinism():
    box = LatticeBox(1, 10)
    f1 = disorder.sample(box, "uniform", 42)
    f2 = disorder.sample(box, "uniform", 42)
    assert np.array_equal(f1.values, f2.values)
    f3 = disorder.sample(box, "uniform", 43)
    assert not np.array_equal(f1.values, f3.values)


def test_site_value_is_pure_function_of_seed_and_index():
    box = LatticeBox(1, 10)
    f = disorder.sample(box, "uniform", 9)
    # recompute one block by hand
    bg = np.random.Generator(np.random.Philox(
        key=np.array([np.uint64(9), np.uint64(0)], dtype=np.uint64)))
    block = 2.0 * bg.random(min(disorder._BLOCK, box.n_sites)) - 1.0
    assert np.allclose(f.values[:len(block)], block)


def test_uniform_moments():
    box = LatticeBox(1, 50000)  # 100001 sites
    f = disorder.sample(box, "uniform", 7)
    n = box.n_sites
    mean_tol = 3.0 * (1.0 / np.sqrt(3.0)) / np.sqrt(n)
    assert abs(f.values.mean()) < mean_tol
    var = f.values.var()
    var_tol = 3.0 * np.sqrt((1 / 5 - 1 / 9) / n)
    assert abs(var - 1.0 / 3.0) < var_tol


def test_bernoulli_values():
    f = disorder.sample(LatticeBox(1, 20), "bernoulli", 3)
    assert set(np.unique(f.values)) <= {-1.0, 1.0}


def test_bounds_declared():
    f = disorder.sample(LatticeBox(2, 5), "uniform", 1)
    assert np.max(np.abs(f.values)) <= 1.0


def test_shift_identities():
    box = LatticeBox(1, 3, "periodic")
    f = disorder.sample(box, "uniform", 5)
    assert np.array_equal(disorder.shift(f, [0]).values, f.values)
    g = disorder.shift(disorder.shift(f, [1]), [-1])
    assert np.array_equal(g.values, f.values)
    # 2L+1 single shifts return to the start
    h = f
    for _ in range(box.n_side):
        h = disorder.shift(h, [1])
    assert np.array_equal(h.values, f.values)


def test_shift_is_translation():
    box = LatticeBox(1, 4, "periodic")
    f = disorder.sample(box, "uniform", 8)
    g = disorder.shift(f, [2])
    for x in range(-box.L, box.L + 1):
        src = box.wrap(np.array([x - 2]))
        assert g.value_at([x]) == f.value_at(src)


def test_shift_refused_on_truncated_box():
    f = disorder.sample(LatticeBox(1, 3), "uniform", 1)
    with pytest.raises(TruncatedBoxShift):
        disorder.shift(f, [1])


def test_covariance_delta():
    # E[omega(x) omega(y)] ~ Var * delta_xy over 1000 seeds, within 4 sigma
    box = LatticeBox(1, 2)
    fields = np.stack([disorder.sample(box, "uniform", s).values
                       for s in range(1000)])
    cov = fields.T @ fields / len(fields)
    var_diag_tol = 4.0 * np.sqrt((1 / 5 - 1 / 9) / 1000)
    off_tol = 4.0 * (1.0 / 3.0) / np.sqrt(1000)
    for i in range(box.n_sites):
        for j in range(box.n_sites):
            if i == j:
                assert abs(cov[i, j] - 1 / 3) < var_diag_tol
            else:
                assert abs(cov[i, j]) < off_tol


def test_shift_2d():
    box = LatticeBox(2, 2, "periodic")
    f = disorder.sample(box, "uniform", 4)
    g = disorder.shift(f, [1, -1])
    assert g.value_at([0, 0]) == f.value_at(box.wrap(np.array([-1, 1])))
