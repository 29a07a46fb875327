import io
import json

import numpy as np
import pytest

from qbrownian import kernels as K
from qbrownian import momentum as M


@pytest.fixture(scope="module")
def cosine_model(cosine_kernel):
    return M.from_kernel(cosine_kernel, 64)


def test_uniform_kernel_rates(uniform_kernel):
    model = M.from_kernel(uniform_kernel, 32)
    lam = model.exit_rates()
    assert np.allclose(lam, 1.0)
    # target law is uniform from every state
    K_rates = model.rates
    assert np.allclose(K_rates, K_rates[0, 0])


def test_uniform_generator_is_meanproj_minus_identity(uniform_kernel):
    model = M.from_kernel(uniform_kernel, 16)
    G = M.generator_matrix(model)
    N = model.n_states
    expect = np.ones((N, N)) / N - np.eye(N)
    assert np.max(np.abs(G - expect)) < 1e-12


def test_generator_annihilates_constants(cosine_model):
    G = M.generator_matrix(cosine_model)
    assert np.max(np.abs(G @ np.ones(cosine_model.n_states))) < 1e-12


def test_symmetric_kernel_selfadjoint_generator(cosine_model):
    G = M.generator_matrix(cosine_model)
    assert np.max(np.abs(G - G.T)) < 1e-12


def test_mixing_rate_matches_kernel_gap(cosine_kernel, cosine_model):
    gap_kernel = K.spectral_gap(cosine_kernel, 64)
    gap_model = M.mixing_rate(cosine_model)
    assert abs(gap_kernel - gap_model) < 1e-8


def test_symmetrized_spectrum_below_minus_gap(cosine_model, cosine_kernel):
    G = M.generator_matrix(cosine_model)
    S = (G + G.T) / 2
    w = np.linalg.eigvalsh(S)
    assert w[-1] <= 1e-12  # all <= 0
    c = K.spectral_gap(cosine_kernel, 64)
    assert w[-2] <= -c + 1e-8  # second largest below -c


def test_uniform_mixing_rate(uniform_kernel):
    assert M.mixing_rate(M.from_kernel(uniform_kernel, 16)) == pytest.approx(1.0)


def test_zero_kernel_absorbing():
    spec = K.MeasureSpec(d=1, p=np.zeros((0, 1)), q=np.zeros((0, 1)),
                         w=np.zeros(0), grid_n=8)
    model = M.from_kernel(K.build_kernel(spec), 8)
    path = M.simulate(model, 3, 50.0, seed=0)
    assert path.absorbed
    assert len(path.times) == 1
    assert path.states[0] == 3


def test_simulation_deterministic(cosine_model):
    p1 = M.simulate(cosine_model, 0, 20.0, seed=5)
    p2 = M.simulate(cosine_model, 0, 20.0, seed=5)
    assert np.array_equal(p1.times, p2.times)
    assert np.array_equal(p1.states, p2.states)


def test_holding_times_exponential_rate_one(cosine_model):
    path = M.simulate(cosine_model, 0, 5000.0, seed=7)
    waits = np.diff(path.times)
    # Lambda == 1 for the cosine kernel: mean waiting time 1
    assert abs(waits.mean() - 1.0) < 4.0 / np.sqrt(len(waits))


def test_disconnected_components_zero_gap():
    # rates only within each half of the grid: reducible process
    n_q = 16
    pts = K.torus_grid(n_q)
    mass = np.zeros((n_q, n_q))
    half = n_q // 2
    mass[:half, :half] = 1.0
    mass[half:, half:] = 1.0
    mass /= mass.sum()
    model = M.JumpProcessModel(1, n_q, mass)
    assert M.mixing_rate(model) < 1e-10


def test_grid_round_trip(cosine_model):
    p = cosine_model.grid_point(13)
    assert cosine_model.grid_index(p) == 13


def test_path_csv_and_histogram_json(cosine_model):
    path = M.simulate(cosine_model, 0, 5.0, seed=1)
    buf = io.StringIO()
    M.path_to_csv(path, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,p_1"
    assert len(lines) == len(path.times) + 1
    counts = np.bincount(path.states, minlength=cosine_model.n_states)
    jbuf = io.StringIO()
    M.histogram_to_json(counts, cosine_model, jbuf)
    doc = json.loads(jbuf.getvalue())
    assert doc["n_q"] == 64 and sum(doc["counts"]) == len(path.states)


def test_occupation_snapshots_shapes(cosine_model):
    counts = M.occupation_snapshots(cosine_model, 0, [0.0, 1.0, 3.0],
                                    n_paths=500, seed=3)
    assert counts.shape == (3, cosine_model.n_states)
    assert np.all(counts.sum(axis=1) == 500)
    # starts concentrated, spreads later
    assert counts[0, 0] == 500
    assert M.tv_to_uniform(counts[2]) < M.tv_to_uniform(counts[0])
