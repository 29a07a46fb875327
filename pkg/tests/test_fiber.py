import numpy as np
import pytest

from qbrownian import disorder
from qbrownian import fiber as F
from qbrownian import kernels as K
from qbrownian.errors import IllConditioned, KernelConstraintViolated
from qbrownian.evolution import GeneratorParams
from qbrownian.lattice import LatticeBox

ETAS = [0.5 * 2.0 ** (-k) for k in range(8)]


@pytest.fixture(scope="module")
def fs_disordered(cosine_kernel):
    box = LatticeBox(1, 12, "periodic")
    fld = disorder.sample(box, "uniform", 21)
    params = GeneratorParams(u=1.0, lam=3.0, g=0.5)
    return F.build_fiber_space(box, params, cosine_kernel, fld)


def test_lambda_zero_has_zero_potential(cosine_kernel):
    box = LatticeBox(1, 8, "periodic")
    fld = disorder.sample(box, "uniform", 1)
    fs = F.build_fiber_space(box, GeneratorParams(1.0, 0.0, 1.0),
                             cosine_kernel, fld)
    # the potential enters A0 scaled by lam: A0 reduces to the hopping block
    assert (fs.A0 - 1.0 * fs.T0).nnz == 0 or \
        np.max(np.abs((fs.A0 - 1.0 * fs.T0).data)) == 0.0


def test_generator_annihilates_uniform_zero_fiber(fs_disordered):
    fs = fs_disordered
    assert np.max(np.abs(fs.G0 @ fs.e0)) < 1e-12
    assert np.max(np.abs(fs.G0.conj().T @ fs.e0)) < 1e-12


def test_hamiltonian_block_real_symmetric(fs_disordered):
    A = fs_disordered.A0.toarray()
    assert np.max(np.abs(A - A.T)) < 1e-12
    assert np.max(np.abs(A.imag)) < 1e-12


def test_phi_norm_square_two(fs_disordered):
    fs = fs_disordered
    assert fs.inner(fs.phi, fs.phi) == pytest.approx(2.0)


def test_resolvent_equals_closed_form_without_disorder(cosine_kernel):
    box = LatticeBox(1, 10, "periodic")
    fld = disorder.sample(box, "uniform", 4)
    fs = F.build_fiber_space(box, GeneratorParams(1.0, 0.0, 1.0),
                             cosine_kernel, fld)
    est = F.resolvent_diffusion(fs, ETAS)
    ref = F.closed_form_ballistic(cosine_kernel, 1.0, 1.0)
    assert abs(est.extras["projected_value"].real - ref.scalar) < 1e-8


def test_resolvent_routes_agree(fs_disordered):
    est = F.resolvent_diffusion(fs_disordered, ETAS)
    assert est.extras["routes_agree"]
    assert est.extras["stabilizing"]
    assert est.extras["imag_part"] < 1e-10


def test_resolvent_within_transport_bounds(fs_disordered, cosine_kernel):
    est = F.resolvent_diffusion(fs_disordered, ETAS)
    c = cosine_kernel.certified["gap"]
    g, u = 0.5, 1.0
    norms = F.operator_norms(fs_disordered)
    lower = 4 * g * u * u * c / norms["G0"] ** 2
    upper = 2 * u * u / (c * g)
    assert lower - 1e-9 <= est.scalar <= upper + 1e-9
    assert est.scalar > 0


def test_eta_sequence_requirements(fs_disordered):
    with pytest.raises(ValueError):
        F.resolvent_diffusion(fs_disordered, [0.5, 0.25, 0.125])  # < 2 decades
    with pytest.raises(ValueError):
        F.resolvent_diffusion(fs_disordered, [0.5, 0.1])


def test_closed_form_inverse_coupling_law(cosine_kernel):
    vals = [F.closed_form_ballistic(cosine_kernel, 1.0, g).scalar * g
            for g in (0.1, 1.0, 10.0)]
    assert abs(vals[0] - vals[1]) < 1e-12
    assert abs(vals[1] - vals[2]) < 1e-12
    c = cosine_kernel.certified["gap"]
    C = vals[0]
    assert 0 < C <= 4.0 / c + 1e-12


def test_closed_form_uniform_kernel_analytic(uniform_kernel):
    # -L phi = phi for mean-zero phi, |phi|^2 = 2: D = 4 u^2 / g
    est = F.closed_form_ballistic(uniform_kernel, 1.0, 1.0)
    assert est.scalar == pytest.approx(4.0, abs=1e-12)
    est2 = F.closed_form_ballistic(uniform_kernel, 2.0, 0.5)
    assert est2.scalar == pytest.approx(4.0 * 4.0 / 0.5)  # 4 u^2 / g


def test_closed_form_boson_kernel_stable(boson_kernel):
    est = F.closed_form_ballistic(boson_kernel, 1.0, 1.0, xi_radius=30)
    assert est.scalar > 0
    assert est.extras["radius_uncertainty"] < 1e-6 * est.scalar
    c = boson_kernel.certified["gap"]
    assert est.scalar * 1.0 <= 4.0 / c + 1e-10


def test_kernel_constraint_violation_detected(cosine_kernel):
    # odd-separation gain entry cannot define a translate shift
    bad = K.GainKernel(d=1, radius=2, values=np.zeros((5, 5), dtype=complex),
                       spec=None)
    bad.values[bad._idx([1]), bad._idx([0])] = 0.3
    box = LatticeBox(1, 6, "periodic")
    fld = disorder.sample(box, "uniform", 0)
    with pytest.raises(KernelConstraintViolated):
        F.build_fiber_space(box, GeneratorParams(1.0, 1.0, 0.5), bad, fld)


def test_overstated_gap_flags_ill_conditioned(cosine_kernel, fs_disordered):
    fs = fs_disordered
    true_gap = fs.kernel.certified["gap"]
    fs.kernel.certified["gap"] = 10.0 * true_gap
    try:
        with pytest.raises(IllConditioned):
            F.resolvent_diffusion(fs, ETAS)
    finally:
        fs.kernel.certified["gap"] = true_gap


def test_fiber_requires_periodic_box(cosine_kernel):
    box = LatticeBox(1, 8)
    fld = disorder.sample(box, "uniform", 0)
    with pytest.raises(ValueError):
        F.build_fiber_space(box, GeneratorParams(1, 1, 1), cosine_kernel, fld)


def test_resolvent_2d(cosine_kernel_2d):
    box = LatticeBox(2, 3, "periodic")
    fld = disorder.sample(box, "uniform", 2)
    params = GeneratorParams(1.0, 2.0, 0.5)
    fs = F.build_fiber_space(box, params, cosine_kernel_2d, fld)
    c = cosine_kernel_2d.certified["gap"]
    etas = [c * 0.5 * 2.0 ** (-k) for k in range(8)]
    est = F.resolvent_diffusion(fs, etas)
    assert est.extras["routes_agree"]
    norms = F.operator_norms(fs)
    lower = 4 * 0.5 * c / norms["G0"] ** 2
    upper = 2.0 / (c * 0.5)
    assert lower - 1e-9 <= est.scalar <= upper + 1e-9
