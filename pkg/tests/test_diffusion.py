import numpy as np
import pytest

from qbrownian import diffusion as DF
from qbrownian.errors import (NonlinearRegime, NoPlateau, TailDominates,
                              WindowTooShort)
from qbrownian.evolution import GeneratorParams
from qbrownian.lattice import LatticeBox
from qbrownian.results import MsdSeries


def synthetic_series(times, values, d=1):
    arr = np.asarray(values, dtype=float).reshape(-1, 1, 1) * np.ones((1, d, d))
    return MsdSeries(times=np.asarray(times, dtype=float), per_seed={0: arr},
                     mean=arr, stderr=np.zeros_like(arr), seeds=(0,), d=d)


def test_abel_exact_on_linear_series():
    times = np.linspace(0, 150, 151)
    msd = synthetic_series(times, 2.5 * times)
    for eta in (0.05, 0.3, 1.0):
        est = DF.abel_diffusion(msd, eta)
        assert est.scalar == pytest.approx(2.5, abs=1e-6)


def test_abel_gamma_integral_on_quadratic():
    times = np.linspace(0, 200, 2001)
    v2 = 0.9
    msd = synthetic_series(times, v2 * times**2)
    for eta in (0.05, 0.2):
        est = DF.abel_diffusion(msd, eta)
        assert est.scalar == pytest.approx(2 * v2 / eta, rel=1e-3)


def test_abel_requires_long_horizon():
    msd = synthetic_series([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        DF.abel_diffusion(msd, 0.5)  # eta*T = 1 < 5


def test_abel_tail_dominates():
    times = np.linspace(0, 100, 101)
    vals = np.zeros_like(times)
    vals[-1] = 1e6  # absurd final slope: extrapolated tail takes over
    msd = synthetic_series(times, vals)
    with pytest.raises(TailDominates):
        DF.abel_diffusion(msd, 0.1)


def test_fit_recovers_known_slope():
    rng = np.random.default_rng(1)
    times = np.linspace(0, 100, 201)
    vals = 3.0 * times + rng.normal(0, 0.01, len(times))
    msd = synthetic_series(times, vals)
    est = DF.fit_diffusion(msd, (20, 100))
    assert est.scalar == pytest.approx(3.0, abs=5 * est.scalar_err + 1e-4)
    assert est.extras["curvature_fraction"] < 0.01


def test_fit_flags_curvature():
    times = np.linspace(0, 100, 201)
    msd = synthetic_series(times, times**2)
    est = DF.fit_diffusion(msd, (20, 100))
    assert est.extras["curvature_fraction"] > 0.5


def test_fit_window_too_short():
    msd = synthetic_series(np.linspace(0, 10, 11), np.zeros(11))
    with pytest.raises(WindowTooShort):
        DF.fit_diffusion(msd, (4.1, 4.9))


def test_fit_window_rule():
    t1, t2 = DF.fit_window(0.5, 0.4, 100.0)
    assert t1 == pytest.approx(25.0)
    assert t2 == 100.0


def test_msd_no_hopping_is_zero(cosine_kernel):
    box = LatticeBox(1, 4)
    params = GeneratorParams(u=0.0, lam=1.5, g=0.5)
    msd = DF.msd_ensemble(params, cosine_kernel, box, "uniform", range(8),
                          np.linspace(0, 3, 7), tol=1e-9)
    assert np.max(np.abs(msd.mean)) < 1e-12


def test_msd_free_particle_ballistic():
    box = LatticeBox(1, 42)
    params = GeneratorParams(u=1.0, lam=0.0, g=0.0)
    t = np.linspace(0, 10, 21)
    msd = DF.msd_ensemble(params, None, box, "uniform", [0], t, tol=1e-9)
    m = msd.mean[:, 0, 0]
    assert np.max(np.abs(m - 2.0 * t**2)) < 1e-6
    # quadratic fit quality
    coef = np.polyfit(t, m, 2)
    pred = np.polyval(coef, t)
    ss = 1 - np.sum((m - pred) ** 2) / max(np.sum((m - m.mean()) ** 2), 1e-300)
    assert ss > 0.9999


def test_msd_seed_requirement(cosine_kernel):
    box = LatticeBox(1, 4)
    params = GeneratorParams(u=1.0, lam=1.0, g=0.5)
    with pytest.raises(ValueError):
        DF.msd_ensemble(params, cosine_kernel, box, "uniform", [0, 1],
                        np.linspace(0, 1, 3))


def test_msd_parallel_matches_serial(cosine_kernel):
    box = LatticeBox(1, 6)
    params = GeneratorParams(u=1.0, lam=2.0, g=0.5)
    t = np.linspace(0, 2, 5)
    a = DF.msd_ensemble(params, cosine_kernel, box, "uniform", range(4), t,
                        tol=1e-8, workers=1, min_seeds=2, boundary_tol=np.inf)
    b = DF.msd_ensemble(params, cosine_kernel, box, "uniform", range(4), t,
                        tol=1e-8, workers=2, min_seeds=2, boundary_tol=np.inf)
    assert np.array_equal(a.mean, b.mean)


def test_localization_plateau_and_errors():
    loc = DF.localization_length(1.0, 8.0, LatticeBox(1, 16, "periodic"),
                                 "uniform", range(24), t_max=150.0)
    assert loc.ell2 > 0
    assert loc.plateau_ratio >= 0.95
    assert loc.stderr / loc.ell2 < 0.2


def test_localization_ballistic_rejected():
    with pytest.raises(NoPlateau):
        DF.localization_length(1.0, 0.0, LatticeBox(1, 20, "periodic"),
                               "uniform", range(4), t_max=30.0)


def test_localization_no_hopping_zero():
    loc = DF.localization_length(0.0, 2.0, LatticeBox(1, 6, "periodic"),
                                 "uniform", range(4), t_max=20.0)
    assert loc.ell2 == 0.0


def test_small_g_slope_cosine(cosine_kernel):
    box = LatticeBox(1, 10, "periodic")
    loc = DF.localization_length(1.0, 8.0, LatticeBox(1, 16, "periodic"),
                                 "uniform", range(24), t_max=200.0)
    slope = DF.small_g_slope(1.0, 8.0, cosine_kernel, [0.02, 0.05, 0.1, 0.2],
                             "uniform", range(4), box, ell2=loc)
    assert slope.delta > 0
    assert slope.checks["lower_ok"]
    assert slope.checks["upper_ok"]
    assert slope.checks["per_g_lower_ok"]
    assert slope.curvature_fraction < 0.2


def test_small_g_slope_rejects_nonlinear(cosine_kernel):
    box = LatticeBox(1, 8, "periodic")
    # a decade of LARGE g: strong curvature in D(g)
    with pytest.raises(NonlinearRegime):
        DF.small_g_slope(1.0, 2.0, cosine_kernel, [0.5, 1.0, 2.0, 5.0],
                         "uniform", range(2), box)


def test_small_g_slope_requires_decade(cosine_kernel):
    box = LatticeBox(1, 8, "periodic")
    with pytest.raises(ValueError):
        DF.small_g_slope(1.0, 4.0, cosine_kernel, [0.1, 0.2], "uniform",
                         range(2), box)
